#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "core/gradcheck.hpp"
#include "core/serialize.hpp"
#include "doctest.h"

using namespace corld;

TEST_CASE("elementwise forward matches definitions") {
  Tape tape;
  Tensor a = Tensor::from({2}, {1, 2}, Dtype::F64);
  Tensor b = Tensor::from({2}, {3, 4}, Dtype::F64);
  Tensor s = tape.add(a, b);
  CHECK(s.data()[0] == 4.0);
  CHECK(s.data()[1] == 6.0);

  Tensor r = tape.leaky_relu(Tensor::from({2}, {-1, 2}, Dtype::F64), 0.1);
  CHECK(r.data()[0] == doctest::Approx(-0.1));
  CHECK(r.data()[1] == 2.0);
}

TEST_CASE("conv2d of ones against ones kernel sums the window") {
  // direct summation oracle: 3x3 window of ones x ones kernel = 9
  Tape tape;
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0, Dtype::F64);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0, Dtype::F64);
  Tensor y = tape.apply(Op::Conv2d, {x, w});
  REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y.item() == 9.0);
}

TEST_CASE("conv2d output size follows floor((H + 2p - k)/s) + 1") {
  Tape tape;
  Tensor x(std::vector<int>{1, 1, 7, 9}, Dtype::F64);
  Tensor w(std::vector<int>{2, 1, 3, 3}, Dtype::F64);
  Attrs at;
  at.stride_h = at.stride_w = 2;
  at.pad_h = at.pad_w = 1;
  Tensor y = tape.apply(Op::Conv2d, {x, w}, at);
  CHECK(y.shape() == std::vector<int>{1, 2, 4, 5});
}

TEST_CASE("backward fills leaf gradients") {
  SUBCASE("linear") {
    Tape tape;
    Tensor x = Tensor::from({3}, {5, -1, 2}, Dtype::F64, true);
    tape.backward(tape.sum(x));
    CHECK(x.grad() == std::vector<double>{1, 1, 1});
  }
  SUBCASE("quadratic") {
    Tape tape;
    Tensor x = Tensor::from({2}, {1, 2}, Dtype::F64, true);
    tape.backward(tape.sum(tape.square(x)));
    CHECK(x.grad() == std::vector<double>{2, 4});
  }
}

TEST_CASE("fan-out accumulates both path contributions") {
  Tensor x = Tensor::from({3}, {1.0, -2.0, 0.5}, Dtype::F64, true);
  Tensor c = Tensor::from({3}, {3.0, 0.25, -1.5}, Dtype::F64);
  {
    Tape tape;
    Tensor y = tape.add(tape.mul(x, x), tape.mul(x, c));  // x used three times
    tape.backward(tape.sum(y));
  }
  // oracle: d/dx (x^2 + c x) = 2x + c, built from two independent leaves
  Tensor x1 = Tensor::from({3}, x.data(), Dtype::F64, true);
  Tensor x2 = Tensor::from({3}, x.data(), Dtype::F64, true);
  {
    Tape tape;
    Tensor y = tape.add(tape.mul(x1, x2), tape.mul(x1, c));
    tape.backward(tape.sum(y));
  }
  for (int i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(x1.grad()[i] + x2.grad()[i]).epsilon(1e-12));
}

TEST_CASE("replay reproduces recorded outputs bit-exactly") {
  for (Dtype dt : {Dtype::F32, Dtype::F64}) {
    Rng rng(11);
    Tape tape;
    Tensor x(std::vector<int>{2, 3, 4, 4}, dt, true);
    for (double& v : x.data()) v = round_mode(dt, rng.normal());
    Attrs gn;
    gn.groups = 3;
    Tensor y = tape.apply(Op::GroupNorm, {tape.square(x)}, gn);
    Tensor loss = tape.mean(tape.apply(Op::Exp, {y}));
    std::vector<double> y_before = y.data(), loss_before = loss.data();
    tape.replay();
    CHECK(y.data() == y_before);
    CHECK(loss.data() == loss_before);
  }
}

TEST_CASE("identical seeds give bit-identical forwards and gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x(std::vector<int>{4, 4}, Dtype::F32, true);
    for (double& v : x.data()) v = round_mode(Dtype::F32, rng.normal());
    Tape tape;
    Attrs sm;
    sm.axis = 1;
    Tensor loss = tape.sum(tape.square(tape.apply(Op::Softmax, {x}, sm)));
    tape.backward(loss);
    return std::make_pair(loss.item(), x.grad());
  };
  auto [l1, g1] = run(42);
  auto [l2, g2] = run(42);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("f32 mode rounds every output through float precision") {
  Tape tape;
  Tensor x = Tensor::from({1}, {1.0}, Dtype::F32);
  Tensor y = tape.scalar_mul(x, 1.0 / 3.0);
  CHECK(y.data()[0] == static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST_CASE("errors name the op kind and offending input") {
  Tape tape;
  Tensor a(std::vector<int>{2, 3}, Dtype::F64);
  Tensor b(std::vector<int>{3, 2}, Dtype::F64);
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_AS(tape.apply(Op::MatMul, {a, a}), std::invalid_argument);

  Tensor f32(std::vector<int>{2, 3}, Dtype::F32);
  CHECK_THROWS_WITH_AS(tape.add(a, f32), doctest::Contains("mixed float modes"),
                       std::invalid_argument);

  Tensor neg = Tensor::from({2}, {0.5, -0.1}, Dtype::F64);
  CHECK_THROWS_WITH_AS(tape.apply(Op::Log, {neg}), doctest::Contains("log"),
                       std::invalid_argument);
  CHECK_THROWS_AS(tape.apply(Op::Sqrt, {neg}), std::invalid_argument);
}

TEST_CASE("backward rejects non-scalar and off-tape losses") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, Dtype::F64, true);
  Tensor y = tape.square(x);
  CHECK_THROWS_WITH_AS(tape.backward(y), doctest::Contains("scalar"), std::invalid_argument);
  Tensor stranger = Tensor::scalar(1.0, Dtype::F64);
  CHECK_THROWS_WITH_AS(tape.backward(stranger), doctest::Contains("not on tape"),
                       std::invalid_argument);
}

TEST_CASE("tape is consumed by backward") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, Dtype::F64, true);
  Tensor loss = tape.sum(x);
  tape.backward(loss);
  CHECK_THROWS_WITH_AS(tape.sum(x), doctest::Contains("consumed"), std::runtime_error);
}

TEST_CASE("grad_check is exact for linear maps") {
  Rng rng(3);
  Tensor x(std::vector<int>{5}, Dtype::F64);
  for (double& v : x.data()) v = rng.normal();
  double err = grad_check([](Tape& t, const std::vector<Tensor>& l) { return t.sum(l[0]); }, {x});
  CHECK(err <= 1e-10);
}

TEST_CASE("grad_check rejects out-of-range steps and f32 leaves") {
  Tensor x(std::vector<int>{2}, Dtype::F64);
  auto f = [](Tape& t, const std::vector<Tensor>& l) { return t.sum(l[0]); };
  CHECK_THROWS_AS(grad_check(f, {x}, 1e-2), std::invalid_argument);
  Tensor x32(std::vector<int>{2}, Dtype::F32);
  CHECK_THROWS_AS(grad_check(f, {x32}), std::invalid_argument);
}

TEST_CASE("tensor container round-trips bit-exactly") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "corld_gradcore_test";
  fs::create_directories(dir);
  for (Dtype dt : {Dtype::F32, Dtype::F64}) {
    Rng rng(5);
    Tensor t(std::vector<int>{3, 2, 4}, dt);
    for (double& v : t.data()) v = round_mode(dt, rng.normal());
    std::string path = (dir / (std::string("t_") + dtype_name(dt) + ".bin")).string();
    write_tensor_file(path, t);
    Tensor back = read_tensor_file(path);
    CHECK(back.shape() == t.shape());
    CHECK(back.dtype() == dt);
    CHECK(back.data() == t.data());
  }
  // rank-0 scalars serialize too
  std::string spath = (dir / "scalar.bin").string();
  write_tensor_file(spath, Tensor::scalar(2.5, Dtype::F64));
  CHECK(read_tensor_file(spath).item() == 2.5);
}

TEST_CASE("checkpoint format: count, named entries, optional header") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "corld_gradcore_test";
  fs::create_directories(dir);
  std::string path = (dir / "ckpt.bin").string();

  NamedTensors entries = {{"w", Tensor::from({2, 2}, {1, 2, 3, 4}, Dtype::F32)},
                          {"b", Tensor::from({2}, {0.5, -0.5}, Dtype::F32)}};
  SUBCASE("raw body") {
    write_checkpoint(path, entries);
    NamedTensors back = read_checkpoint(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "w");
    CHECK(back[1].second.data() == entries[1].second.data());
  }
  SUBCASE("with versioned text header") {
    write_checkpoint(path, entries, {"alpha=1", "beta=two"});
    std::vector<std::string> header;
    NamedTensors back = read_checkpoint(path, &header);
    CHECK(header == std::vector<std::string>{"alpha=1", "beta=two"});
    CHECK(back.size() == 2);
  }
  SUBCASE("bad magic is rejected") {
    std::ofstream os(path, std::ios::binary);
    os << "XXXXgarbage";
    os.close();
    CHECK_THROWS_WITH_AS(read_tensor_file(path), doctest::Contains("magic"),
                         std::runtime_error);
  }
  SUBCASE("truncation is detected") {
    write_tensor_file(path, Tensor::full({4, 4}, 1.0, Dtype::F64));
    fs::resize_file(path, 20);
    CHECK_THROWS_WITH_AS(read_tensor_file(path), doctest::Contains("truncated"),
                         std::runtime_error);
  }
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(std::vector<int>{2, 0}, Dtype::F64), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from({3}, {1.0, 2.0}, Dtype::F64), std::invalid_argument);
  Tensor t(std::vector<int>{2, 3}, Dtype::F64);
  CHECK(t.numel() == 6);
  CHECK_FALSE(t.has_grad());
  t.grad();
  CHECK(t.has_grad());
  CHECK(t.grad().size() == 6);
}
