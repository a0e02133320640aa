#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "core/serialize.hpp"

namespace corld {

namespace {

constexpr const char* kManifestVersion = "CORLD-DS v1";

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Edge softness of the procedural shapes, in pixels.
constexpr double kEdge = 0.75;

void fill_template(int class_id, int size, double* img) {
  const double c = 0.5 * (size - 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double dy = y - c, dx = x - c;
      double r = std::sqrt(dy * dy + dx * dx);
      double v = 0.0;
      switch (class_id) {
        case 0: {  // disk
          v = logistic((0.30 * size - r) / kEdge);
          break;
        }
        case 1: {  // ring
          v = logistic((0.10 * size - std::abs(r - 0.30 * size)) / kEdge);
          break;
        }
        case 2: {  // cross
          double bar_w = 0.11 * size, bar_l = 0.38 * size;
          double dh = std::max(std::abs(dx) - bar_l, std::abs(dy) - bar_w);
          double dv = std::max(std::abs(dx) - bar_w, std::abs(dy) - bar_l);
          v = std::max(logistic(-dh / kEdge), logistic(-dv / kEdge));
          break;
        }
        case 3: {  // lobed blob, close to the disk in scale
          double theta = std::atan2(dy, dx);
          double rb = 0.28 * size *
                      (1.0 + 0.22 * std::sin(3.0 * theta + 0.7) + 0.12 * std::cos(5.0 * theta + 1.3));
          v = logistic((rb - r) / kEdge);
          break;
        }
        default:
          fail_invalid("data", "no procedural template for class " + std::to_string(class_id));
      }
      img[y * size + x] = v;
    }
}

std::string hex32(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

void write_index_csv(const std::string& path, const char* column,
                     const std::vector<std::string>& values) {
  std::ofstream os(path);
  if (!os) fail("data", "cannot open " + path + " for writing");
  os << "index," << column << "\n";
  for (size_t i = 0; i < values.size(); ++i) os << i << "," << values[i] << "\n";
}

std::vector<std::string> read_index_csv(const std::string& path, const char* column) {
  std::ifstream is(path);
  if (!is) fail("data", "cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != std::string("index,") + column)
    fail("data", path + ": unexpected header '" + line + "'");
  std::vector<std::string> values;
  size_t expect = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) fail("data", path + ": malformed row '" + line + "'");
    if (std::stoul(line.substr(0, comma)) != expect)
      fail("data", path + ": rows out of order at " + std::to_string(expect));
    values.push_back(line.substr(comma + 1));
    ++expect;
  }
  return values;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<int> Dataset::indices_of(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(static_cast<int>(i));
  return out;
}

Tensor class_template(int class_id, int size, Dtype dt) {
  Tensor t({1, size, size}, dt);
  fill_template(class_id, size, t.data().data());
  periodic_blur(t.data(), 1, size, size, 0.8);
  for (double& v : t.data()) v = round_mode(dt, std::clamp(v, 0.0, 1.0));
  return t;
}

Dataset gen_synthetic(const GenSpec& spec) {
  if (spec.classes < 2 || spec.classes > 4)
    fail_invalid("data", "classes must be in [2, 4] (procedural templates), got " +
                             std::to_string(spec.classes));
  if (spec.per_class < 4) fail_invalid("data", "per_class must be >= 4");
  if (spec.size < 8 || spec.size % 8 != 0)
    fail_invalid("data", "size must be a positive multiple of 8");
  if (spec.noise_std < 0.0) fail_invalid("data", "noise_std must be >= 0");
  if (spec.deform_amplitude < 0.0) fail_invalid("data", "deform_amplitude must be >= 0");
  if (spec.deform_amplitude / 64.0 >= 0.5)
    fail_invalid("data", "deform_amplitude " + fmt(spec.deform_amplitude) +
                             " violates the exponential-map guard at 6 squaring steps");

  const int n = spec.classes * spec.per_class;
  const int hw = spec.size * spec.size;
  Grid2D grid{spec.size, spec.size};
  Dataset d;
  d.spec = spec;
  d.generated = true;
  d.num_classes = spec.classes;
  d.images = Tensor({n, 1, spec.size, spec.size}, Dtype::F32);
  d.gt_velocities = Tensor({n, 2, spec.size, spec.size}, Dtype::F32);
  d.templates = Tensor({spec.classes, 1, spec.size, spec.size}, Dtype::F32);
  d.labels.resize(static_cast<size_t>(n));
  d.split.resize(static_cast<size_t>(n));

  std::vector<Tensor> templates_f64(static_cast<size_t>(spec.classes));
  for (int c = 0; c < spec.classes; ++c) {
    templates_f64[static_cast<size_t>(c)] = class_template(c, spec.size, Dtype::F64);
    const auto& src = templates_f64[static_cast<size_t>(c)].data();
    for (int i = 0; i < hw; ++i)
      d.templates.data()[static_cast<size_t>(c) * hw + i] =
          round_mode(Dtype::F32, src[static_cast<size_t>(i)]);
  }

  Rng rng(derive_seed(spec.seed, "gen_synthetic"));
  int idx = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < spec.per_class; ++s, ++idx) {
      d.labels[static_cast<size_t>(idx)] = c;
      VelocityField v = smooth_random_velocity(grid, spec.deform_amplitude, rng);
      Tensor image;
      if (spec.deform_amplitude == 0.0) {
        image = templates_f64[static_cast<size_t>(c)].clone();
      } else {
        Tape tape;
        DeformationField phi = exp_map(tape, v, 6);
        image = warp(tape, templates_f64[static_cast<size_t>(c)], phi);
      }
      for (int i = 0; i < hw; ++i) {
        double val = image.data()[static_cast<size_t>(i)];
        if (spec.noise_std > 0.0) val += spec.noise_std * rng.normal();
        d.images.data()[static_cast<size_t>(idx) * hw + i] =
            round_mode(Dtype::F32, std::clamp(val, 0.0, 1.0));
      }
      for (int i = 0; i < 2 * hw; ++i)
        d.gt_velocities.data()[static_cast<size_t>(idx) * 2 * hw + i] =
            round_mode(Dtype::F32, v.values.data()[static_cast<size_t>(i)]);
    }
  }

  // stratified 70/15/15 split
  for (int c = 0; c < spec.classes; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (d.labels[static_cast<size_t>(i)] == c) members.push_back(i);
    rng.shuffle(members);
    int n_tr = static_cast<int>(std::llround(0.70 * members.size()));
    int n_val = static_cast<int>(std::llround(0.15 * members.size()));
    if (n_tr < 2) fail("data", "class " + std::to_string(c) + " has fewer than 2 train samples");
    for (size_t k = 0; k < members.size(); ++k) {
      Split s = k < static_cast<size_t>(n_tr)           ? Split::Train
                : k < static_cast<size_t>(n_tr + n_val) ? Split::Val
                                                        : Split::Test;
      d.split[static_cast<size_t>(members[k])] = s;
    }
  }

  d.mean_template = Tensor({1, 1, spec.size, spec.size}, Dtype::F32);
  for (int i = 0; i < hw; ++i) {
    double s = 0.0;
    for (int c = 0; c < spec.classes; ++c)
      s += d.templates.data()[static_cast<size_t>(c) * hw + i];
    d.mean_template.data()[static_cast<size_t>(i)] =
        round_mode(Dtype::F32, s / spec.classes);
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string images_p = dir + "/images.f32t";
  const std::string templates_p = dir + "/templates.f32t";
  const std::string labels_p = dir + "/labels.csv";
  const std::string split_p = dir + "/split.csv";

  write_tensor_file(images_p, d.images);
  write_tensor_file(templates_p, d.templates);
  std::vector<std::string> label_strs, split_strs;
  for (int y : d.labels) label_strs.push_back(std::to_string(y));
  for (Split s : d.split) split_strs.push_back(split_name(s));
  write_index_csv(labels_p, "label", label_strs);
  write_index_csv(split_p, "split", split_strs);

  std::ofstream os(dir + "/manifest.txt");
  if (!os) fail("data", "cannot open " + dir + "/manifest.txt for writing");
  os << kManifestVersion << "\n";
  os << "classes=" << d.spec.classes << "\n";
  os << "per_class=" << d.spec.per_class << "\n";
  os << "size=" << d.spec.size << "\n";
  os << "seed=" << d.spec.seed << "\n";
  os << "deform_amplitude=" << fmt(d.spec.deform_amplitude) << "\n";
  os << "noise_std=" << fmt(d.spec.noise_std) << "\n";
  os << "count=" << d.count() << "\n";
  os << "crc.images.f32t=" << hex32(crc32_file(images_p)) << "\n";
  os << "crc.templates.f32t=" << hex32(crc32_file(templates_p)) << "\n";
  os << "crc.labels.csv=" << hex32(crc32_file(labels_p)) << "\n";
  os << "crc.split.csv=" << hex32(crc32_file(split_p)) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(dir + "/manifest.txt");
  if (!is) fail("data", "cannot open " + dir + "/manifest.txt");
  std::string line;
  std::getline(is, line);
  if (line != kManifestVersion)
    fail("data", dir + ": manifest version mismatch, got '" + line + "'");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) fail("data", dir + ": manifest missing key " + k);
    return it->second;
  };
  for (const char* f : {"images.f32t", "templates.f32t", "labels.csv", "split.csv"}) {
    uint32_t want = static_cast<uint32_t>(std::stoul(need(std::string("crc.") + f), nullptr, 16));
    uint32_t got = crc32_file(dir + "/" + f);
    if (want != got)
      fail("data", std::string("checksum failure for ") + f + ": manifest " + hex32(want) +
                       ", file " + hex32(got));
  }

  Dataset d;
  d.spec.classes = std::stoi(need("classes"));
  d.spec.per_class = std::stoi(need("per_class"));
  d.spec.size = std::stoi(need("size"));
  d.spec.seed = std::stoull(need("seed"));
  d.spec.deform_amplitude = std::stod(need("deform_amplitude"));
  d.spec.noise_std = std::stod(need("noise_std"));
  d.generated = false;
  d.images = read_tensor_file(dir + "/images.f32t");
  d.templates = read_tensor_file(dir + "/templates.f32t");
  if (d.images.rank() != 4 || d.templates.rank() != 4)
    fail("data", dir + ": unexpected tensor ranks in dataset");
  d.num_classes = d.templates.dim(0);

  for (const std::string& s : read_index_csv(dir + "/labels.csv", "label")) {
    int y = std::stoi(s);
    if (y < 0 || y >= d.num_classes) fail("data", "label " + s + " out of range");
    d.labels.push_back(y);
  }
  for (const std::string& s : read_index_csv(dir + "/split.csv", "split")) {
    if (s == "train")
      d.split.push_back(Split::Train);
    else if (s == "val")
      d.split.push_back(Split::Val);
    else if (s == "test")
      d.split.push_back(Split::Test);
    else
      fail("data", "unknown split tag '" + s + "'");
  }
  if (static_cast<int>(d.labels.size()) != d.images.dim(0) || d.labels.size() != d.split.size())
    fail("data", dir + ": row counts disagree between images, labels and split");
  if (std::stoi(need("count")) != d.count()) fail("data", dir + ": manifest count mismatch");

  const int hw = d.height() * d.width();
  d.mean_template = Tensor({1, 1, d.height(), d.width()}, Dtype::F32);
  for (int i = 0; i < hw; ++i) {
    double s = 0.0;
    for (int c = 0; c < d.num_classes; ++c)
      s += d.templates.data()[static_cast<size_t>(c) * hw + i];
    d.mean_template.data()[static_cast<size_t>(i)] = round_mode(Dtype::F32, s / d.num_classes);
  }
  return d;
}

void copy_template_row(const Dataset& d, TemplateMode mode, int label, Tensor& dst, int row) {
  const int hw = d.height() * d.width();
  const double* src = mode == TemplateMode::Multi
                          ? d.templates.data().data() + static_cast<int64_t>(label) * hw
                          : d.mean_template.data().data();
  Dtype dt = dst.dtype();
  double* out = dst.data().data() + static_cast<int64_t>(row) * hw;
  for (int i = 0; i < hw; ++i) out[i] = round_mode(dt, src[i]);
}

Tensor make_universal_noise(const BoostedClassifier& clf, const CorldNet* net,
                            const Dataset& data, double scale, NoiseKind kind, bool image_only,
                            uint64_t seed) {
  if (scale < 0.0 || scale > 0.05)
    fail_invalid("data", "noise scale " + fmt(scale) + " outside [0, 0.05]");
  const int H = data.height(), W = data.width();
  Tensor pattern({1, 1, H, W}, Dtype::F32);
  if (scale == 0.0) return pattern;

  if (kind == NoiseKind::FixedRandom) {
    Rng rng(derive_seed(seed, "fixed_random_noise"));
    for (double& v : pattern.data())
      v = round_mode(Dtype::F32, rng.uniform01() < 0.5 ? -scale : scale);
    return pattern;
  }

  if (!image_only && net && net->arch.in_channels != 1)
    fail_invalid("data", "universal noise requires an image-only encoder input");
  std::vector<int> val = data.indices_of(Split::Val);
  if (val.empty()) fail("data", "universal noise needs a non-empty validation split");

  const int hw = H * W;
  std::vector<double> acc(static_cast<size_t>(hw), 0.0);
  const int batch = 16;
  for (size_t start = 0; start < val.size(); start += batch) {
    size_t stop = std::min(val.size(), start + batch);
    int b = static_cast<int>(stop - start);
    Tensor images({b, 1, H, W}, Dtype::F32, true);
    std::vector<int> labels(static_cast<size_t>(b));
    for (int r = 0; r < b; ++r) {
      int i = val[start + static_cast<size_t>(r)];
      labels[static_cast<size_t>(r)] = data.labels[static_cast<size_t>(i)];
      std::copy(data.images.data().begin() + static_cast<int64_t>(i) * hw,
                data.images.data().begin() + static_cast<int64_t>(i + 1) * hw,
                images.data().begin() + static_cast<int64_t>(r) * hw);
    }
    Tape tape;
    Tensor logits = clf.forward(tape, net, images, nullptr, image_only);
    Tensor loss = clf_loss(tape, logits, labels, 1.0);
    tape.backward(loss);
    const auto& g = images.grad();
    for (int r = 0; r < b; ++r)
      for (int i = 0; i < hw; ++i) {
        double gv = g[static_cast<size_t>(r) * hw + i];
        acc[static_cast<size_t>(i)] += gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
      }
  }

  double m = 0.0;
  for (double v : acc) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    double k = scale / m;
    for (int i = 0; i < hw; ++i)
      pattern.data()[static_cast<size_t>(i)] = round_mode(Dtype::F32, acc[static_cast<size_t>(i)] * k);
  }
  return pattern;
}

Tensor apply_universal_noise(const Tensor& images, const Tensor& pattern) {
  if (images.rank() != 4 || pattern.rank() != 4 || pattern.dim(0) != 1 || pattern.dim(1) != 1 ||
      pattern.dim(2) != images.dim(2) || pattern.dim(3) != images.dim(3))
    fail_invalid("data", "perturbation " + shape_str(pattern.shape()) +
                             " does not match images " + shape_str(images.shape()));
  Tensor out = images.clone();
  const int hw = images.dim(2) * images.dim(3);
  const int planes = images.dim(0) * images.dim(1);
  Dtype dt = images.dtype();
  for (int p = 0; p < planes; ++p)
    for (int i = 0; i < hw; ++i) {
      size_t k = static_cast<size_t>(p) * hw + static_cast<size_t>(i);
      out.data()[k] = round_mode(
          dt, std::clamp(images.data()[k] + pattern.data()[static_cast<size_t>(i)], 0.0, 1.0));
    }
  return out;
}

}  // namespace corld
