#include "core/networks.hpp"

#include <cmath>
#include <sstream>

#include "core/serialize.hpp"

namespace corld {

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

void he_init(Tensor& t, int fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  Dtype dt = t.dtype();
  for (double& v : t.data()) v = round_mode(dt, std * rng.normal());
}

Tensor conv_block(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, int groups,
                  double slope, bool pool) {
  Attrs conv;
  conv.pad_h = (w.dim(2) - 1) / 2;
  conv.pad_w = (w.dim(3) - 1) / 2;
  conv.pad_mode = Pad::Periodic;
  Tensor y = tape.apply(Op::Conv2d, {x, w, b}, conv);
  Attrs gn;
  gn.groups = groups;
  y = tape.apply(Op::GroupNorm, {y}, gn);
  y = tape.leaky_relu(y, slope);
  if (pool) {
    Attrs pl;
    pl.kernel_h = pl.kernel_w = pl.stride_h = pl.stride_w = 2;
    y = tape.apply(Op::AvgPool2d, {y}, pl);
  }
  return y;
}

Tensor encoder_stack(Tape& tape, const Tensor& images, const ParamSet& p,
                     const std::string& prefix, const ArchDescriptor& a) {
  Tensor h = images;
  for (size_t i = 0; i < a.enc_channels.size(); ++i) {
    const std::string n = prefix + std::to_string(i);
    h = conv_block(tape, h, p.at(n + ".w"), p.at(n + ".b"), a.gn_groups, a.slope, true);
  }
  return h;
}

Tensor pooled_features(Tape& tape, const Tensor& latent) {
  Attrs ap;
  ap.out_h = ap.out_w = 1;
  Tensor pooled = tape.apply(Op::AdaptiveAvgPool2d, {latent}, ap);
  return tape.reshape(pooled, {latent.dim(0), latent.dim(1)});
}

}  // namespace

std::vector<std::string> ArchDescriptor::to_lines() const {
  std::ostringstream slope_ss;
  slope_ss << slope;
  return {
      "arch_version=1",
      "in_channels=" + std::to_string(in_channels),
      "image_size=" + std::to_string(image_size),
      "enc_channels=" + join_ints(enc_channels),
      "enc_kernel=" + std::to_string(enc_kernel),
      "dec_channels=" + join_ints(dec_channels),
      "dec_kernel=" + std::to_string(dec_kernel),
      "vel_kernel=" + std::to_string(vel_kernel),
      "gn_groups=" + std::to_string(gn_groups),
      "slope=" + slope_ss.str(),
      "proj_channels=" + std::to_string(proj_channels),
      "num_classes=" + std::to_string(num_classes),
      "clf_hidden1=" + std::to_string(clf_hidden1),
      "clf_hidden2=" + std::to_string(clf_hidden2),
  };
}

ArchDescriptor ArchDescriptor::from_lines(const std::vector<std::string>& lines) {
  ArchDescriptor a;
  bool versioned = false;
  for (const std::string& line : lines) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "arch_version") {
      if (v != "1") fail("networks", "unsupported arch_version " + v);
      versioned = true;
    } else if (k == "in_channels")
      a.in_channels = std::stoi(v);
    else if (k == "image_size")
      a.image_size = std::stoi(v);
    else if (k == "enc_channels")
      a.enc_channels = parse_int_list(v);
    else if (k == "enc_kernel")
      a.enc_kernel = std::stoi(v);
    else if (k == "dec_channels")
      a.dec_channels = parse_int_list(v);
    else if (k == "dec_kernel")
      a.dec_kernel = std::stoi(v);
    else if (k == "vel_kernel")
      a.vel_kernel = std::stoi(v);
    else if (k == "gn_groups")
      a.gn_groups = std::stoi(v);
    else if (k == "slope")
      a.slope = std::stod(v);
    else if (k == "proj_channels")
      a.proj_channels = std::stoi(v);
    else if (k == "num_classes")
      a.num_classes = std::stoi(v);
    else if (k == "clf_hidden1")
      a.clf_hidden1 = std::stoi(v);
    else if (k == "clf_hidden2")
      a.clf_hidden2 = std::stoi(v);
  }
  if (!versioned) fail("networks", "checkpoint header lacks arch_version");
  validate_arch(a);
  return a;
}

void validate_arch(const ArchDescriptor& a) {
  if (a.in_channels < 1) fail_invalid("networks", "in_channels must be >= 1");
  if (a.enc_channels.empty() || a.dec_channels.empty())
    fail_invalid("networks", "encoder/decoder channel lists must be non-empty");
  if (a.image_size % a.downsample() != 0)
    fail_invalid("networks", "image size " + std::to_string(a.image_size) +
                                 " not divisible by downsample factor " +
                                 std::to_string(a.downsample()));
  for (int c : a.enc_channels)
    if (c % a.gn_groups != 0)
      fail_invalid("networks", "group count " + std::to_string(a.gn_groups) +
                                   " does not divide encoder width " + std::to_string(c));
  for (int c : a.dec_channels)
    if (c % a.gn_groups != 0)
      fail_invalid("networks", "group count " + std::to_string(a.gn_groups) +
                                   " does not divide decoder width " + std::to_string(c));
  if (a.proj_channels % a.gn_groups != 0)
    fail_invalid("networks", "group count does not divide projection width");
  if (a.enc_channels.size() != a.dec_channels.size())
    fail_invalid("networks", "decoder must mirror the encoder depth");
  if (a.enc_kernel % 2 == 0 || a.vel_kernel % 2 == 0)
    fail_invalid("networks", "conv kernels must be odd for same-size padding");
  if (a.num_classes < 2) fail_invalid("networks", "need at least 2 classes");
}

Tensor& ParamSet::add(const std::string& name, std::vector<int> shape, Dtype dt) {
  if (find(name)) fail("networks", "duplicate parameter " + name);
  items.emplace_back(name, Tensor(std::move(shape), dt, true));
  return items.back().second;
}

Tensor* ParamSet::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

Tensor& ParamSet::at(const std::string& name) {
  Tensor* t = find(name);
  if (!t) fail("networks", "unknown parameter " + name);
  return *t;
}

const Tensor& ParamSet::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) fail("networks", "unknown parameter " + name);
  return *t;
}

int64_t ParamSet::count() const {
  int64_t n = 0;
  for (const auto& [name, t] : items) n += t.numel();
  return n;
}

void ParamSet::set_requires_grad(bool b) {
  for (auto& [name, t] : items) t.set_requires_grad(b);
}

void ParamSet::zero_grads() {
  for (auto& [name, t] : items) t.zero_grad();
}

CorldNet CorldNet::init(const ArchDescriptor& arch, Rng& rng, Dtype dt) {
  validate_arch(arch);
  CorldNet net;
  net.arch = arch;
  int in = arch.in_channels;
  for (size_t i = 0; i < arch.enc_channels.size(); ++i) {
    int out = arch.enc_channels[i];
    Tensor& w = net.params.add("enc" + std::to_string(i) + ".w",
                               {out, in, arch.enc_kernel, arch.enc_kernel}, dt);
    he_init(w, in * arch.enc_kernel * arch.enc_kernel, rng);
    net.params.add("enc" + std::to_string(i) + ".b", {out}, dt);
    in = out;
  }
  for (size_t i = 0; i < arch.dec_channels.size(); ++i) {
    int out = arch.dec_channels[i];
    Tensor& w = net.params.add("dec" + std::to_string(i) + ".w",
                               {in, out, arch.dec_kernel, arch.dec_kernel}, dt);
    he_init(w, in * arch.dec_kernel * arch.dec_kernel, rng);
    net.params.add("dec" + std::to_string(i) + ".b", {out}, dt);
    in = out;
  }
  // zero-gain velocity head: training starts at the identity deformation
  net.params.add("vel.w", {2, in, arch.vel_kernel, arch.vel_kernel}, dt);
  net.params.add("vel.b", {2}, dt);

  Tensor& pw = net.params.add("proj.w", {arch.proj_channels, arch.latent_channels(), 1, 1}, dt);
  he_init(pw, arch.latent_channels(), rng);
  net.params.add("proj.b", {arch.proj_channels}, dt);
  return net;
}

CorldNet::Forward CorldNet::forward(Tape& tape, const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != arch.in_channels)
    fail_invalid("networks", "encoder expects [B," + std::to_string(arch.in_channels) +
                                 ",H,W], got " + shape_str(images.shape()));
  if (images.dim(2) % arch.downsample() != 0 || images.dim(3) % arch.downsample() != 0)
    fail_invalid("networks", "input size " + std::to_string(images.dim(2)) + "x" +
                                 std::to_string(images.dim(3)) + " not divisible by " +
                                 std::to_string(arch.downsample()));

  Forward out;
  out.latent = encoder_stack(tape, images, params, "enc", arch);

  Tensor h = out.latent;
  for (size_t i = 0; i < arch.dec_channels.size(); ++i) {
    const std::string n = "dec" + std::to_string(i);
    Attrs up;
    up.stride_h = up.stride_w = 2;
    up.pad_h = up.pad_w = (arch.dec_kernel - 2) / 2;
    up.pad_mode = Pad::Periodic;
    h = tape.apply(Op::TransposedConv2d, {h, params.at(n + ".w"), params.at(n + ".b")}, up);
    Attrs gn;
    gn.groups = arch.gn_groups;
    h = tape.apply(Op::GroupNorm, {h}, gn);
    h = tape.leaky_relu(h, arch.slope);
  }
  Attrs vc;
  vc.pad_h = vc.pad_w = (arch.vel_kernel - 1) / 2;
  vc.pad_mode = Pad::Periodic;
  out.velocities = tape.apply(Op::Conv2d, {h, params.at("vel.w"), params.at("vel.b")}, vc);

  Attrs pc;
  Tensor proj = tape.apply(Op::Conv2d, {out.latent, params.at("proj.w"), params.at("proj.b")}, pc);
  Attrs gn;
  gn.groups = arch.gn_groups;
  proj = tape.apply(Op::GroupNorm, {proj}, gn);
  proj = pooled_features(tape, proj);
  Attrs nz;
  nz.axis = 1;
  nz.eps = 1e-12;
  out.projected = tape.apply(Op::L2Normalize, {proj}, nz);
  return out;
}

BoostedClassifier BoostedClassifier::init(const ArchDescriptor& arch, FuseSource fuse, Rng& rng,
                                          Dtype dt) {
  validate_arch(arch);
  BoostedClassifier clf;
  clf.arch = arch;
  clf.fuse = fuse;
  int in = 1;  // the image encoder always sees the raw image
  for (size_t i = 0; i < arch.enc_channels.size(); ++i) {
    int out = arch.enc_channels[i];
    Tensor& w = clf.params.add("ie" + std::to_string(i) + ".w",
                               {out, in, arch.enc_kernel, arch.enc_kernel}, dt);
    he_init(w, in * arch.enc_kernel * arch.enc_kernel, rng);
    clf.params.add("ie" + std::to_string(i) + ".b", {out}, dt);
    in = out;
  }
  int fused = arch.latent_channels() + clf.shape_feature_dim();
  Tensor& w1 = clf.params.add("clf1.w", {fused, arch.clf_hidden1}, dt);
  he_init(w1, fused, rng);
  clf.params.add("clf1.b", {arch.clf_hidden1}, dt);
  Tensor& w2 = clf.params.add("clf2.w", {arch.clf_hidden1, arch.clf_hidden2}, dt);
  he_init(w2, arch.clf_hidden1, rng);
  clf.params.add("clf2.b", {arch.clf_hidden2}, dt);
  Tensor& w3 = clf.params.add("clf3.w", {arch.clf_hidden2, arch.num_classes}, dt);
  he_init(w3, arch.clf_hidden2, rng);
  clf.params.add("clf3.b", {arch.num_classes}, dt);
  return clf;
}

int BoostedClassifier::shape_feature_dim() const {
  return fuse == FuseSource::Projected ? arch.proj_channels : arch.latent_dim();
}

Tensor BoostedClassifier::forward(Tape& tape, const CorldNet* net, const Tensor& images,
                                  const Tensor* net_input, bool shape_features_off) const {
  if (images.rank() != 4 || images.dim(1) != 1)
    fail_invalid("networks", "classifier expects [B,1,H,W] images, got " +
                                 shape_str(images.shape()));
  Tensor img_feat = pooled_features(tape, encoder_stack(tape, images, params, "ie", arch));

  Tensor shape_feat;
  if (shape_features_off) {
    shape_feat = Tensor({images.dim(0), shape_feature_dim()}, images.dtype());
  } else {
    if (!net) fail_invalid("networks", "fusion forward needs a shape network");
    CorldNet::Forward f = net->forward(tape, net_input ? *net_input : images);
    shape_feat = fuse == FuseSource::Projected
                     ? f.projected
                     : tape.flatten(f.latent, 1);
  }
  Attrs cat;
  cat.axis = 1;
  Tensor fused = tape.apply(Op::Concat, {img_feat, shape_feat}, cat);
  int expect = arch.latent_channels() + shape_feature_dim();
  if (fused.dim(1) != expect)
    fail_invalid("networks", "fusion dim " + std::to_string(fused.dim(1)) +
                                 " does not match classifier input " + std::to_string(expect));

  Tensor h = tape.apply(Op::MatMul, {fused, params.at("clf1.w"), params.at("clf1.b")});
  h = tape.leaky_relu(h, arch.slope);
  h = tape.apply(Op::MatMul, {h, params.at("clf2.w"), params.at("clf2.b")});
  h = tape.leaky_relu(h, arch.slope);
  return tape.apply(Op::MatMul, {h, params.at("clf3.w"), params.at("clf3.b")});
}

Mlp3 Mlp3::init(int in, int hidden1, int hidden2, int out, Rng& rng, Dtype dt) {
  Mlp3 m;
  m.in = in;
  m.hidden1 = hidden1;
  m.hidden2 = hidden2;
  m.out = out;
  Tensor& w1 = m.params.add("fc1.w", {in, hidden1}, dt);
  he_init(w1, in, rng);
  m.params.add("fc1.b", {hidden1}, dt);
  Tensor& w2 = m.params.add("fc2.w", {hidden1, hidden2}, dt);
  he_init(w2, hidden1, rng);
  m.params.add("fc2.b", {hidden2}, dt);
  Tensor& w3 = m.params.add("fc3.w", {hidden2, out}, dt);
  he_init(w3, hidden2, rng);
  m.params.add("fc3.b", {out}, dt);
  return m;
}

Tensor Mlp3::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in)
    fail_invalid("networks", "probe expects [B," + std::to_string(in) + "], got " +
                                 shape_str(x.shape()));
  Tensor h = tape.apply(Op::MatMul, {x, params.at("fc1.w"), params.at("fc1.b")});
  h = tape.leaky_relu(h, slope);
  h = tape.apply(Op::MatMul, {h, params.at("fc2.w"), params.at("fc2.b")});
  h = tape.leaky_relu(h, slope);
  return tape.apply(Op::MatMul, {h, params.at("fc3.w"), params.at("fc3.b")});
}

void save_params_checkpoint(const std::string& path, const ParamSet& params,
                            const ArchDescriptor& arch,
                            const std::vector<std::string>& extra_header) {
  std::vector<std::string> header = arch.to_lines();
  header.insert(header.end(), extra_header.begin(), extra_header.end());
  NamedTensors entries;
  entries.reserve(params.items.size());
  for (const auto& [name, t] : params.items) entries.emplace_back(name, t);
  write_checkpoint(path, entries, header);
}

ParamSet load_params_checkpoint(const std::string& path, ArchDescriptor* arch,
                                std::vector<std::string>* extra_header) {
  std::vector<std::string> header;
  NamedTensors entries = read_checkpoint(path, &header);
  if (arch) *arch = ArchDescriptor::from_lines(header);
  if (extra_header) *extra_header = header;
  ParamSet p;
  for (auto& [name, t] : entries) {
    t.set_requires_grad(true);
    p.items.emplace_back(name, std::move(t));
  }
  return p;
}

}  // namespace corld
