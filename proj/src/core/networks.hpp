#pragma once

// Network stacks built from tape primitives: the shape encoder/decoder with
// its projection head, the image encoder + fused classifier, and the plain
// 3-layer fully connected head used for feature probing.

#include <optional>
#include <string>
#include <vector>

#include "core/tape.hpp"

namespace corld {

struct ArchDescriptor {
  int in_channels = 1;  // 2 when the template rides along as an input channel
  int image_size = 32;  // square inputs, divisible by the encoder downsample
  std::vector<int> enc_channels = {16, 32, 64};
  int enc_kernel = 3;
  std::vector<int> dec_channels = {32, 16, 8};
  int dec_kernel = 4;   // stride-2 transposed blocks
  int vel_kernel = 3;
  int gn_groups = 8;
  double slope = 0.1;
  int proj_channels = 64;
  int num_classes = 4;
  int clf_hidden1 = 128, clf_hidden2 = 64;

  int downsample() const { return 1 << static_cast<int>(enc_channels.size()); }
  int latent_channels() const { return enc_channels.back(); }
  int latent_spatial() const { return image_size / downsample(); }
  int latent_dim() const { return latent_channels() * latent_spatial() * latent_spatial(); }

  std::vector<std::string> to_lines() const;
  static ArchDescriptor from_lines(const std::vector<std::string>& lines);
};

void validate_arch(const ArchDescriptor& a);

struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& add(const std::string& name, std::vector<int> shape, Dtype dt);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  int64_t count() const;
  void set_requires_grad(bool b);
  void zero_grads();
};

enum class FuseSource { Projected, Latent };

struct CorldNet {
  ArchDescriptor arch;
  ParamSet params;  // enc*/dec* blocks, vel head, proj head

  struct Forward {
    Tensor velocities;  // [B,2,H,W]
    Tensor latent;      // [B,Cz,h,w]
    Tensor projected;   // [B,D], unit rows
  };

  static CorldNet init(const ArchDescriptor& arch, Rng& rng, Dtype dt);
  Forward forward(Tape& tape, const Tensor& images) const;
};

struct BoostedClassifier {
  ArchDescriptor arch;
  FuseSource fuse = FuseSource::Projected;
  ParamSet params;  // ie* image encoder blocks, clf1..3 fully connected

  static BoostedClassifier init(const ArchDescriptor& arch, FuseSource fuse, Rng& rng, Dtype dt);
  int shape_feature_dim() const;

  // Image features from the trained image encoder, fused with the shape
  // branch of `net` (or zeros when shape features are disabled). `net_input`
  // is the tensor the shape encoder consumes; it defaults to `images` and
  // differs only when the net was trained with a template input channel.
  Tensor forward(Tape& tape, const CorldNet* net, const Tensor& images,
                 const Tensor* net_input, bool shape_features_off) const;
};

struct Mlp3 {
  ParamSet params;
  int in = 0, hidden1 = 0, hidden2 = 0, out = 0;
  double slope = 0.1;

  static Mlp3 init(int in, int hidden1, int hidden2, int out, Rng& rng, Dtype dt);
  Tensor forward(Tape& tape, const Tensor& x) const;
};

// Checkpoint helpers; header carries the descriptor plus caller key=values.
void save_params_checkpoint(const std::string& path, const ParamSet& params,
                            const ArchDescriptor& arch,
                            const std::vector<std::string>& extra_header);
ParamSet load_params_checkpoint(const std::string& path, ArchDescriptor* arch,
                                std::vector<std::string>* extra_header);

}  // namespace corld
