#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "agbseq/nn.hpp"
#include "agbseq/tensor.hpp"

namespace agbseq::cgan {

using ad::NormKind;
using ad::ParamMap;
using ad::TensorPtr;

struct GeneratorSpec {
  int resnet_blocks = 6;  // 4 | 5 | 6
  NormKind norm = NormKind::Batch;
  int in_channels = 3;
  int out_channels = 1;
  int base_width = 64;
  // output activation is ReLU, fixed: generated AGB >= 0 by construction
};

enum class DiscKind { Pixel, Patch16, Patch34 };

DiscKind disc_kind_from_string(const std::string& s);
std::string to_string(DiscKind k);

struct DiscriminatorSpec {
  DiscKind kind = DiscKind::Pixel;
  NormKind norm = NormKind::Batch;
  int in_channels = 4;  // 3 SAR + 1 AGB, channel-concatenated
  int base_width = 64;
};

enum class Objective { Vanilla, LsGan, WGanGp };

Objective objective_from_string(const std::string& s);
std::string to_string(Objective o);

struct TrainConfig {
  Objective objective = Objective::LsGan;
  int epochs = 200;
  double lr = 2e-4;
  int batch_size = 3;  // 1..4
  double lambda_gp = 10.0;
  double lsgan_a = 0.0, lsgan_b = 1.0, lsgan_c = 1.0;
  double l1_weight = 0.0;
  int n_critic = 1;
  unsigned long long seed = 0;
  int checkpoint_interval = 0;  // epochs; 0 = only at end
};

struct Generator {
  GeneratorSpec spec;
  std::vector<ad::Conv2dLayer> convs;
  std::vector<ad::NormLayer> norms;

  TensorPtr forward(const TensorPtr& x, bool train);
  std::vector<TensorPtr> parameters() const;
  ParamMap param_map(const std::string& prefix = "G") const;
};

struct Discriminator {
  DiscriminatorSpec spec;
  std::vector<ad::Conv2dLayer> convs;
  std::vector<ad::NormLayer> norms;  // entry per conv; kind None where absent

  // Spatial decision map [B, 1, h, w].
  TensorPtr forward(const TensorPtr& xz, bool train);
  // Mean decision per sample, [B].
  TensorPtr forward_scalar(const TensorPtr& xz, bool train);
  std::vector<TensorPtr> parameters() const;
  ParamMap param_map(const std::string& prefix = "D") const;
  // (kernel, stride) stack for the receptive-field recurrence.
  std::vector<std::pair<int, int>> conv_stack() const;
};

Generator build_generator(const GeneratorSpec& spec, unsigned long long seed);
Discriminator build_discriminator(const DiscriminatorSpec& spec, unsigned long long seed);

// r <- r + (k-1)*j; j <- j*s over the stack.
int receptive_field(const std::vector<std::pair<int, int>>& stack);

struct GanLosses {
  TensorPtr loss_d;
  TensorPtr loss_g;
};

// d_* are discriminator decision maps (logits for vanilla). The generator
// term uses the non-saturating form; an optional L1 reconstruction term is
// added by the caller.
GanLosses loss_vanilla(const TensorPtr& d_real, const TensorPtr& d_fake_for_d,
                       const TensorPtr& d_fake_for_g);
GanLosses loss_lsgan(const TensorPtr& d_real, const TensorPtr& d_fake_for_d,
                     const TensorPtr& d_fake_for_g, double a = 0.0, double b = 1.0,
                     double c = 1.0);
// interp_grad_norm: per-sample L2 norm of the critic gradient at the
// interpolate, [B].
GanLosses loss_wgangp(const TensorPtr& d_real, const TensorPtr& d_fake,
                      const TensorPtr& interp_grad_norm, double lambda_gp);

// One aligned (SAR false-colour, AGB) pair, both size x size.
struct PairedPatch {
  std::vector<double> sar;  // in_channels * size * size, channel-major planes
  std::vector<double> agb;  // size * size
  int size = 64;
  int sar_channels = 3;
};

struct TrainResult {
  long long d_steps = 0;
  long long g_steps = 0;
  std::vector<std::array<double, 4>> loss_log;  // epoch, step, loss_d, loss_g
};

// Alternating Adam updates with seeded shuffling; throws on a non-finite
// loss, naming the epoch and step. checkpoint_path empty = no checkpoints.
TrainResult train(Generator& gen, Discriminator& disc, const std::vector<PairedPatch>& dataset,
                  const TrainConfig& cfg, const std::string& checkpoint_path = "",
                  const std::string& loss_log_path = "");

// Eval-mode forward for one SAR patch; returns size*size AGB values (>= 0).
std::vector<double> generate(Generator& gen, const std::vector<double>& sar_patch, int size);

}  // namespace agbseq::cgan
