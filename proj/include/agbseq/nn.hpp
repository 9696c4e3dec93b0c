#pragma once

#include <map>
#include <random>
#include <string>

#include "agbseq/tensor.hpp"

namespace agbseq::ad {

enum class NormKind { None, Batch, Instance, Layer };

NormKind norm_kind_from_string(const std::string& s);
std::string to_string(NormKind k);

struct Conv2dLayer {
  TensorPtr w;  // [Co, Ci, k, k]
  TensorPtr b;  // [Co]
  int stride = 1;
  int pad = 0;
  bool transpose = false;  // conv_transpose semantics, w maps Ci -> Co? see forward

  static Conv2dLayer make(int in_ch, int out_ch, int k, int stride, int pad, bool transpose,
                          std::mt19937_64& rng, double init_std = 0.02);
  TensorPtr forward(const TensorPtr& x) const;
};

// Batch / instance / layer normalisation with per-channel affine.
// Layer-norm statistics enter the graph through rsqrt_eps, whose derivative
// mask is value-captured: first-order gradients are exact, the statistics'
// second-order contribution is dropped (stop-gradient in the double-backprop
// pass).
struct NormLayer {
  NormKind kind = NormKind::None;
  TensorPtr gamma, beta;  // [C]
  TensorPtr running_mean, running_var;  // batch norm eval statistics (non-trainable)
  double momentum = 0.1;
  double eps = 1e-5;

  static NormLayer make(NormKind kind, int channels);
  TensorPtr forward(const TensorPtr& x, bool train);
};

// Named parameter collection with bit-exact JSON-manifest + f64 payload I/O.
using ParamMap = std::map<std::string, TensorPtr>;

void save_checkpoint(const ParamMap& params, const std::string& path);
// Loads into the given params (shapes must match the manifest).
void load_checkpoint(ParamMap& params, const std::string& path);

// Seeded N(0, std) fill.
void init_normal(const TensorPtr& t, std::mt19937_64& rng, double std_dev);

}  // namespace agbseq::ad
