#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace agbseq::ad {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// One value node in a reverse-mode autodiff graph. Ops evaluate eagerly;
// grad_fn builds the parent gradients as new graph nodes, so taking the
// gradient of a gradient (double backprop, needed by the WGAN-GP penalty)
// is just another backward pass over the extended graph.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // leaf gradient buffer, filled by backward()
  bool requires_grad = false;
  std::string op;  // empty for leaves and constants
  std::vector<TensorPtr> parents;
  std::function<std::vector<TensorPtr>(const TensorPtr& grad_out)> grad_fn;

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
  }
  void zero_grad() { grad.assign(value.size(), 0.0); }
};

TensorPtr make_leaf(const std::vector<int>& shape, bool requires_grad = true);
TensorPtr make_constant(const std::vector<int>& shape, const std::vector<double>& value);
TensorPtr make_constant_like(const TensorPtr& t, const std::vector<double>& value);

// When enabled (default), every op asserts its outputs are finite.
void set_nan_check(bool enabled);
bool nan_check_enabled();

// Reduction/broadcast axis groups for [B, C, H, W] tensors.
enum class Axes {
  All,            // -> [1]
  PerSample,      // over (C,H,W) -> [B]
  PerChannel,     // over (B,H,W) -> [C]
  PerSampleChan,  // over (H,W)   -> [B, C]
  PerPosition,    // over B       -> [C, H, W]
};

// ---- elementwise ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr neg(const TensorPtr& a);
TensorPtr scalar_mul(const TensorPtr& a, double c);
TensorPtr scalar_add(const TensorPtr& a, double c);
TensorPtr relu(const TensorPtr& a);
TensorPtr leaky_relu(const TensorPtr& a, double slope = 0.2);
TensorPtr tanh_op(const TensorPtr& a);
TensorPtr softplus(const TensorPtr& a);        // log(1 + e^x)
TensorPtr clip(const TensorPtr& a, double lo, double hi);
TensorPtr sqrt_op(const TensorPtr& a);
TensorPtr abs_op(const TensorPtr& a);
TensorPtr rsqrt_eps(const TensorPtr& a, double eps);  // (x + eps)^(-1/2)

// ---- reductions and broadcasts ----
TensorPtr reduce_sum(const TensorPtr& a, Axes axes);
TensorPtr reduce_mean(const TensorPtr& a, Axes axes);
TensorPtr broadcast(const TensorPtr& a, Axes axes, const std::vector<int>& target_shape);

// ---- structure ----
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_channels(const TensorPtr& a, int c0, int c1);

// ---- convolution ----
// x: [B, Ci, H, W], w: [Co, Ci, k, k] -> [B, Co, Ho, Wo], cross-correlation.
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, int stride, int pad);
// y: [B, Co, Ho, Wo], w: [Co, Ci, k, k] -> [B, Ci, H, W]; the adjoint of
// conv2d in x. out_h/out_w select the target spatial size
// ((Ho-1)*stride - 2*pad + k by default).
TensorPtr conv_transpose2d(const TensorPtr& y, const TensorPtr& w, int stride, int pad,
                           int out_h = -1, int out_w = -1);
TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& bias);

// ---- autodiff ----
// Populates .grad of every requires_grad leaf reachable from the scalar root.
void backward(const TensorPtr& root);

// Create-graph gradient: returns d(root)/d(input) as a tensor that itself
// participates in the graph. Checks that every op between input and root is
// double-differentiable and throws naming the op otherwise.
TensorPtr gradient_of(const TensorPtr& root, const TensorPtr& input);

// Max relative error between analytic and central-difference gradients of a
// scalar-valued function of the given inputs.
double gradcheck(const std::function<TensorPtr(const std::vector<TensorPtr>&)>& f,
                 std::vector<TensorPtr> inputs, double h = 1e-5);

// ---- optimiser ----
struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<std::vector<double>> m, v;  // one pair per parameter
};

void adam_step(const std::vector<TensorPtr>& params, AdamState& state);

}  // namespace agbseq::ad
