#include "agbseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

namespace agbseq::ad {

namespace {

bool g_nan_check = true;

void check_finite(const Tensor& t) {
  if (!g_nan_check) return;
  for (double v : t.value)
    if (!std::isfinite(v))
      throw std::runtime_error("tensor: non-finite value in op '" + t.op + "'");
}

TensorPtr make_op(std::string op, std::vector<int> shape, std::vector<TensorPtr> parents,
                  std::vector<double> value,
                  std::function<std::vector<TensorPtr>(const TensorPtr&)> grad_fn) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->value = std::move(value);
  t->op = std::move(op);
  t->parents = std::move(parents);
  t->grad_fn = std::move(grad_fn);
  for (const auto& p : t->parents)
    if (p->requires_grad) t->requires_grad = true;
  check_finite(*t);
  return t;
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// Splits a [B, C, H, W]-style shape into (groups, inner layout) for Axes.
struct AxesPlan {
  size_t n_groups = 1;
  std::vector<int> reduced_shape;
  // group index of each flat element
  std::function<size_t(size_t)> group_of;
};

AxesPlan plan_axes(const std::vector<int>& shape, Axes axes) {
  AxesPlan plan;
  size_t total = 1;
  for (int d : shape) total *= static_cast<size_t>(d);
  const int B = shape.empty() ? 1 : shape[0];
  const int C = shape.size() > 1 ? shape[1] : 1;
  const size_t per_sample = total / B;
  const size_t per_chan_inner = per_sample / C;  // H*W

  switch (axes) {
    case Axes::All:
      plan.n_groups = 1;
      plan.reduced_shape = {1};
      plan.group_of = [](size_t) { return size_t{0}; };
      break;
    case Axes::PerSample:
      plan.n_groups = B;
      plan.reduced_shape = {B};
      plan.group_of = [per_sample](size_t i) { return i / per_sample; };
      break;
    case Axes::PerChannel:
      plan.n_groups = C;
      plan.reduced_shape = {C};
      plan.group_of = [per_sample, per_chan_inner](size_t i) {
        return (i % per_sample) / per_chan_inner;
      };
      break;
    case Axes::PerSampleChan:
      plan.n_groups = static_cast<size_t>(B) * C;
      plan.reduced_shape = {B, C};
      plan.group_of = [per_chan_inner](size_t i) { return i / per_chan_inner; };
      break;
    case Axes::PerPosition:
      plan.n_groups = per_sample;
      plan.reduced_shape = std::vector<int>(shape.begin() + 1, shape.end());
      if (plan.reduced_shape.empty()) plan.reduced_shape = {1};
      plan.group_of = [per_sample](size_t i) { return i % per_sample; };
      break;
  }
  return plan;
}

// Elementwise op with a locally-constant derivative (mask captured by value).
// Exact to first order; the mask's own dependence on the input is dropped in
// higher-order passes.
TensorPtr unary_masked(const char* name, const TensorPtr& a,
                       const std::function<double(double)>& f,
                       const std::function<double(double)>& df) {
  std::vector<double> out(a->numel()), mask(a->numel());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = f(a->value[i]);
    mask[i] = df(a->value[i]);
  }
  auto mask_t = make_constant(a->shape, mask);
  return make_op(name, a->shape, {a}, std::move(out),
                 [mask_t](const TensorPtr& g) -> std::vector<TensorPtr> {
                   return {mul(g, mask_t)};
                 });
}

}  // namespace

void set_nan_check(bool enabled) { g_nan_check = enabled; }
bool nan_check_enabled() { return g_nan_check; }

TensorPtr make_leaf(const std::vector<int>& shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = shape;
  t->value.assign(t->numel(), 0.0);
  t->grad.assign(t->numel(), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr make_constant(const std::vector<int>& shape, const std::vector<double>& value) {
  auto t = std::make_shared<Tensor>();
  t->shape = shape;
  t->value = value;
  if (t->value.size() != t->numel()) throw std::invalid_argument("constant: size mismatch");
  return t;
}

TensorPtr make_constant_like(const TensorPtr& ref, const std::vector<double>& value) {
  return make_constant(ref->shape, value);
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op("add", a->shape, {a, b}, std::move(out),
                 [](const TensorPtr& g) -> std::vector<TensorPtr> { return {g, g}; });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_op("sub", a->shape, {a, b}, std::move(out),
                 [](const TensorPtr& g) -> std::vector<TensorPtr> { return {g, neg(g)}; });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  auto pa = a, pb = b;
  return make_op("mul", a->shape, {a, b}, std::move(out),
                 [pa, pb](const TensorPtr& g) -> std::vector<TensorPtr> {
                   return {mul(g, pb), mul(g, pa)};
                 });
}

TensorPtr neg(const TensorPtr& a) { return scalar_mul(a, -1.0); }

TensorPtr scalar_mul(const TensorPtr& a, double c) {
  std::vector<double> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_op("scalar_mul", a->shape, {a}, std::move(out),
                 [c](const TensorPtr& g) -> std::vector<TensorPtr> { return {scalar_mul(g, c)}; });
}

TensorPtr scalar_add(const TensorPtr& a, double c) {
  std::vector<double> out(a->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + c;
  return make_op("scalar_add", a->shape, {a}, std::move(out),
                 [](const TensorPtr& g) -> std::vector<TensorPtr> { return {g}; });
}

TensorPtr relu(const TensorPtr& a) {
  return unary_masked("relu", a, [](double v) { return v > 0 ? v : 0.0; },
                      [](double v) { return v > 0 ? 1.0 : 0.0; });
}

TensorPtr leaky_relu(const TensorPtr& a, double slope) {
  return unary_masked("leaky_relu", a, [slope](double v) { return v > 0 ? v : slope * v; },
                      [slope](double v) { return v > 0 ? 1.0 : slope; });
}

TensorPtr tanh_op(const TensorPtr& a) {
  return unary_masked("tanh", a, [](double v) { return std::tanh(v); },
                      [](double v) {
                        const double t = std::tanh(v);
                        return 1.0 - t * t;
                      });
}

TensorPtr softplus(const TensorPtr& a) {
  return unary_masked("softplus", a,
                      [](double v) { return v > 30 ? v : std::log1p(std::exp(v)); },
                      [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

TensorPtr clip(const TensorPtr& a, double lo, double hi) {
  return unary_masked("clip", a,
                      [lo, hi](double v) { return std::clamp(v, lo, hi); },
                      [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

TensorPtr sqrt_op(const TensorPtr& a) {
  return unary_masked("sqrt", a, [](double v) { return std::sqrt(v); },
                      [](double v) { return 0.5 / std::sqrt(v); });
}

TensorPtr rsqrt_eps(const TensorPtr& a, double eps) {
  return unary_masked("rsqrt_eps", a,
                      [eps](double v) { return 1.0 / std::sqrt(v + eps); },
                      [eps](double v) { return -0.5 * std::pow(v + eps, -1.5); });
}

TensorPtr abs_op(const TensorPtr& a) {
  return unary_masked("abs", a, [](double v) { return std::fabs(v); },
                      [](double v) { return v < 0.0 ? -1.0 : 1.0; });
}

TensorPtr reduce_sum(const TensorPtr& a, Axes axes) {
  const AxesPlan plan = plan_axes(a->shape, axes);
  std::vector<double> out(plan.n_groups, 0.0);
  for (size_t i = 0; i < a->numel(); ++i) out[plan.group_of(i)] += a->value[i];
  auto in_shape = a->shape;
  return make_op("reduce_sum", plan.reduced_shape, {a}, std::move(out),
                 [axes, in_shape](const TensorPtr& g) -> std::vector<TensorPtr> {
                   return {broadcast(g, axes, in_shape)};
                 });
}

TensorPtr reduce_mean(const TensorPtr& a, Axes axes) {
  const AxesPlan plan = plan_axes(a->shape, axes);
  const double scale = static_cast<double>(plan.n_groups) / a->numel();
  return scalar_mul(reduce_sum(a, axes), scale);
}

TensorPtr broadcast(const TensorPtr& a, Axes axes, const std::vector<int>& target_shape) {
  const AxesPlan plan = plan_axes(target_shape, axes);
  if (a->numel() != plan.n_groups)
    throw std::invalid_argument("broadcast: source size does not match axis groups");
  size_t total = 1;
  for (int d : target_shape) total *= static_cast<size_t>(d);
  std::vector<double> out(total);
  for (size_t i = 0; i < total; ++i) out[i] = a->value[plan.group_of(i)];
  return make_op("broadcast", target_shape, {a}, std::move(out),
                 [axes](const TensorPtr& g) -> std::vector<TensorPtr> {
                   return {reduce_sum(g, axes)};
                 });
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 4 || b->shape.size() != 4)
    throw std::invalid_argument("concat: expected [B,C,H,W] tensors");
  if (a->shape[0] != b->shape[0] || a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3])
    throw std::invalid_argument("concat: shape mismatch");
  const int B = a->shape[0], Ca = a->shape[1], Cb = b->shape[1];
  const int HW = a->shape[2] * a->shape[3];
  std::vector<int> shape = {B, Ca + Cb, a->shape[2], a->shape[3]};
  std::vector<double> out(static_cast<size_t>(B) * (Ca + Cb) * HW);
  for (int n = 0; n < B; ++n) {
    std::copy_n(&a->value[static_cast<size_t>(n) * Ca * HW], static_cast<size_t>(Ca) * HW,
                &out[static_cast<size_t>(n) * (Ca + Cb) * HW]);
    std::copy_n(&b->value[static_cast<size_t>(n) * Cb * HW], static_cast<size_t>(Cb) * HW,
                &out[static_cast<size_t>(n) * (Ca + Cb) * HW + static_cast<size_t>(Ca) * HW]);
  }
  return make_op("concat", shape, {a, b}, std::move(out),
                 [Ca, Cb](const TensorPtr& g) -> std::vector<TensorPtr> {
                   return {slice_channels(g, 0, Ca), slice_channels(g, Ca, Ca + Cb)};
                 });
}

TensorPtr slice_channels(const TensorPtr& a, int c0, int c1) {
  if (a->shape.size() != 4) throw std::invalid_argument("slice: expected [B,C,H,W]");
  const int B = a->shape[0], C = a->shape[1], HW = a->shape[2] * a->shape[3];
  if (c0 < 0 || c1 > C || c0 >= c1) throw std::invalid_argument("slice: bad channel range");
  const int Cs = c1 - c0;
  std::vector<int> shape = {B, Cs, a->shape[2], a->shape[3]};
  std::vector<double> out(static_cast<size_t>(B) * Cs * HW);
  for (int n = 0; n < B; ++n)
    std::copy_n(&a->value[(static_cast<size_t>(n) * C + c0) * HW], static_cast<size_t>(Cs) * HW,
                &out[static_cast<size_t>(n) * Cs * HW]);
  const int Ctot = C;
  return make_op("slice", shape, {a}, std::move(out),
                 [c0, c1, Ctot](const TensorPtr& g) -> std::vector<TensorPtr> {
                   // pad the gradient back to the full channel count
                   const int B = g->shape[0], HW = g->shape[2] * g->shape[3];
                   const int Cs = c1 - c0;
                   std::vector<double> zl, zr;
                   TensorPtr grown = g;
                   if (c0 > 0) {
                     auto zeros = make_constant({B, c0, g->shape[2], g->shape[3]},
                                                std::vector<double>(static_cast<size_t>(B) * c0 * HW, 0.0));
                     grown = concat_channels(zeros, grown);
                   }
                   if (c1 < Ctot) {
                     auto zeros = make_constant({B, Ctot - c1, g->shape[2], g->shape[3]},
                                                std::vector<double>(static_cast<size_t>(B) * (Ctot - c1) * HW, 0.0));
                     grown = concat_channels(grown, zeros);
                   }
                   (void)Cs;
                   return {grown};
                 });
}

// ---------------------------------------------------------------------------
// Convolution kernels (im2col + gemm). Three raw kernels close under
// differentiation: fwd, d/dx, d/dw are each bilinear in their two arguments.
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int B, Ci, H, W, Co, k, stride, pad, Ho, Wo;
};

ConvDims conv_dims(const std::vector<int>& xs, const std::vector<int>& ws, int stride, int pad) {
  if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv: expected 4-d tensors");
  ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad, 0, 0};
  if (ws[1] != d.Ci) throw std::invalid_argument("conv: channel mismatch");
  if (ws[2] != ws[3]) throw std::invalid_argument("conv: square kernels only");
  d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
  if (d.Ho < 1 || d.Wo < 1) throw std::invalid_argument("conv: spatial dims too small for kernel");
  return d;
}

// im2col: [Ci*k*k, Ho*Wo] for one sample.
void im2col(const double* x, const ConvDims& d, Eigen::MatrixXd& K) {
  K.resize(d.Ci * d.k * d.k, d.Ho * d.Wo);
  for (int c = 0; c < d.Ci; ++c)
    for (int ki = 0; ki < d.k; ++ki)
      for (int kj = 0; kj < d.k; ++kj) {
        const int krow = (c * d.k + ki) * d.k + kj;
        for (int oi = 0; oi < d.Ho; ++oi) {
          const int si = oi * d.stride - d.pad + ki;
          for (int oj = 0; oj < d.Wo; ++oj) {
            const int sj = oj * d.stride - d.pad + kj;
            double v = 0.0;
            if (si >= 0 && si < d.H && sj >= 0 && sj < d.W)
              v = x[(static_cast<size_t>(c) * d.H + si) * d.W + sj];
            K(krow, oi * d.Wo + oj) = v;
          }
        }
      }
}

std::vector<double> k_conv_fwd(const std::vector<double>& x, const std::vector<double>& w,
                               const ConvDims& d) {
  std::vector<double> y(static_cast<size_t>(d.B) * d.Co * d.Ho * d.Wo);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
      w.data(), d.Co, d.Ci * d.k * d.k);
  Eigen::MatrixXd K;
  for (int n = 0; n < d.B; ++n) {
    im2col(&x[static_cast<size_t>(n) * d.Ci * d.H * d.W], d, K);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(
        &y[static_cast<size_t>(n) * d.Co * d.Ho * d.Wo], d.Co, d.Ho * d.Wo);
    Y = W * K;
  }
  return y;
}

std::vector<double> k_conv_dw(const std::vector<double>& x, const std::vector<double>& g,
                              const ConvDims& d) {
  Eigen::MatrixXd DW = Eigen::MatrixXd::Zero(d.Co, d.Ci * d.k * d.k);
  Eigen::MatrixXd K;
  for (int n = 0; n < d.B; ++n) {
    im2col(&x[static_cast<size_t>(n) * d.Ci * d.H * d.W], d, K);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> G(
        &g[static_cast<size_t>(n) * d.Co * d.Ho * d.Wo], d.Co, d.Ho * d.Wo);
    DW += G * K.transpose();
  }
  std::vector<double> dw(static_cast<size_t>(d.Co) * d.Ci * d.k * d.k);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      dw.data(), d.Co, d.Ci * d.k * d.k) = DW;
  return dw;
}

std::vector<double> k_conv_dx(const std::vector<double>& g, const std::vector<double>& w,
                              const ConvDims& d) {
  std::vector<double> dx(static_cast<size_t>(d.B) * d.Ci * d.H * d.W, 0.0);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
      w.data(), d.Co, d.Ci * d.k * d.k);
  Eigen::MatrixXd C;
  for (int n = 0; n < d.B; ++n) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> G(
        &g[static_cast<size_t>(n) * d.Co * d.Ho * d.Wo], d.Co, d.Ho * d.Wo);
    C = W.transpose() * G;  // [Ci*k*k, Ho*Wo]
    double* out = &dx[static_cast<size_t>(n) * d.Ci * d.H * d.W];
    for (int c = 0; c < d.Ci; ++c)
      for (int ki = 0; ki < d.k; ++ki)
        for (int kj = 0; kj < d.k; ++kj) {
          const int krow = (c * d.k + ki) * d.k + kj;
          for (int oi = 0; oi < d.Ho; ++oi) {
            const int si = oi * d.stride - d.pad + ki;
            if (si < 0 || si >= d.H) continue;
            for (int oj = 0; oj < d.Wo; ++oj) {
              const int sj = oj * d.stride - d.pad + kj;
              if (sj < 0 || sj >= d.W) continue;
              out[(static_cast<size_t>(c) * d.H + si) * d.W + sj] += C(krow, oi * d.Wo + oj);
            }
          }
        }
  }
  return dx;
}

TensorPtr op_conv_fwd(const TensorPtr& x, const TensorPtr& w, int stride, int pad);
TensorPtr op_conv_dx(const TensorPtr& g, const TensorPtr& w, int stride, int pad, int H, int W);
TensorPtr op_conv_dw(const TensorPtr& x, const TensorPtr& g, int stride, int pad, int k);

TensorPtr op_conv_fwd(const TensorPtr& x, const TensorPtr& w, int stride, int pad) {
  const ConvDims d = conv_dims(x->shape, w->shape, stride, pad);
  auto px = x;
  auto pw = w;
  return make_op("conv2d", {d.B, d.Co, d.Ho, d.Wo}, {x, w}, k_conv_fwd(x->value, w->value, d),
                 [px, pw, stride, pad, d](const TensorPtr& g) -> std::vector<TensorPtr> {
                   return {op_conv_dx(g, pw, stride, pad, d.H, d.W),
                           op_conv_dw(px, g, stride, pad, d.k)};
                 });
}

TensorPtr op_conv_dx(const TensorPtr& g, const TensorPtr& w, int stride, int pad, int H, int W) {
  // g: [B, Co, Ho, Wo], w: [Co, Ci, k, k] -> [B, Ci, H, W]
  ConvDims d{g->shape[0], w->shape[1], H, W, w->shape[0], w->shape[2], stride, pad,
             g->shape[2], g->shape[3]};
  const int exp_ho = (H + 2 * pad - d.k) / stride + 1;
  const int exp_wo = (W + 2 * pad - d.k) / stride + 1;
  if (exp_ho != d.Ho || exp_wo != d.Wo)
    throw std::invalid_argument("conv_dx: output size inconsistent with target");
  auto pg = g;
  auto pw = w;
  return make_op("conv_dx", {d.B, d.Ci, H, W}, {g, w}, k_conv_dx(g->value, w->value, d),
                 [pg, pw, stride, pad, d](const TensorPtr& u) -> std::vector<TensorPtr> {
                   // bilinear: d/dg = conv_fwd(u, w); d/dw = conv_dw(u, g)
                   return {op_conv_fwd(u, pw, stride, pad),
                           op_conv_dw(u, pg, stride, pad, d.k)};
                 });
}

TensorPtr op_conv_dw(const TensorPtr& x, const TensorPtr& g, int stride, int pad, int k) {
  ConvDims d{x->shape[0], x->shape[1], x->shape[2], x->shape[3], g->shape[1], k,
             stride, pad, g->shape[2], g->shape[3]};
  auto px = x;
  auto pg = g;
  return make_op("conv_dw", {d.Co, d.Ci, k, k}, {x, g}, k_conv_dw(x->value, g->value, d),
                 [px, pg, stride, pad, d](const TensorPtr& u) -> std::vector<TensorPtr> {
                   // u: [Co, Ci, k, k]; d/dx = conv_dx(g, u); d/dg = conv_fwd(x, u)
                   return {op_conv_dx(pg, u, stride, pad, d.H, d.W),
                           op_conv_fwd(px, u, stride, pad)};
                 });
}

}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, int stride, int pad) {
  return op_conv_fwd(x, w, stride, pad);
}

TensorPtr conv_transpose2d(const TensorPtr& y, const TensorPtr& w, int stride, int pad,
                           int out_h, int out_w) {
  if (y->shape.size() != 4 || w->shape.size() != 4)
    throw std::invalid_argument("conv_transpose: expected 4-d tensors");
  const int k = w->shape[2];
  if (out_h < 0) out_h = (y->shape[2] - 1) * stride - 2 * pad + k;
  if (out_w < 0) out_w = (y->shape[3] - 1) * stride - 2 * pad + k;
  return op_conv_dx(y, w, stride, pad, out_h, out_w);
}

TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& bias) {
  if (x->shape.size() != 4 || bias->numel() != static_cast<size_t>(x->shape[1]))
    throw std::invalid_argument("bias: expected [B,C,H,W] and [C]");
  return add(x, broadcast(bias, Axes::PerChannel, x->shape));
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

void topo_sort(const TensorPtr& root, std::vector<TensorPtr>& order) {
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<TensorPtr, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (parent->requires_grad && !seen.count(parent.get())) {
        seen.insert(parent.get());
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

// Accumulated create-graph gradients for every node reachable from root.
std::unordered_map<Tensor*, TensorPtr> grad_map(const TensorPtr& root) {
  if (root->numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  std::vector<TensorPtr> order;
  topo_sort(root, order);  // parents before children

  std::unordered_map<Tensor*, TensorPtr> grads;
  grads[root.get()] = make_constant(root->shape, {1.0});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const TensorPtr& node = *it;
    auto git = grads.find(node.get());
    if (git == grads.end() || !node->grad_fn) continue;
    const auto pgrads = node->grad_fn(git->second);
    if (pgrads.size() != node->parents.size())
      throw std::logic_error("backward: grad_fn arity mismatch in op " + node->op);
    for (size_t i = 0; i < pgrads.size(); ++i) {
      const auto& parent = node->parents[i];
      if (!parent->requires_grad) continue;
      auto pit = grads.find(parent.get());
      if (pit == grads.end())
        grads[parent.get()] = pgrads[i];
      else
        pit->second = add(pit->second, pgrads[i]);
    }
  }
  return grads;
}

}  // namespace

void backward(const TensorPtr& root) {
  auto grads = grad_map(root);
  std::vector<TensorPtr> order;
  topo_sort(root, order);
  for (const auto& node : order) {
    if (node->grad_fn || !node->requires_grad) continue;  // leaves only
    auto it = grads.find(node.get());
    if (it == grads.end()) continue;
    if (node->grad.size() != node->value.size()) node->grad.assign(node->value.size(), 0.0);
    for (size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += it->second->value[i];
  }
}

TensorPtr gradient_of(const TensorPtr& root, const TensorPtr& input) {
  // Double-differentiable op set; tanh/softplus/sqrt carry value-captured
  // derivative masks and are rejected inside the inner graph.
  static const std::set<std::string> allowed = {
      "",          "add",      "sub",     "mul",        "scalar_mul", "scalar_add",
      "relu",      "leaky_relu", "clip",  "rsqrt_eps",  "reduce_sum", "broadcast",
      "concat",    "slice",    "conv2d",  "conv_dx",    "conv_dw"};
  std::vector<TensorPtr> order;
  topo_sort(root, order);
  for (const auto& node : order)
    if (!allowed.count(node->op))
      throw std::invalid_argument("gradient_of: op '" + node->op +
                                  "' is not double-differentiable");
  auto grads = grad_map(root);
  auto it = grads.find(input.get());
  if (it == grads.end())
    return make_constant(input->shape, std::vector<double>(input->numel(), 0.0));
  return it->second;
}

double gradcheck(const std::function<TensorPtr(const std::vector<TensorPtr>&)>& f,
                 std::vector<TensorPtr> inputs, double h) {
  for (auto& t : inputs) t->zero_grad();
  auto out = f(inputs);
  if (out->numel() != 1) throw std::invalid_argument("gradcheck: f must return a scalar");
  backward(out);

  double max_rel = 0.0;
  for (auto& t : inputs) {
    if (!t->requires_grad) continue;
    for (size_t i = 0; i < t->value.size(); ++i) {
      const double orig = t->value[i];
      t->value[i] = orig + h;
      const double fp = f(inputs)->value[0];
      t->value[i] = orig - h;
      const double fm = f(inputs)->value[0];
      t->value[i] = orig;
      const double num = (fp - fm) / (2 * h);
      const double ana = t->grad[i];
      const double denom = std::max({std::fabs(num), std::fabs(ana), 1e-8});
      max_rel = std::max(max_rel, std::fabs(num - ana) / denom);
    }
  }
  return max_rel;
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->value.size(), 0.0);
      state.v[i].assign(params[i]->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam: parameter count changed");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.grad.size() != p.value.size())
      throw std::invalid_argument("adam: missing gradient buffer");
    for (size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      state.m[i][j] = state.beta1 * state.m[i][j] + (1.0 - state.beta1) * g;
      state.v[i][j] = state.beta2 * state.v[i][j] + (1.0 - state.beta2) * g * g;
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      p.value[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace agbseq::ad
