#include "agbseq/cgan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace agbseq::cgan {

using namespace agbseq::ad;

DiscKind disc_kind_from_string(const std::string& s) {
  if (s == "pixel") return DiscKind::Pixel;
  if (s == "patch16") return DiscKind::Patch16;
  if (s == "patch34") return DiscKind::Patch34;
  throw std::invalid_argument("discriminator: unknown kind " + s);
}

std::string to_string(DiscKind k) {
  switch (k) {
    case DiscKind::Pixel: return "pixel";
    case DiscKind::Patch16: return "patch16";
    case DiscKind::Patch34: return "patch34";
  }
  return "?";
}

Objective objective_from_string(const std::string& s) {
  if (s == "vanilla") return Objective::Vanilla;
  if (s == "lsgan") return Objective::LsGan;
  if (s == "wgangp") return Objective::WGanGp;
  throw std::invalid_argument("objective: unknown " + s);
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::Vanilla: return "vanilla";
    case Objective::LsGan: return "lsgan";
    case Objective::WGanGp: return "wgangp";
  }
  return "?";
}

int receptive_field(const std::vector<std::pair<int, int>>& stack) {
  int r = 1, j = 1;
  for (const auto& [k, s] : stack) {
    r += (k - 1) * j;
    j *= s;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Generator: 7x7 front conv, two stride-2 encoder convs, N residual blocks,
// two stride-2 transposed decoder convs, 7x7 output conv, ReLU output.
// ---------------------------------------------------------------------------

Generator build_generator(const GeneratorSpec& spec, unsigned long long seed) {
  if (spec.resnet_blocks < 4 || spec.resnet_blocks > 6)
    throw std::invalid_argument("generator: resnet_blocks must be 4, 5 or 6");
  if (spec.norm != NormKind::Batch && spec.norm != NormKind::Instance)
    throw std::invalid_argument("generator: norm must be bn or in");

  std::mt19937_64 rng(seed);
  Generator g;
  g.spec = spec;
  const int w = spec.base_width;

  auto push = [&](int ci, int co, int k, int s, int p, bool t, NormKind n) {
    g.convs.push_back(Conv2dLayer::make(ci, co, k, s, p, t, rng));
    g.norms.push_back(NormLayer::make(n, co));
  };

  push(spec.in_channels, w, 7, 1, 3, false, spec.norm);
  push(w, 2 * w, 4, 2, 1, false, spec.norm);
  push(2 * w, 4 * w, 4, 2, 1, false, spec.norm);
  for (int b = 0; b < spec.resnet_blocks; ++b) {
    push(4 * w, 4 * w, 3, 1, 1, false, spec.norm);
    push(4 * w, 4 * w, 3, 1, 1, false, spec.norm);
  }
  push(4 * w, 2 * w, 4, 2, 1, true, spec.norm);
  push(2 * w, w, 4, 2, 1, true, spec.norm);
  push(w, spec.out_channels, 7, 1, 3, false, NormKind::None);
  return g;
}

TensorPtr Generator::forward(const TensorPtr& x, bool train) {
  size_t i = 0;
  auto block = [&](TensorPtr h) {
    h = convs[i].forward(h);
    h = norms[i].forward(h, train);
    ++i;
    return relu(h);
  };
  TensorPtr h = block(x);
  h = block(h);
  h = block(h);
  for (int b = 0; b < spec.resnet_blocks; ++b) {
    TensorPtr skip = h;
    h = block(h);
    h = block(h);
    h = add(h, skip);
  }
  h = block(h);
  h = block(h);
  h = convs[i].forward(h);
  return relu(h);
}

std::vector<TensorPtr> Generator::parameters() const {
  std::vector<TensorPtr> ps;
  for (const auto& c : convs) {
    ps.push_back(c.w);
    ps.push_back(c.b);
  }
  for (const auto& n : norms)
    if (n.kind != NormKind::None) {
      ps.push_back(n.gamma);
      ps.push_back(n.beta);
    }
  return ps;
}

namespace {

ParamMap layer_params(const std::vector<Conv2dLayer>& convs, const std::vector<NormLayer>& norms,
                      const std::string& prefix) {
  ParamMap m;
  for (size_t i = 0; i < convs.size(); ++i) {
    const std::string base = prefix + ".conv" + std::to_string(i);
    m[base + ".w"] = convs[i].w;
    m[base + ".b"] = convs[i].b;
    if (i < norms.size() && norms[i].kind != NormKind::None) {
      m[base + ".gamma"] = norms[i].gamma;
      m[base + ".beta"] = norms[i].beta;
      if (norms[i].kind == NormKind::Batch) {
        m[base + ".running_mean"] = norms[i].running_mean;
        m[base + ".running_var"] = norms[i].running_var;
      }
    }
  }
  return m;
}

}  // namespace

ParamMap Generator::param_map(const std::string& prefix) const {
  return layer_params(convs, norms, prefix);
}

// ---------------------------------------------------------------------------
// Discriminators. LeakyReLU(0.2) between layers; norm after all but the
// first and last convolution.
// ---------------------------------------------------------------------------

Discriminator build_discriminator(const DiscriminatorSpec& spec, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  Discriminator d;
  d.spec = spec;
  const int w = spec.base_width;

  auto push = [&](int ci, int co, int k, int s, int p, NormKind n) {
    d.convs.push_back(Conv2dLayer::make(ci, co, k, s, p, false, rng));
    d.norms.push_back(NormLayer::make(n, co));
  };

  switch (spec.kind) {
    case DiscKind::Pixel:
      push(spec.in_channels, w, 1, 1, 0, NormKind::None);
      push(w, 2 * w, 1, 1, 0, spec.norm);
      push(2 * w, 1, 1, 1, 0, NormKind::None);
      break;
    case DiscKind::Patch16:
      push(spec.in_channels, w, 4, 2, 1, NormKind::None);
      push(w, 2 * w, 4, 1, 1, spec.norm);
      push(2 * w, 1, 4, 1, 1, NormKind::None);
      break;
    case DiscKind::Patch34:
      push(spec.in_channels, w, 4, 2, 1, NormKind::None);
      push(w, 2 * w, 4, 2, 1, spec.norm);
      push(2 * w, 4 * w, 4, 1, 1, spec.norm);
      push(4 * w, 1, 4, 1, 1, NormKind::None);
      break;
  }
  return d;
}

TensorPtr Discriminator::forward(const TensorPtr& xz, bool train) {
  TensorPtr h = xz;
  for (size_t i = 0; i < convs.size(); ++i) {
    h = convs[i].forward(h);
    h = norms[i].forward(h, train);
    if (i + 1 < convs.size()) h = leaky_relu(h, 0.2);
  }
  return h;
}

TensorPtr Discriminator::forward_scalar(const TensorPtr& xz, bool train) {
  return reduce_mean(forward(xz, train), Axes::PerSample);
}

std::vector<TensorPtr> Discriminator::parameters() const {
  std::vector<TensorPtr> ps;
  for (const auto& c : convs) {
    ps.push_back(c.w);
    ps.push_back(c.b);
  }
  for (const auto& n : norms)
    if (n.kind != NormKind::None) {
      ps.push_back(n.gamma);
      ps.push_back(n.beta);
    }
  return ps;
}

ParamMap Discriminator::param_map(const std::string& prefix) const {
  return layer_params(convs, norms, prefix);
}

std::vector<std::pair<int, int>> Discriminator::conv_stack() const {
  std::vector<std::pair<int, int>> stack;
  for (const auto& c : convs) stack.emplace_back(c.w->shape[2], c.stride);
  return stack;
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

namespace {

// mean BCE-with-logits against a constant 0/1 target; logits clipped at +-30.
TensorPtr bce_with_logits(const TensorPtr& logits, double target) {
  auto l = clip(logits, -30.0, 30.0);
  // softplus(l) - t*l
  return reduce_mean(sub(softplus(l), scalar_mul(l, target)), Axes::All);
}

TensorPtr mean_sq_to(const TensorPtr& d, double label) {
  auto e = scalar_add(d, -label);
  return scalar_mul(reduce_mean(mul(e, e), Axes::All), 0.5);
}

}  // namespace

GanLosses loss_vanilla(const TensorPtr& d_real, const TensorPtr& d_fake_for_d,
                       const TensorPtr& d_fake_for_g) {
  GanLosses out;
  out.loss_d = add(bce_with_logits(d_real, 1.0), bce_with_logits(d_fake_for_d, 0.0));
  out.loss_g = bce_with_logits(d_fake_for_g, 1.0);  // non-saturating form
  return out;
}

GanLosses loss_lsgan(const TensorPtr& d_real, const TensorPtr& d_fake_for_d,
                     const TensorPtr& d_fake_for_g, double a, double b, double c) {
  GanLosses out;
  out.loss_d = add(mean_sq_to(d_real, b), mean_sq_to(d_fake_for_d, a));
  out.loss_g = mean_sq_to(d_fake_for_g, c);
  return out;
}

GanLosses loss_wgangp(const TensorPtr& d_real, const TensorPtr& d_fake,
                      const TensorPtr& interp_grad_norm, double lambda_gp) {
  GanLosses out;
  auto gap = sub(reduce_mean(d_fake, Axes::All), reduce_mean(d_real, Axes::All));
  auto dev = scalar_add(interp_grad_norm, -1.0);
  auto penalty = scalar_mul(reduce_mean(mul(dev, dev), Axes::All), lambda_gp);
  out.loss_d = add(gap, penalty);
  out.loss_g = neg(reduce_mean(d_fake, Axes::All));
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

TensorPtr batch_tensor(const std::vector<PairedPatch>& data, const std::vector<int>& idx,
                       size_t lo, size_t hi, bool sar) {
  const int s = data[idx[lo]].size;
  const int ch = sar ? data[idx[lo]].sar_channels : 1;
  const int B = static_cast<int>(hi - lo);
  std::vector<double> v;
  v.reserve(static_cast<size_t>(B) * ch * s * s);
  for (size_t i = lo; i < hi; ++i) {
    const auto& src = sar ? data[idx[i]].sar : data[idx[i]].agb;
    v.insert(v.end(), src.begin(), src.end());
  }
  return make_constant({B, ch, s, s}, v);
}

void zero_all(const std::vector<TensorPtr>& ps) {
  for (const auto& p : ps) p->zero_grad();
}

}  // namespace

TrainResult train(Generator& gen, Discriminator& disc, const std::vector<PairedPatch>& dataset,
                  const TrainConfig& cfg, const std::string& checkpoint_path,
                  const std::string& loss_log_path) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.lambda_gp < 0) throw std::invalid_argument("train: lambda_gp must be >= 0");
  if (cfg.objective == Objective::WGanGp && disc.spec.norm == NormKind::Batch)
    throw std::invalid_argument(
        "train: wgangp requires per-sample normalisation in D (use ln), got bn");

  auto g_params = gen.parameters();
  auto d_params = disc.parameters();
  AdamState g_state, d_state;
  g_state.lr = d_state.lr = cfg.lr;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);

  TrainResult result;
  double last_loss_g = 0.0;

  auto save_all = [&](const std::string& path) {
    ParamMap all = gen.param_map("G");
    for (auto& [k, v] : disc.param_map("D")) all[k] = v;
    save_checkpoint(all, path);
  };

  std::ofstream log;
  if (!loss_log_path.empty()) {
    const auto parent = std::filesystem::path(loss_log_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    log.open(loss_log_path);
    log << "epoch,step,loss_d,loss_g\n";
    log.precision(12);
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    int step = 0;
    for (size_t lo = 0; lo + cfg.batch_size <= idx.size() || lo == 0; lo += cfg.batch_size) {
      const size_t hi = std::min(lo + cfg.batch_size, idx.size());
      if (hi == lo) break;
      ++step;
      try {
        auto x = batch_tensor(dataset, idx, lo, hi, true);
        auto y = batch_tensor(dataset, idx, lo, hi, false);
        const int B = x->shape[0];

        // One generator forward per batch; the D step sees it detached.
        auto fake = gen.forward(x, true);
        auto fake_const = make_constant(fake->shape, fake->value);

        // --- discriminator update ---
        zero_all(g_params);
        zero_all(d_params);
        TensorPtr loss_d;
        if (cfg.objective == Objective::WGanGp) {
          auto d_real = disc.forward_scalar(concat_channels(x, y), true);
          auto d_fake = disc.forward_scalar(concat_channels(x, fake_const), true);
          // interpolate on the AGB channel, per sample
          std::vector<double> ev(fake->numel());
          const size_t per = fake->numel() / B;
          for (int n = 0; n < B; ++n) {
            const double e = unif(rng);
            for (size_t j = 0; j < per; ++j) ev[n * per + j] = e;
          }
          auto eps_t = make_constant(fake->shape, ev);
          auto one_minus = scalar_add(neg(eps_t), 1.0);
          auto z0 = add(mul(eps_t, y), mul(one_minus, fake_const));
          auto z = make_leaf(z0->shape);
          z->value = z0->value;
          auto d_interp = disc.forward_scalar(concat_channels(x, z), true);
          auto gz = gradient_of(reduce_sum(d_interp, Axes::All), z);
          auto norm = sqrt_op(scalar_add(reduce_sum(mul(gz, gz), Axes::PerSample), 1e-12));
          loss_d = loss_wgangp(d_real, d_fake, norm, cfg.lambda_gp).loss_d;
        } else {
          auto d_real = disc.forward(concat_channels(x, y), true);
          auto d_fake = disc.forward(concat_channels(x, fake_const), true);
          loss_d = cfg.objective == Objective::Vanilla
                       ? loss_vanilla(d_real, d_fake, d_fake).loss_d
                       : loss_lsgan(d_real, d_fake, d_fake, cfg.lsgan_a, cfg.lsgan_b,
                                    cfg.lsgan_c).loss_d;
        }
        backward(loss_d);
        adam_step(d_params, d_state);
        ++result.d_steps;

        // --- generator update every n_critic D steps ---
        double loss_d_val = loss_d->value[0];
        if (result.d_steps % cfg.n_critic == 0) {
          zero_all(g_params);
          zero_all(d_params);
          TensorPtr loss_g;
          if (cfg.objective == Objective::WGanGp) {
            auto d_fake = disc.forward_scalar(concat_channels(x, fake), true);
            loss_g = neg(reduce_mean(d_fake, Axes::All));
          } else {
            auto d_fake = disc.forward(concat_channels(x, fake), true);
            loss_g = cfg.objective == Objective::Vanilla
                         ? loss_vanilla(d_fake, d_fake, d_fake).loss_g
                         : loss_lsgan(d_fake, d_fake, d_fake, cfg.lsgan_a, cfg.lsgan_b,
                                      cfg.lsgan_c).loss_g;
          }
          if (cfg.l1_weight > 0.0) {
            auto diff = sub(fake, y);
            auto l1 = reduce_mean(abs_op(diff), Axes::All);
            loss_g = add(loss_g, scalar_mul(l1, cfg.l1_weight));
          }
          backward(loss_g);
          adam_step(g_params, g_state);
          ++result.g_steps;
          last_loss_g = loss_g->value[0];
        }

        result.loss_log.push_back({static_cast<double>(epoch), static_cast<double>(step),
                                   loss_d_val, last_loss_g});
        if (log.is_open())
          log << epoch << "," << step << "," << loss_d_val << "," << last_loss_g << "\n";
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step) + ": " + e.what());
      }
      if (hi == idx.size()) break;
    }
    if (!checkpoint_path.empty() && cfg.checkpoint_interval > 0 &&
        epoch % cfg.checkpoint_interval == 0 && epoch != cfg.epochs)
      save_all(checkpoint_path + "_epoch" + std::to_string(epoch));
  }
  if (!checkpoint_path.empty()) save_all(checkpoint_path);
  return result;
}

std::vector<double> generate(Generator& gen, const std::vector<double>& sar_patch, int size) {
  const int ch = gen.spec.in_channels;
  if (sar_patch.size() != static_cast<size_t>(ch) * size * size)
    throw std::invalid_argument("generate: patch size mismatch");
  auto x = make_constant({1, ch, size, size}, sar_patch);
  auto y = gen.forward(x, false);
  return y->value;
}

}  // namespace agbseq::cgan
