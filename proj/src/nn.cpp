#include "agbseq/nn.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace agbseq::ad {

NormKind norm_kind_from_string(const std::string& s) {
  if (s == "none") return NormKind::None;
  if (s == "bn") return NormKind::Batch;
  if (s == "in") return NormKind::Instance;
  if (s == "ln") return NormKind::Layer;
  throw std::invalid_argument("norm: unknown kind " + s);
}

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::Batch: return "bn";
    case NormKind::Instance: return "in";
    case NormKind::Layer: return "ln";
  }
  return "?";
}

void init_normal(const TensorPtr& t, std::mt19937_64& rng, double std_dev) {
  std::normal_distribution<double> dist(0.0, std_dev);
  for (double& v : t->value) v = dist(rng);
}

Conv2dLayer Conv2dLayer::make(int in_ch, int out_ch, int k, int stride, int pad, bool transpose,
                              std::mt19937_64& rng, double init_std) {
  Conv2dLayer l;
  l.stride = stride;
  l.pad = pad;
  l.transpose = transpose;
  // conv_transpose reuses the conv weight layout [Cy, Cx, k, k] with the
  // incoming channels in the first slot.
  l.w = make_leaf(transpose ? std::vector<int>{in_ch, out_ch, k, k}
                            : std::vector<int>{out_ch, in_ch, k, k});
  l.b = make_leaf({out_ch});
  init_normal(l.w, rng, init_std);
  return l;
}

TensorPtr Conv2dLayer::forward(const TensorPtr& x) const {
  TensorPtr y = transpose ? conv_transpose2d(x, w, stride, pad) : conv2d(x, w, stride, pad);
  return add_channel_bias(y, b);
}

NormLayer NormLayer::make(NormKind kind, int channels) {
  NormLayer n;
  n.kind = kind;
  if (kind == NormKind::None) return n;
  n.gamma = make_leaf({channels});
  n.beta = make_leaf({channels});
  std::fill(n.gamma->value.begin(), n.gamma->value.end(), 1.0);
  n.running_mean = make_leaf({channels}, false);
  n.running_var = make_leaf({channels}, false);
  std::fill(n.running_var->value.begin(), n.running_var->value.end(), 1.0);
  return n;
}

TensorPtr NormLayer::forward(const TensorPtr& x, bool train) {
  if (kind == NormKind::None) return x;
  const auto& shape = x->shape;

  TensorPtr xhat;
  if (kind == NormKind::Batch && !train) {
    // eval: normalise with the running statistics
    const int C = shape[1];
    std::vector<double> scale(C), shift(C);
    for (int c = 0; c < C; ++c) {
      scale[c] = 1.0 / std::sqrt(running_var->value[c] + eps);
      shift[c] = -running_mean->value[c] * scale[c];
    }
    auto s = broadcast(make_constant({C}, scale), Axes::PerChannel, shape);
    auto t = broadcast(make_constant({C}, shift), Axes::PerChannel, shape);
    xhat = add(mul(x, s), t);
  } else {
    const Axes axes = kind == NormKind::Batch ? Axes::PerChannel
                      : kind == NormKind::Instance ? Axes::PerSampleChan
                                                   : Axes::PerSample;
    auto mu = reduce_mean(x, axes);
    auto xc = sub(x, broadcast(mu, axes, shape));
    auto var = reduce_mean(mul(xc, xc), axes);
    xhat = mul(xc, broadcast(rsqrt_eps(var, eps), axes, shape));

    if (kind == NormKind::Batch && train) {
      for (size_t c = 0; c < running_mean->value.size(); ++c) {
        running_mean->value[c] = (1.0 - momentum) * running_mean->value[c] + momentum * mu->value[c];
        running_var->value[c] = (1.0 - momentum) * running_var->value[c] + momentum * var->value[c];
      }
    }
  }
  auto g = broadcast(gamma, Axes::PerChannel, shape);
  auto b = broadcast(beta, Axes::PerChannel, shape);
  return add(mul(xhat, g), b);
}

void save_checkpoint(const ParamMap& params, const std::string& path) {
  const std::string stem = path;
  const auto parent = std::filesystem::path(stem).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);

  json manifest;
  manifest["params"] = json::object();
  std::vector<std::string> order;
  for (const auto& [name, t] : params) {
    manifest["params"][name] = t->shape;
    order.push_back(name);
  }
  manifest["order"] = order;
  std::ofstream hdr(stem + ".json");
  if (!hdr) throw std::runtime_error("checkpoint: cannot write " + stem + ".json");
  hdr << manifest.dump(2) << "\n";

  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot write " + stem + ".bin");
  for (const auto& name : order) {
    const auto& v = params.at(name)->value;
    bin.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

void load_checkpoint(ParamMap& params, const std::string& path) {
  std::ifstream hdr(path + ".json");
  if (!hdr) throw std::runtime_error("checkpoint: cannot open " + path + ".json");
  json manifest = json::parse(hdr);
  std::ifstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot open " + path + ".bin");

  for (const auto& name : manifest.at("order").get<std::vector<std::string>>()) {
    const auto shape = manifest.at("params").at(name).get<std::vector<int>>();
    auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("checkpoint: unknown parameter " + name);
    if (it->second->shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    auto& v = it->second->value;
    bin.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("checkpoint: truncated payload");
  }
}

}  // namespace agbseq::ad
