#include "agbseq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "agbseq/patches.hpp"
#include "agbseq/plots.hpp"
#include "agbseq/speckle.hpp"

namespace agbseq::pipeline {

using nlohmann::json;

bool use_db_scale(const PipelineConfig& cfg) {
  if (cfg.force_db.has_value()) return *cfg.force_db;
  return cfg.model == "cgan";
}

namespace {

void write_json_file(const json& j, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("pipeline: cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("pipeline: cannot open " + path);
  json j;
  in >> j;
  return j;
}

json metrics_to_json(const MetricReport& m) {
  json j{{"r", m.r}, {"rmse", m.rmse}, {"mae", m.mae}, {"n", m.n}};
  if (m.quartile_rmse) j["quartile_rmse"] = *m.quartile_rmse;
  if (m.summary)
    j["summary"] = {{"mean", m.summary->mean},
                    {"median", m.summary->median},
                    {"min", m.summary->min},
                    {"max", m.summary->max}};
  return j;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

// Wall-to-wall Eq.(2)-style prediction; the sqrt-scale linear predictor is
// clamped at zero before squaring, so the map floor is the model MSE.
Raster predict_map(const SqrtRegressionModel& m, const BandSet& bands) {
  const Raster& first = bands.bands.front();
  Raster out(first.width, first.height, 1, first.pixel_size, first.origin_x, first.origin_y);
  std::vector<const Raster*> sel;
  std::vector<double> coef;
  for (const auto& name : m.selected) {
    sel.push_back(&bands.band(name));
    coef.push_back(m.coefficients.at(name));
  }
  for (size_t i = 0; i < out.data.size(); ++i) {
    double t = m.intercept;
    for (size_t jx = 0; jx < sel.size(); ++jx) t += coef[jx] * sel[jx]->data[i];
    t = std::max(0.0, t);
    out.data[i] = t * t + m.mse;
  }
  return out;
}

// Metrics of plot-footprint means of the prediction map against plot AGB.
MetricReport metrics_vs_plots(const Raster& prediction, const std::vector<PlotRecord>& plots) {
  std::vector<double> ref, pred;
  for (const auto& p : plots) {
    ref.push_back(p.agb);
    pred.push_back(area_weighted_mean(prediction, p));
  }
  MetricReport m = paired_metrics(ref, pred);
  if (ref.size() >= 8) m.quartile_rmse = quartile_rmse(ref, pred);
  return m;
}

MetricReport metrics_vs_map(const Raster& reference, const Raster& prediction) {
  std::vector<double> ref, pred;
  for (size_t i = 0; i < reference.data.size(); ++i) {
    if (reference.is_nodata(reference.data[i]) || prediction.is_nodata(prediction.data[i]))
      continue;
    ref.push_back(reference.data[i]);
    pred.push_back(prediction.data[i]);
  }
  MetricReport m = paired_metrics(ref, pred);
  if (ref.size() >= 8) m.quartile_rmse = quartile_rmse(ref, pred);
  m.summary = distribution_summary(prediction);
  return m;
}

}  // namespace

PipelineConfig config_from_json(const std::string& path) {
  const json j = read_json_file(path);
  PipelineConfig cfg;
  try {
    cfg.vv_path = j.value("vv", cfg.vv_path);
    cfg.vh_path = j.value("vh", cfg.vh_path);
    cfg.plots_path = j.value("plots", cfg.plots_path);
    cfg.surrogate_path = j.value("surrogate", cfg.surrogate_path);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.speckle_filter = j.value("speckle_filter", cfg.speckle_filter);
    cfg.speckle_window = j.value("speckle_window", cfg.speckle_window);
    if (j.contains("force_db")) cfg.force_db = j.at("force_db").get<bool>();
    cfg.target_pixel_size = j.value("target_pixel_size", cfg.target_pixel_size);
    cfg.model = j.value("model", cfg.model);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.split = j.value("split", cfg.split);
    cfg.validation_fraction = j.value("validation_fraction", cfg.validation_fraction);
    cfg.cv_folds = j.value("cv_folds", cfg.cv_folds);
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.predict_stride = j.value("predict_stride", cfg.predict_stride);
    cfg.augment = j.value("augment", cfg.augment);
    cfg.mosaic_p = j.value("mosaic_p", cfg.mosaic_p);
    cfg.agb_scale = j.value("agb_scale", cfg.agb_scale);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("cgan")) {
      const json& c = j.at("cgan");
      cfg.gen.resnet_blocks = c.value("resnet_blocks", cfg.gen.resnet_blocks);
      cfg.gen.base_width = c.value("base_width", cfg.gen.base_width);
      cfg.gen.norm = ad::norm_kind_from_string(c.value("gen_norm", to_string(cfg.gen.norm)));
      cfg.disc.kind = cgan::disc_kind_from_string(c.value("disc", to_string(cfg.disc.kind)));
      cfg.disc.norm = ad::norm_kind_from_string(c.value("disc_norm", to_string(cfg.disc.norm)));
      cfg.disc.base_width = c.value("disc_base_width", cfg.disc.base_width);
      cfg.train.objective =
          cgan::objective_from_string(c.value("objective", to_string(cfg.train.objective)));
      cfg.train.epochs = c.value("epochs", cfg.train.epochs);
      cfg.train.lr = c.value("lr", cfg.train.lr);
      cfg.train.batch_size = c.value("batch_size", cfg.train.batch_size);
      cfg.train.lambda_gp = c.value("lambda_gp", cfg.train.lambda_gp);
      cfg.train.l1_weight = c.value("l1_weight", cfg.train.l1_weight);
      cfg.train.n_critic = c.value("n_critic", cfg.train.n_critic);
      cfg.train.checkpoint_interval = c.value("checkpoint_interval", cfg.train.checkpoint_interval);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

void echo_config(const PipelineConfig& cfg, const std::string& path) {
  json j{{"vv", cfg.vv_path},
         {"vh", cfg.vh_path},
         {"plots", cfg.plots_path},
         {"surrogate", cfg.surrogate_path},
         {"out_dir", cfg.out_dir},
         {"speckle_filter", cfg.speckle_filter},
         {"speckle_window", cfg.speckle_window},
         {"target_pixel_size", cfg.target_pixel_size},
         {"model", cfg.model},
         {"alpha", cfg.alpha},
         {"split", cfg.split},
         {"validation_fraction", cfg.validation_fraction},
         {"cv_folds", cfg.cv_folds},
         {"patch_size", cfg.patch_size},
         {"predict_stride", cfg.predict_stride},
         {"augment", cfg.augment},
         {"mosaic_p", cfg.mosaic_p},
         {"agb_scale", cfg.agb_scale},
         {"seed", cfg.seed},
         {"threads", cfg.threads},
         {"db_scale", use_db_scale(cfg)}};
  if (cfg.force_db) j["force_db"] = *cfg.force_db;
  j["cgan"] = {{"resnet_blocks", cfg.gen.resnet_blocks},
               {"base_width", cfg.gen.base_width},
               {"gen_norm", to_string(cfg.gen.norm)},
               {"disc", to_string(cfg.disc.kind)},
               {"disc_norm", to_string(cfg.disc.norm)},
               {"disc_base_width", cfg.disc.base_width},
               {"objective", to_string(cfg.train.objective)},
               {"epochs", cfg.train.epochs},
               {"lr", cfg.train.lr},
               {"batch_size", cfg.train.batch_size},
               {"lambda_gp", cfg.train.lambda_gp},
               {"l1_weight", cfg.train.l1_weight},
               {"n_critic", cfg.train.n_critic},
               {"checkpoint_interval", cfg.train.checkpoint_interval}};
  write_json_file(j, path);
}

Preprocessed preprocess(const PipelineConfig& cfg, bool want_bands, bool want_false_colour) {
  if (cfg.vv_path.empty() || cfg.vh_path.empty())
    throw std::invalid_argument("preprocess: vv and vh raster paths are required");
  Preprocessed pre;
  pre.vv = load_raster(cfg.vv_path);
  pre.vh = load_raster(cfg.vh_path);
  if (pre.vv.width != pre.vh.width || pre.vv.height != pre.vh.height)
    throw std::runtime_error("preprocess: vv and vh extents differ");
  if (cfg.speckle_filter) {
    SpeckleConfig sc;
    sc.window = cfg.speckle_window;
    pre.vv = refined_lee(pre.vv, sc);
    pre.vh = refined_lee(pre.vh, sc);
  }
  if (cfg.target_pixel_size > 0.0 && cfg.target_pixel_size != pre.vv.pixel_size) {
    pre.vv = resample_cubic(pre.vv, cfg.target_pixel_size);
    pre.vh = resample_cubic(pre.vh, cfg.target_pixel_size);
  }
  if (use_db_scale(cfg)) {
    pre.vv = to_db(pre.vv);
    pre.vh = to_db(pre.vh);
  }
  if (want_bands) pre.bands = derived_bands(pre.vv, pre.vh);
  if (want_false_colour) pre.false_colour = make_false_colour(pre.vv, pre.vh);
  return pre;
}

NonseqResult run_nonsequential(const PipelineConfig& cfg) {
  if (cfg.plots_path.empty())
    throw std::invalid_argument("run_nonsequential: plots path is required");
  Preprocessed pre = preprocess(cfg, true, false);
  const auto plots = load_plots(cfg.plots_path);

  DesignMatrix X;
  X.names = pre.bands.names;
  X.columns.resize(X.names.size());
  for (const auto& p : plots) {
    for (size_t b = 0; b < pre.bands.bands.size(); ++b)
      X.columns[b].push_back(area_weighted_mean(pre.bands.bands[b], p));
    X.response.push_back(p.agb);
  }
  X.validate();

  NonseqResult res;
  res.model = fit_sqrt_model(X, cfg.alpha);
  res.prediction = predict_map(res.model, pre.bands);
  res.vs_plots = metrics_vs_plots(res.prediction, plots);
  res.loocv_rmse = res.model.selected.empty() ? 0.0 : loocv_rmse(X, res.model.selected);

  save_model(res.model, join_path(cfg.out_dir, "model_nonseq.json"));
  save_raster(res.prediction, join_path(cfg.out_dir, "prediction_nonseq"));
  json j{{"vs_plots", metrics_to_json(res.vs_plots)}, {"loocv_rmse", res.loocv_rmse}};
  write_json_file(j, join_path(cfg.out_dir, "metrics_nonseq.json"));
  echo_config(cfg, join_path(cfg.out_dir, "config_nonseq.json"));
  return res;
}

namespace {

// 20/80 pixel split: "blocked" assigns seeded 32x32 blocks to validation
// until the fraction is reached, "random" shuffles pixels directly.
void split_pixels(const Raster& like, const std::string& split, double validation_fraction,
                  unsigned long long seed, std::vector<size_t>& validation,
                  std::vector<size_t>& test) {
  const size_t total = static_cast<size_t>(like.width) * like.height;
  std::mt19937_64 rng(seed);
  std::vector<char> is_val(total, 0);
  if (split == "random") {
    std::vector<size_t> idx(total);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const size_t n_val = static_cast<size_t>(validation_fraction * total);
    for (size_t i = 0; i < n_val; ++i) is_val[idx[i]] = 1;
  } else if (split == "blocked") {
    const int bs = 32;
    const int bx = (like.width + bs - 1) / bs;
    const int by = (like.height + bs - 1) / bs;
    std::vector<int> blocks(static_cast<size_t>(bx) * by);
    std::iota(blocks.begin(), blocks.end(), 0);
    std::shuffle(blocks.begin(), blocks.end(), rng);
    size_t assigned = 0;
    const size_t target = static_cast<size_t>(validation_fraction * total);
    for (int b : blocks) {
      if (assigned >= target) break;
      const int c0 = (b % bx) * bs, r0 = (b / bx) * bs;
      for (int r = r0; r < std::min(like.height, r0 + bs); ++r)
        for (int c = c0; c < std::min(like.width, c0 + bs); ++c) {
          is_val[static_cast<size_t>(r) * like.width + c] = 1;
          ++assigned;
        }
    }
  } else {
    throw std::invalid_argument("split: must be 'blocked' or 'random', got " + split);
  }
  for (size_t i = 0; i < total; ++i) (is_val[i] ? validation : test).push_back(i);
}

DesignMatrix design_subset(const BandSet& bands, const Raster& response,
                           const std::vector<size_t>& pixels) {
  DesignMatrix X;
  X.names = bands.names;
  X.columns.resize(X.names.size());
  for (size_t i : pixels) {
    if (response.is_nodata(response.data[i])) continue;
    for (size_t b = 0; b < bands.bands.size(); ++b)
      X.columns[b].push_back(bands.bands[b].data[i]);
    X.response.push_back(response.data[i]);
  }
  return X;
}

}  // namespace

SeqBaseResult run_sequential_baseline(const PipelineConfig& cfg) {
  if (cfg.surrogate_path.empty())
    throw std::invalid_argument("run_sequential_baseline: surrogate raster path is required");
  Preprocessed pre = preprocess(cfg, true, false);
  Raster surrogate = load_raster(cfg.surrogate_path);
  if (surrogate.width != pre.vv.width || surrogate.height != pre.vv.height)
    throw std::runtime_error("run_sequential_baseline: surrogate extent differs from backscatter");

  std::vector<size_t> val_pixels, test_pixels;
  split_pixels(surrogate, cfg.split, cfg.validation_fraction, cfg.seed, val_pixels, test_pixels);

  DesignMatrix X_val = design_subset(pre.bands, surrogate, val_pixels);
  DesignMatrix X_test = design_subset(pre.bands, surrogate, test_pixels);
  X_val.validate();
  X_test.validate();

  SeqBaseResult res;
  res.model = fit_sqrt_model(X_val, cfg.alpha);
  res.cv_rmse = res.model.selected.empty()
                    ? 0.0
                    : kfold_cv_rmse(X_test, res.model.selected, cfg.cv_folds, cfg.seed);
  res.prediction = predict_map(res.model, pre.bands);
  res.vs_surrogate = metrics_vs_map(surrogate, res.prediction);
  if (!cfg.plots_path.empty())
    res.vs_plots = metrics_vs_plots(res.prediction, load_plots(cfg.plots_path));

  save_model(res.model, join_path(cfg.out_dir, "model_seqbase.json"));
  save_raster(res.prediction, join_path(cfg.out_dir, "prediction_seqbase"));
  json j{{"vs_surrogate", metrics_to_json(res.vs_surrogate)},
         {"cv_rmse", res.cv_rmse},
         {"split", cfg.split},
         {"validation_pixels", X_val.n()},
         {"test_pixels", X_test.n()}};
  if (!cfg.plots_path.empty()) j["vs_plots"] = metrics_to_json(res.vs_plots);
  write_json_file(j, join_path(cfg.out_dir, "metrics_seqbase.json"));
  echo_config(cfg, join_path(cfg.out_dir, "config_seqbase.json"));
  return res;
}

namespace {

// Channel-planar SAR values for one patch window, standardised per channel.
std::vector<double> patch_planes(const Raster& r, int col, int row, int size,
                                 const std::vector<double>& mean, const std::vector<double>& sd) {
  std::vector<double> out(static_cast<size_t>(r.channels) * size * size);
  size_t k = 0;
  for (int ch = 0; ch < r.channels; ++ch)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        out[k++] = (r.at(col + j, row + i, ch) - mean[ch]) / sd[ch];
  return out;
}

}  // namespace

SeqCganResult run_sequential_cgan(const PipelineConfig& cfg) {
  if (cfg.surrogate_path.empty())
    throw std::invalid_argument("run_sequential_cgan: surrogate raster path is required");
  Preprocessed pre = preprocess(cfg, false, true);
  Raster surrogate = load_raster(cfg.surrogate_path);
  const Raster& fc = pre.false_colour;
  if (surrogate.width != fc.width || surrogate.height != fc.height)
    throw std::runtime_error("run_sequential_cgan: surrogate extent differs from backscatter");

  // Per-channel standardisation of the conditioning composite.
  std::vector<double> mean(fc.channels, 0.0), sd(fc.channels, 1.0);
  const size_t npix = static_cast<size_t>(fc.width) * fc.height;
  for (int ch = 0; ch < fc.channels; ++ch) {
    double m = 0.0;
    for (size_t i = 0; i < npix; ++i) m += fc.data[i * fc.channels + ch];
    m /= npix;
    double v = 0.0;
    for (size_t i = 0; i < npix; ++i) {
      const double d = fc.data[i * fc.channels + ch] - m;
      v += d * d;
    }
    mean[ch] = m;
    sd[ch] = v > 0.0 ? std::sqrt(v / npix) : 1.0;
  }

  const int size = cfg.patch_size;
  FoldPlan folds = make_folds(surrogate, cfg.cv_folds, cfg.seed, size);
  const auto grid = extract_grid(surrogate, size, size);

  SeqCganResult res;
  std::vector<Patch> all_out;
  json fold_report = json::array();

  for (int f = 0; f < folds.k; ++f) {
    // training pairs from the fold's stride-size/2 origins
    std::vector<cgan::PairedPatch> train_set;
    for (const auto& [col, row] : folds.train_origins[f]) {
      cgan::PairedPatch pp;
      pp.size = size;
      pp.sar_channels = fc.channels;
      pp.sar = patch_planes(fc, col, row, size, mean, sd);
      pp.agb.resize(static_cast<size_t>(size) * size);
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
          pp.agb[static_cast<size_t>(i) * size + j] =
              surrogate.at(col + j, row + i) / cfg.agb_scale;
      if (cfg.augment) {
        Patch ps{col, row, size, fc.channels, {}}, pa{col, row, size, 1, {}};
        // re-pack planes into Patch layout for the dihedral transforms
        ps.data.resize(pp.sar.size());
        const size_t plane = static_cast<size_t>(size) * size;
        for (int ch = 0; ch < fc.channels; ++ch)
          for (size_t i = 0; i < plane; ++i)
            ps.data[i * fc.channels + ch] = pp.sar[ch * plane + i];
        pa.data = pp.agb;
        for (int variant = 0; variant < 8; ++variant) {
          if (variant == 0) {
            train_set.push_back(pp);
            continue;
          }
          Patch ts = transform_patch(ps, variant);
          Patch ta = transform_patch(pa, variant);
          cgan::PairedPatch q;
          q.size = size;
          q.sar_channels = fc.channels;
          q.sar.resize(pp.sar.size());
          for (int ch = 0; ch < fc.channels; ++ch)
            for (size_t i = 0; i < plane; ++i)
              q.sar[ch * plane + i] = ts.data[i * fc.channels + ch];
          q.agb = ta.data;
          train_set.push_back(std::move(q));
        }
      } else {
        train_set.push_back(std::move(pp));
      }
    }
    if (train_set.empty())
      throw std::runtime_error("run_sequential_cgan: fold " + std::to_string(f + 1) +
                               " has no training patches");

    auto gen = cgan::build_generator(cfg.gen, cfg.seed + 1000 * (f + 1));
    auto disc = cgan::build_discriminator(cfg.disc, cfg.seed + 1000 * (f + 1) + 1);
    cgan::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed + 1000 * (f + 1) + 2;
    const std::string ck = join_path(cfg.out_dir, "checkpoint_fold" + std::to_string(f + 1));
    const std::string ll = join_path(cfg.out_dir, "loss_fold" + std::to_string(f + 1) + ".csv");
    cgan::train(gen, disc, train_set, tc, ck, ll);

    // stride-predict_stride generation covering the fold's test footprints
    std::vector<char> in_test(npix, 0);
    for (int gi : folds.test_grid_indices[f]) {
      const auto& tp = grid[gi];
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
          in_test[static_cast<size_t>(tp.origin_row + i) * fc.width + tp.origin_col + j] = 1;
    }
    std::vector<Patch> fold_out;
    for (int row = 0; row + size <= fc.height; row += cfg.predict_stride)
      for (int col = 0; col + size <= fc.width; col += cfg.predict_stride) {
        bool inside = true;
        for (int i = 0; i < size && inside; i += size - 1)
          for (int j = 0; j < size && inside; j += size - 1)
            inside = in_test[static_cast<size_t>(row + i) * fc.width + col + j];
        if (!inside) continue;
        // corners inside is necessary; confirm the full window
        for (int i = 0; i < size && inside; ++i)
          for (int j = 0; j < size && inside; ++j)
            inside = in_test[static_cast<size_t>(row + i) * fc.width + col + j];
        if (!inside) continue;
        auto sar = patch_planes(fc, col, row, size, mean, sd);
        auto agb = cgan::generate(gen, sar, size);
        Patch out{col, row, size, 1, {}};
        out.data.resize(agb.size());
        for (size_t i = 0; i < agb.size(); ++i) out.data[i] = agb[i] * cfg.agb_scale;
        fold_out.push_back(std::move(out));
      }

    // per-fold RMSE vs the surrogate over covered pixels
    Raster fold_map = mosaic_pnorm(fold_out, surrogate, cfg.mosaic_p);
    double se = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < npix; ++i) {
      if (fold_map.is_nodata(fold_map.data[i]) || surrogate.is_nodata(surrogate.data[i])) continue;
      const double d = fold_map.data[i] - surrogate.data[i];
      se += d * d;
      ++n;
    }
    const double rmse = n ? std::sqrt(se / n) : 0.0;
    res.fold_rmse.push_back(rmse);
    fold_report.push_back({{"fold", f + 1},
                           {"train_patches", train_set.size()},
                           {"generated_patches", fold_out.size()},
                           {"rmse_vs_surrogate", rmse}});
    for (auto& p : fold_out) all_out.push_back(std::move(p));
  }

  size_t uncovered = 0;
  res.prediction = mosaic_pnorm(all_out, surrogate, cfg.mosaic_p, &uncovered);
  res.vs_surrogate = metrics_vs_map(surrogate, res.prediction);
  if (!cfg.plots_path.empty())
    res.vs_plots = metrics_vs_plots(res.prediction, load_plots(cfg.plots_path));

  save_raster(res.prediction, join_path(cfg.out_dir, "prediction_cgan"));
  double cv = 0.0;
  for (double v : res.fold_rmse) cv += v;
  cv /= res.fold_rmse.empty() ? 1 : res.fold_rmse.size();
  json j{{"vs_surrogate", metrics_to_json(res.vs_surrogate)},
         {"cv_rmse", cv},
         {"folds", fold_report},
         {"uncovered_pixels", uncovered},
         {"standardisation", {{"mean", mean}, {"sd", sd}, {"agb_scale", cfg.agb_scale}}}};
  if (!cfg.plots_path.empty()) j["vs_plots"] = metrics_to_json(res.vs_plots);
  write_json_file(j, join_path(cfg.out_dir, "metrics_cgan.json"));
  echo_config(cfg, join_path(cfg.out_dir, "config_cgan.json"));
  return res;
}

EvaluateResult run_evaluate(const std::string& pred_path, const std::string& ref_path,
                            const std::string& plots_path, bool quartiles,
                            std::optional<CalibrationMethod> calibrate,
                            const std::string& out_dir) {
  if (pred_path.empty())
    throw std::invalid_argument("run_evaluate: prediction raster path is required");
  Raster pred = load_raster(pred_path);
  EvaluateResult res;
  json j;

  if (!ref_path.empty()) {
    Raster ref = load_raster(ref_path);
    if (ref.width != pred.width || ref.height != pred.height)
      throw std::runtime_error("run_evaluate: prediction and reference extents differ");
    res.report = metrics_vs_map(ref, pred);
    if (!quartiles) res.report.quartile_rmse.reset();
    j["vs_reference"] = metrics_to_json(res.report);
  }

  if (!plots_path.empty()) {
    auto plots = load_plots(plots_path);
    std::vector<double> ref_v, pred_v;
    for (const auto& p : plots) {
      ref_v.push_back(p.agb);
      pred_v.push_back(area_weighted_mean(pred, p));
    }
    if (calibrate) {
      res.calibration = fit_calibration(pred_v, ref_v, *calibrate);
      pred = apply_calibration(*res.calibration, pred);
      pred_v = apply_calibration(*res.calibration, pred_v);
      save_raster(pred, (std::filesystem::path(out_dir) / "prediction_calibrated").string());
      j["calibration"] = {{"method", to_string(res.calibration->method)},
                          {"param1", res.calibration->param1},
                          {"param2", res.calibration->param2},
                          {"offset", res.calibration->offset},
                          {"sse", res.calibration->sse},
                          {"converged", res.calibration->converged}};
    }
    MetricReport vs_plots = paired_metrics(ref_v, pred_v);
    if (quartiles && ref_v.size() >= 8) vs_plots.quartile_rmse = quartile_rmse(ref_v, pred_v);
    if (ref_path.empty()) res.report = vs_plots;
    j["vs_plots"] = metrics_to_json(vs_plots);
  }

  if (j.empty()) throw std::invalid_argument("run_evaluate: need a reference map or plots");
  write_json_file(j, (std::filesystem::path(out_dir) / "evaluation.json").string());
  return res;
}

}  // namespace agbseq::pipeline
