#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "agbseq/pipeline.hpp"
#include "agbseq/plots.hpp"
#include "agbseq/raster.hpp"
#include "agbseq/speckle.hpp"
#include "agbseq/synth.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericalError = 4;

struct GlobalOpts {
  std::string config;
  unsigned long long seed = 0;
  bool seed_set = false;
  std::string out = ".";
  int threads = 1;
};

agbseq::pipeline::PipelineConfig resolve_config(const GlobalOpts& g) {
  agbseq::pipeline::PipelineConfig cfg;
  if (!g.config.empty()) cfg = agbseq::pipeline::config_from_json(g.config);
  if (g.seed_set) cfg.seed = g.seed;
  cfg.train.seed = cfg.seed;
  cfg.out_dir = g.out;
  cfg.threads = g.threads;
  return cfg;
}

bool looks_numerical(const std::string& msg) {
  return msg.find("non-finite") != std::string::npos ||
         msg.find("rank deficien") != std::string::npos ||
         msg.find("aborted at epoch") != std::string::npos;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AGB regression pipelines: SAR backscatter to biomass maps"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  int s_width = 256, s_height = 256;
  synth->add_option("--width", s_width, "Scene width, pixels");
  synth->add_option("--height", s_height, "Scene height, pixels");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Filter, resample and scale backscatter");
  std::string p_vv, p_vh, p_speckle = "on";
  int p_window = 7;
  double p_pixel = 0.0;
  bool p_db = false, p_linear = false;
  prep->add_option("--vv", p_vv, "VV raster")->required();
  prep->add_option("--vh", p_vh, "VH raster")->required();
  prep->add_option("--speckle-filter", p_speckle, "on | off");
  prep->add_option("--speckle-window", p_window, "Refined Lee window (odd)");
  prep->add_option("--pixel-size", p_pixel, "Resample to this pixel size, metres");
  prep->add_flag("--db", p_db, "Convert to dB scale");
  prep->add_flag("--linear", p_linear, "Keep linear scale");

  // fit-nonseq
  auto* nonseq = app.add_subcommand("fit-nonseq", "Non-sequential regression from plots");
  std::string n_vv, n_vh, n_plots;
  bool n_force_scale = false;
  nonseq->add_option("--vv", n_vv, "VV raster");
  nonseq->add_option("--vh", n_vh, "VH raster");
  nonseq->add_option("--plots", n_plots, "Plots CSV");
  nonseq->add_flag("--force-scale", n_force_scale, "Invert the dB/linear scale rule");

  // fit-seqbase
  auto* seqbase = app.add_subcommand("fit-seqbase", "Baseline sequential regression");
  std::string b_vv, b_vh, b_plots, b_surrogate, b_split;
  bool b_force_scale = false;
  seqbase->add_option("--vv", b_vv, "VV raster");
  seqbase->add_option("--vh", b_vh, "VH raster");
  seqbase->add_option("--plots", b_plots, "Plots CSV");
  seqbase->add_option("--surrogate", b_surrogate, "Surrogate AGB raster");
  seqbase->add_option("--split", b_split, "blocked | random");
  seqbase->add_flag("--force-scale", b_force_scale, "Invert the dB/linear scale rule");

  // train-cgan
  auto* cg = app.add_subcommand("train-cgan", "cGAN sequential pipeline");
  std::string c_vv, c_vh, c_plots, c_surrogate, c_objective, c_disc, c_norm;
  int c_resnet = 0, c_bs = 0, c_epochs = 0;
  double c_lr = 0.0, c_l1 = -1.0;
  bool c_force_scale = false;
  cg->add_option("--vv", c_vv, "VV raster");
  cg->add_option("--vh", c_vh, "VH raster");
  cg->add_option("--plots", c_plots, "Plots CSV");
  cg->add_option("--surrogate", c_surrogate, "Surrogate AGB raster");
  cg->add_option("--objective", c_objective, "vanilla | lsgan | wgangp");
  cg->add_option("--resnet", c_resnet, "Residual blocks: 4, 5 or 6");
  cg->add_option("--disc", c_disc, "pixel | patch16 | patch34");
  cg->add_option("--norm", c_norm, "bn | in | ln (discriminator)");
  cg->add_option("--bs", c_bs, "Batch size");
  cg->add_option("--epochs", c_epochs, "Training epochs");
  cg->add_option("--lr", c_lr, "Learning rate");
  cg->add_option("--l1", c_l1, "L1 reconstruction weight");
  cg->add_flag("--force-scale", c_force_scale, "Invert the dB/linear scale rule");

  // predict-map (standalone evaluate of an existing regression model)
  auto* pm = app.add_subcommand("predict-map", "Wall-to-wall map from a fitted model");
  std::string m_vv, m_vh, m_model;
  double m_pnorm = 5.0;
  pm->add_option("--vv", m_vv, "VV raster")->required();
  pm->add_option("--vh", m_vh, "VH raster")->required();
  pm->add_option("--model", m_model, "Model JSON")->required();
  pm->add_option("--p-norm", m_pnorm, "Mosaic blending exponent");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a prediction map");
  std::string e_pred, e_ref, e_plots, e_calibrate;
  bool e_quartiles = false;
  ev->add_option("--pred", e_pred, "Prediction raster")->required();
  ev->add_option("--ref", e_ref, "Reference raster");
  ev->add_option("--plots", e_plots, "Plots CSV");
  ev->add_flag("--quartiles", e_quartiles, "Report per-quartile RMSE");
  ev->add_option("--calibrate", e_calibrate,
                 "linear | gamma | exponential | nth-root | logarithmic");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Fit and apply a calibration model");
  std::string k_pred, k_plots, k_method = "linear";
  cal->add_option("--pred", k_pred, "Prediction raster")->required();
  cal->add_option("--plots", k_plots, "Plots CSV")->required();
  cal->add_option("--method", k_method,
                  "linear | gamma | exponential | nth-root | logarithmic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    g.seed_set = seed_opt->count() > 0;
    auto cfg = resolve_config(g);
    namespace fs = std::filesystem;

    if (synth->parsed()) {
      agbseq::SceneConfig sc;
      sc.width = s_width;
      sc.height = s_height;
      auto scene = agbseq::gen_scene(cfg.seed, sc);
      for (const auto& w : scene.warnings) std::cerr << "warning: " << w << "\n";
      agbseq::save_raster(scene.agb_truth, (fs::path(g.out) / "agb_truth").string());
      agbseq::save_raster(scene.vv, (fs::path(g.out) / "vv").string());
      agbseq::save_raster(scene.vh, (fs::path(g.out) / "vh").string());
      agbseq::save_raster(scene.als_surrogate, (fs::path(g.out) / "als_surrogate").string());
      agbseq::save_plots(scene.plots, (fs::path(g.out) / "plots.csv").string());
      std::cout << "scene: " << sc.width << "x" << sc.height << ", " << scene.plots.size()
                << " plots -> " << g.out << "\n";
    } else if (prep->parsed()) {
      if (p_speckle != "on" && p_speckle != "off")
        throw std::invalid_argument("--speckle-filter must be 'on' or 'off'");
      if (p_db && p_linear)
        throw std::invalid_argument("--db and --linear are mutually exclusive");
      cfg.vv_path = p_vv;
      cfg.vh_path = p_vh;
      cfg.speckle_filter = p_speckle == "on";
      cfg.speckle_window = p_window;
      cfg.target_pixel_size = p_pixel;
      cfg.force_db = p_db;
      auto pre = agbseq::pipeline::preprocess(cfg, false, false);
      agbseq::save_raster(pre.vv, (fs::path(g.out) / "vv_preprocessed").string());
      agbseq::save_raster(pre.vh, (fs::path(g.out) / "vh_preprocessed").string());
      std::cout << "preprocessed -> " << g.out << "\n";
    } else if (nonseq->parsed()) {
      cfg.model = "nonseq";
      if (!n_vv.empty()) cfg.vv_path = n_vv;
      if (!n_vh.empty()) cfg.vh_path = n_vh;
      if (!n_plots.empty()) cfg.plots_path = n_plots;
      if (n_force_scale) cfg.force_db = !agbseq::pipeline::use_db_scale(cfg);
      auto res = agbseq::pipeline::run_nonsequential(cfg);
      std::cout << "nonseq: R=" << res.vs_plots.r << " RMSE=" << res.vs_plots.rmse
                << " LOOCV=" << res.loocv_rmse << "\n";
    } else if (seqbase->parsed()) {
      cfg.model = "seqbase";
      if (!b_vv.empty()) cfg.vv_path = b_vv;
      if (!b_vh.empty()) cfg.vh_path = b_vh;
      if (!b_plots.empty()) cfg.plots_path = b_plots;
      if (!b_surrogate.empty()) cfg.surrogate_path = b_surrogate;
      if (!b_split.empty()) cfg.split = b_split;
      if (b_force_scale) cfg.force_db = !agbseq::pipeline::use_db_scale(cfg);
      auto res = agbseq::pipeline::run_sequential_baseline(cfg);
      std::cout << "seqbase: R=" << res.vs_surrogate.r << " RMSE=" << res.vs_surrogate.rmse
                << " CV-RMSE=" << res.cv_rmse << "\n";
    } else if (cg->parsed()) {
      cfg.model = "cgan";
      if (!c_vv.empty()) cfg.vv_path = c_vv;
      if (!c_vh.empty()) cfg.vh_path = c_vh;
      if (!c_plots.empty()) cfg.plots_path = c_plots;
      if (!c_surrogate.empty()) cfg.surrogate_path = c_surrogate;
      if (!c_objective.empty())
        cfg.train.objective = agbseq::cgan::objective_from_string(c_objective);
      if (c_resnet > 0) cfg.gen.resnet_blocks = c_resnet;
      if (!c_disc.empty()) cfg.disc.kind = agbseq::cgan::disc_kind_from_string(c_disc);
      if (!c_norm.empty()) cfg.disc.norm = agbseq::ad::norm_kind_from_string(c_norm);
      if (c_bs > 0) cfg.train.batch_size = c_bs;
      if (c_epochs > 0) cfg.train.epochs = c_epochs;
      if (c_lr > 0.0) cfg.train.lr = c_lr;
      if (c_l1 >= 0.0) cfg.train.l1_weight = c_l1;
      if (c_force_scale) cfg.force_db = !agbseq::pipeline::use_db_scale(cfg);
      auto res = agbseq::pipeline::run_sequential_cgan(cfg);
      std::cout << "cgan: R=" << res.vs_surrogate.r << " RMSE=" << res.vs_surrogate.rmse << "\n";
    } else if (pm->parsed()) {
      cfg.vv_path = m_vv;
      cfg.vh_path = m_vh;
      cfg.mosaic_p = m_pnorm;
      auto pre = agbseq::pipeline::preprocess(cfg, true, false);
      auto model = agbseq::load_model(m_model);
      agbseq::Raster out(pre.vv.width, pre.vv.height, 1, pre.vv.pixel_size, pre.vv.origin_x,
                         pre.vv.origin_y);
      for (size_t i = 0; i < out.data.size(); ++i) {
        double t = model.intercept;
        for (const auto& name : model.selected)
          t += model.coefficients.at(name) * pre.bands.band(name).data[i];
        t = std::max(0.0, t);
        out.data[i] = t * t + model.mse;
      }
      agbseq::save_raster(out, (fs::path(g.out) / "prediction").string());
      std::cout << "prediction map -> " << g.out << "\n";
    } else if (ev->parsed()) {
      std::optional<agbseq::CalibrationMethod> method;
      if (!e_calibrate.empty()) method = agbseq::calibration_method_from_string(e_calibrate);
      auto res = agbseq::pipeline::run_evaluate(e_pred, e_ref, e_plots, e_quartiles, method, g.out);
      std::cout << "evaluate: R=" << res.report.r << " RMSE=" << res.report.rmse << "\n";
    } else if (cal->parsed()) {
      auto method = agbseq::calibration_method_from_string(k_method);
      auto res = agbseq::pipeline::run_evaluate(k_pred, "", k_plots, false, method, g.out);
      if (res.calibration)
        std::cout << "calibration: " << agbseq::to_string(res.calibration->method)
                  << " sse=" << res.calibration->sse << "\n";
    }
    return kOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::runtime_error& e) {
    std::cerr << (looks_numerical(e.what()) ? "numerical failure: " : "data error: ") << e.what()
              << "\n";
    return looks_numerical(e.what()) ? kNumericalError : kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}
