#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agbseq/cgan.hpp"
#include "agbseq/eval.hpp"
#include "agbseq/ols.hpp"
#include "agbseq/raster.hpp"

namespace agbseq::pipeline {

// Resolved settings for one pipeline run. dB conversion follows the scale
// rule (ON for the cGAN model, OFF for the two traditional models) unless
// force_db overrides it.
struct PipelineConfig {
  // inputs
  std::string vv_path, vh_path;
  std::string plots_path;
  std::string surrogate_path;  // dense surrogate response map
  std::string out_dir = ".";

  // preprocessing
  bool speckle_filter = true;
  int speckle_window = 7;
  std::optional<bool> force_db;
  double target_pixel_size = 0.0;  // 0 = keep native resolution

  // model choice: nonseq | seqbase | cgan
  std::string model = "nonseq";
  double alpha = 0.05;

  // split settings (seqbase): validation fraction and layout
  std::string split = "blocked";  // blocked | random
  double validation_fraction = 0.2;
  int cv_folds = 5;

  // cGAN settings
  cgan::GeneratorSpec gen;
  cgan::DiscriminatorSpec disc;
  cgan::TrainConfig train;
  int patch_size = 64;
  int predict_stride = 32;
  bool augment = true;  // D4 augmentation of training patches
  double mosaic_p = 5.0;
  double agb_scale = 100.0;  // response divisor during training

  unsigned long long seed = 0;
  int threads = 1;
};

// Whether dB conversion applies under the scale rule.
bool use_db_scale(const PipelineConfig& cfg);

PipelineConfig config_from_json(const std::string& path);
// Writes the resolved config next to the run outputs; a rerun from the echo
// reproduces them.
void echo_config(const PipelineConfig& cfg, const std::string& path);

struct NonseqResult {
  SqrtRegressionModel model;
  Raster prediction;
  MetricReport vs_plots;
  double loocv_rmse = 0.0;
};

struct SeqBaseResult {
  SqrtRegressionModel model;
  Raster prediction;
  MetricReport vs_surrogate;
  MetricReport vs_plots;
  double cv_rmse = 0.0;  // k-fold on the test split
};

struct SeqCganResult {
  Raster prediction;
  MetricReport vs_surrogate;
  MetricReport vs_plots;
  std::vector<double> fold_rmse;  // per-fold RMSE vs surrogate
};

// Each run loads its inputs, writes model/prediction/metrics artifacts plus
// the config echo into cfg.out_dir, and returns the in-memory results.
NonseqResult run_nonsequential(const PipelineConfig& cfg);
SeqBaseResult run_sequential_baseline(const PipelineConfig& cfg);
SeqCganResult run_sequential_cgan(const PipelineConfig& cfg);

struct EvaluateResult {
  MetricReport report;
  std::optional<CalibrationModel> calibration;
};

// Map-vs-reference and map-vs-plots evaluation; optional calibration fit
// against the plots before scoring.
EvaluateResult run_evaluate(const std::string& pred_path, const std::string& ref_path,
                            const std::string& plots_path, bool quartiles,
                            std::optional<CalibrationMethod> calibrate,
                            const std::string& out_dir);

// Preprocessing artifacts shared by the model runs.
struct Preprocessed {
  Raster vv, vh;       // filtered, resampled, scale-rule applied
  BandSet bands;       // derived regressors (linear scale inputs only)
  Raster false_colour; // cGAN conditioning composite
};

Preprocessed preprocess(const PipelineConfig& cfg, bool want_bands, bool want_false_colour);

}  // namespace agbseq::pipeline
