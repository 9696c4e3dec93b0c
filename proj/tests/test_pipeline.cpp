#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "agbseq/pipeline.hpp"
#include "agbseq/synth.hpp"

using namespace agbseq;
namespace fs = std::filesystem;

namespace {

// Writes a small synthetic scene to disk once and hands out configured runs.
struct SceneFixture {
  fs::path dir;
  SceneBundle scene;

  explicit SceneFixture(const std::string& name, int size = 128, int plots = 40) {
    SceneConfig cfg;
    cfg.width = cfg.height = size;
    cfg.n_plots = plots;
    scene = gen_scene(1, cfg);
    dir = fs::temp_directory_path() / name;
    fs::create_directories(dir);
    save_raster(scene.vv, (dir / "vv").string());
    save_raster(scene.vh, (dir / "vh").string());
    save_raster(scene.als_surrogate, (dir / "surrogate").string());
    save_plots(scene.plots, (dir / "plots.csv").string());
  }
  ~SceneFixture() { fs::remove_all(dir); }

  pipeline::PipelineConfig base_config(const std::string& out) const {
    pipeline::PipelineConfig cfg;
    cfg.vv_path = (dir / "vv").string();
    cfg.vh_path = (dir / "vh").string();
    cfg.plots_path = (dir / "plots.csv").string();
    cfg.surrogate_path = (dir / "surrogate").string();
    cfg.out_dir = (dir / out).string();
    cfg.seed = 1;
    return cfg;
  }
};

}  // namespace

TEST_CASE("the dB scale rule follows the model unless overridden") {
  pipeline::PipelineConfig cfg;
  cfg.model = "nonseq";
  CHECK_FALSE(pipeline::use_db_scale(cfg));
  cfg.model = "seqbase";
  CHECK_FALSE(pipeline::use_db_scale(cfg));
  cfg.model = "cgan";
  CHECK(pipeline::use_db_scale(cfg));
  cfg.force_db = false;
  CHECK_FALSE(pipeline::use_db_scale(cfg));
  cfg.model = "nonseq";
  cfg.force_db = true;
  CHECK(pipeline::use_db_scale(cfg));
}

TEST_CASE("config echo round-trips through JSON") {
  pipeline::PipelineConfig cfg;
  cfg.vv_path = "a/vv";
  cfg.vh_path = "a/vh";
  cfg.plots_path = "a/p.csv";
  cfg.surrogate_path = "a/s";
  cfg.model = "cgan";
  cfg.speckle_filter = false;
  cfg.speckle_window = 9;
  cfg.force_db = true;
  cfg.split = "random";
  cfg.validation_fraction = 0.3;
  cfg.cv_folds = 3;
  cfg.train.objective = cgan::Objective::WGanGp;
  cfg.train.epochs = 17;
  cfg.train.batch_size = 2;
  cfg.gen.resnet_blocks = 6;
  cfg.gen.norm = cgan::NormKind::Instance;
  cfg.disc.kind = cgan::DiscKind::Patch34;
  cfg.disc.norm = cgan::NormKind::Layer;
  cfg.mosaic_p = 3.5;
  cfg.seed = 42;
  const auto path = (fs::temp_directory_path() / "cfg_echo.json").string();
  pipeline::echo_config(cfg, path);
  auto back = pipeline::config_from_json(path);
  CHECK(back.vv_path == cfg.vv_path);
  CHECK(back.model == "cgan");
  CHECK(back.speckle_filter == false);
  CHECK(back.speckle_window == 9);
  REQUIRE(back.force_db.has_value());
  CHECK(*back.force_db == true);
  CHECK(back.split == "random");
  CHECK(back.validation_fraction == 0.3);
  CHECK(back.cv_folds == 3);
  CHECK(back.train.objective == cgan::Objective::WGanGp);
  CHECK(back.train.epochs == 17);
  CHECK(back.train.batch_size == 2);
  CHECK(back.gen.resnet_blocks == 6);
  CHECK(back.gen.norm == cgan::NormKind::Instance);
  CHECK(back.disc.kind == cgan::DiscKind::Patch34);
  CHECK(back.disc.norm == cgan::NormKind::Layer);
  CHECK(back.mosaic_p == 3.5);
  CHECK(back.seed == 42);
  fs::remove(path);
  CHECK_THROWS_AS(pipeline::config_from_json("no_such_config.json"), std::runtime_error);
}

TEST_CASE("non-sequential run emits its artifacts and is deterministic") {
  SceneFixture fx("agbseq_test_nonseq");
  auto cfg = fx.base_config("run1");
  auto res = pipeline::run_nonsequential(cfg);
  CHECK(res.vs_plots.r > 0.5);
  CHECK(res.loocv_rmse > 0.0);
  CHECK_FALSE(res.model.selected.empty());
  for (const auto& name : {"model_nonseq.json", "prediction_nonseq.json", "prediction_nonseq.bin",
                           "metrics_nonseq.json", "config_nonseq.json"})
    CHECK(fs::exists(fs::path(cfg.out_dir) / name));
  // Prediction floor: back-transform adds the sqrt-scale MSE everywhere.
  for (double v : res.prediction.data) CHECK(v >= res.model.mse);

  auto cfg2 = fx.base_config("run2");
  auto res2 = pipeline::run_nonsequential(cfg2);
  CHECK(res2.prediction.data == res.prediction.data);
  CHECK(res2.model.intercept == res.model.intercept);
}

TEST_CASE("sequential baseline selects from the derived band set and reports CV error") {
  SceneFixture fx("agbseq_test_seqbase");
  auto cfg = fx.base_config("run");
  cfg.model = "seqbase";
  auto res = pipeline::run_sequential_baseline(cfg);
  const std::set<std::string> bands{"VV", "VH", "sqrtVV", "sqrtVH", "VV2", "VH2"};
  REQUIRE_FALSE(res.model.selected.empty());
  for (const auto& s : res.model.selected) CHECK(bands.count(s) == 1);
  CHECK(res.vs_surrogate.r > 0.3);
  CHECK(res.cv_rmse > 0.0);
  for (const auto& name :
       {"model_seqbase.json", "prediction_seqbase.json", "metrics_seqbase.json",
        "config_seqbase.json"})
    CHECK(fs::exists(fs::path(cfg.out_dir) / name));
  CHECK_THROWS_AS(
      [&] {
        auto bad = cfg;
        bad.split = "diagonal";
        pipeline::run_sequential_baseline(bad);
      }(),
      std::invalid_argument);
}

TEST_CASE("evaluate scores identical maps as a perfect match") {
  SceneFixture fx("agbseq_test_eval");
  const auto out = (fx.dir / "eval_out").string();
  auto res = pipeline::run_evaluate((fx.dir / "surrogate").string(),
                                    (fx.dir / "surrogate").string(),
                                    (fx.dir / "plots.csv").string(), true, std::nullopt, out);
  CHECK(res.report.rmse == doctest::Approx(0.0));
  CHECK(res.report.r == doctest::Approx(1.0));
  REQUIRE(res.report.quartile_rmse.has_value());
  for (double q : *res.report.quartile_rmse) CHECK(q == doctest::Approx(0.0));
  CHECK(fs::exists(fs::path(out) / "evaluation.json"));
}

TEST_CASE("calibration against plots can only improve the fitting-set RMSE") {
  SceneFixture fx("agbseq_test_cal");
  // Build a biased prediction: truth * 0.7 + 10.
  Raster biased = fx.scene.als_surrogate;
  for (auto& v : biased.data) v = 0.7 * v + 10.0;
  save_raster(biased, (fx.dir / "biased").string());
  const auto out = (fx.dir / "cal_out").string();
  auto plain = pipeline::run_evaluate((fx.dir / "biased").string(), "",
                                      (fx.dir / "plots.csv").string(), false, std::nullopt, out);
  auto cal = pipeline::run_evaluate((fx.dir / "biased").string(), "",
                                    (fx.dir / "plots.csv").string(), false,
                                    CalibrationMethod::Linear, out);
  REQUIRE(cal.calibration.has_value());
  CHECK(cal.report.rmse <= plain.report.rmse);
  CHECK(fs::exists(fs::path(out) / "prediction_calibrated.json"));
}

TEST_CASE("a desk-scale cGAN run completes and covers the scene") {
  SceneFixture fx("agbseq_test_cgan");
  auto cfg = fx.base_config("run");
  cfg.model = "cgan";
  cfg.cv_folds = 2;
  cfg.gen.base_width = 8;
  cfg.gen.resnet_blocks = 4;
  cfg.disc.kind = cgan::DiscKind::Pixel;
  cfg.disc.base_width = 8;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 3;
  cfg.augment = false;
  auto res = pipeline::run_sequential_cgan(cfg);
  CHECK(res.prediction.width == 128);
  CHECK(res.fold_rmse.size() == 2);
  size_t nodata_count = 0;
  for (double v : res.prediction.data) {
    if (res.prediction.is_nodata(v)) {
      ++nodata_count;
      continue;
    }
    CHECK(v >= 0.0);  // ReLU output head and convex blending
  }
  CHECK(nodata_count == 0);
  for (const auto& name : {"prediction_cgan.json", "metrics_cgan.json", "config_cgan.json",
                           "checkpoint_fold1.json", "checkpoint_fold2.json", "loss_fold1.csv",
                           "loss_fold2.csv"})
    CHECK(fs::exists(fs::path(cfg.out_dir) / name));
}
