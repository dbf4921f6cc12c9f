#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spsel/commands.hpp"
#include "spsel/config.hpp"
#include "spsel/error.hpp"

namespace {

using spsel::RunConfig;
namespace cli = spsel::cli;
namespace fs = std::filesystem;

// The config file seeds defaults, so it has to be read before flags are bound.
RunConfig preload_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return spsel::load_config(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return spsel::load_config(arg.substr(9));
  }
  return RunConfig{};
}

std::vector<spsel::ManifestEntry> gather_inputs(const std::string& manifest, const std::vector<std::string>& files) {
  std::vector<spsel::ManifestEntry> out;
  if (!manifest.empty()) out = spsel::read_manifest(manifest);
  for (const auto& f : files) out.push_back({fs::path(f).stem().string(), f});
  if (out.empty()) throw spsel::InputError("no input embeddings (use --manifest or list files)");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    cfg = preload_config(argc, argv);
  } catch (const spsel::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Similarity-preserving patch selection with residual analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_flag("--help", "Print this help message and exit");
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value config file");
  app.add_option("--seed", cfg.seed, "Run seed");
  app.add_option("--jobs", cfg.jobs, "Images processed concurrently")->check(CLI::PositiveNumber);

  // sample
  auto* sample = app.add_subcommand("sample", "Generate a patch sampling plan");
  cli::SampleRequest sample_req;
  bool erp = false;
  bool lat = false;
  bool sp = false;
  bool no_caps = false;
  std::string image_path;
  std::string scanpath_path;
  std::string image_id;
  std::string patches_out;
  std::string plan_out = "plan.json";
  auto* erp_flag = sample->add_flag("--erp", erp, "Uniform ERP grid");
  auto* lat_flag = sample->add_flag("--lat", lat, "Latitude bands");
  auto* sp_flag = sample->add_flag("--sp", sp, "Scanpath-centered patches");
  erp_flag->excludes(lat_flag)->excludes(sp_flag);
  lat_flag->excludes(sp_flag);
  sample->add_option("--width", sample_req.width, "ERP width in pixels");
  sample->add_option("--height", sample_req.height, "ERP height in pixels");
  sample->add_option("--patch-size", cfg.patch_size, "Patch size in pixels");
  sample->add_option("--alpha0", cfg.alpha0, "Equatorial patch size in degrees");
  sample->add_flag("--no-polar-caps", no_caps, "Skip the pole-centered cap patches");
  sample->add_option("--scanpaths", scanpath_path, "Scanpath CSV");
  sample->add_option("--image-id", image_id, "Only use scanpath rows for this image");
  sample->add_option("--fov", cfg.fov, "Fixation patch field of view in degrees");
  sample->add_option("--image", image_path, "PPM or raw planar image to extract patches from");
  sample->add_option("--out", plan_out, "Plan JSON path");
  sample->add_option("--patches", patches_out, "Patch archive path");

  // select
  auto* select = app.add_subcommand("select", "Rank and filter patch embeddings per image");
  std::string manifest;
  std::vector<std::string> files;
  std::string out_dir = "selection";
  std::string metric;
  std::string mah_mode;
  std::string bandwidth;
  std::string r_update;
  double mah_lambda = -1.0;
  double rate = 0.0;
  std::size_t k = 0;
  select->add_option("--manifest", manifest, "image_id,path CSV");
  select->add_option("files", files, "ESF or CSV embedding files (id = file stem)");
  select->add_option("--out-dir", out_dir, "Output directory");
  auto* rate_opt = select->add_option("--rate", rate, "Fraction of patches to keep");
  auto* k_opt = select->add_option("--k", k, "Number of patches to keep");
  rate_opt->excludes(k_opt);
  select->add_option("--metric", metric, "euc | man | mah");
  select->add_option("--mah-mode", mah_mode, "diag | full");
  select->add_option("--mah-lambda", mah_lambda, "Mahalanobis ridge");
  select->add_option("--bandwidth", bandwidth, "median | <sigma>");
  select->add_option("--alpha", cfg.selector.alpha, "Group-sparsity weight on W");
  select->add_option("--beta", cfg.selector.beta, "Group-sparsity weight on R");
  select->add_option("--h", cfg.selector.h, "Spectral target dimension");
  select->add_option("--max-iters", cfg.selector.max_iters);
  select->add_option("--rel-tol", cfg.selector.rel_tol);
  select->add_option("--epsilon-floor", cfg.selector.epsilon_floor);
  select->add_option("--r-update", r_update, "exact | lagged");

  // train
  auto* train = app.add_subcommand("train", "Train the patch quality MLP");
  std::string mos_csv;
  std::string model_path = "model.ckpt";
  std::string loss_out;
  std::string optimizer;
  train->add_option("--manifest", manifest)->required();
  train->add_option("--mos", mos_csv, "image_id,mos CSV")->required();
  train->add_option("--out", model_path, "Checkpoint path");
  train->add_option("--loss-out", loss_out, "Loss curve CSV");
  train->add_option("--epochs", cfg.train.epochs);
  train->add_option("--lr", cfg.train.learning_rate);
  train->add_option("--batch-size", cfg.train.batch_size);
  train->add_option("--optimizer", optimizer, "adam | sgd-momentum");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict patch scores and pool them per image");
  std::string predictions_out = "predictions.csv";
  std::string pooled_out = "pooled.csv";
  predict->add_option("--manifest", manifest)->required();
  predict->add_option("--model", model_path)->required();
  predict->add_option("--mos", mos_csv, "Optional image_id,mos CSV for the pooled file");
  predict->add_option("--predictions", predictions_out);
  predict->add_option("--pooled", pooled_out);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "PLCC / SRCC of pooled predictions");
  std::string metrics_out;
  evaluate->add_option("--pooled", pooled_out)->required();
  evaluate->add_option("--mos", mos_csv, "Override/join MOS values");
  evaluate->add_option("--out", metrics_out, "Metrics JSON path");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a planted-outlier embedding file");
  cli::SynthRequest synth_req;
  std::string synth_out = "synth.esf";
  std::string truth_out = "truth.json";
  synth->add_option("--n", synth_req.n);
  synth->add_option("--d", synth_req.d);
  synth->add_option("--outliers", synth_req.outliers);
  synth->add_option("--out", synth_out);
  synth->add_option("--truth", truth_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample) {
      if (no_caps) cfg.polar_caps = false;
      if (lat) {
        sample_req.method = spsel::SamplingMethod::lat;
      } else if (sp) {
        sample_req.method = spsel::SamplingMethod::sp;
      } else if (erp) {
        sample_req.method = spsel::SamplingMethod::erp;
      } else {
        throw spsel::InputError("choose one of --erp, --lat, --sp");
      }
      if (!image_path.empty()) sample_req.image = image_path;
      if (!scanpath_path.empty()) sample_req.scanpaths = scanpath_path;
      if (!image_id.empty()) sample_req.image_id = image_id;
      if (!patches_out.empty()) sample_req.patches_out = patches_out;
      sample_req.plan_out = plan_out;
      const auto plan = cli::run_sample(sample_req, cfg);
      std::cout << "wrote " << plan.locations.size() << " locations to " << plan_out << '\n';
      if (plan.method == spsel::SamplingMethod::lat) {
        std::cout << "N = " << plan.params.levels << ", L_P = " << plan.params.polar_latitude << '\n';
      }
    } else if (*select) {
      if (!metric.empty()) cfg.metric.kind = spsel::parse_metric_kind(metric);
      if (!mah_mode.empty()) cfg.metric.mah_mode = spsel::parse_covariance_mode(mah_mode);
      if (mah_lambda >= 0.0) cfg.metric.mah_regularization = mah_lambda;
      if (!bandwidth.empty()) {
        std::map<std::string, std::string> kv{{"bandwidth", bandwidth}};
        spsel::apply_key_values(cfg, kv);
      }
      if (!r_update.empty()) cfg.selector.r_update_mode = spsel::parse_r_update_mode(r_update);
      if (*rate_opt) {
        cfg.rate = rate;
        cfg.k.reset();
      }
      if (*k_opt) {
        cfg.k = k;
        cfg.rate.reset();
      }
      const auto outcome = cli::run_select({gather_inputs(manifest, files), out_dir}, cfg);
      std::cout << "selected " << outcome.report["images"].size() - outcome.failures << " image(s) into " << out_dir
                << " in " << outcome.wall_seconds << " s\n";
      if (outcome.failures > 0) return 1;
    } else if (*train) {
      if (!optimizer.empty()) cfg.train.optimizer = spsel::parse_optimizer(optimizer);
      cli::TrainRequest req{spsel::read_manifest(manifest), mos_csv, model_path, std::nullopt};
      if (!loss_out.empty()) req.loss_out = loss_out;
      const auto result = cli::run_train(req, cfg);
      std::cout << "trained " << result.loss_curve.size() << " steps; final minibatch loss "
                << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << '\n';
    } else if (*predict) {
      cli::PredictRequest req{spsel::read_manifest(manifest), model_path, predictions_out, pooled_out, std::nullopt};
      if (!mos_csv.empty()) req.mos_csv = mos_csv;
      const auto pooled = cli::run_predict(req);
      std::cout << "pooled " << pooled.size() << " image(s) into " << pooled_out << '\n';
    } else if (*evaluate) {
      cli::EvaluateRequest req{pooled_out, std::nullopt, std::nullopt};
      if (!mos_csv.empty()) req.mos_csv = mos_csv;
      if (!metrics_out.empty()) req.metrics_out = metrics_out;
      std::cout << cli::run_evaluate(req).dump(2) << '\n';
    } else if (*synth) {
      synth_req.out = synth_out;
      synth_req.truth_out = truth_out;
      const auto set = cli::run_synth(synth_req, cfg);
      std::cout << "wrote " << set.embeddings.rows() << "x" << set.embeddings.cols() << " embeddings with "
                << set.outliers.size() << " planted outlier(s)\n";
    }
  } catch (const spsel::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
