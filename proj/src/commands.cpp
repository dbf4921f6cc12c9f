#include "spsel/commands.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "spsel/error.hpp"
#include "spsel/log.hpp"
#include "spsel/rng.hpp"
#include "spsel/selector.hpp"

namespace spsel::cli {

namespace {

using json = nlohmann::ordered_json;

constexpr double kSyntheticNoise = 0.05;
constexpr double kOutlierScale = 3.0;

std::map<std::string, double> mos_table(const fs::path& path) {
  std::map<std::string, double> out;
  for (const auto& [id, mos] : read_mos_csv(path)) out[id] = mos;
  return out;
}

json selection_params_json(const RunConfig& cfg) {
  json p;
  p["metric"] = std::string(to_string(cfg.metric.kind));
  p["mah_mode"] = std::string(to_string(cfg.metric.mah_mode));
  p["mah_lambda"] = cfg.metric.mah_regularization ? json(*cfg.metric.mah_regularization) : json("default");
  p["bandwidth"] = cfg.bandwidth ? json(*cfg.bandwidth) : json("median");
  p["alpha"] = cfg.selector.alpha;
  p["beta"] = cfg.selector.beta;
  p["h"] = cfg.selector.h;
  p["max_iters"] = cfg.selector.max_iters;
  p["rel_tol"] = cfg.selector.rel_tol;
  p["epsilon_floor"] = cfg.selector.epsilon_floor;
  p["r_update"] = std::string(to_string(cfg.selector.r_update_mode));
  p["rate"] = cfg.rate ? json(*cfg.rate) : json(nullptr);
  p["k"] = cfg.k ? json(*cfg.k) : json(nullptr);
  p["seed"] = cfg.seed;
  return p;
}

void write_patch_archive(const fs::path& path, const std::vector<Patch>& patches, std::size_t size) {
  std::ostringstream os(std::ios::binary);
  os.write("PAT1", 4);
  auto put = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put(static_cast<std::uint32_t>(patches.size()));
  put(static_cast<std::uint32_t>(size));
  put(3);
  std::string index = "patch_id,offset\n";
  std::size_t offset = 16;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    index += std::to_string(i) + "," + std::to_string(offset) + "\n";
    for (const double v : patches[i].pixels) {
      os.put(static_cast<char>(static_cast<unsigned char>(std::clamp(std::round(v), 0.0, 255.0))));
    }
    offset += size * size * 3;
  }
  write_file_atomic(path, os.str());
  auto index_path = path;
  index_path += ".index.csv";
  write_file_atomic(index_path, index);
}

// Runs fn(i) for i in [0, count) on up to `jobs` threads.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace

SamplingPlan run_sample(const SampleRequest& request, const RunConfig& config) {
  SamplingPlan plan;
  std::optional<ErpImage> image;
  if (request.image) image = read_image(request.image->string());

  switch (request.method) {
    case SamplingMethod::erp: {
      const std::size_t w = image ? image->width : request.width;
      const std::size_t h = image ? image->height : request.height;
      if (w == 0 || h == 0) throw InputError("ERP sampling needs --width/--height or an image");
      plan = erp_grid(w, h, config.patch_size);
      break;
    }
    case SamplingMethod::lat:
      plan = latitude_locations(latitude_plan(config.alpha0), config.polar_caps);
      plan.params.patch_size = config.patch_size;
      break;
    case SamplingMethod::sp: {
      if (!request.scanpaths) throw InputError("scanpath sampling needs a scanpath CSV");
      auto fixations = read_scanpath_csv(request.scanpaths->string());
      if (request.image_id) {
        std::erase_if(fixations, [&](const Fixation& f) { return f.image_id != *request.image_id; });
      }
      plan = scanpath_locations(fixations, config.fov);
      plan.params.patch_size = config.patch_size;
      break;
    }
  }

  write_file_atomic(request.plan_out, plan_to_json(plan).dump(2) + "\n");

  if (image) {
    std::vector<Patch> patches;
    patches.reserve(plan.locations.size());
    for (const auto& loc : plan.locations) patches.push_back(extract_patch(*image, loc, config.patch_size));
    auto archive = request.patches_out.value_or(fs::path(request.plan_out).replace_extension(".patches"));
    write_patch_archive(archive, patches, config.patch_size);
  }
  return plan;
}

SelectOutcome run_select(const SelectRequest& request, const RunConfig& config) {
  config.validate_selection();
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(request.out_dir);

  const std::size_t count = request.inputs.size();
  std::vector<json> entries(count);
  std::vector<std::optional<ManifestEntry>> outputs(count);

  SelectionRequest selection{config.metric, config.bandwidth, config.selector};

  parallel_for(count, config.jobs, [&](std::size_t i) {
    const auto& input = request.inputs[i];
    json entry;
    entry["image_id"] = input.image_id;
    try {
      const EmbeddingFile file = load_embeddings(input.path);
      const std::size_t n = file.values.rows();
      entry["n"] = n;
      if (config.selector.h > n) {
        throw InputError("h = " + std::to_string(config.selector.h) + " exceeds the patch count " + std::to_string(n));
      }
      const std::size_t k = std::min(config.keep_count(n), n);
      const ImageSelection sel = select_patches(file.values, selection, k);

      std::vector<std::size_t> kept = sel.result.kept;
      std::sort(kept.begin(), kept.end());

      EmbeddingFile filtered;
      filtered.dtype = file.dtype;
      std::vector<double> rows;
      rows.reserve(kept.size() * file.values.cols());
      for (const auto r : kept) {
        const auto row = file.values.row(r);
        rows.insert(rows.end(), row.begin(), row.end());
        filtered.patch_ids.push_back(file.patch_ids.empty() ? static_cast<std::uint32_t>(r) : file.patch_ids[r]);
      }
      filtered.values = Matrix(kept.size(), file.values.cols(), std::move(rows));
      const fs::path out_path = request.out_dir / (input.image_id + ".esf");
      save_esf(out_path, filtered);
      outputs[i] = ManifestEntry{input.image_id, out_path.filename()};

      entry["k"] = k;
      entry["kept"] = kept;
      entry["ranking"] = sel.result.ranking;
      entry["scores"] = sel.result.scores;
      entry["iterations"] = sel.state.iterations_run;
      entry["converged"] = sel.state.converged;
      entry["bandwidth"] = sel.similarity.bandwidth;
      entry["objective_history"] = sel.state.objective_history;
      entry["error"] = nullptr;
    } catch (const Error& e) {
      entry["error"] = e.what();
    }
    entries[i] = std::move(entry);
  });

  SelectOutcome outcome;
  outcome.report["params"] = selection_params_json(config);
  outcome.report["images"] = json::array();
  std::vector<ManifestEntry> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    if (!entries[i]["error"].is_null()) {
      ++outcome.failures;
      warn("image " + request.inputs[i].image_id + ": " + entries[i]["error"].get<std::string>());
    }
    outcome.report["images"].push_back(std::move(entries[i]));
    if (outputs[i]) manifest.push_back(*outputs[i]);
  }
  write_file_atomic(request.out_dir / "report.json", outcome.report.dump(2) + "\n");
  write_manifest(request.out_dir / "manifest.csv", manifest);

  outcome.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json timing;
  timing["wall_seconds"] = outcome.wall_seconds;
  timing["jobs"] = config.jobs;
  write_file_atomic(request.out_dir / "timing.json", timing.dump(2) + "\n");
  return outcome;
}

TrainResult run_train(const TrainRequest& request, const RunConfig& config) {
  const auto mos = mos_table(request.mos_csv);
  std::vector<std::string> unmatched;
  for (const auto& input : request.inputs) {
    if (!mos.contains(input.image_id)) unmatched.push_back(input.image_id);
  }
  if (!unmatched.empty()) throw JoinError(std::move(unmatched));

  std::vector<double> rows;
  std::vector<double> labels;
  std::size_t dim = 0;
  for (const auto& input : request.inputs) {
    const auto file = load_embeddings(input.path);
    if (dim == 0) dim = file.values.cols();
    if (file.values.cols() != dim) throw ShapeError("embedding dimension differs across images: " + input.image_id);
    rows.insert(rows.end(), file.values.data().begin(), file.values.data().end());
    labels.insert(labels.end(), file.values.rows(), mos.at(input.image_id));
  }
  if (labels.empty()) throw InputError("no training patches");
  const Matrix inputs(labels.size(), dim, std::move(rows));

  TrainConfig train = config.train;
  train.seed = config.seed;
  auto result = mlp_train(MlpModel::initialize(dim, config.seed), inputs, labels, train);

  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, result.model);
  write_file_atomic(request.model_out, os.str());
  if (request.loss_out) {
    std::string text = "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
      text += std::to_string(i) + "," + format_double(result.loss_curve[i]) + "\n";
    }
    write_file_atomic(*request.loss_out, text);
  }
  return result;
}

std::vector<PooledPrediction> run_predict(const PredictRequest& request) {
  std::istringstream model_bytes(read_file(request.model), std::ios::binary);
  const MlpModel model = read_checkpoint(model_bytes);

  std::optional<std::map<std::string, double>> mos;
  if (request.mos_csv) {
    mos = mos_table(*request.mos_csv);
    std::vector<std::string> unmatched;
    for (const auto& input : request.inputs) {
      if (!mos->contains(input.image_id)) unmatched.push_back(input.image_id);
    }
    if (!unmatched.empty()) throw JoinError(std::move(unmatched));
  }

  std::vector<PatchPrediction> patches;
  std::vector<PooledPrediction> pooled;
  for (const auto& input : request.inputs) {
    const auto file = load_embeddings(input.path);
    const auto scores = mlp_forward(model, file.values);
    for (std::size_t r = 0; r < scores.size(); ++r) {
      const auto id = file.patch_ids.empty() ? static_cast<std::uint32_t>(r) : file.patch_ids[r];
      patches.push_back({input.image_id, id, scores[r]});
    }
    if (scores.empty()) throw InputError("image " + input.image_id + " has no patches to pool");
    PooledPrediction p{input.image_id, pool_scores(scores), std::nullopt};
    if (mos) p.mos = mos->at(input.image_id);
    pooled.push_back(std::move(p));
  }

  std::ostringstream pred_csv;
  write_predictions_csv(pred_csv, patches);
  write_file_atomic(request.predictions_out, pred_csv.str());
  std::ostringstream pooled_csv;
  write_pooled_csv(pooled_csv, pooled);
  write_file_atomic(request.pooled_out, pooled_csv.str());
  return pooled;
}

json run_evaluate(const EvaluateRequest& request) {
  std::istringstream in(read_file(request.pooled));
  auto rows = read_pooled_csv(in);
  if (request.mos_csv) {
    const auto mos = mos_table(*request.mos_csv);
    for (auto& r : rows) {
      if (auto it = mos.find(r.image_id); it != mos.end()) r.mos = it->second;
    }
  }
  std::vector<std::string> unmatched;
  std::vector<double> pred;
  std::vector<double> truth;
  for (const auto& r : rows) {
    if (!r.mos) {
      unmatched.push_back(r.image_id);
      continue;
    }
    pred.push_back(r.pmos);
    truth.push_back(*r.mos);
  }
  if (!unmatched.empty()) throw JoinError(std::move(unmatched));

  const auto plcc = plcc_with_logistic(pred, truth);
  json metrics;
  metrics["plcc_raw"] = plcc.plcc_raw;
  metrics["plcc_mapped"] = plcc.plcc_mapped;
  metrics["srcc"] = srcc(pred, truth);
  metrics["n_images"] = pred.size();
  metrics["logistic_params"] = plcc.params;
  metrics["logistic_limit"] = std::string(to_string(plcc.limit));
  if (request.metrics_out) write_file_atomic(*request.metrics_out, metrics.dump(2) + "\n");
  return metrics;
}

SyntheticSet generate_synthetic(std::size_t n, std::size_t d, std::size_t n_outliers, std::uint64_t seed) {
  if (n == 0 || d == 0) throw InputError("synthetic set needs n, d >= 1");
  if (n_outliers >= n) throw InputError("outlier count must be below n");
  constexpr std::size_t rank = 3;
  auto gen = substream(seed, "synth");
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix loadings(rank, d);
  for (double& v : loadings.data()) v = normal(gen);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::size_t> outliers(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_outliers));
  std::sort(outliers.begin(), outliers.end());

  Matrix e(n, d);
  std::size_t next_outlier = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = e.row(i);
    if (next_outlier < outliers.size() && outliers[next_outlier] == i) {
      ++next_outlier;
      for (double& v : row) v = kOutlierScale * normal(gen);
      continue;
    }
    std::array<double, rank> latent{};
    for (double& z : latent) z = normal(gen);
    for (std::size_t j = 0; j < d; ++j) {
      double v = kSyntheticNoise * normal(gen);
      for (std::size_t r = 0; r < rank; ++r) v += latent[r] * loadings(r, j);
      row[j] = v;
    }
  }
  return {std::move(e), std::move(outliers)};
}

SyntheticSet run_synth(const SynthRequest& request, const RunConfig& config) {
  auto set = generate_synthetic(request.n, request.d, request.outliers, config.seed);
  EmbeddingFile file;
  file.values = set.embeddings;
  file.dtype = Dtype::f64;
  save_esf(request.out, file);

  json truth;
  truth["n"] = request.n;
  truth["d"] = request.d;
  truth["seed"] = config.seed;
  truth["outliers"] = set.outliers;
  truth["trivial"] = set.outliers.empty();
  if (set.outliers.empty()) truth["note"] = "no planted outliers; every selection is correct";
  write_file_atomic(request.truth_out, truth.dump(2) + "\n");
  return set;
}

}  // namespace spsel::cli
