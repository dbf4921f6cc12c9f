#pragma once

// Subcommand implementations behind the `spsel` executable. Each one reads and
// writes files and returns its in-memory result so tests can drive it directly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spsel/config.hpp"
#include "spsel/formats.hpp"
#include "spsel/sphere.hpp"

namespace spsel::cli {

namespace fs = std::filesystem;

struct SampleRequest {
  SamplingMethod method = SamplingMethod::erp;
  std::size_t width = 0;
  std::size_t height = 0;
  std::optional<fs::path> image;
  std::optional<fs::path> scanpaths;
  std::optional<std::string> image_id;  // restricts scanpath rows to one image
  fs::path plan_out;
  std::optional<fs::path> patches_out;
};

// Writes the plan JSON and, when an image is given, a patch archive:
// "PAT1" | u32 count | u32 size | u32 channels | count*size*size*3 bytes,
// plus `<archive>.index.csv` mapping patch_id to byte offset.
SamplingPlan run_sample(const SampleRequest& request, const RunConfig& config);

struct SelectRequest {
  std::vector<ManifestEntry> inputs;
  fs::path out_dir;
};

struct SelectOutcome {
  nlohmann::ordered_json report;
  std::size_t failures = 0;
  double wall_seconds = 0.0;
};

// Per-image selection. Writes <out_dir>/report.json, one filtered ESF per
// image, <out_dir>/manifest.csv and <out_dir>/timing.json.
SelectOutcome run_select(const SelectRequest& request, const RunConfig& config);

struct TrainRequest {
  std::vector<ManifestEntry> inputs;
  fs::path mos_csv;
  fs::path model_out;
  std::optional<fs::path> loss_out;
};

TrainResult run_train(const TrainRequest& request, const RunConfig& config);

struct PredictRequest {
  std::vector<ManifestEntry> inputs;
  fs::path model;
  fs::path predictions_out;
  fs::path pooled_out;
  std::optional<fs::path> mos_csv;
};

std::vector<PooledPrediction> run_predict(const PredictRequest& request);

struct EvaluateRequest {
  fs::path pooled;
  std::optional<fs::path> mos_csv;
  std::optional<fs::path> metrics_out;
};

nlohmann::ordered_json run_evaluate(const EvaluateRequest& request);

struct SyntheticSet {
  Matrix embeddings;
  std::vector<std::size_t> outliers;  // ascending
};

// Clean rows follow a rank-3 latent model plus small noise; outlier rows are
// isotropic noise with a much larger scale.
SyntheticSet generate_synthetic(std::size_t n, std::size_t d, std::size_t n_outliers, std::uint64_t seed);

struct SynthRequest {
  std::size_t n = 64;
  std::size_t d = 32;
  std::size_t outliers = 6;
  fs::path out;
  fs::path truth_out;
};

SyntheticSet run_synth(const SynthRequest& request, const RunConfig& config);

}  // namespace spsel::cli
