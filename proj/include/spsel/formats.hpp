#pragma once

// On-disk formats. All multi-byte integers and floats are little-endian.
//
// ESF embedding file:
//   "ESF1" | u32 n | u32 d | u32 flags | n*d values row-major | [n x u32 patch ids]
//   flags bit 0: values are float64 (else float32); bit 1: patch-id table present.
//
// MLP checkpoint:
//   "MLP1" | u32 input_dim | u32 hidden (512) | float64 w1[512*c] b1[512] w2[512] b2

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spsel/linalg.hpp"
#include "spsel/quality.hpp"
#include "spsel/sphere.hpp"

namespace spsel {

enum class Dtype { f32, f64 };

struct EmbeddingFile {
  Matrix values;
  Dtype dtype = Dtype::f64;
  std::vector<std::uint32_t> patch_ids;  // empty when absent
};

void write_esf(std::ostream& out, const EmbeddingFile& file);
EmbeddingFile read_esf(std::istream& in);

// Plain comma-separated numeric grid, one embedding per line.
Matrix read_embedding_csv(std::istream& in);

// Loads .csv grids or ESF files (by extension, then magic).
EmbeddingFile load_embeddings(const std::filesystem::path& path);
void save_esf(const std::filesystem::path& path, const EmbeddingFile& file);

void write_checkpoint(std::ostream& out, const MlpModel& model);
MlpModel read_checkpoint(std::istream& in);

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path path;
};

// `image_id,path` CSV; relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// `image_id,mos` CSV, order preserved.
std::vector<std::pair<std::string, double>> read_mos_csv(const std::filesystem::path& path);

struct PatchPrediction {
  std::string image_id;
  std::uint32_t patch_id = 0;
  double pmos = 0.0;
};

struct PooledPrediction {
  std::string image_id;
  double pmos = 0.0;
  std::optional<double> mos;
};

void write_predictions_csv(std::ostream& out, const std::vector<PatchPrediction>& rows);
std::vector<PatchPrediction> read_predictions_csv(std::istream& in);
void write_pooled_csv(std::ostream& out, const std::vector<PooledPrediction>& rows);
std::vector<PooledPrediction> read_pooled_csv(std::istream& in);

nlohmann::ordered_json plan_to_json(const SamplingPlan& plan);
SamplingPlan plan_from_json(const nlohmann::ordered_json& j);

// Writes via a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Shortest round-trip decimal rendering of a double.
std::string format_double(double v);

}  // namespace spsel
