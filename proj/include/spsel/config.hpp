#pragma once

// Run configuration shared by the CLI subcommands. Config files are flat
// `key = value` lines; `#` starts a comment. Command-line flags override keys.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "spsel/quality.hpp"
#include "spsel/selector.hpp"
#include "spsel/similarity.hpp"

namespace spsel {

struct RunConfig {
  DistanceMetric metric;
  std::optional<double> bandwidth;  // unset: median heuristic
  SelectorParams selector;
  std::optional<double> rate;
  std::optional<std::size_t> k;
  double alpha0 = 10.0;
  double fov = 30.0;
  bool polar_caps = true;
  std::size_t patch_size = 128;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  // Exactly one of rate / k must be set; rate in (0, 1].
  void validate_selection() const;
  std::size_t keep_count(std::size_t n) const;
};

std::map<std::string, std::string> parse_key_values(std::istream& in);

// Applies known keys onto `cfg`; unknown keys raise InputError.
void apply_key_values(RunConfig& cfg, const std::map<std::string, std::string>& kv);

RunConfig load_config(const std::filesystem::path& path);

}  // namespace spsel
