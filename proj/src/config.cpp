#include "spsel/config.hpp"

#include <fstream>
#include <istream>

#include "spsel/error.hpp"

namespace spsel {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::logic_error&) {
    throw InputError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
    const auto out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::logic_error&) {
    throw InputError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace

void RunConfig::validate_selection() const {
  if (rate.has_value() == k.has_value()) throw InputError("exactly one of rate or k must be set");
  if (rate && !(*rate > 0.0 && *rate <= 1.0)) throw InputError("selection rate must lie in (0, 1]");
  if (k && *k == 0) throw InputError("k must be at least 1");
}

std::size_t RunConfig::keep_count(std::size_t n) const {
  validate_selection();
  return rate ? k_from_rate(*rate, n) : *k;
}

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_key_values(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "metric") {
      cfg.metric.kind = parse_metric_kind(v);
    } else if (key == "mah_mode") {
      cfg.metric.mah_mode = parse_covariance_mode(v);
    } else if (key == "mah_lambda") {
      cfg.metric.mah_regularization = to_double(key, v);
    } else if (key == "bandwidth") {
      if (v == "median") {
        cfg.bandwidth.reset();
      } else {
        cfg.bandwidth = to_double(key, v);
      }
    } else if (key == "alpha") {
      cfg.selector.alpha = to_double(key, v);
    } else if (key == "beta") {
      cfg.selector.beta = to_double(key, v);
    } else if (key == "h") {
      cfg.selector.h = to_uint(key, v);
    } else if (key == "max_iters") {
      cfg.selector.max_iters = to_uint(key, v);
    } else if (key == "rel_tol") {
      cfg.selector.rel_tol = to_double(key, v);
    } else if (key == "epsilon_floor") {
      cfg.selector.epsilon_floor = to_double(key, v);
    } else if (key == "r_update") {
      cfg.selector.r_update_mode = parse_r_update_mode(v);
    } else if (key == "rate") {
      cfg.rate = to_double(key, v);
      cfg.k.reset();
    } else if (key == "k") {
      cfg.k = to_uint(key, v);
      cfg.rate.reset();
    } else if (key == "alpha0") {
      cfg.alpha0 = to_double(key, v);
    } else if (key == "fov") {
      cfg.fov = to_double(key, v);
    } else if (key == "polar_caps") {
      cfg.polar_caps = to_bool(key, v);
    } else if (key == "patch_size") {
      cfg.patch_size = to_uint(key, v);
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = to_double(key, v);
    } else if (key == "batch_size") {
      cfg.train.batch_size = to_uint(key, v);
    } else if (key == "epochs") {
      cfg.train.epochs = to_uint(key, v);
    } else if (key == "optimizer") {
      cfg.train.optimizer = parse_optimizer(v);
    } else if (key == "seed") {
      cfg.seed = to_uint(key, v);
    } else if (key == "jobs") {
      cfg.jobs = to_uint(key, v);
    } else {
      throw InputError("unknown config key '" + key + "'");
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  RunConfig cfg;
  apply_key_values(cfg, parse_key_values(in));
  return cfg;
}

}  // namespace spsel
