#include "spsel/selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spsel/error.hpp"
#include "spsel/log.hpp"

namespace spsel {

namespace {

void check_shapes(const Matrix& e, const Matrix& w, const Matrix& r, const Matrix& z) {
  const bool ok = w.rows() == e.cols() && z.rows() == e.rows() && w.cols() == z.cols() &&
                  r.rows() == z.cols() && r.cols() == e.rows();
  if (!ok) {
    throw ShapeError("incompatible shapes: E " + std::to_string(e.rows()) + "x" + std::to_string(e.cols()) +
                     ", W " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + ", R " +
                     std::to_string(r.rows()) + "x" + std::to_string(r.cols()) + ", Z " +
                     std::to_string(z.rows()) + "x" + std::to_string(z.cols()));
  }
}

double column_norm(const Matrix& m, std::size_t c) {
  double sum = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) sum += m(i, c) * m(i, c);
  return std::sqrt(sum);
}

// C = (E W - Z)ᵀ, h x n.
Matrix residual_target(const Matrix& e, const Matrix& w, const Matrix& z) {
  return transpose(matmul(e, w) - z);
}

}  // namespace

RUpdateMode parse_r_update_mode(std::string_view name) {
  if (name == "exact" || name == "exact-proximal") return RUpdateMode::exact_proximal;
  if (name == "lagged" || name == "lagged-fixed-point") return RUpdateMode::lagged_fixed_point;
  throw InputError("unknown R update mode '" + std::string(name) + "' (expected exact or lagged)");
}

std::string_view to_string(RUpdateMode mode) {
  return mode == RUpdateMode::exact_proximal ? "exact-proximal" : "lagged-fixed-point";
}

void SelectorParams::validate(std::size_t d) const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(alpha)) throw InputError("alpha must be strictly positive");
  if (!positive(beta)) throw InputError("beta must be strictly positive");
  if (!positive(rel_tol)) throw InputError("rel_tol must be strictly positive");
  if (!positive(epsilon_floor)) throw InputError("epsilon_floor must be strictly positive");
  if (max_iters == 0) throw InputError("max_iters must be at least 1");
  if (h == 0) throw InputError("h must be at least 1");
  if (h > d) {
    throw InputError("h = " + std::to_string(h) + " exceeds the embedding dimension " + std::to_string(d));
  }
  if (2 * h > d) warn("h = " + std::to_string(h) + " is more than half the embedding dimension " + std::to_string(d));
}

double objective(const Matrix& e, const Matrix& w, const Matrix& r, const Matrix& z, double alpha,
                 double beta) {
  check_shapes(e, w, r, z);
  const Matrix ew = matmul(e, w);
  double data = 0.0;
  for (std::size_t i = 0; i < ew.rows(); ++i) {
    for (std::size_t j = 0; j < ew.cols(); ++j) {
      const double diff = ew(i, j) - z(i, j) - r(j, i);
      data += diff * diff;
    }
  }
  double w_group = 0.0;
  for (std::size_t j = 0; j < w.rows(); ++j) w_group += l2_norm(w.row(j));
  double r_group = 0.0;
  for (std::size_t k = 0; k < r.cols(); ++k) r_group += column_norm(r, k);
  return data + alpha * w_group + beta * r_group;
}

std::vector<double> irls_row_weights(const Matrix& w, double epsilon_floor) {
  std::vector<double> weights(w.rows());
  for (std::size_t j = 0; j < w.rows(); ++j) weights[j] = 1.0 / (2.0 * l2_norm(w.row(j)) + epsilon_floor);
  return weights;
}

Matrix solve_weighted_w(const Matrix& e, const Matrix& r, const Matrix& z,
                        std::span<const double> row_weights, double alpha) {
  if (row_weights.size() != e.cols()) throw ShapeError("IRLS weight count must equal the embedding dimension");
  if (r.rows() != z.cols() || r.cols() != e.rows() || z.rows() != e.rows()) {
    throw ShapeError("update_w: R must be h x n and Z n x h");
  }
  Matrix system = matmul_tn(e, e);
  for (std::size_t j = 0; j < system.rows(); ++j) system(j, j) += alpha * row_weights[j];
  const Matrix rhs = matmul_tn(e, transpose(r) + z);
  return solve_spd(system, rhs);
}

Matrix update_w(const Matrix& e, const Matrix& r, const Matrix& z, const Matrix& w_prev, double alpha,
                double epsilon_floor) {
  if (w_prev.rows() != e.cols() || w_prev.cols() != z.cols()) throw ShapeError("update_w: W_prev must be d x h");
  const auto weights = irls_row_weights(w_prev, epsilon_floor);
  return solve_weighted_w(e, r, z, weights, alpha);
}

Matrix initial_w(const Matrix& e, const Matrix& z, double alpha) {
  const std::vector<double> weights(e.cols(), 0.5);
  return solve_weighted_w(e, Matrix(z.cols(), e.rows()), z, weights, alpha);
}

Matrix update_r(const Matrix& e, const Matrix& w, const Matrix& z, const Matrix& r_prev, double beta,
                RUpdateMode mode, double epsilon_floor) {
  check_shapes(e, w, r_prev, z);
  Matrix c = residual_target(e, w, z);
  for (std::size_t k = 0; k < c.cols(); ++k) {
    double factor = 0.0;
    if (mode == RUpdateMode::exact_proximal) {
      const double norm = column_norm(c, k);
      factor = norm > 0.0 ? std::max(0.0, 1.0 - beta / (2.0 * norm)) : 0.0;
    } else {
      const double prev = column_norm(r_prev, k) + epsilon_floor;
      factor = prev / (prev + beta);
    }
    for (std::size_t i = 0; i < c.rows(); ++i) c(i, k) *= factor;
  }
  return c;
}

SelectionState fit(const Matrix& e, const SelectorParams& params, const SpectralTarget& target) {
  const Matrix& z = target.z;
  if (z.rows() != e.rows()) throw ShapeError("spectral target row count differs from the embedding count");
  if (z.cols() != params.h) {
    throw ShapeError("spectral target has " + std::to_string(z.cols()) + " columns but h = " +
                     std::to_string(params.h));
  }
  params.validate(e.cols());

  SelectionState state;
  state.r = Matrix(params.h, e.rows());
  state.w = initial_w(e, z, params.alpha);

  auto record = [&](std::size_t iteration) {
    const double f = objective(e, state.w, state.r, z, params.alpha, params.beta);
    if (!std::isfinite(f)) throw DivergenceError("objective became non-finite", iteration);
    state.objective_history.push_back(f);
    return f;
  };

  double previous = record(0);
  for (std::size_t it = 1; it <= params.max_iters; ++it) {
    state.w = update_w(e, state.r, z, state.w, params.alpha, params.epsilon_floor);
    state.r = update_r(e, state.w, z, state.r, params.beta, params.r_update_mode, params.epsilon_floor);
    const double current = record(it);
    state.iterations_run = it;
    const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
    if (std::abs(previous - current) / scale < params.rel_tol) {
      state.converged = true;
      break;
    }
    previous = current;
  }
  return state;
}

std::vector<double> irrelevance_scores(const SelectionState& state) {
  std::vector<double> scores(state.r.cols());
  for (std::size_t k = 0; k < scores.size(); ++k) scores[k] = column_norm(state.r, k);
  return scores;
}

SelectionResult select_top_k(std::span<const double> scores, std::size_t k) {
  if (scores.empty()) throw InputError("select_top_k: empty score vector");
  if (k == 0) throw InputError("select_top_k: k must be at least 1");
  if (k > scores.size()) {
    warn("k = " + std::to_string(k) + " exceeds the patch count " + std::to_string(scores.size()) +
         "; keeping all patches");
    k = scores.size();
  }
  SelectionResult out;
  out.scores.assign(scores.begin(), scores.end());
  out.ranking.resize(scores.size());
  std::iota(out.ranking.begin(), out.ranking.end(), 0);
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  out.k = k;
  out.kept.assign(out.ranking.begin(), out.ranking.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

std::size_t k_from_rate(double rate, std::size_t n) {
  if (!(rate > 0.0 && rate <= 1.0)) throw InputError("selection rate must lie in (0, 1]");
  // The small slack keeps exact products such as 0.4 * 10 from rounding up.
  const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n, 1));
}

ImageSelection select_patches(const Matrix& e, const SelectionRequest& request, std::size_t k) {
  ImageSelection out;
  out.similarity = similarity_from_distance(pairwise_distance(e, request.metric), request.fixed_bandwidth);
  out.target = spectral_target(out.similarity, request.params.h);
  out.state = fit(e, request.params, out.target);
  out.result = select_top_k(irrelevance_scores(out.state), k);
  return out;
}

}  // namespace spsel
