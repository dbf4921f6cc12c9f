#pragma once

// Residual-analysis patch selection: alternating minimization of
//
//   F(W, R) = |E W - Z - Rᵀ|_F^2 + alpha * sum_j |W(j,:)|_2 + beta * sum_k |R(:,k)|_2
//
// with an IRLS-smoothed closed-form W step and a column-wise R step. Columns of
// R with large norm mark patches whose similarity structure is not preserved.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spsel/linalg.hpp"
#include "spsel/similarity.hpp"

namespace spsel {

enum class RUpdateMode {
  exact_proximal,      // per-column block soft threshold at beta / 2
  lagged_fixed_point,  // r_k = c_k * |r_k^prev| / (|r_k^prev| + beta), with an epsilon floor
};

RUpdateMode parse_r_update_mode(std::string_view name);
std::string_view to_string(RUpdateMode mode);

struct SelectorParams {
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t h = 5;
  std::size_t max_iters = 100;
  double rel_tol = 1e-6;
  double epsilon_floor = 1e-12;
  RUpdateMode r_update_mode = RUpdateMode::exact_proximal;

  // Throws InputError on invalid values; warns when h > d / 2.
  void validate(std::size_t d) const;
};

struct SelectionState {
  Matrix w;  // d x h
  Matrix r;  // h x n
  std::vector<double> objective_history;
  std::size_t iterations_run = 0;
  bool converged = false;
};

struct SelectionResult {
  std::vector<double> scores;
  std::vector<std::size_t> ranking;  // ascending by score, ties by index
  std::vector<std::size_t> kept;     // first k entries of ranking
  std::size_t k = 0;
};

double objective(const Matrix& e, const Matrix& w, const Matrix& r, const Matrix& z, double alpha,
                 double beta);

// Solves (EᵀE + alpha * diag(weights)) W = Eᵀ(Rᵀ + Z) for the given per-row weights.
Matrix solve_weighted_w(const Matrix& e, const Matrix& r, const Matrix& z,
                        std::span<const double> row_weights, double alpha);

// IRLS weights 1 / (2 |W(j,:)|_2 + epsilon).
std::vector<double> irls_row_weights(const Matrix& w, double epsilon_floor);

Matrix update_w(const Matrix& e, const Matrix& r, const Matrix& z, const Matrix& w_prev, double alpha,
                double epsilon_floor);

Matrix update_r(const Matrix& e, const Matrix& w, const Matrix& z, const Matrix& r_prev, double beta,
                RUpdateMode mode, double epsilon_floor);

// Initial W: one weighted solve with every IRLS weight equal to 1/2.
Matrix initial_w(const Matrix& e, const Matrix& z, double alpha);

SelectionState fit(const Matrix& e, const SelectorParams& params, const SpectralTarget& target);

std::vector<double> irrelevance_scores(const SelectionState& state);

SelectionResult select_top_k(std::span<const double> scores, std::size_t k);

// k = ceil(rate * n), at least 1.
std::size_t k_from_rate(double rate, std::size_t n);

struct SelectionRequest {
  DistanceMetric metric;
  std::optional<double> fixed_bandwidth;
  SelectorParams params;
};

struct ImageSelection {
  SimilarityMatrix similarity;
  SpectralTarget target;
  SelectionState state;
  SelectionResult result;
};

// Distance, similarity, spectral target, fit and top-k for one image.
ImageSelection select_patches(const Matrix& e, const SelectionRequest& request, std::size_t k);

}  // namespace spsel
