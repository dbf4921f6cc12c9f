#pragma once

#include <optional>
#include <string_view>

#include "spsel/linalg.hpp"

namespace spsel {

enum class MetricKind { euclidean, manhattan, mahalanobis };
enum class CovarianceMode { full, diagonal };

struct DistanceMetric {
  MetricKind kind = MetricKind::euclidean;
  // Ridge added to the per-image covariance for Mahalanobis. Unset means
  // 1e-3 * trace(cov) / d.
  std::optional<double> mah_regularization;
  CovarianceMode mah_mode = CovarianceMode::diagonal;
};

MetricKind parse_metric_kind(std::string_view name);
std::string_view to_string(MetricKind kind);
CovarianceMode parse_covariance_mode(std::string_view name);
std::string_view to_string(CovarianceMode mode);

// Unbiased (n - 1) sample covariance of the rows of e.
Matrix sample_covariance(const Matrix& e);

// λ used for Mahalanobis when none is given explicitly.
double default_mah_regularization(const Matrix& covariance);

// n x n distance matrix over the rows of e. Symmetric with a zero diagonal.
Matrix pairwise_distance(const Matrix& e, const DistanceMetric& metric);

struct SimilarityMatrix {
  Matrix s;
  double bandwidth = 0.0;
};

// Gaussian kernel S_ij = exp(-D_ij^2 / (2 sigma^2)). Without a fixed sigma the
// median of the strictly-upper-triangle distances is used.
SimilarityMatrix similarity_from_distance(const Matrix& distances,
                                          std::optional<double> fixed_bandwidth = std::nullopt);

struct SpectralTarget {
  Matrix z;                               // n x h
  std::vector<double> kept_eigenvalues;   // non-increasing, >= 0
  double discarded_energy = 0.0;          // sum of squared discarded non-negative eigenvalues
};

// Best rank-h Gram factor of S: Z = V_h * sqrt(D_h) over the top-h eigenpairs.
SpectralTarget spectral_target(const Matrix& s, std::size_t h);
inline SpectralTarget spectral_target(const SimilarityMatrix& s, std::size_t h) {
  return spectral_target(s.s, h);
}

}  // namespace spsel
