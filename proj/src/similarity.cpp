#include "spsel/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spsel/error.hpp"

namespace spsel {

namespace {

constexpr double kNegativeEigenTolerance = 1e-10;

double median_of(std::vector<double> values) {
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

std::vector<double> column_means(const Matrix& e) {
  std::vector<double> mean(e.cols(), 0.0);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    const auto row = e.row(i);
    for (std::size_t j = 0; j < e.cols(); ++j) mean[j] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(e.rows());
  return mean;
}

void fill_symmetric(Matrix& d, auto&& pair_distance) {
  const std::size_t n = d.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = pair_distance(i, j);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
}

}  // namespace

MetricKind parse_metric_kind(std::string_view name) {
  if (name == "euc" || name == "EUC" || name == "euclidean") return MetricKind::euclidean;
  if (name == "man" || name == "MAN" || name == "manhattan") return MetricKind::manhattan;
  if (name == "mah" || name == "MAH" || name == "mahalanobis") return MetricKind::mahalanobis;
  throw InputError("unknown distance metric '" + std::string(name) + "' (expected euc, man or mah)");
}

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::euclidean: return "euc";
    case MetricKind::manhattan: return "man";
    case MetricKind::mahalanobis: return "mah";
  }
  return "?";
}

CovarianceMode parse_covariance_mode(std::string_view name) {
  if (name == "diag" || name == "diagonal") return CovarianceMode::diagonal;
  if (name == "full") return CovarianceMode::full;
  throw InputError("unknown covariance mode '" + std::string(name) + "' (expected diag or full)");
}

std::string_view to_string(CovarianceMode mode) {
  return mode == CovarianceMode::full ? "full" : "diag";
}

Matrix sample_covariance(const Matrix& e) {
  if (e.rows() < 2) throw InputError("covariance needs at least 2 rows");
  const auto mean = column_means(e);
  Matrix centered(e.rows(), e.cols());
  for (std::size_t i = 0; i < e.rows(); ++i) {
    for (std::size_t j = 0; j < e.cols(); ++j) centered(i, j) = e(i, j) - mean[j];
  }
  return (1.0 / static_cast<double>(e.rows() - 1)) * matmul_tn(centered, centered);
}

double default_mah_regularization(const Matrix& covariance) {
  double trace = 0.0;
  for (std::size_t i = 0; i < covariance.rows(); ++i) trace += covariance(i, i);
  return 1e-3 * trace / static_cast<double>(covariance.rows());
}

Matrix pairwise_distance(const Matrix& e, const DistanceMetric& metric) {
  const std::size_t n = e.rows();
  const std::size_t d = e.cols();
  if (n < 2) throw InputError("pairwise_distance needs at least 2 rows, got " + std::to_string(n));
  Matrix out(n, n);

  switch (metric.kind) {
    case MetricKind::euclidean:
      fill_symmetric(out, [&](std::size_t i, std::size_t j) {
        const auto a = e.row(i);
        const auto b = e.row(j);
        double sum = 0.0;
        for (std::size_t k = 0; k < d; ++k) sum += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(sum);
      });
      break;

    case MetricKind::manhattan:
      fill_symmetric(out, [&](std::size_t i, std::size_t j) {
        const auto a = e.row(i);
        const auto b = e.row(j);
        double sum = 0.0;
        for (std::size_t k = 0; k < d; ++k) sum += std::abs(a[k] - b[k]);
        return sum;
      });
      break;

    case MetricKind::mahalanobis: {
      if (metric.mah_regularization && *metric.mah_regularization < 0.0) {
        throw InputError("Mahalanobis regularization must be non-negative");
      }
      if (metric.mah_mode == CovarianceMode::diagonal) {
        const auto mean = column_means(e);
        std::vector<double> var(d, 0.0);
        double trace = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < d; ++k) var[k] += (e(i, k) - mean[k]) * (e(i, k) - mean[k]);
        }
        for (double& v : var) {
          v /= static_cast<double>(n - 1);
          trace += v;
        }
        const double lambda = metric.mah_regularization.value_or(1e-3 * trace / static_cast<double>(d));
        std::vector<double> inv(d);
        for (std::size_t k = 0; k < d; ++k) {
          const double v = var[k] + lambda;
          if (!(v > 0.0)) throw DefinitenessError("regularized diagonal covariance is singular", k);
          inv[k] = 1.0 / v;
        }
        fill_symmetric(out, [&](std::size_t i, std::size_t j) {
          const auto a = e.row(i);
          const auto b = e.row(j);
          double sum = 0.0;
          for (std::size_t k = 0; k < d; ++k) sum += (a[k] - b[k]) * (a[k] - b[k]) * inv[k];
          return std::sqrt(sum);
        });
      } else {
        Matrix cov = sample_covariance(e);
        const double lambda = metric.mah_regularization.value_or(default_mah_regularization(cov));
        for (std::size_t k = 0; k < d; ++k) cov(k, k) += lambda;
        const Matrix l = cholesky(cov);
        // Whiten every row once: y = L^{-1} x, so d(x, y) = |L^{-1}(x - y)|.
        Matrix white(n, d);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < d; ++k) {
            double sum = e(i, k);
            for (std::size_t m = 0; m < k; ++m) sum -= l(k, m) * white(i, m);
            white(i, k) = sum / l(k, k);
          }
        }
        fill_symmetric(out, [&](std::size_t i, std::size_t j) {
          const auto a = white.row(i);
          const auto b = white.row(j);
          double sum = 0.0;
          for (std::size_t k = 0; k < d; ++k) sum += (a[k] - b[k]) * (a[k] - b[k]);
          return std::sqrt(sum);
        });
      }
      break;
    }
  }
  return out;
}

SimilarityMatrix similarity_from_distance(const Matrix& distances,
                                          std::optional<double> fixed_bandwidth) {
  const std::size_t n = distances.rows();
  if (distances.cols() != n) throw ShapeError("distance matrix must be square");
  if (n < 2) throw InputError("similarity needs at least 2 points");
  for (std::size_t i = 0; i < n; ++i) {
    if (distances(i, i) != 0.0) throw InputError("distance matrix must have a zero diagonal");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (distances(i, j) != distances(j, i)) throw InputError("distance matrix must be symmetric");
      if (distances(i, j) < 0.0) throw InputError("distances must be non-negative");
    }
  }

  double sigma = 0.0;
  if (fixed_bandwidth) {
    sigma = *fixed_bandwidth;
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("fixed bandwidth must be positive");
  } else {
    std::vector<double> upper;
    upper.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) upper.push_back(distances(i, j));
    }
    sigma = median_of(std::move(upper));
    if (!(sigma > 0.0)) {
      throw DegenerateInputError("median-heuristic bandwidth is zero; the points are (mostly) coincident");
    }
  }

  SimilarityMatrix out{Matrix(n, n), sigma};
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    out.s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::exp(-distances(i, j) * distances(i, j) / denom);
      out.s(i, j) = v;
      out.s(j, i) = v;
    }
  }
  return out;
}

SpectralTarget spectral_target(const Matrix& s, std::size_t h) {
  const std::size_t n = s.rows();
  if (s.cols() != n) throw ShapeError("spectral_target: similarity matrix must be square");
  if (h < 1 || h > n) {
    throw InputError("spectral_target: h = " + std::to_string(h) + " outside [1, " + std::to_string(n) + "]");
  }
  const EigenPairs eig = eig_sym(s);
  const double floor = -kNegativeEigenTolerance * frobenius_norm(s);

  std::size_t available = 0;
  for (double v : eig.values) {
    if (v >= floor) ++available;
  }
  if (available < h) throw SpectrumError(h, available);

  SpectralTarget out;
  out.z = Matrix(n, h);
  out.kept_eigenvalues.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    const double lambda = std::max(eig.values[j], 0.0);
    out.kept_eigenvalues[j] = lambda;
    const double scale = std::sqrt(lambda);
    for (std::size_t i = 0; i < n; ++i) out.z(i, j) = eig.vectors(i, j) * scale;
  }
  for (std::size_t j = h; j < n; ++j) {
    if (eig.values[j] > 0.0) out.discarded_energy += eig.values[j] * eig.values[j];
  }
  return out;
}

}  // namespace spsel
