#pragma once

// Patch quality regression and evaluation: a 512-unit ReLU MLP trained with
// minibatch MSE, median-consistency pooling of patch scores, and PLCC/SRCC
// with a four-parameter logistic mapping.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spsel/linalg.hpp"

namespace spsel {

constexpr std::size_t kHiddenWidth = 512;

struct MlpModel {
  std::size_t input_dim = 0;
  std::vector<double> w1;  // kHiddenWidth x input_dim, row-major
  std::vector<double> b1;  // kHiddenWidth
  std::vector<double> w2;  // kHiddenWidth
  double b2 = 0.0;
  std::uint64_t rng_seed = 0;

  // Zero-initialized model.
  explicit MlpModel(std::size_t input_dim = 0);

  // He-normal weights for both layers, zero biases.
  static MlpModel initialize(std::size_t input_dim, std::uint64_t seed);

  std::size_t parameter_count() const noexcept { return w1.size() + b1.size() + w2.size() + 1; }
  bool all_finite() const;
};

// Parameter-wise equality (the seed is not part of the checkpoint).
bool same_parameters(const MlpModel& a, const MlpModel& b);

double mlp_forward(const MlpModel& model, std::span<const double> embedding);
std::vector<double> mlp_forward(const MlpModel& model, const Matrix& embeddings);

// Gradient with the same layout as MlpModel.
struct MlpGradient {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

// Mean squared error over the given rows of `inputs` and its gradient.
double mse_loss_and_gradient(const MlpModel& model, const Matrix& inputs, std::span<const double> labels,
                             std::span<const std::size_t> rows, MlpGradient& grad);
double mse_loss(const MlpModel& model, const Matrix& inputs, std::span<const double> labels);

enum class OptimizerKind { adam, sgd_momentum };
OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;
  std::uint64_t seed = 0;  // shuffle stream

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_curve;  // one entry per minibatch step
};

TrainResult mlp_train(MlpModel model, const Matrix& inputs, std::span<const double> labels, const TrainConfig& cfg);

constexpr double kPoolEpsilon = 1e-6;

double median(std::span<const double> values);

// Weighted mean with weights 1 / (|score - median| + eps).
double pool_scores(std::span<const double> scores, double eps = kPoolEpsilon);

// Ranks starting at 1; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);
double srcc(std::span<const double> x, std::span<const double> y);

// q(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|))
double logistic4(const std::array<double, 4>& params, double x);

// Boundary limits of the logistic family, reached only as parameters diverge:
// |b4| -> infinity gives an affine map, b1 or b2 -> infinity (with b3 following)
// gives a saturating exponential a + c * exp(u * x).
enum class LogisticLimit { none, affine, exponential };
std::string_view to_string(LogisticLimit limit);

struct PlccResult {
  double plcc_raw = 0.0;
  double plcc_mapped = 0.0;
  std::array<double, 4> params{};  // simplex optimum (best point found when a limit is used)
  LogisticLimit limit = LogisticLimit::none;
  double exponential_rate = 0.0;  // u, per standardized prediction unit, when limit == exponential
};

PlccResult plcc_with_logistic(std::span<const double> pred, std::span<const double> mos);

struct SplitResult {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Random split of group keys (e.g. pristine-image ids) into train/test.
SplitResult split_groups(std::vector<std::string> groups, double train_fraction, std::uint64_t seed);

}  // namespace spsel
