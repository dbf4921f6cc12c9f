#include "spsel/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "spsel/error.hpp"
#include "spsel/rng.hpp"

namespace spsel {

namespace {

constexpr std::size_t kMaxSimplexIterations = 2000;

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

void require_same_length(std::span<const double> x, std::span<const double> y, std::size_t min_len,
                         const char* what) {
  if (x.size() != y.size()) throw InputError(std::string(what) + ": sequences differ in length");
  if (x.size() < min_len) {
    throw InputError(std::string(what) + ": needs at least " + std::to_string(min_len) + " points, got " +
                     std::to_string(x.size()));
  }
}

double sse_of(const std::array<double, 4>& p, std::span<const double> pred, std::span<const double> mos) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = logistic4(p, pred[i]) - mos[i];
    sse += r * r;
  }
  return std::isfinite(sse) ? sse : std::numeric_limits<double>::infinity();
}

struct SimplexOutcome {
  std::array<double, 4> best{};
  double value = 0.0;
  bool converged = false;
};

// Nelder-Mead with standard coefficients (reflect 1, expand 2, contract 1/2, shrink 1/2).
template <typename F>
SimplexOutcome nelder_mead(F&& f, std::array<double, 4> start, std::array<double, 4> step, double abs_tol) {
  constexpr std::size_t dim = 4;
  std::array<std::array<double, 4>, dim + 1> pts{};
  std::array<double, dim + 1> vals{};
  pts[0] = start;
  for (std::size_t i = 0; i < dim; ++i) {
    pts[i + 1] = start;
    pts[i + 1][i] += step[i];
  }
  for (std::size_t i = 0; i <= dim; ++i) vals[i] = f(pts[i]);

  auto blend = [](const std::array<double, 4>& a, const std::array<double, 4>& b, double t) {
    std::array<double, 4> out{};
    for (std::size_t k = 0; k < dim; ++k) out[k] = a[k] + t * (b[k] - a[k]);
    return out;
  };

  SimplexOutcome out;
  for (std::size_t iter = 0; iter < kMaxSimplexIterations; ++iter) {
    std::array<std::size_t, dim + 1> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t lo = order.front();
    const std::size_t hi = order.back();
    const std::size_t second = order[dim - 1];

    const double spread = vals[hi] - vals[lo];
    if (spread <= 1e-10 * 0.5 * (std::abs(vals[hi]) + std::abs(vals[lo])) + abs_tol) {
      out.converged = true;
      break;
    }

    std::array<double, 4> centroid{};
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == hi) continue;
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += pts[i][k] / static_cast<double>(dim);
    }

    const auto reflected = blend(centroid, pts[hi], -1.0);
    const double fr = f(reflected);
    if (fr < vals[lo]) {
      const auto expanded = blend(centroid, pts[hi], -2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        pts[hi] = expanded;
        vals[hi] = fe;
      } else {
        pts[hi] = reflected;
        vals[hi] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[hi] = reflected;
      vals[hi] = fr;
      continue;
    }
    const bool outside = fr < vals[hi];
    const auto contracted = outside ? blend(centroid, reflected, 0.5) : blend(centroid, pts[hi], 0.5);
    const double fc = f(contracted);
    if (fc < (outside ? fr : vals[hi])) {
      pts[hi] = contracted;
      vals[hi] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= dim; ++i) {
      if (i == lo) continue;
      pts[i] = blend(pts[lo], pts[i], 0.5);
      vals[i] = f(pts[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  out.best = pts[best];
  out.value = vals[best];
  return out;
}

// Best saturating-exponential limit a + c * exp(u * x'), x' the standardized
// predictions. For fixed u the fit is a linear regression with SSE
// syy * (1 - r(u)^2), so only u is searched: a grid, then golden section.
struct ExponentialFit {
  double rate = 0.0;
  double r = 0.0;
};

double exp_corr(std::span<const double> xs, std::span<const double> mos, double u, std::vector<double>& buf) {
  for (std::size_t i = 0; i < xs.size(); ++i) buf[i] = std::exp(u * xs[i]);
  if (is_constant(buf)) return 0.0;
  return pearson(buf, mos);
}

ExponentialFit exponential_limit(std::span<const double> pred, std::span<const double> mos) {
  const double mx = mean_of(pred);
  const double sx = stddev_of(pred);
  std::vector<double> xs(pred.size());
  double reach = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    xs[i] = (pred[i] - mx) / sx;
    reach = std::max(reach, std::abs(xs[i]));
  }
  const double max_rate = std::min(20.0, 600.0 / reach);
  constexpr double grid = 0.02;
  std::vector<double> buf(pred.size());

  ExponentialFit best;
  for (double u = -max_rate; u <= max_rate; u += grid) {
    if (std::abs(u) < 0.5 * grid) continue;  // u -> 0 is the affine limit
    const double r = exp_corr(xs, mos, u, buf);
    if (r * r > best.r * best.r) best = {u, r};
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = best.rate - grid, b = best.rate + grid;
  for (int it = 0; it < 60; ++it) {
    const double c = b - phi * (b - a);
    const double d = a + phi * (b - a);
    const double rc = exp_corr(xs, mos, c, buf);
    const double rd = exp_corr(xs, mos, d, buf);
    if (rc * rc > rd * rd) {
      b = d;
    } else {
      a = c;
    }
  }
  const double u = 0.5 * (a + b);
  if (std::abs(u) > 1e-9) {
    const double r = exp_corr(xs, mos, u, buf);
    if (r * r > best.r * best.r) best = {u, r};
  }
  return best;
}

}  // namespace

std::string_view to_string(LogisticLimit limit) {
  switch (limit) {
    case LogisticLimit::affine:
      return "affine";
    case LogisticLimit::exponential:
      return "exponential";
    default:
      return "none";
  }
}

MlpModel::MlpModel(std::size_t dim)
    : input_dim(dim), w1(kHiddenWidth * dim, 0.0), b1(kHiddenWidth, 0.0), w2(kHiddenWidth, 0.0) {}

MlpModel MlpModel::initialize(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw InputError("MLP input dimension must be positive");
  MlpModel m(dim);
  m.rng_seed = seed;
  auto gen = substream(seed, "init");
  // He-normal for both layers.
  std::normal_distribution<double> hidden(0.0, std::sqrt(2.0 / static_cast<double>(dim)));
  for (double& w : m.w1) w = hidden(gen);
  std::normal_distribution<double> output(0.0, std::sqrt(2.0 / static_cast<double>(kHiddenWidth)));
  for (double& w : m.w2) w = output(gen);
  return m;
}

bool MlpModel::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(w1) && finite(b1) && finite(w2) && std::isfinite(b2);
}

bool same_parameters(const MlpModel& a, const MlpModel& b) {
  return a.input_dim == b.input_dim && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

double mlp_forward(const MlpModel& model, std::span<const double> e) {
  if (e.size() != model.input_dim) {
    throw ShapeError("embedding length " + std::to_string(e.size()) + " does not match MLP input " +
                     std::to_string(model.input_dim));
  }
  double out = model.b2;
  for (std::size_t j = 0; j < kHiddenWidth; ++j) {
    const double* row = model.w1.data() + j * model.input_dim;
    double pre = model.b1[j];
    for (std::size_t k = 0; k < model.input_dim; ++k) pre += row[k] * e[k];
    if (pre > 0.0) out += model.w2[j] * pre;
  }
  return out;
}

std::vector<double> mlp_forward(const MlpModel& model, const Matrix& embeddings) {
  std::vector<double> out(embeddings.rows());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) out[i] = mlp_forward(model, embeddings.row(i));
  return out;
}

double mse_loss_and_gradient(const MlpModel& model, const Matrix& inputs, std::span<const double> labels,
                             std::span<const std::size_t> rows, MlpGradient& grad) {
  if (inputs.cols() != model.input_dim) throw ShapeError("input width does not match the MLP");
  if (labels.size() != inputs.rows()) throw ShapeError("label count does not match input rows");
  const std::size_t c = model.input_dim;
  grad.w1.assign(model.w1.size(), 0.0);
  grad.b1.assign(kHiddenWidth, 0.0);
  grad.w2.assign(kHiddenWidth, 0.0);
  grad.b2 = 0.0;
  if (rows.empty()) return 0.0;

  const double inv_b = 1.0 / static_cast<double>(rows.size());
  std::vector<double> hidden(kHiddenWidth);
  double loss = 0.0;
  for (const std::size_t r : rows) {
    const auto x = inputs.row(r);
    double pred = model.b2;
    for (std::size_t j = 0; j < kHiddenWidth; ++j) {
      const double* w = model.w1.data() + j * c;
      double pre = model.b1[j];
      for (std::size_t k = 0; k < c; ++k) pre += w[k] * x[k];
      hidden[j] = pre > 0.0 ? pre : 0.0;
      pred += model.w2[j] * hidden[j];
    }
    const double err = pred - labels[r];
    loss += err * err * inv_b;
    const double g = 2.0 * err * inv_b;
    grad.b2 += g;
    for (std::size_t j = 0; j < kHiddenWidth; ++j) {
      if (hidden[j] <= 0.0) continue;
      grad.w2[j] += g * hidden[j];
      const double gh = g * model.w2[j];
      grad.b1[j] += gh;
      double* gw = grad.w1.data() + j * c;
      for (std::size_t k = 0; k < c; ++k) gw[k] += gh * x[k];
    }
  }
  return loss;
}

double mse_loss(const MlpModel& model, const Matrix& inputs, std::span<const double> labels) {
  if (labels.size() != inputs.rows()) throw ShapeError("label count does not match input rows");
  double loss = 0.0;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const double err = mlp_forward(model, inputs.row(i)) - labels[i];
    loss += err * err;
  }
  return loss / static_cast<double>(inputs.rows());
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd" || name == "sgd-momentum") return OptimizerKind::sgd_momentum;
  throw InputError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd-momentum)");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd-momentum";
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InputError("learning rate must be non-negative");
  if (batch_size == 0) throw InputError("batch size must be at least 1");
}

TrainResult mlp_train(MlpModel model, const Matrix& inputs, std::span<const double> labels, const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.rows() == 0) throw InputError("training needs at least one sample");
  if (labels.size() != inputs.rows()) throw ShapeError("label count does not match input rows");
  if (inputs.cols() != model.input_dim) throw ShapeError("input width does not match the MLP");
  if (!std::all_of(labels.begin(), labels.end(), [](double y) { return std::isfinite(y); })) {
    throw InputError("training labels must be finite");
  }

  const std::size_t count = model.parameter_count();
  std::vector<double> m1(count, 0.0);
  std::vector<double> m2(count, 0.0);
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;

  // Visits every parameter as (value, gradient) in checkpoint order.
  auto for_each_param = [&](MlpGradient& g, auto&& fn) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < model.w1.size(); ++i) fn(idx++, model.w1[i], g.w1[i]);
    for (std::size_t i = 0; i < model.b1.size(); ++i) fn(idx++, model.b1[i], g.b1[i]);
    for (std::size_t i = 0; i < model.w2.size(); ++i) fn(idx++, model.w2[i], g.w2[i]);
    fn(idx++, model.b2, g.b2);
  };

  auto shuffle_gen = substream(cfg.seed, "shuffle");
  std::vector<std::size_t> order(inputs.rows());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  MlpGradient grad;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_gen);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = mse_loss_and_gradient(model, inputs, labels, batch, grad);
      if (!std::isfinite(loss)) throw DivergenceError("training loss became non-finite", step);
      result.loss_curve.push_back(loss);
      ++step;

      if (cfg.optimizer == OptimizerKind::adam) {
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for_each_param(grad, [&](std::size_t i, double& p, double g) {
          m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
          m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
          p -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
        });
      } else {
        for_each_param(grad, [&](std::size_t i, double& p, double g) {
          m1[i] = cfg.momentum * m1[i] + g;
          p -= cfg.learning_rate * m1[i];
        });
      }
      if (!model.all_finite()) throw DivergenceError("model parameters became non-finite", step - 1);
    }
  }
  result.model = std::move(model);
  return result;
}

double median(std::span<const double> values) {
  if (values.empty()) throw InputError("median of an empty sequence");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double pool_scores(std::span<const double> scores, double eps) {
  if (scores.empty()) throw InputError("cannot pool an empty score list");
  if (!(eps > 0.0)) throw InputError("pooling epsilon must be positive");
  const double med = median(scores);
  double num = 0.0;
  double den = 0.0;
  for (double s : scores) {
    const double w = 1.0 / (std::abs(s - med) + eps);
    num += w * s;
    den += w;
  }
  return num / den;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, 2, "pearson");
  if (is_constant(x) || is_constant(y)) throw DegenerateInputError("correlation is undefined for a constant sequence");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double srcc(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y, 3, "srcc");
  if (is_constant(x) || is_constant(y)) throw DegenerateInputError("correlation is undefined for a constant sequence");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double logistic4(const std::array<double, 4>& p, double x) {
  return p[1] + (p[0] - p[1]) / (1.0 + std::exp(-(x - p[2]) / std::abs(p[3])));
}

PlccResult plcc_with_logistic(std::span<const double> pred, std::span<const double> mos) {
  require_same_length(pred, mos, 5, "plcc_with_logistic");
  if (is_constant(mos)) throw DegenerateInputError("MOS values are constant");
  if (is_constant(pred)) throw DegenerateInputError("predictions are constant");

  PlccResult out;
  out.plcc_raw = pearson(pred, mos);

  const double mos_max = *std::max_element(mos.begin(), mos.end());
  const double mos_min = *std::min_element(mos.begin(), mos.end());
  const double spread = stddev_of(pred);
  const std::array<double, 4> start{mos_max, mos_min, median(pred), spread};
  const double range = mos_max - mos_min;
  const std::array<double, 4> step{0.1 * range, 0.1 * range, 0.1 * spread, 0.1 * spread};

  const double my = mean_of(mos);
  double syy = 0.0;
  for (double y : mos) syy += (y - my) * (y - my);

  auto objective = [&](const std::array<double, 4>& p) {
    if (p[3] == 0.0) return std::numeric_limits<double>::infinity();
    return sse_of(p, pred, mos);
  };
  const auto fit = nelder_mead(objective, start, step, 1e-14 * syy);
  out.params = fit.best;

  // Boundary limits are the infimum whenever the simplex creeps off to
  // infinity; their SSEs are syy * (1 - r^2) for the matching regression.
  const double affine_sse = syy * (1.0 - out.plcc_raw * out.plcc_raw);
  const auto expo = exponential_limit(pred, mos);
  const double exp_sse = syy * (1.0 - expo.r * expo.r);
  const double limit_sse = std::min(affine_sse, exp_sse);
  const bool limit_explains = limit_sse <= fit.value * (1.0 + 1e-6) + 1e-12 * syy;
  if (!fit.converged && !limit_explains) {
    throw FitError("four-parameter logistic fit did not converge in " + std::to_string(kMaxSimplexIterations) +
                   " simplex iterations",
                   fit.best);
  }

  if (limit_sse < fit.value || !fit.converged) {
    // Least-squares coefficients in front of the limit carry the sign of r.
    if (affine_sse <= exp_sse) {
      out.limit = LogisticLimit::affine;
      out.plcc_mapped = std::abs(out.plcc_raw);
    } else {
      out.limit = LogisticLimit::exponential;
      out.exponential_rate = expo.rate;
      out.plcc_mapped = std::abs(expo.r);
    }
    return out;
  }
  std::vector<double> mapped(pred.size());
  std::transform(pred.begin(), pred.end(), mapped.begin(), [&](double x) { return logistic4(out.params, x); });
  out.plcc_mapped = is_constant(mapped) ? 0.0 : pearson(mapped, mos);
  return out;
}

SplitResult split_groups(std::vector<std::string> groups, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InputError("train fraction must lie in (0, 1)");
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  auto gen = substream(seed, "split");
  std::shuffle(groups.begin(), groups.end(), gen);
  const auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(groups.size())));
  SplitResult out;
  out.train.assign(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(groups.begin() + static_cast<std::ptrdiff_t>(n_train), groups.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace spsel
