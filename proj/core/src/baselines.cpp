#include "auxcal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "auxcal/error.hpp"
#include "auxcal/metrics.hpp"
#include "auxcal/seed.hpp"

namespace auxcal {
namespace {

struct LabeledLogits {
  Eigen::MatrixXd logits;  // K x N
  std::vector<int> labels;
};

LabeledLogits labeled_only(const CalibrationDataset& ds) {
  LabeledLogits out;
  std::vector<int> cols;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds[i].label) {
      cols.push_back(static_cast<int>(i));
      out.labels.push_back(*ds[i].label);
    }
  }
  out.logits.resize(ds.k(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.logits.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(
        ds[static_cast<std::size_t>(cols[j])].logits.data(), ds.k());
  }
  return out;
}

double mean_nll(const LabeledLogits& data, double temperature) {
  const double inv = 1.0 / temperature;
  double total = 0.0;
  for (Eigen::Index j = 0; j < data.logits.cols(); ++j) {
    const auto col = data.logits.col(j);
    const double max = col.maxCoeff() * inv;
    const double lse = max + std::log(((col.array() * inv) - max).exp().sum());
    total += lse - col(data.labels[static_cast<std::size_t>(j)]) * inv;
  }
  return total / static_cast<double>(data.logits.cols());
}

// Column-wise log-softmax, floored at ln(kLogClamp).
Eigen::MatrixXd clamped_log_softmax(const Eigen::MatrixXd& logits) {
  const double floor = std::log(kLogClamp);
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto col = logits.col(j);
    const double max = col.maxCoeff();
    const double lse = max + std::log((col.array() - max).exp().sum());
    out.col(j) = (col.array() - lse).max(floor);
  }
  return out;
}

void check_logits(std::span<const double> z, int k) {
  if (static_cast<int>(z.size()) != k) {
    throw InvalidInput("logit vector has " + std::to_string(z.size()) + " entries, model expects " +
                       std::to_string(k));
  }
}

}  // namespace

double mp_confidence(std::span<const double> z) { return predict(z).confidence; }

double scaled_confidence(std::span<const double> z, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ModelError("temperature must be a positive finite number");
  }
  std::vector<double> scaled(z.begin(), z.end());
  for (double& v : scaled) v /= temperature;
  auto p = softmax(scaled);
  return *std::max_element(p.begin(), p.end());
}

double temperature_nll(const CalibrationDataset& ds, double temperature) {
  const auto data = labeled_only(ds);
  if (data.labels.empty()) throw FitError("no labeled records");
  return mean_nll(data, temperature);
}

TemperatureModel fit_temperature(const CalibrationDataset& train, const TemperatureSearch& search) {
  const auto data = labeled_only(train);
  if (data.labels.empty()) throw FitError("temperature scaling needs labeled records");
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = search.lo;
  double b = search.hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = mean_nll(data, c);
  double fd = mean_nll(data, d);
  while (b - a > search.tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = mean_nll(data, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = mean_nll(data, d);
    }
  }
  return {train.k(), 0.5 * (a + b)};
}

double ts_confidence(const TemperatureModel& m, std::span<const double> z) {
  check_logits(z, m.k);
  return scaled_confidence(z, m.temperature);
}

ScalingBinningModel fit_binning(int k, double temperature, std::span<const double> scaled_confidences,
                                int bins) {
  if (bins < 1) throw InvalidInput("bin count must be at least 1");
  if (scaled_confidences.empty()) throw FitError("no confidences to bin");
  std::vector<double> sorted(scaled_confidences.begin(), scaled_confidences.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> unique_values = sorted;
  unique_values.erase(std::unique(unique_values.begin(), unique_values.end()), unique_values.end());
  if (static_cast<std::size_t>(bins) > unique_values.size()) {
    throw FitError("degenerate binning: " + std::to_string(bins) + " bins but only " +
                   std::to_string(unique_values.size()) + " distinct confidences");
  }

  ScalingBinningModel m;
  m.k = k;
  m.temperature = temperature;
  const std::size_t n = sorted.size();
  m.bin_edges.push_back(0.0);
  for (int i = 1; i < bins; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i) * n / static_cast<std::size_t>(bins);
    m.bin_edges.push_back(sorted[idx]);
  }
  m.bin_edges.push_back(1.0);
  for (std::size_t i = 1; i < m.bin_edges.size(); ++i) {
    if (!(m.bin_edges[i] > m.bin_edges[i - 1])) {
      throw FitError("degenerate binning: tied confidences produce an empty bin");
    }
  }

  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  m.bin_values.assign(static_cast<std::size_t>(bins), 0.0);
  auto locate = [&](double c) {
    auto it = std::upper_bound(m.bin_edges.begin() + 1, m.bin_edges.end() - 1, c);
    return static_cast<std::size_t>(it - (m.bin_edges.begin() + 1));
  };
  for (double c : sorted) {
    const auto b = locate(c);
    sum[b] += c;
    ++count[b];
  }
  for (std::size_t b = 0; b < sum.size(); ++b) {
    if (count[b] == 0) throw FitError("degenerate binning: empty bin");
    m.bin_values[b] = sum[b] / static_cast<double>(count[b]);
  }
  return m;
}

ScalingBinningModel fit_scaling_binning(const CalibrationDataset& train, int bins) {
  if (train.size() < 2) throw FitError("scaling-binning needs at least two records");
  const std::size_t half = train.size() / 2;
  std::vector<LogitRecord> first(train.records().begin(), train.records().begin() + static_cast<std::ptrdiff_t>(half));
  const auto t = fit_temperature(CalibrationDataset(train.k(), std::move(first)));
  std::vector<double> scaled;
  scaled.reserve(train.size() - half);
  for (std::size_t i = half; i < train.size(); ++i) {
    scaled.push_back(scaled_confidence(train[i].logits, t.temperature));
  }
  return fit_binning(train.k(), t.temperature, scaled, bins);
}

double sb_map(const ScalingBinningModel& m, double scaled) {
  if (m.bin_values.empty() || m.bin_edges.size() != m.bin_values.size() + 1) {
    throw ModelError("scaling-binning model has inconsistent bins");
  }
  const double c = std::clamp(scaled, 0.0, 1.0);
  auto it = std::upper_bound(m.bin_edges.begin() + 1, m.bin_edges.end() - 1, c);
  return m.bin_values[static_cast<std::size_t>(it - (m.bin_edges.begin() + 1))];
}

double sb_confidence(const ScalingBinningModel& m, std::span<const double> z) {
  check_logits(z, m.k);
  return sb_map(m, scaled_confidence(z, m.temperature));
}

DirichletModel dirichlet_identity(int k) {
  if (k < 2) throw InvalidInput("class count must be at least 2");
  DirichletModel m;
  m.weights = Eigen::MatrixXd::Identity(k, k);
  m.bias = Eigen::VectorXd::Zero(k);
  return m;
}

DirichletModel fit_dirichlet_fixed(const CalibrationDataset& train, double rho,
                                   const TrainOptions& options) {
  if (rho < 0.0) throw InvalidInput("regularization weight must be >= 0");
  const auto data = labeled_only(train);
  if (data.labels.empty()) throw FitError("Dirichlet calibration needs labeled records");
  const int k = train.k();
  const Eigen::MatrixXd log_probs = clamped_log_softmax(data.logits);

  // Flat layout: W row-major, then b.
  const Eigen::Index nw = static_cast<Eigen::Index>(k) * k;
  Eigen::VectorXd params(nw + k);
  params.setZero();
  for (int i = 0; i < k; ++i) params(static_cast<Eigen::Index>(i) * k + i) = 1.0;

  Eigen::MatrixXd off_mask = Eigen::MatrixXd::Ones(k, k);
  off_mask.diagonal().setZero();

  auto objective = [&](const Eigen::VectorXd& p, std::span<const int> idx, Eigen::VectorXd& grad) {
    const Eigen::MatrixXd w =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            p.data(), k, k);
    const Eigen::VectorXd b = p.tail(k);
    const Eigen::MatrixXd x = log_probs(Eigen::all, idx);
    Eigen::MatrixXd logits = w * x;
    logits.colwise() += b;
    Eigen::MatrixXd g(k, logits.cols());
    double total = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const auto col = logits.col(j);
      const double max = col.maxCoeff();
      Eigen::VectorXd e = (col.array() - max).exp();
      const double s = e.sum();
      const int y = data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
      total += max + std::log(s) - col(y);
      g.col(j) = e / s;
      g(y, j) -= 1.0;
    }
    const double n = static_cast<double>(logits.cols());
    g /= n;
    const Eigen::MatrixXd off = w.cwiseProduct(off_mask);
    const Eigen::MatrixXd dw = g * x.transpose() + 2.0 * rho * off;
    for (int r = 0; r < k; ++r) grad.segment(static_cast<Eigen::Index>(r) * k, k) = dw.row(r).transpose();
    grad.tail(k) = g.rowwise().sum();
    return total / n + rho * off.squaredNorm();
  };

  minimize_adam(params, data.labels.size(), objective, options);

  DirichletModel m;
  m.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      params.data(), k, k);
  m.bias = params.tail(k);
  m.rho = rho;
  return m;
}

DirichletModel fit_dirichlet(const CalibrationDataset& train, const CalibrationDataset& val,
                             const DirichletOptions& options) {
  if (options.rho_grid.empty()) throw FitError("empty regularization grid");
  if (val.empty()) throw FitError("Dirichlet selection needs validation records");
  if (val.k() != train.k()) throw InvalidInput("train and validation class counts differ");
  DirichletModel best;
  double best_ece = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.rho_grid.size(); ++i) {
    TrainOptions t = options.train;
    t.seed = derive_seed(options.train.seed, "dirichlet/" + std::to_string(i));
    auto m = fit_dirichlet_fixed(train, options.rho_grid[i], t);
    std::vector<EvalOutcome> outcomes;
    outcomes.reserve(val.size());
    for (const auto& r : val.records()) {
      const int y_hat = predict(r.logits).label;
      outcomes.push_back({dirichlet_confidence(m, r.logits), r.label && *r.label == y_hat});
    }
    const double e = ece(outcomes, options.ece_bins);
    if (e < best_ece) {
      best_ece = e;
      best = std::move(m);
    }
  }
  best.val_ece = best_ece;
  return best;
}

std::vector<double> dirichlet_probs(const DirichletModel& m, std::span<const double> z) {
  const int k = m.k();
  check_logits(z, k);
  if (m.weights.rows() != k || m.weights.cols() != k) throw ModelError("Dirichlet weights are not K x K");
  Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(z.data(), k);
  const Eigen::VectorXd lp = clamped_log_softmax(col).col(0);
  const Eigen::VectorXd logits = m.weights * lp + m.bias;
  return softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(k)));
}

double dirichlet_confidence(const DirichletModel& m, std::span<const double> z) {
  const auto p = dirichlet_probs(m, z);
  return *std::max_element(p.begin(), p.end());
}

}  // namespace auxcal
