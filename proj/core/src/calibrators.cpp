#include "auxcal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "auxcal/error.hpp"
#include "auxcal/seed.hpp"

namespace auxcal {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::MatrixXd column_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto col = logits.col(j);
    p.col(j) = (col.array() - col.maxCoeff()).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

void check_model_k(int model_k, int data_k) {
  if (model_k != data_k) {
    throw InvalidInput("model expects K=" + std::to_string(model_k) + " but data has K=" +
                       std::to_string(data_k));
  }
}

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ModelError("temperature must be a positive finite number");
}

void check_fit_inputs(const CalibrationDataset& train, const CalibrationDataset& val,
                      const HyperGrid& grid) {
  if (grid.lambda1_values.empty() || grid.lambda2_values.empty()) {
    throw FitError("hyperparameter grid is empty");
  }
  for (double v : grid.lambda1_values) {
    if (!(v >= 0.0)) throw FitError("lambda1 values must be >= 0");
  }
  for (double v : grid.lambda2_values) {
    if (!(v >= 0.0)) throw FitError("lambda2 values must be >= 0");
  }
  if (train.empty()) throw FitError("training set is empty");
  if (val.empty()) throw FitError("validation set is empty");
  if (train.k() != val.k()) throw InvalidInput("train and validation class counts differ");
}

std::vector<int> aux_targets(const CalibrationDataset& ds) {
  std::vector<int> targets;
  targets.reserve(ds.size());
  for (const auto& a : assign_aux_labels(ds)) targets.push_back(a.aux_label);
  return targets;
}

std::vector<int> predicted_labels(const CalibrationDataset& ds) {
  std::vector<int> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records()) out.push_back(predict(r.logits).label);
  return out;
}

std::vector<EvalOutcome> outcomes_from_probs(const Eigen::MatrixXd& probs,
                                             const CalibrationDataset& ds,
                                             std::span<const int> y_hat, ConfidenceRule rule) {
  std::vector<EvalOutcome> out;
  out.reserve(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto col = probs.col(static_cast<Eigen::Index>(j));
    const double c = combined_confidence(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                         y_hat[j], rule);
    out.push_back({c, ds[j].label && *ds[j].label == y_hat[j]});
  }
  return out;
}

struct RuleChoice {
  ConfidenceRule rule;
  double ece;
};

// Best rule for one fitted model; earlier rules win ties.
RuleChoice select_rule(const Eigen::MatrixXd& val_probs, const CalibrationDataset& val,
                       std::span<const int> y_hat, std::optional<ConfidenceRule> forced, int bins) {
  RuleChoice best{ConfidenceRule::kGeoMeanComplement, std::numeric_limits<double>::infinity()};
  for (auto rule : kConfidenceRules) {
    if (forced && *forced != rule) continue;
    const double e = ece(outcomes_from_probs(val_probs, val, y_hat, rule), bins);
    if (e < best.ece) best = {rule, e};
  }
  return best;
}

std::vector<int> with_ends(int in, std::span<const int> hidden, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

std::string cell_name(const char* prefix, std::size_t i, std::size_t j) {
  return std::string(prefix) + "/" + std::to_string(i) + "/" + std::to_string(j);
}

// Stacks z / T on top of the auxiliary logit row.
Eigen::MatrixXd merge_logits(const Eigen::MatrixXd& z, double log_temperature,
                             const Eigen::MatrixXd& aux_row) {
  Eigen::MatrixXd merged(z.rows() + 1, z.cols());
  merged.topRows(z.rows()) = z * std::exp(-log_temperature);
  merged.bottomRows(1) = aux_row;
  return merged;
}

}  // namespace

std::string_view to_string(ConfidenceRule rule) {
  switch (rule) {
    case ConfidenceRule::kGeoMeanComplement:
      return "geo_mean_complement";
    case ConfidenceRule::kGeoMeanProduct:
      return "geo_mean_product";
  }
  return "unknown";
}

ConfidenceRule rule_from_string(std::string_view name) {
  if (name == "geo_mean_complement") return ConfidenceRule::kGeoMeanComplement;
  if (name == "geo_mean_product") return ConfidenceRule::kGeoMeanProduct;
  throw ParseError("unknown confidence rule '" + std::string(name) + "'");
}

double combined_confidence(std::span<const double> mu, int y_hat, ConfidenceRule rule) {
  if (mu.size() < 3) throw InvalidInput("need K+1 >= 3 probabilities");
  const int k = static_cast<int>(mu.size()) - 1;
  if (y_hat < 0 || y_hat >= k) throw InvalidInput("predicted label out of range");
  const double p = mu[static_cast<std::size_t>(y_hat)];
  const double aux = mu[static_cast<std::size_t>(k)];
  double c = 0.0;
  switch (rule) {
    case ConfidenceRule::kGeoMeanComplement:
      c = 1.0 - std::sqrt(std::max(0.0, (1.0 - p) * aux));
      break;
    case ConfidenceRule::kGeoMeanProduct:
      c = std::sqrt(std::max(0.0, p * (1.0 - aux)));
      break;
  }
  return std::clamp(c, 0.0, 1.0);
}

Eigen::MatrixXd ccac_probs_batch(const CcacModel& m, const Eigen::MatrixXd& logits) {
  if (m.net.input_dim() != m.k || m.net.output_dim() != m.k + 1) {
    throw ModelError("CCAC net must map K inputs to K+1 outputs");
  }
  check_model_k(m.k, static_cast<int>(logits.rows()));
  return column_softmax(m.net.forward_batch(logits));
}

Eigen::MatrixXd ccacs_probs_batch(const CcacSModel& m, const Eigen::MatrixXd& logits) {
  check_temperature(m.temperature);
  if (m.aux_net.input_dim() != m.k || m.aux_net.output_dim() != 1) {
    throw ModelError("CCAC-S auxiliary net must map K inputs to one output");
  }
  check_model_k(m.k, static_cast<int>(logits.rows()));
  Eigen::MatrixXd merged(m.k + 1, logits.cols());
  merged.topRows(m.k) = logits / m.temperature;
  merged.bottomRows(1) = m.aux_net.forward_batch(logits);
  return column_softmax(merged);
}

std::vector<double> ccac_probs(const CcacModel& m, std::span<const double> z) {
  check_model_k(m.k, static_cast<int>(z.size()));
  const Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(z.data(), m.k);
  const Eigen::VectorXd p = ccac_probs_batch(m, col).col(0);
  return {p.data(), p.data() + p.size()};
}

std::vector<double> ccacs_probs(const CcacSModel& m, std::span<const double> z) {
  check_model_k(m.k, static_cast<int>(z.size()));
  const Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(z.data(), m.k);
  const Eigen::VectorXd p = ccacs_probs_batch(m, col).col(0);
  return {p.data(), p.data() + p.size()};
}

CcacModel fit_ccac(const CalibrationDataset& train, const CalibrationDataset& val,
                   const CcacFitOptions& options) {
  check_fit_inputs(train, val, options.grid);
  const int k = train.k();
  const TrainingSet data{logit_matrix(train), aux_targets(train)};
  const Eigen::MatrixXd val_logits = logit_matrix(val);
  const auto val_pred = predicted_labels(val);
  const auto dims = with_ends(k, options.hidden, k + 1);

  CcacModel best;
  double best_ece = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.grid.lambda1_values.size(); ++i) {
    for (std::size_t j = 0; j < options.grid.lambda2_values.size(); ++j) {
      const LossConfig cfg{options.grid.lambda1_values[i], options.grid.lambda2_values[j]};
      TrainOptions topts = options.train;
      topts.seed = derive_seed(options.train.seed, cell_name("ccac/shuffle", i, j));
      auto net = FeedForwardNet::glorot(dims, derive_seed(options.train.seed, cell_name("ccac/init", i, j)));
      CcacModel m{auxcal::train(std::move(net), data, cfg, topts).net, k, cfg};
      const auto choice =
          select_rule(ccac_probs_batch(m, val_logits), val, val_pred, options.rule, options.ece_bins);
      if (choice.ece < best_ece) {
        best_ece = choice.ece;
        m.rule = choice.rule;
        m.val_ece = choice.ece;
        best = std::move(m);
      }
    }
  }
  return best;
}

CcacSModel fit_ccacs(const CalibrationDataset& train, const CalibrationDataset& val,
                     const CcacSFitOptions& options) {
  check_fit_inputs(train, val, options.grid);
  const int k = train.k();
  const Eigen::MatrixXd z = logit_matrix(train);
  const auto targets = aux_targets(train);
  const Eigen::MatrixXd val_logits = logit_matrix(val);
  const auto val_pred = predicted_labels(val);
  const auto dims = with_ends(k, options.hidden, 1);

  CcacSModel best;
  double best_ece = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.grid.lambda1_values.size(); ++i) {
    for (std::size_t j = 0; j < options.grid.lambda2_values.size(); ++j) {
      const LossConfig cfg{options.grid.lambda1_values[i], options.grid.lambda2_values[j]};
      TrainOptions topts = options.train;
      topts.seed = derive_seed(options.train.seed, cell_name("ccac-s/shuffle", i, j));

      FeedForwardNet aux;
      if (options.pinned_aux_logit) {
        const std::array<int, 2> single{k, 1};
        aux = FeedForwardNet::zeros(single);
        aux.mutable_layer(0).bias(0) = *options.pinned_aux_logit;
      } else {
        aux = FeedForwardNet::glorot(dims, derive_seed(options.train.seed, cell_name("ccac-s/init", i, j)));
      }
      const bool train_aux = !options.pinned_aux_logit;
      const Eigen::Index n_aux = train_aux ? static_cast<Eigen::Index>(aux.parameter_count()) : 0;
      Eigen::VectorXd params(1 + n_aux);
      params(0) = 0.0;
      if (train_aux) params.tail(n_aux) = aux.parameters();

      FeedForwardNet work = aux;
      std::vector<int> batch_targets;
      ForwardCache cache;
      auto objective = [&](const Eigen::VectorXd& p, std::span<const int> idx, Eigen::VectorXd& grad) {
        const Eigen::MatrixXd x = z(Eigen::all, idx);
        batch_targets.resize(idx.size());
        for (std::size_t t = 0; t < idx.size(); ++t) {
          batch_targets[t] = targets[static_cast<std::size_t>(idx[t])];
        }
        Eigen::MatrixXd aux_out;
        if (train_aux) {
          work.set_parameters(p.tail(n_aux));
          aux_out = forward_cached(work, x, cache);
        } else {
          aux_out = work.forward_batch(x);
        }
        const Eigen::MatrixXd merged = merge_logits(x, p(0), aux_out);
        Eigen::MatrixXd g;
        const double total = ccac_loss_gradient(merged, batch_targets, cfg, g);
        const double n = static_cast<double>(idx.size());
        grad(0) = -(g.topRows(k).cwiseProduct(merged.topRows(k))).sum() / n;
        if (train_aux) grad.tail(n_aux) = backpropagate(work, cache, g.bottomRows(1)) / n;
        return total / n;
      };
      minimize_adam(params, train.size(), objective, topts);

      if (train_aux) aux.set_parameters(params.tail(n_aux));
      CcacSModel m{std::exp(params(0)), std::move(aux), k, cfg};
      const auto choice =
          select_rule(ccacs_probs_batch(m, val_logits), val, val_pred, options.rule, options.ece_bins);
      if (choice.ece < best_ece) {
        best_ece = choice.ece;
        m.rule = choice.rule;
        m.val_ece = choice.ece;
        best = std::move(m);
      }
    }
  }
  return best;
}

std::size_t transfer_parameter_count(const CcacSModel& m) {
  return 1 + m.aux_net.last_layer_parameter_count();
}

CcacSModel transfer_ccacs(const CcacSModel& pretrained, const CalibrationDataset& small_train,
                          const CalibrationDataset& small_val, const TransferOptions& options) {
  check_temperature(pretrained.temperature);
  if (small_train.k() != pretrained.k || small_val.k() != pretrained.k) {
    throw InvalidInput("transfer data class count does not match the pretrained model");
  }
  if (small_train.empty()) throw FitError("transfer training set is empty");
  if (small_val.empty()) throw FitError("transfer validation set is empty");
  const int k = pretrained.k;
  const Eigen::MatrixXd z = logit_matrix(small_train);
  const auto targets = aux_targets(small_train);
  const Eigen::MatrixXd features = pretrained.aux_net.penultimate_batch(z);
  const auto& head = pretrained.aux_net.layers().back();
  const Eigen::Index width = head.weights.cols();

  // Flat layout: ln T, head weights, head bias.
  Eigen::VectorXd params(width + 2);
  params(0) = std::log(pretrained.temperature);
  params.segment(1, width) = head.weights.row(0).transpose();
  params(width + 1) = head.bias(0);

  std::vector<int> batch_targets;
  auto objective = [&](const Eigen::VectorXd& p, std::span<const int> idx, Eigen::VectorXd& grad) {
    const Eigen::MatrixXd x = z(Eigen::all, idx);
    const Eigen::MatrixXd h = features(Eigen::all, idx);
    batch_targets.resize(idx.size());
    for (std::size_t t = 0; t < idx.size(); ++t) {
      batch_targets[t] = targets[static_cast<std::size_t>(idx[t])];
    }
    Eigen::MatrixXd aux_out = p.segment(1, width).transpose() * h;
    aux_out.array() += p(width + 1);
    const Eigen::MatrixXd merged = merge_logits(x, p(0), aux_out);
    Eigen::MatrixXd g;
    const double total = ccac_loss_gradient(merged, batch_targets, pretrained.loss, g);
    const double n = static_cast<double>(idx.size());
    grad(0) = -(g.topRows(k).cwiseProduct(merged.topRows(k))).sum() / n;
    grad.segment(1, width) = (h * g.bottomRows(1).transpose()) / n;
    grad(width + 1) = g.bottomRows(1).sum() / n;
    return total / n;
  };
  TrainOptions topts = options.train;
  topts.seed = derive_seed(options.train.seed, "ccac-t/shuffle");
  minimize_adam(params, small_train.size(), objective, topts);

  CcacSModel m = pretrained;
  m.temperature = std::exp(params(0));
  auto& last = m.aux_net.mutable_layer(m.aux_net.depth() - 1);
  last.weights.row(0) = params.segment(1, width).transpose();
  last.bias(0) = params(width + 1);
  m.transferred = true;

  const auto choice = select_rule(ccacs_probs_batch(m, logit_matrix(small_val)), small_val,
                                  predicted_labels(small_val), options.rule, options.ece_bins);
  m.rule = choice.rule;
  m.val_ece = choice.ece;
  return m;
}

std::string_view kind_name(const CalibratorModel& m) {
  return std::visit(overloaded{
                        [](const MaxProbModel&) { return std::string_view("mp"); },
                        [](const TemperatureModel&) { return std::string_view("ts"); },
                        [](const ScalingBinningModel&) { return std::string_view("sb"); },
                        [](const DirichletModel&) { return std::string_view("dirichlet"); },
                        [](const CcacModel&) { return std::string_view("ccac"); },
                        [](const CcacSModel& s) {
                          return std::string_view(s.transferred ? "ccac-t" : "ccac-s");
                        },
                    },
                    m);
}

int class_count(const CalibratorModel& m) {
  return std::visit(overloaded{
                        [](const DirichletModel& d) { return d.k(); },
                        [](const auto& other) { return other.k; },
                    },
                    m);
}

double confidence(const CalibratorModel& m, std::span<const double> z) {
  check_model_k(class_count(m), static_cast<int>(z.size()));
  return std::visit(
      overloaded{
          [&](const MaxProbModel&) { return mp_confidence(z); },
          [&](const TemperatureModel& t) { return ts_confidence(t, z); },
          [&](const ScalingBinningModel& s) { return sb_confidence(s, z); },
          [&](const DirichletModel& d) { return dirichlet_confidence(d, z); },
          [&](const CcacModel& c) {
            return combined_confidence(ccac_probs(c, z), predict(z).label, c.rule);
          },
          [&](const CcacSModel& c) {
            return combined_confidence(ccacs_probs(c, z), predict(z).label, c.rule);
          },
      },
      m);
}

std::vector<EvalOutcome> calibrated_confidences(const CalibratorModel& m,
                                                const CalibrationDataset& ds) {
  check_model_k(class_count(m), ds.k());
  if (ds.empty()) return {};
  const auto y_hat = predicted_labels(ds);
  if (const auto* c = std::get_if<CcacModel>(&m)) {
    return outcomes_from_probs(ccac_probs_batch(*c, logit_matrix(ds)), ds, y_hat, c->rule);
  }
  if (const auto* c = std::get_if<CcacSModel>(&m)) {
    return outcomes_from_probs(ccacs_probs_batch(*c, logit_matrix(ds)), ds, y_hat, c->rule);
  }
  std::vector<EvalOutcome> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.push_back({confidence(m, ds[i].logits), ds[i].label && *ds[i].label == y_hat[i]});
  }
  return out;
}

}  // namespace auxcal
