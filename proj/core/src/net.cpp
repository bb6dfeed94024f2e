#include "auxcal/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "auxcal/error.hpp"
#include "json_codec.hpp"

namespace auxcal {

FeedForwardNet::FeedForwardNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidInput("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) {
      throw InvalidInput("layer " + std::to_string(i) + " has an empty weight matrix");
    }
    if (l.bias.size() != l.weights.rows()) {
      throw InvalidInput("layer " + std::to_string(i) + " bias size does not match weights");
    }
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
      throw InvalidInput("layer " + std::to_string(i) + " input width does not chain");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw InvalidInput("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

FeedForwardNet FeedForwardNet::glorot(std::span<const int> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw InvalidInput("network dims need an input and an output width");
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i];
    const int out = dims[i + 1];
    if (in <= 0 || out <= 0) throw InvalidInput("layer widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) l.weights(r, c) = dist(rng);
    }
    layers.push_back(std::move(l));
  }
  return FeedForwardNet(std::move(layers));
}

FeedForwardNet FeedForwardNet::zeros(std::span<const int> dims) {
  if (dims.size() < 2) throw InvalidInput("network dims need an input and an output width");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw InvalidInput("layer widths must be positive");
    layers.push_back({Eigen::MatrixXd::Zero(dims[i + 1], dims[i]),
                      Eigen::VectorXd::Zero(dims[i + 1])});
  }
  return FeedForwardNet(std::move(layers));
}

int FeedForwardNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols());
}

int FeedForwardNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows());
}

std::vector<int> FeedForwardNet::dims() const {
  std::vector<int> d;
  if (layers_.empty()) return d;
  d.push_back(input_dim());
  for (const auto& l : layers_) d.push_back(static_cast<int>(l.weights.rows()));
  return d;
}

std::size_t FeedForwardNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::size_t FeedForwardNet::last_layer_parameter_count() const {
  if (layers_.empty()) return 0;
  return static_cast<std::size_t>(layers_.back().weights.size() + layers_.back().bias.size());
}

Eigen::VectorXd FeedForwardNet::parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      flat.segment(pos, l.weights.cols()) = l.weights.row(r).transpose();
      pos += l.weights.cols();
    }
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return flat;
}

void FeedForwardNet::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw InvalidInput("parameter vector has the wrong length");
  }
  Eigen::Index pos = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      l.weights.row(r) = flat.segment(pos, l.weights.cols()).transpose();
      pos += l.weights.cols();
    }
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

Eigen::VectorXd FeedForwardNet::forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != input_dim()) {
    throw InvalidInput("input has " + std::to_string(x.size()) + " entries, network expects " +
                       std::to_string(input_dim()));
  }
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), input_dim());
  return forward_batch(in).col(0);
}

Eigen::MatrixXd FeedForwardNet::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dim()) throw InvalidInput("batch input width mismatch");
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].weights * a;
    z.colwise() += layers_[i].bias;
    if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd FeedForwardNet::penultimate_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dim()) throw InvalidInput("batch input width mismatch");
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].weights * a;
    z.colwise() += layers_[i].bias;
    a = z.cwiseMax(0.0);
  }
  return a;
}

Eigen::MatrixXd forward_cached(const FeedForwardNet& net, const Eigen::MatrixXd& inputs,
                               ForwardCache& cache) {
  if (inputs.rows() != net.input_dim()) throw InvalidInput("batch input width mismatch");
  const auto layers = net.layers();
  cache.activations.resize(layers.size());
  cache.activations[0] = inputs;
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd z = layers[i].weights * cache.activations[i];
    z.colwise() += layers[i].bias;
    if (i + 1 < layers.size()) {
      cache.activations[i + 1] = z.cwiseMax(0.0);
    } else {
      out = std::move(z);
    }
  }
  return out;
}

Eigen::VectorXd backpropagate(const FeedForwardNet& net, const ForwardCache& cache,
                              const Eigen::MatrixXd& output_grad) {
  const auto layers = net.layers();
  Eigen::VectorXd grad(static_cast<Eigen::Index>(net.parameter_count()));
  Eigen::Index end = grad.size();
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    const auto& a = cache.activations[li];
    const Eigen::MatrixXd dw = delta * a.transpose();
    const Eigen::Index nb = l.bias.size();
    const Eigen::Index nw = l.weights.size();
    grad.segment(end - nb, nb) = delta.rowwise().sum();
    const Eigen::Index wstart = end - nb - nw;
    for (Eigen::Index r = 0; r < dw.rows(); ++r) {
      grad.segment(wstart + r * dw.cols(), dw.cols()) = dw.row(r).transpose();
    }
    end = wstart;
    if (li > 0) {
      Eigen::MatrixXd back = l.weights.transpose() * delta;
      delta = (a.array() > 0.0).select(back, 0.0);
    }
  }
  return grad;
}

double ccac_loss(std::span<const double> mu, std::span<const double> w, const LossConfig& cfg) {
  if (mu.size() < 3 || mu.size() != w.size()) {
    throw InvalidInput("ccac_loss needs matching probability and target vectors of length K+1");
  }
  auto clamp = [](double p) { return std::clamp(p, kLogClamp, 1.0 - kLogClamp); };
  const std::size_t aux = mu.size() - 1;
  double loss = 0.0;
  for (std::size_t k = 0; k < aux; ++k) {
    if (w[k] != 0.0) loss -= w[k] * std::log(clamp(mu[k]));
  }
  loss -= cfg.lambda1 * (1.0 - w[aux]) * std::log(1.0 - clamp(mu[aux]));
  loss -= cfg.lambda2 * w[aux] * std::log(clamp(mu[aux]));
  return loss;
}

double ccac_loss_gradient(const Eigen::MatrixXd& logits, std::span<const int> targets,
                          const LossConfig& cfg, Eigen::MatrixXd& logit_grad) {
  const Eigen::Index rows = logits.rows();
  const Eigen::Index n = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n) {
    throw InvalidInput("target count does not match batch size");
  }
  const Eigen::Index aux = rows - 1;
  logit_grad.resize(rows, n);
  double total = 0.0;
  Eigen::VectorXd mu(rows);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto col = logits.col(j);
    const double max = col.maxCoeff();
    mu = (col.array() - max).exp();
    mu /= mu.sum();
    const int t = targets[static_cast<std::size_t>(j)];
    auto g = logit_grad.col(j);
    g.setZero();
    if (t < aux) {
      const double p = mu(t);
      if (p >= kLogClamp && p <= 1.0 - kLogClamp) {
        total -= std::log(p);
        g += mu;
        g(t) -= 1.0;
      } else {
        total -= std::log(std::clamp(p, kLogClamp, 1.0 - kLogClamp));
      }
      if (cfg.lambda1 != 0.0) {
        // 1 - mu_aux summed from the other entries keeps precision near mu_aux = 1.
        const double q = mu.head(aux).sum();
        if (q >= kLogClamp && q <= 1.0 - kLogClamp) {
          total -= cfg.lambda1 * std::log(q);
          const double m = mu(aux);
          g.head(aux) -= cfg.lambda1 * (m / q) * mu.head(aux);
          g(aux) += cfg.lambda1 * m;
        } else {
          total -= cfg.lambda1 * std::log(std::clamp(q, kLogClamp, 1.0 - kLogClamp));
        }
      }
    } else {
      const double p = mu(aux);
      if (cfg.lambda2 != 0.0) {
        if (p >= kLogClamp && p <= 1.0 - kLogClamp) {
          total -= cfg.lambda2 * std::log(p);
          g += cfg.lambda2 * mu;
          g(aux) -= cfg.lambda2;
        } else {
          total -= cfg.lambda2 * std::log(std::clamp(p, kLogClamp, 1.0 - kLogClamp));
        }
      }
    }
  }
  return total;
}

LossAndGradient ccac_backward(const FeedForwardNet& net, const Eigen::MatrixXd& inputs,
                              std::span<const int> targets, const LossConfig& cfg) {
  if (inputs.cols() == 0) throw InvalidInput("empty batch");
  ForwardCache cache;
  const Eigen::MatrixXd out = forward_cached(net, inputs, cache);
  Eigen::MatrixXd out_grad;
  const double total = ccac_loss_gradient(out, targets, cfg, out_grad);
  const double n = static_cast<double>(inputs.cols());
  return {total / n, backpropagate(net, cache, out_grad) / n};
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw InvalidInput("Adam state, parameters and gradient must have the same shape");
  }
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

std::vector<double> minimize_adam(Eigen::VectorXd& params, std::size_t sample_count,
                                  const BatchObjective& objective, const TrainOptions& options) {
  if (sample_count == 0) throw InvalidInput("training data is empty");
  if (options.batch_size <= 0) throw InvalidInput("batch size must be positive");
  if (options.epochs < 0) throw InvalidInput("epoch count must be non-negative");

  std::mt19937_64 rng(options.seed);
  std::vector<int> order(sample_count);
  std::iota(order.begin(), order.end(), 0);
  AdamState state(params.size(), options.learning_rate);
  Eigen::VectorXd grad(params.size());
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(options.epochs));
  const std::size_t batch = static_cast<std::size_t>(options.batch_size);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = sample_count - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    double total = 0.0;
    for (std::size_t start = 0; start < sample_count; start += batch) {
      const std::size_t len = std::min(batch, sample_count - start);
      std::span<const int> idx(order.data() + start, len);
      grad.setZero();
      const double loss = objective(params, idx, grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting at " + std::to_string(start));
      }
      total += loss * static_cast<double>(len);
      adam_step(params, grad, state);
    }
    trace.push_back(total / static_cast<double>(sample_count));
  }
  return trace;
}

TrainResult train(FeedForwardNet net, const TrainingSet& data, const LossConfig& cfg,
                  const TrainOptions& options) {
  const auto n = static_cast<std::size_t>(data.inputs.cols());
  if (data.targets.size() != n) throw InvalidInput("target count does not match inputs");
  if (data.inputs.rows() != net.input_dim()) throw InvalidInput("input width mismatch");
  for (int t : data.targets) {
    if (t < 0 || t >= net.output_dim()) throw InvalidInput("target out of range");
  }
  Eigen::VectorXd params = net.parameters();
  FeedForwardNet work = net;
  std::vector<int> batch_targets;
  auto objective = [&](const Eigen::VectorXd& p, std::span<const int> idx,
                       Eigen::VectorXd& grad) {
    work.set_parameters(p);
    const Eigen::MatrixXd x = data.inputs(Eigen::all, idx);
    batch_targets.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      batch_targets[i] = data.targets[static_cast<std::size_t>(idx[i])];
    }
    auto lg = ccac_backward(work, x, batch_targets, cfg);
    grad = std::move(lg.gradient);
    return lg.loss;
  };
  auto trace = minimize_adam(params, n, objective, options);
  net.set_parameters(params);
  return {std::move(net), std::move(trace)};
}

namespace detail {

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

nlohmann::json net_to_json_value(const FeedForwardNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    layers.push_back({{"in", l.weights.cols()},
                      {"out", l.weights.rows()},
                      {"weights", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"format_version", kNetFormatVersion}, {"dims", net.dims()}, {"layers", layers}};
}

FeedForwardNet net_from_json_value(const nlohmann::json& j) {
  try {
    if (require(j, "format_version").get<int>() != kNetFormatVersion) {
      throw ParseError("unsupported network format version");
    }
    std::vector<DenseLayer> layers;
    for (const auto& lj : require(j, "layers")) {
      const auto in = require(lj, "in").get<Eigen::Index>();
      const auto out = require(lj, "out").get<Eigen::Index>();
      const auto w = require(lj, "weights").get<std::vector<double>>();
      const auto b = require(lj, "bias").get<std::vector<double>>();
      if (in <= 0 || out <= 0 || static_cast<Eigen::Index>(w.size()) != in * out ||
          static_cast<Eigen::Index>(b.size()) != out) {
        throw ParseError("layer dimensions do not match its arrays");
      }
      DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) {
          l.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
        }
      }
      for (Eigen::Index r = 0; r < out; ++r) l.bias(r) = b[static_cast<std::size_t>(r)];
      layers.push_back(std::move(l));
    }
    return FeedForwardNet(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid network JSON: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("invalid network: ") + e.what());
  }
}

nlohmann::json loss_to_json_value(const LossConfig& cfg) {
  return {{"lambda1", cfg.lambda1}, {"lambda2", cfg.lambda2}};
}

LossConfig loss_from_json_value(const nlohmann::json& j) {
  try {
    LossConfig cfg{require(j, "lambda1").get<double>(), require(j, "lambda2").get<double>()};
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw ParseError("loss weights must be >= 0");
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid loss config: ") + e.what());
  }
}

}  // namespace detail

std::string net_to_json(const FeedForwardNet& net, const LossConfig& cfg) {
  auto j = detail::net_to_json_value(net);
  j["loss"] = detail::loss_to_json_value(cfg);
  return j.dump(2);
}

FeedForwardNet net_from_json(const std::string& text, LossConfig* cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  auto net = detail::net_from_json_value(j);
  if (cfg != nullptr) *cfg = detail::loss_from_json_value(detail::require(j, "loss"));
  return net;
}

}  // namespace auxcal
