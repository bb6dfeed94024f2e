#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace auxcal {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.bias.size() == b.bias.size() && a.weights == b.weights && a.bias == b.bias;
  }
};

// Dense feed-forward network: ReLU between layers, raw logits at the output.
//
// The flat parameter layout used by parameters()/set_parameters() and by all
// gradients is, layer by layer, the weight matrix in row-major order followed
// by the bias vector. The final layer's parameters are therefore the tail of
// the flat vector.
class FeedForwardNet {
 public:
  FeedForwardNet() = default;
  explicit FeedForwardNet(std::vector<DenseLayer> layers);

  // Glorot-uniform weights, zero biases. dims = {in, hidden..., out}.
  static FeedForwardNet glorot(std::span<const int> dims, std::uint64_t seed);
  static FeedForwardNet zeros(std::span<const int> dims);

  int input_dim() const;
  int output_dim() const;
  std::size_t depth() const noexcept { return layers_.size(); }
  std::span<const DenseLayer> layers() const noexcept { return layers_; }
  DenseLayer& mutable_layer(std::size_t i) { return layers_.at(i); }
  std::vector<int> dims() const;

  std::size_t parameter_count() const;
  // Number of scalars in the final layer (weights plus bias).
  std::size_t last_layer_parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  Eigen::VectorXd forward(std::span<const double> x) const;
  // Columns of `inputs` are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
  // Activations that feed the final layer (the inputs themselves for a
  // single-layer net).
  Eigen::MatrixXd penultimate_batch(const Eigen::MatrixXd& inputs) const;

  friend bool operator==(const FeedForwardNet&, const FeedForwardNet&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

// Activations recorded by a forward pass, for backpropagation.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // activations[i] is the input of layer i
};

Eigen::MatrixXd forward_cached(const FeedForwardNet& net, const Eigen::MatrixXd& inputs,
                               ForwardCache& cache);

// Backpropagates dL/d(output) (one column per sample) and returns the flat
// parameter gradient summed over columns.
Eigen::VectorXd backpropagate(const FeedForwardNet& net, const ForwardCache& cache,
                              const Eigen::MatrixXd& output_grad);

struct LossConfig {
  double lambda1 = 0.0;
  double lambda2 = 1.0;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

inline constexpr double kLogClamp = 1e-12;

// Auxiliary-class loss for one sample. mu has K+1 entries (the last is the
// auxiliary class), w is the matching one-hot target. Probabilities are
// clamped to [kLogClamp, 1 - kLogClamp] before taking logs.
//   L = -sum_{k<K} w_k ln mu_k - l1 (1 - w_K) ln(1 - mu_K) - l2 w_K ln mu_K
double ccac_loss(std::span<const double> mu, std::span<const double> w, const LossConfig& cfg);

// Summed loss and dL/d(logits) for a batch of output logits (K+1 rows, one
// column per sample) with integer targets in [0, K].
double ccac_loss_gradient(const Eigen::MatrixXd& logits, std::span<const int> targets,
                          const LossConfig& cfg, Eigen::MatrixXd& logit_grad);

struct LossAndGradient {
  double loss = 0.0;         // batch mean
  Eigen::VectorXd gradient;  // batch mean, flat parameter layout
};

// Mean loss and parameter gradient of the auxiliary-class loss for `net`.
LossAndGradient ccac_backward(const FeedForwardNet& net, const Eigen::MatrixXd& inputs,
                              std::span<const int> targets, const LossConfig& cfg);

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index size, double lr)
      : first_moment(Eigen::VectorXd::Zero(size)),
        second_moment(Eigen::VectorXd::Zero(size)),
        learning_rate(lr) {}
};

// One bias-corrected Adam update in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state);

struct TrainOptions {
  int epochs = 1000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// Mean loss of a mini-batch; writes the mean gradient into `grad`.
using BatchObjective = std::function<double(const Eigen::VectorXd& params,
                                            std::span<const int> batch, Eigen::VectorXd& grad)>;

// Mini-batch Adam over `sample_count` samples, reshuffled every epoch.
// Returns the per-epoch mean training loss. Throws TrainingError on a
// non-finite loss.
std::vector<double> minimize_adam(Eigen::VectorXd& params, std::size_t sample_count,
                                  const BatchObjective& objective, const TrainOptions& options);

struct TrainingSet {
  Eigen::MatrixXd inputs;    // one column per sample
  std::vector<int> targets;  // auxiliary-class targets in [0, K]
};

struct TrainResult {
  FeedForwardNet net;
  std::vector<double> loss_trace;
};

TrainResult train(FeedForwardNet net, const TrainingSet& data, const LossConfig& cfg,
                  const TrainOptions& options);

// Versioned JSON text for a net plus its loss configuration.
std::string net_to_json(const FeedForwardNet& net, const LossConfig& cfg);
FeedForwardNet net_from_json(const std::string& text, LossConfig* cfg = nullptr);

}  // namespace auxcal
