#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "auxcal/baselines.hpp"
#include "auxcal/dataset.hpp"
#include "auxcal/metrics.hpp"
#include "auxcal/net.hpp"

namespace auxcal {

// How the predicted-class probability and the auxiliary "misclassified"
// probability are combined into one confidence.
enum class ConfidenceRule {
  kGeoMeanComplement,  // 1 - sqrt((1 - mu_yhat) * mu_aux)
  kGeoMeanProduct,     // sqrt(mu_yhat * (1 - mu_aux))
};

inline constexpr std::array<ConfidenceRule, 2> kConfidenceRules{
    ConfidenceRule::kGeoMeanComplement, ConfidenceRule::kGeoMeanProduct};

std::string_view to_string(ConfidenceRule rule);
ConfidenceRule rule_from_string(std::string_view name);

// mu has K+1 entries; y_hat is the target classifier's predicted label.
// Result is clipped to [0, 1].
double combined_confidence(std::span<const double> mu, int y_hat, ConfidenceRule rule);

// Auxiliary-class calibrator: a net maps the K logits to K+1 logits.
struct CcacModel {
  FeedForwardNet net;
  int k = 2;
  LossConfig loss;
  ConfidenceRule rule = ConfidenceRule::kGeoMeanComplement;
  double val_ece = 0.0;
};

// Simplified variant: the K logits are divided by a temperature and a small
// net contributes only the auxiliary logit. `transferred` marks a model
// produced by transfer_ccacs.
struct CcacSModel {
  double temperature = 1.0;
  FeedForwardNet aux_net;
  int k = 2;
  LossConfig loss;
  ConfidenceRule rule = ConfidenceRule::kGeoMeanComplement;
  double val_ece = 0.0;
  bool transferred = false;
};

std::vector<double> ccac_probs(const CcacModel& m, std::span<const double> z);
std::vector<double> ccacs_probs(const CcacSModel& m, std::span<const double> z);
// Batch forms: K x N logits in, (K+1) x N probabilities out.
Eigen::MatrixXd ccac_probs_batch(const CcacModel& m, const Eigen::MatrixXd& logits);
Eigen::MatrixXd ccacs_probs_batch(const CcacSModel& m, const Eigen::MatrixXd& logits);

struct HyperGrid {
  std::vector<double> lambda1_values{0.0, 0.5, 1.0, 2.0};
  std::vector<double> lambda2_values{0.0, 0.5, 1.0, 2.0};
};

struct CcacFitOptions {
  std::vector<int> hidden{50, 20};
  HyperGrid grid;
  TrainOptions train;                  // train.seed is the master seed
  std::optional<ConfidenceRule> rule;  // fixed rule instead of selecting one
  int ece_bins = kDefaultBins;
};

struct CcacSFitOptions {
  std::vector<int> hidden{50, 20};
  HyperGrid grid;
  TrainOptions train;
  std::optional<ConfidenceRule> rule;
  int ece_bins = kDefaultBins;
  // When set, the auxiliary logit is this constant and only T is trained.
  std::optional<double> pinned_aux_logit;
};

struct TransferOptions {
  TrainOptions train;
  std::optional<ConfidenceRule> rule;
  int ece_bins = kDefaultBins;
};

// Grid search over (lambda1, lambda2) in lambda1-major order; for each cell
// the net is trained on auxiliary labels and every rule is scored by
// validation ECE. The lowest ECE wins, earlier cells and rules on ties.
CcacModel fit_ccac(const CalibrationDataset& train, const CalibrationDataset& val,
                   const CcacFitOptions& options = {});
CcacSModel fit_ccacs(const CalibrationDataset& train, const CalibrationDataset& val,
                     const CcacSFitOptions& options = {});

// Retrains only T and the final layer of the auxiliary net on a small
// labeled sample; loss weights are kept, the rule is re-selected on
// `small_val`.
CcacSModel transfer_ccacs(const CcacSModel& pretrained, const CalibrationDataset& small_train,
                          const CalibrationDataset& small_val, const TransferOptions& options = {});
// Scalars updated by transfer_ccacs: T plus the auxiliary net's final layer.
std::size_t transfer_parameter_count(const CcacSModel& m);

using CalibratorModel = std::variant<MaxProbModel, TemperatureModel, ScalingBinningModel,
                                     DirichletModel, CcacModel, CcacSModel>;

// "mp", "ts", "sb", "dirichlet", "ccac", "ccac-s" or "ccac-t".
std::string_view kind_name(const CalibratorModel& m);
int class_count(const CalibratorModel& m);

double confidence(const CalibratorModel& m, std::span<const double> z);

// One outcome per record, in order. The predicted label is always the target
// classifier's argmax; unlabeled records are never correct.
std::vector<EvalOutcome> calibrated_confidences(const CalibratorModel& m,
                                                const CalibrationDataset& ds);

}  // namespace auxcal
