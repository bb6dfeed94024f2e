#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "auxcal/dataset.hpp"
#include "auxcal/net.hpp"

namespace auxcal {

// Uncalibrated maximum softmax probability.
struct MaxProbModel {
  int k = 2;
};

struct TemperatureModel {
  int k = 2;
  double temperature = 1.0;
};

// Temperature scaling followed by equal-mass histogram binning of the scaled
// confidence. bin_edges has B+1 ascending entries from 0 to 1; each bin maps
// to the mean scaled confidence of the samples that fell into it.
struct ScalingBinningModel {
  int k = 2;
  double temperature = 1.0;
  std::vector<double> bin_edges;
  std::vector<double> bin_values;
};

// mu = softmax(W ln softmax(z) + b); confidence = max mu.
struct DirichletModel {
  Eigen::MatrixXd weights;  // K x K
  Eigen::VectorXd bias;     // K
  double rho = 0.0;         // off-diagonal L2 weight used for fitting
  double val_ece = 0.0;     // validation ECE that selected rho
  int k() const noexcept { return static_cast<int>(bias.size()); }
};

double mp_confidence(std::span<const double> z);

// Mean -ln softmax(z / T)[y] over labeled records.
double temperature_nll(const CalibrationDataset& ds, double temperature);

struct TemperatureSearch {
  double lo = 0.05;
  double hi = 50.0;
  double tolerance = 1e-4;
};

// Golden-section search for the NLL-minimizing temperature. Unlabeled records
// are ignored; throws FitError when none are labeled.
TemperatureModel fit_temperature(const CalibrationDataset& train, const TemperatureSearch& search = {});
double ts_confidence(const TemperatureModel& m, std::span<const double> z);

// Max softmax of z / T.
double scaled_confidence(std::span<const double> z, double temperature);

// Fits T on the first half of `train`, then bins the scaled confidences of
// the second half.
ScalingBinningModel fit_scaling_binning(const CalibrationDataset& train, int bins = 20);
// Binning step alone, for already-scaled confidences.
ScalingBinningModel fit_binning(int k, double temperature, std::span<const double> scaled_confidences,
                                int bins);
double sb_map(const ScalingBinningModel& m, double scaled);
double sb_confidence(const ScalingBinningModel& m, std::span<const double> z);

struct DirichletOptions {
  std::vector<double> rho_grid{0.0, 1e-3, 1e-2, 1e-1, 1.0};
  TrainOptions train{200, 256, 1e-2, 0};
  int ece_bins = 20;
};

DirichletModel dirichlet_identity(int k);
// Fits (W, b) for one regularization weight.
DirichletModel fit_dirichlet_fixed(const CalibrationDataset& train, double rho,
                                   const TrainOptions& options);
// Fits one model per rho and keeps the one with the smallest validation ECE
// (first in grid order on ties).
DirichletModel fit_dirichlet(const CalibrationDataset& train, const CalibrationDataset& val,
                             const DirichletOptions& options = {});
std::vector<double> dirichlet_probs(const DirichletModel& m, std::span<const double> z);
double dirichlet_confidence(const DirichletModel& m, std::span<const double> z);

}  // namespace auxcal
