#pragma once

#include <span>
#include <vector>

namespace auxcal {

// A calibrated confidence paired with whether the target prediction was right.
struct EvalOutcome {
  double confidence = 0.0;
  bool correct = false;

  friend bool operator==(const EvalOutcome&, const EvalOutcome&) = default;
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;  // 0 for empty bins
  double accuracy = 0.0;         // 0 for empty bins
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_wrong = 0;
};

inline constexpr int kDefaultBins = 20;

// Equal-width bin for a confidence: [m/M, (m+1)/M), last bin closed at 1.
int bin_index(double confidence, int bins);

// Expected calibration error over `bins` equal-width bins.
double ece(std::span<const EvalOutcome> outcomes, int bins = kDefaultBins);
double brier(std::span<const EvalOutcome> outcomes);

// Misclassification detection. Positives are wrong predictions, scored by
// 1 - confidence.
double auroc(std::span<const EvalOutcome> outcomes);
// Step-wise average precision. Equal scores keep their input order.
double aupr(std::span<const EvalOutcome> outcomes);
double precision_at_recall(std::span<const EvalOutcome> outcomes, double recall = 0.9);

std::vector<ReliabilityBin> reliability_table(std::span<const EvalOutcome> outcomes,
                                              int bins = kDefaultBins);
std::vector<HistogramBin> histogram_table(std::span<const EvalOutcome> outcomes,
                                          int bins = kDefaultBins);

// ECE recomputed from a reliability table.
double ece_from_table(std::span<const ReliabilityBin> table);

}  // namespace auxcal
