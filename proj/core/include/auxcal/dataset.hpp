#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace auxcal {

// One sample as seen by the calibrator: the target classifier's logits and
// the ground-truth class. An empty label marks a sample that belongs to no
// known class (stored as -1 on disk); it always counts as misclassified.
struct LogitRecord {
  std::vector<double> logits;
  std::optional<int> label;

  friend bool operator==(const LogitRecord&, const LogitRecord&) = default;
};

// Immutable collection of records sharing the same class count K >= 2.
class CalibrationDataset {
 public:
  explicit CalibrationDataset(int k, std::vector<LogitRecord> records = {});

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::span<const LogitRecord> records() const noexcept { return records_; }
  const LogitRecord& operator[](std::size_t i) const { return records_[i]; }

  friend bool operator==(const CalibrationDataset&, const CalibrationDataset&) = default;

 private:
  int k_;
  std::vector<LogitRecord> records_;
};

// Record relabeled for auxiliary-class training. aux_label == K is the
// "misclassified by the target classifier" class.
struct AuxLabeledRecord {
  std::vector<double> logits;
  int aux_label = 0;
  std::vector<double> one_hot;  // length K+1
};

struct SplitSpec {
  double train_fraction = 0.75;
  double val_fraction = 0.05;
  double test_fraction = 0.20;
  std::uint64_t seed = 0;
};

struct Split {
  CalibrationDataset train;
  CalibrationDataset val;
  CalibrationDataset test;
};

struct Prediction {
  int label = 0;
  double confidence = 0.0;  // max softmax probability
};

enum class DatasetFormat { kCsv, kJsonl };

// Numerically stable softmax (max-subtracted). Throws InvalidInput on
// empty or non-finite input.
std::vector<double> softmax(std::span<const double> z);

// Argmax of the logits (ties go to the lowest index) and its softmax mass.
Prediction predict(std::span<const double> z);

std::vector<AuxLabeledRecord> assign_aux_labels(const CalibrationDataset& ds);

// Deterministic shuffle-and-partition. Validation and test sizes are
// floor(n * fraction); the remainder goes to train.
Split split(const CalibrationDataset& ds, const SplitSpec& spec);

// Logits as a K x N column-per-sample matrix.
Eigen::MatrixXd logit_matrix(const CalibrationDataset& ds);

// Fraction of records whose predicted label equals a non-empty label.
double target_accuracy(const CalibrationDataset& ds);

DatasetFormat format_from_path(const std::filesystem::path& path);

CalibrationDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
CalibrationDataset load_dataset(const std::filesystem::path& path);
void write_dataset(const CalibrationDataset& ds, const std::filesystem::path& path,
                   DatasetFormat format);
void write_dataset(const CalibrationDataset& ds, const std::filesystem::path& path);

CalibrationDataset parse_csv(std::string_view text);
CalibrationDataset parse_jsonl(std::string_view text);
std::string to_csv(const CalibrationDataset& ds);
std::string to_jsonl(const CalibrationDataset& ds);

}  // namespace auxcal
