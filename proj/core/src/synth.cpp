#include "auxcal/synth.hpp"

#include <random>

#include "auxcal/error.hpp"

namespace auxcal {

void validate(const SynthConfig& cfg) {
  if (cfg.k < 2) throw InvalidInput("synthetic class count must be at least 2");
  if (cfg.n_in < 0 || cfg.n_shift < 0 || cfg.n_ood < 0) {
    throw InvalidInput("synthetic sample counts must be non-negative");
  }
  if (!(cfg.in_margin > 0.0) || !(cfg.shift_margin > 0.0) || !(cfg.ood_confidence_boost > 0.0)) {
    throw InvalidInput("synthetic margins must be positive");
  }
}

CalibrationDataset generate(const SynthConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, cfg.k - 1);

  std::vector<LogitRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.n_in + cfg.n_shift + cfg.n_ood));
  auto emit = [&](int count, double margin, bool labeled) {
    for (int i = 0; i < count; ++i) {
      const int c = pick_class(rng);
      LogitRecord r;
      r.logits.resize(static_cast<std::size_t>(cfg.k));
      for (double& v : r.logits) v = noise(rng);
      r.logits[static_cast<std::size_t>(c)] += margin;
      if (labeled) r.label = c;
      records.push_back(std::move(r));
    }
  };
  emit(cfg.n_in, cfg.in_margin, true);
  emit(cfg.n_shift, cfg.shift_margin, true);
  emit(cfg.n_ood, cfg.ood_confidence_boost, false);
  return CalibrationDataset(cfg.k, std::move(records));
}

}  // namespace auxcal
