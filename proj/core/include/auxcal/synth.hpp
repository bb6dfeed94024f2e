#pragma once

#include <cstdint>

#include "auxcal/dataset.hpp"

namespace auxcal {

// Seeded synthetic logits for three regimes:
//   in-distribution  true class c, logits = in_margin * e_c + N(0, I)
//   shifted          same with the smaller shift_margin (more errors)
//   out-of-domain    unlabeled, logits = ood_confidence_boost * e_j + N(0, I)
//                    for a random j, so the classifier is confidently wrong
// Records are emitted in that order.
struct SynthConfig {
  int k = 10;
  int n_in = 6000;
  int n_shift = 2000;
  int n_ood = 2000;
  double in_margin = 6.0;
  double shift_margin = 2.0;
  double ood_confidence_boost = 10.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);
CalibrationDataset generate(const SynthConfig& cfg);

}  // namespace auxcal
