#include "auxcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "auxcal/error.hpp"

namespace auxcal {
namespace {

void check_bins(int bins) {
  if (bins < 1) throw InvalidInput("bin count must be at least 1");
}

void check_nonempty(std::span<const EvalOutcome> outcomes) {
  if (outcomes.empty()) throw InvalidInput("metric of an empty outcome list");
}

// Indices sorted by detection score (1 - confidence) descending; stable.
std::vector<std::size_t> ranked(std::span<const EvalOutcome> outcomes) {
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return 1.0 - outcomes[a].confidence > 1.0 - outcomes[b].confidence;
  });
  return order;
}

std::size_t count_wrong(std::span<const EvalOutcome> outcomes) {
  return static_cast<std::size_t>(std::count_if(
      outcomes.begin(), outcomes.end(), [](const EvalOutcome& o) { return !o.correct; }));
}

}  // namespace

int bin_index(double confidence, int bins) {
  check_bins(bins);
  const double c = std::clamp(confidence, 0.0, 1.0);
  const int m = static_cast<int>(std::floor(c * bins));
  return std::min(m, bins - 1);
}

std::vector<ReliabilityBin> reliability_table(std::span<const EvalOutcome> outcomes, int bins) {
  check_bins(bins);
  std::vector<ReliabilityBin> table(static_cast<std::size_t>(bins));
  std::vector<double> conf_sum(table.size(), 0.0);
  std::vector<std::size_t> correct(table.size(), 0);
  for (std::size_t m = 0; m < table.size(); ++m) {
    table[m].lo = static_cast<double>(m) / bins;
    table[m].hi = static_cast<double>(m + 1) / bins;
  }
  for (const auto& o : outcomes) {
    const auto m = static_cast<std::size_t>(bin_index(o.confidence, bins));
    ++table[m].count;
    conf_sum[m] += o.confidence;
    if (o.correct) ++correct[m];
  }
  for (std::size_t m = 0; m < table.size(); ++m) {
    if (table[m].count == 0) continue;
    const double n = static_cast<double>(table[m].count);
    table[m].mean_confidence = conf_sum[m] / n;
    table[m].accuracy = static_cast<double>(correct[m]) / n;
  }
  return table;
}

std::vector<HistogramBin> histogram_table(std::span<const EvalOutcome> outcomes, int bins) {
  check_bins(bins);
  std::vector<HistogramBin> table(static_cast<std::size_t>(bins));
  for (std::size_t m = 0; m < table.size(); ++m) {
    table[m].lo = static_cast<double>(m) / bins;
    table[m].hi = static_cast<double>(m + 1) / bins;
  }
  for (const auto& o : outcomes) {
    auto& b = table[static_cast<std::size_t>(bin_index(o.confidence, bins))];
    if (o.correct) {
      ++b.n_correct;
    } else {
      ++b.n_wrong;
    }
  }
  return table;
}

double ece_from_table(std::span<const ReliabilityBin> table) {
  std::size_t n = 0;
  for (const auto& b : table) n += b.count;
  if (n == 0) throw InvalidInput("metric of an empty outcome list");
  double total = 0.0;
  for (const auto& b : table) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / static_cast<double>(n) *
             std::abs(b.accuracy - b.mean_confidence);
  }
  return total;
}

double ece(std::span<const EvalOutcome> outcomes, int bins) {
  check_nonempty(outcomes);
  const auto table = reliability_table(outcomes, bins);
  return ece_from_table(table);
}

double brier(std::span<const EvalOutcome> outcomes) {
  check_nonempty(outcomes);
  double total = 0.0;
  for (const auto& o : outcomes) {
    const double d = (o.correct ? 1.0 : 0.0) - o.confidence;
    total += d * d;
  }
  return total / static_cast<double>(outcomes.size());
}

double auroc(std::span<const EvalOutcome> outcomes) {
  const std::size_t positives = count_wrong(outcomes);
  const std::size_t negatives = outcomes.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetric("AUROC needs both correct and misclassified outcomes");
  }
  // Ascending by score with midranks for ties (Mann-Whitney U).
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto score = [&](std::size_t i) { return 1.0 - outcomes[i].confidence; };
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score(a) < score(b); });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && score(order[j + 1]) == score(order[i])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (!outcomes[order[t]].correct) positive_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double aupr(std::span<const EvalOutcome> outcomes) {
  const std::size_t positives = count_wrong(outcomes);
  if (positives == 0) throw UndefinedMetric("AUPR needs at least one misclassified outcome");
  const auto order = ranked(outcomes);
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!outcomes[order[r]].correct) {
      ++tp;
      sum += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(positives);
}

double precision_at_recall(std::span<const EvalOutcome> outcomes, double recall) {
  const std::size_t positives = count_wrong(outcomes);
  if (positives == 0) {
    throw UndefinedMetric("precision at recall needs at least one misclassified outcome");
  }
  if (!(recall >= 0.0 && recall <= 1.0)) throw InvalidInput("recall must lie in [0, 1]");
  const auto order = ranked(outcomes);
  const double needed = recall * static_cast<double>(positives) - 1e-9;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!outcomes[order[r]].correct) ++tp;
    if (static_cast<double>(tp) >= needed) {
      return static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return static_cast<double>(tp) / static_cast<double>(order.size());
}

}  // namespace auxcal
