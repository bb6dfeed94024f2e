#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "auxcal/calibrators.hpp"
#include "auxcal/error.hpp"
#include "auxcal/synth.hpp"
#include "oracles.hpp"

namespace auxcal {
namespace {

CalibrationDataset small_synth(std::uint64_t seed, int n_in = 600) {
  SynthConfig cfg;
  cfg.k = 4;
  cfg.n_in = n_in;
  cfg.n_shift = n_in / 3;
  cfg.n_ood = n_in / 3;
  cfg.seed = seed;
  return generate(cfg);
}

Split small_split(std::uint64_t seed) { return split(small_synth(seed), {0.7, 0.1, 0.2, seed}); }

TEST(CombinedConfidence, HandValues) {
  const std::vector<double> mu{0.5, 0.25, 0.25};
  EXPECT_NEAR(combined_confidence(mu, 0, ConfidenceRule::kGeoMeanComplement), 0.6464466094, 1e-9);
  EXPECT_NEAR(combined_confidence(mu, 0, ConfidenceRule::kGeoMeanProduct), 0.6123724357, 1e-9);
  const std::vector<double> nu{0.1, 0.6, 0.3};
  EXPECT_NEAR(combined_confidence(nu, 1, ConfidenceRule::kGeoMeanComplement), 0.6535898385, 1e-9);
  EXPECT_NEAR(combined_confidence(nu, 1, ConfidenceRule::kGeoMeanProduct), 0.6480740698, 1e-9);
}

TEST(CombinedConfidence, Extremes) {
  for (auto rule : kConfidenceRules) {
    EXPECT_EQ(combined_confidence(std::vector<double>{1, 0, 0}, 0, rule), 1.0);
    EXPECT_EQ(combined_confidence(std::vector<double>{0, 0, 1}, 0, rule), 0.0);
  }
  EXPECT_THROW(combined_confidence(std::vector<double>{0.5, 0.5}, 0, ConfidenceRule::kGeoMeanProduct),
               InvalidInput);
  EXPECT_THROW(combined_confidence(std::vector<double>{0.4, 0.4, 0.2}, 2, ConfidenceRule::kGeoMeanProduct),
               InvalidInput);
}

TEST(CombinedConfidence, RuleNames) {
  for (auto rule : kConfidenceRules) EXPECT_EQ(rule_from_string(to_string(rule)), rule);
  EXPECT_THROW(rule_from_string("mean"), ParseError);
}

TEST(CombinedConfidence, RandomDrawProperties) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 2000; ++draw) {
    // mu = (p, rest spread over the other class, aux)
    const double p = u(rng);
    const double a = u(rng) * (1.0 - p);
    const std::vector<double> mu{p, 1.0 - p - a, a};
    for (auto rule : kConfidenceRules) {
      const double c = combined_confidence(mu, 0, rule);
      EXPECT_GE(c, 0.0);
      EXPECT_LE(c, 1.0);
      const double d = 0.5 * (1.0 - p - a);
      EXPECT_GE(combined_confidence(std::vector<double>{p + d, 1.0 - p - a - d, a}, 0, rule), c);
      EXPECT_LE(combined_confidence(std::vector<double>{p, 1.0 - p - a - d, a + d}, 0, rule), c);
    }
  }
}

TEST(Ccac, ZeroNetIsUniform) {
  const std::vector<int> dims{3, 5, 4};
  const CcacModel m{FeedForwardNet::zeros(dims), 3};
  const auto p = ccac_probs(m, std::vector<double>{4.0, -1.0, 2.0});
  ASSERT_EQ(p.size(), 4u);
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
  // y_hat = 0: 1 - sqrt(0.75 * 0.25).
  EXPECT_NEAR(confidence(m, std::vector<double>{4.0, -1.0, 2.0}), 1.0 - std::sqrt(0.1875), 1e-12);
}

TEST(CcacS, MergesScaledLogitsWithAuxLogit) {
  const std::array<int, 2> dims{2, 1};
  CcacSModel m{1.0, FeedForwardNet::zeros(dims), 2};
  auto p = ccacs_probs(m, std::vector<double>{0.0, 0.0});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  // T = 2, z = (2 ln 2, 0), aux logit ln 2 -> weights (2, 1, 2) / 5.
  m.temperature = 2.0;
  m.aux_net.mutable_layer(0).bias(0) = std::log(2.0);
  p = ccacs_probs(m, std::vector<double>{2.0 * std::log(2.0), 0.0});
  EXPECT_NEAR(p[0], 0.4, 1e-15);
  EXPECT_NEAR(p[1], 0.2, 1e-15);
  EXPECT_NEAR(p[2], 0.4, 1e-15);
}

TEST(CcacS, RejectsMalformedModels) {
  const std::vector<int> bad{2, 2};
  CcacSModel m{1.0, FeedForwardNet::zeros(bad), 2};
  EXPECT_THROW(ccacs_probs(m, std::vector<double>{0.0, 0.0}), ModelError);
  const std::array<int, 2> ok{2, 1};
  CcacSModel t{-1.0, FeedForwardNet::zeros(ok), 2};
  EXPECT_THROW(ccacs_probs(t, std::vector<double>{0.0, 0.0}), ModelError);
  CcacSModel k{1.0, FeedForwardNet::zeros(ok), 2};
  EXPECT_THROW(ccacs_probs(k, std::vector<double>{0.0, 0.0, 1.0}), InvalidInput);
}

TEST(BatchPaths, MatchSingleSample) {
  const auto s = small_split(1);
  const std::vector<int> dims{4, 6, 5};
  const CcacModel c{FeedForwardNet::glorot(dims, 2), 4};
  const std::vector<int> sdims{4, 3, 1};
  const CcacSModel cs{1.7, FeedForwardNet::glorot(sdims, 3), 4, {}, ConfidenceRule::kGeoMeanProduct};
  for (const CalibratorModel& m : {CalibratorModel(c), CalibratorModel(cs)}) {
    const auto batch = calibrated_confidences(m, s.test);
    for (std::size_t i = 0; i < s.test.size(); ++i) {
      EXPECT_NEAR(batch[i].confidence, confidence(m, s.test[i].logits), 1e-14);
    }
  }
}

TEST(Outcomes, UnlabeledNeverCorrect) {
  const CalibrationDataset ds(2, {{{5.0, 0.0}, std::nullopt}, {{5.0, 0.0}, 0}, {{5.0, 0.0}, 1}});
  const auto o = calibrated_confidences(MaxProbModel{2}, ds);
  EXPECT_FALSE(o[0].correct);
  EXPECT_TRUE(o[1].correct);
  EXPECT_FALSE(o[2].correct);
  EXPECT_THROW(calibrated_confidences(MaxProbModel{3}, ds), InvalidInput);
}

CcacFitOptions quick_ccac(std::uint64_t seed) {
  CcacFitOptions o;
  o.hidden = {8};
  o.train = {15, 64, 1e-2, seed};
  o.grid = {{0.0, 1.0}, {1.0}};
  return o;
}

CcacSFitOptions quick_ccacs(std::uint64_t seed) {
  CcacSFitOptions o;
  o.hidden = {8, 4};
  o.train = {15, 64, 1e-2, seed};
  o.grid = {{0.0}, {1.0}};
  return o;
}

TEST(FitCcac, DeterministicForSeed) {
  const auto s = small_split(2);
  const auto a = fit_ccac(s.train, s.val, quick_ccac(5));
  const auto b = fit_ccac(s.train, s.val, quick_ccac(5));
  const auto c = fit_ccac(s.train, s.val, quick_ccac(6));
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.val_ece, b.val_ece);
  EXPECT_NE(a.net, c.net);
}

TEST(FitCcac, SingletonGridUsesThatCell) {
  const auto s = small_split(3);
  auto o = quick_ccac(1);
  o.grid = {{0.5}, {2.0}};
  const auto m = fit_ccac(s.train, s.val, o);
  EXPECT_EQ(m.loss, (LossConfig{0.5, 2.0}));
  EXPECT_EQ(m.net.dims(), (std::vector<int>{4, 8, 5}));
  // Reported validation ECE is that of the stored model.
  const auto val = calibrated_confidences(m, s.val);
  EXPECT_NEAR(ece(val), m.val_ece, 1e-12);
}

TEST(FitCcac, StoredRuleIsTheBestOnValidation) {
  const auto s = small_split(4);
  auto o = quick_ccac(2);
  o.grid = {{0.0, 2.0}, {0.5, 1.0}};
  auto best = fit_ccac(s.train, s.val, o);
  for (auto rule : kConfidenceRules) {
    best.rule = rule;
    EXPECT_LE(best.val_ece, ece(calibrated_confidences(best, s.val)) + 1e-15);
  }
}

TEST(FitCcacS, TiesKeepFirstCell) {
  // Zero epochs leave every cell at the same starting point, so all cells
  // tie and the first one must be kept.
  const auto s = small_split(5);
  auto o = quick_ccacs(3);
  o.pinned_aux_logit = 0.0;
  o.train.epochs = 0;
  o.grid = {{2.0, 0.0}, {1.0, 0.5}};
  const auto m = fit_ccacs(s.train, s.val, o);
  EXPECT_EQ(m.loss, (LossConfig{2.0, 1.0}));
  EXPECT_EQ(m.temperature, 1.0);
}

TEST(FitCcac, FixedRuleIsRespected) {
  const auto s = small_split(5);
  auto o = quick_ccac(3);
  o.rule = ConfidenceRule::kGeoMeanProduct;
  o.grid = {{1.0}, {1.0}};
  EXPECT_EQ(fit_ccac(s.train, s.val, o).rule, ConfidenceRule::kGeoMeanProduct);
}

TEST(FitCcac, RejectsBadGrids) {
  const auto s = small_split(6);
  auto o = quick_ccac(1);
  o.grid = {{}, {1.0}};
  EXPECT_THROW(fit_ccac(s.train, s.val, o), FitError);
  o.grid = {{-1.0}, {1.0}};
  EXPECT_THROW(fit_ccac(s.train, s.val, o), FitError);
  EXPECT_THROW(fit_ccac(s.train, CalibrationDataset(4), quick_ccac(1)), FitError);
}

TEST(FitCcacS, PinnedAuxOnlyLearnsTemperature) {
  const auto s = small_split(7);
  auto o = quick_ccacs(1);
  o.pinned_aux_logit = -30.0;
  const auto m = fit_ccacs(s.train, s.val, o);
  ASSERT_EQ(m.aux_net.depth(), 1u);
  EXPECT_EQ(m.aux_net.layers()[0].bias(0), -30.0);
  EXPECT_EQ(m.aux_net.layers()[0].weights.squaredNorm(), 0.0);
  EXPECT_NE(m.temperature, 1.0);
}

TEST(FitCcacS, DisabledAuxIgnoresMisclassifiedSamples) {
  // With a negligible auxiliary class and no loss weights the objective is
  // the NLL of the correctly classified samples alone: adding wrong ones
  // leaves the fitted temperature unchanged, and it sharpens past plain
  // temperature scaling.
  SynthConfig cfg;
  cfg.k = 4;
  cfg.n_in = 1000;
  cfg.n_shift = 0;
  cfg.n_ood = 0;
  cfg.in_margin = 3.0;
  cfg.seed = 3;
  const auto clean = generate(cfg);
  std::vector<LogitRecord> recs;
  for (const auto& r : clean.records()) {
    if (r.label == predict(r.logits).label) recs.push_back(r);
  }
  const CalibrationDataset correct(4, recs);
  for (const auto& r : clean.records()) {
    if (r.label != predict(r.logits).label) recs.push_back(r);
  }
  const CalibrationDataset mixed(4, recs);
  ASSERT_GT(mixed.size(), correct.size());

  auto o = quick_ccacs(1);
  o.pinned_aux_logit = -50.0;
  o.grid = {{0.0}, {0.0}};
  o.train = {300, 100000, 1e-2, 1};  // one full batch per epoch
  const auto a = fit_ccacs(correct, correct, o);
  const auto b = fit_ccacs(mixed, mixed, o);
  EXPECT_NEAR(a.temperature, b.temperature, 1e-6 * a.temperature);
  EXPECT_LT(b.temperature, fit_temperature(mixed).temperature);
}

TEST(Transfer, OnlyTemperatureAndHeadChange) {
  const auto src = small_split(8);
  const auto pre = fit_ccacs(src.train, src.val, quick_ccacs(2));
  ASSERT_EQ(pre.aux_net.dims(), (std::vector<int>{4, 8, 4, 1}));
  EXPECT_EQ(transfer_parameter_count(pre), 4u + 2u);

  const auto dst = small_split(9);
  TransferOptions t;
  t.train = {30, 32, 1e-2, 4};
  const auto post = transfer_ccacs(pre, dst.train, dst.val, t);
  EXPECT_TRUE(post.transferred);
  EXPECT_EQ(kind_name(post), "ccac-t");
  EXPECT_EQ(post.loss, pre.loss);

  const auto a = pre.aux_net.parameters();
  const auto b = post.aux_net.parameters();
  const auto head = static_cast<Eigen::Index>(pre.aux_net.last_layer_parameter_count());
  EXPECT_EQ(a.head(a.size() - head), b.head(b.size() - head));  // bit-identical
  std::size_t changed = post.temperature != pre.temperature ? 1 : 0;
  for (Eigen::Index i = a.size() - head; i < a.size(); ++i) changed += a(i) != b(i) ? 1 : 0;
  EXPECT_EQ(changed, transfer_parameter_count(pre));

  const CalibrationDataset three(3, {{{1.0, 2.0, 3.0}, 0}});
  EXPECT_THROW(transfer_ccacs(pre, three, dst.val, t), InvalidInput);
}

TEST(Models, KindNamesAndClassCount) {
  EXPECT_EQ(kind_name(MaxProbModel{3}), "mp");
  EXPECT_EQ(kind_name(TemperatureModel{3, 1.0}), "ts");
  EXPECT_EQ(kind_name(ScalingBinningModel{}), "sb");
  EXPECT_EQ(kind_name(dirichlet_identity(3)), "dirichlet");
  EXPECT_EQ(class_count(dirichlet_identity(3)), 3);
  EXPECT_EQ(kind_name(CcacModel{}), "ccac");
  EXPECT_EQ(kind_name(CcacSModel{}), "ccac-s");
}

TEST(CombinedConfidence, WorkedCases) {
  // K = 2 with the remaining mass on the other class.
  const std::vector<double> a{0.2, 0.0, 0.8};
  EXPECT_NEAR(combined_confidence(a, 0, ConfidenceRule::kGeoMeanComplement), 0.2, 1e-15);
  EXPECT_NEAR(combined_confidence(a, 0, ConfidenceRule::kGeoMeanProduct), 0.2, 1e-15);
  // mu_yhat = 0.9, mu_aux = 0.4 (not a distribution; the rule is pointwise).
  const std::vector<double> b{0.9, 0.0, 0.4};
  EXPECT_NEAR(combined_confidence(b, 0, ConfidenceRule::kGeoMeanComplement), 0.8, 1e-15);
  EXPECT_NEAR(combined_confidence(b, 0, ConfidenceRule::kGeoMeanProduct), std::sqrt(0.54), 1e-15);
  EXPECT_NEAR(combined_confidence(b, 0, ConfidenceRule::kGeoMeanProduct), 0.7348, 1e-4);
}

TEST(Ccac, RandomNetMatchesHandSoftmax) {
  const std::vector<int> dims{3, 4, 4};
  const CcacModel m{FeedForwardNet::glorot(dims, 12), 3};
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  for (const auto& l : m.net.layers()) {
    w.push_back(l.weights);
    b.push_back(l.bias);
  }
  const std::vector<double> z{0.4, -1.1, 2.5};
  const auto p = ccac_probs(m, z);
  const auto want = oracle::softmax_by_hand(oracle::forward_by_hand(w, b, z));
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(p[i], want[i], 1e-14);
    sum += p[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(CcacS, LimitCases) {
  const std::array<int, 2> dims{2, 1};
  CcacSModel m{1.0, FeedForwardNet::zeros(dims), 2};
  m.aux_net.mutable_layer(0).bias(0) = -50.0;
  const std::vector<double> z{1.0, -1.0};
  auto p = ccacs_probs(m, z);
  const auto sm = oracle::softmax_by_hand(z);
  EXPECT_NEAR(p[0], sm[0], 1e-15);
  EXPECT_NEAR(p[1], sm[1], 1e-15);
  EXPECT_LT(p[2], 1e-20);

  m.aux_net.mutable_layer(0).bias(0) = 0.0;
  m.temperature = 1e9;
  p = ccacs_probs(m, z);
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-8);
}

TEST(FitCcacS, ParameterCountAndDeterminism) {
  const auto s = small_split(10);
  const auto a = fit_ccacs(s.train, s.val, quick_ccacs(4));
  const auto b = fit_ccacs(s.train, s.val, quick_ccacs(4));
  EXPECT_EQ(a.aux_net, b.aux_net);
  EXPECT_EQ(a.temperature, b.temperature);
  EXPECT_EQ(a.aux_net.parameter_count() + 1, 4u * 8 + 8 + 8 * 4 + 4 + 4 + 1 + 1);
}

TEST(FitCcacS, DisabledAuxMatchesTemperatureScalingEce) {
  // On clean in-distribution data both end up near-perfectly calibrated.
  SynthConfig cfg;
  cfg.k = 4;
  cfg.n_in = 3000;
  cfg.n_shift = 0;
  cfg.n_ood = 0;
  cfg.seed = 8;
  const auto s = split(generate(cfg), {0.7, 0.1, 0.2, 8});
  auto o = quick_ccacs(2);
  o.pinned_aux_logit = -50.0;
  o.grid = {{0.0}, {0.0}};
  o.train = {100, 256, 1e-2, 2};
  const auto cs = fit_ccacs(s.train, s.val, o);
  const auto ts = fit_temperature(s.train);
  const double e_cs = ece(calibrated_confidences(cs, s.test));
  const double e_ts = ece(calibrated_confidences(ts, s.test));
  EXPECT_NEAR(e_cs, e_ts, 0.02);
}

TEST(Outcomes, EmptyAndMaxProb) {
  EXPECT_TRUE(calibrated_confidences(MaxProbModel{3}, CalibrationDataset(3)).empty());
  const auto ds = small_synth(11, 60);
  const auto o = calibrated_confidences(MaxProbModel{4}, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(o[i].confidence, predict(ds[i].logits).confidence);
}

}  // namespace
}  // namespace auxcal
