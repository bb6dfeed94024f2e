#include <iostream>

#include <CLI11.hpp>

#include "auxcal/error.hpp"
#include "commands.hpp"

namespace {

using auxcal::cli::RunConfig;

// Flag values are collected separately and applied over the config file, so
// an explicit flag always wins.
struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int bins = 0;
  std::string kind;

  int k = 0, n_in = 0, n_shift = 0, n_ood = 0;
  double in_margin = 0, shift_margin = 0, boost = 0;
  std::string format;

  std::string data, train, val, model;
  double train_frac = 0, val_frac = 0, test_frac = 0;
  std::vector<int> hidden;
  int epochs = 0, batch_size = 0;
  double lr = 0;
  std::vector<double> lambda1, lambda2, rho_grid;
  std::string rule;
  int sb_bins = 0;

  int train_cap = 0, val_cap = 0;
};

void add_shared(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON config or manifest to start from");
  sub->add_option("--seed", o.seed, "Master seed");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--bins", o.bins, "Equal-width bins for ECE and tables (default 20)");
  sub->add_option("--kind", o.kind, "Calibrator: mp, ts, sb, dirichlet, ccac, ccac-s");
}

// True when `flag` exists on this subcommand and was given.
bool given(CLI::App* sub, const char* flag) {
  const CLI::Option* opt = sub->get_option_no_throw(flag);
  return opt != nullptr && opt->count() > 0;
}

template <typename T, typename U>
void apply(CLI::App* sub, const char* flag, const T& value, U& target) {
  if (given(sub, flag)) target = value;
}

RunConfig resolve(CLI::App* sub, const Overrides& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = auxcal::cli::load_config(o.config);
  cfg.command = sub->get_name();
  apply(sub, "--seed", o.seed, cfg.seed);
  if (given(sub, "--out")) cfg.out = o.out;
  apply(sub, "--bins", o.bins, cfg.bins);
  apply(sub, "--kind", o.kind, cfg.kind);

  apply(sub, "--k", o.k, cfg.synth.k);
  apply(sub, "--n-in", o.n_in, cfg.synth.n_in);
  apply(sub, "--n-shift", o.n_shift, cfg.synth.n_shift);
  apply(sub, "--n-ood", o.n_ood, cfg.synth.n_ood);
  apply(sub, "--in-margin", o.in_margin, cfg.synth.in_margin);
  apply(sub, "--shift-margin", o.shift_margin, cfg.synth.shift_margin);
  apply(sub, "--boost", o.boost, cfg.synth.ood_confidence_boost);
  apply(sub, "--format", o.format, cfg.format);

  if (given(sub, "--data")) cfg.data = o.data;
  if (given(sub, "--train")) cfg.train = o.train;
  if (given(sub, "--val")) cfg.val = o.val;
  if (given(sub, "--model")) cfg.model = o.model;
  apply(sub, "--train-frac", o.train_frac, cfg.train_fraction);
  apply(sub, "--val-frac", o.val_frac, cfg.val_fraction);
  apply(sub, "--test-frac", o.test_frac, cfg.test_fraction);
  apply(sub, "--hidden", o.hidden, cfg.hidden);
  apply(sub, "--epochs", o.epochs, cfg.epochs);
  apply(sub, "--batch-size", o.batch_size, cfg.batch_size);
  apply(sub, "--lr", o.lr, cfg.learning_rate);
  apply(sub, "--lambda1", o.lambda1, cfg.grid.lambda1_values);
  apply(sub, "--lambda2", o.lambda2, cfg.grid.lambda2_values);
  apply(sub, "--rho", o.rho_grid, cfg.rho_grid);
  if (given(sub, "--rule")) cfg.rule = o.rule;
  apply(sub, "--sb-bins", o.sb_bins, cfg.sb_bins);

  apply(sub, "--train-cap", o.train_cap, cfg.transfer_train_cap);
  apply(sub, "--val-cap", o.val_cap, cfg.transfer_val_cap);
  if (sub->get_name() == "transfer") {
    apply(sub, "--epochs", o.epochs, cfg.transfer_epochs);
    apply(sub, "--lr", o.lr, cfg.transfer_learning_rate);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-hoc confidence calibration with an auxiliary misclassification class"};
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic logit dataset");
  add_shared(synth, o);
  synth->add_option("--k", o.k, "Class count");
  synth->add_option("--n-in", o.n_in, "In-distribution samples");
  synth->add_option("--n-shift", o.n_shift, "Shifted samples");
  synth->add_option("--n-ood", o.n_ood, "Unlabeled out-of-domain samples");
  synth->add_option("--in-margin", o.in_margin, "In-distribution logit margin");
  synth->add_option("--shift-margin", o.shift_margin, "Shifted logit margin");
  synth->add_option("--boost", o.boost, "Out-of-domain logit peak");
  synth->add_option("--format", o.format, "csv or jsonl");

  auto* fit = app.add_subcommand("fit", "Fit a calibrator and select hyperparameters on validation data");
  add_shared(fit, o);
  fit->add_option("--data", o.data, "Dataset to split into train/val/test");
  fit->add_option("--train", o.train, "Training dataset (instead of --data)");
  fit->add_option("--val", o.val, "Validation dataset (with --train)");
  fit->add_option("--train-frac", o.train_frac, "Train fraction when splitting");
  fit->add_option("--val-frac", o.val_frac, "Validation fraction when splitting");
  fit->add_option("--test-frac", o.test_frac, "Test fraction when splitting");
  fit->add_option("--hidden", o.hidden, "Hidden layer widths")->delimiter(',');
  fit->add_option("--epochs", o.epochs, "Training epochs");
  fit->add_option("--batch-size", o.batch_size, "Mini-batch size");
  fit->add_option("--lr", o.lr, "Adam learning rate");
  fit->add_option("--lambda1", o.lambda1, "lambda1 grid")->delimiter(',');
  fit->add_option("--lambda2", o.lambda2, "lambda2 grid")->delimiter(',');
  fit->add_option("--rule", o.rule, "Fix the confidence rule (geo_mean_complement|geo_mean_product)");
  fit->add_option("--rho", o.rho_grid, "Dirichlet regularization grid")->delimiter(',');
  fit->add_option("--sb-bins", o.sb_bins, "Scaling-binning bin count");

  auto* eval = app.add_subcommand("eval", "Evaluate a fitted calibrator on a dataset");
  add_shared(eval, o);
  eval->add_option("--model", o.model, "Model JSON")->required();
  eval->add_option("--data", o.data, "Dataset file")->required();

  auto* transfer = app.add_subcommand("transfer", "Adapt a CCAC-S model to a new dataset");
  add_shared(transfer, o);
  transfer->add_option("--model", o.model, "Pretrained CCAC-S model JSON");
  transfer->add_option("--data", o.data, "Small labeled dataset from the new domain");
  transfer->add_option("--train-cap", o.train_cap, "Training samples to use (default 320)");
  transfer->add_option("--val-cap", o.val_cap, "Validation samples to use (default 200)");
  transfer->add_option("--epochs", o.epochs, "Training epochs");
  transfer->add_option("--batch-size", o.batch_size, "Mini-batch size");
  transfer->add_option("--lr", o.lr, "Adam learning rate");
  transfer->add_option("--rule", o.rule, "Fix the confidence rule");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    const RunConfig cfg = resolve(sub, o);
    const auto result = auxcal::cli::run_command(cfg);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& f : result.outputs) std::cout << (cfg.out / f).string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
