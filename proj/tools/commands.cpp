#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "auxcal/error.hpp"
#include "auxcal/metrics.hpp"
#include "auxcal/model_io.hpp"
#include "auxcal/seed.hpp"

namespace auxcal::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

std::string reliability_csv(const std::vector<ReliabilityBin>& table) {
  std::string out = "bin_lo,bin_hi,count,conf,acc\n";
  for (const auto& b : table) {
    out += fmt(b.lo) + "," + fmt(b.hi) + "," + std::to_string(b.count) + "," +
           fmt(b.mean_confidence) + "," + fmt(b.accuracy) + "\n";
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& table) {
  std::string out = "bin_lo,bin_hi,n_correct,n_wrong\n";
  for (const auto& b : table) {
    out += fmt(b.lo) + "," + fmt(b.hi) + "," + std::to_string(b.n_correct) + "," +
           std::to_string(b.n_wrong) + "\n";
  }
  return out;
}

void write_manifest(const RunConfig& cfg, const CommandResult& result) {
  json m;
  m["command"] = cfg.command;
  m["config"] = to_json(cfg);
  m["outputs"] = result.outputs;
  m["warnings"] = result.warnings;
  write_json(cfg.out / "manifest.json", m);
}

std::optional<ConfidenceRule> parsed_rule(const RunConfig& cfg) {
  if (!cfg.rule) return std::nullopt;
  return rule_from_string(*cfg.rule);
}

TrainOptions train_options(const RunConfig& cfg, std::string_view component) {
  return {cfg.epochs, cfg.batch_size, cfg.learning_rate, derive_seed(cfg.seed, component)};
}

// Saves and re-reads a model so a malformed file never exits successfully.
void save_validated(const CalibratorModel& m, const fs::path& path) {
  save_model(m, path);
  const auto back = load_model(path);
  if (kind_name(back) != kind_name(m) || class_count(back) != class_count(m)) {
    throw Error("model file '" + path.string() + "' failed validation");
  }
}

json selection_report(const CalibratorModel& m) {
  const auto model_json = json::parse(model_to_json(m));
  json sel = model_json.at("selection");
  const auto& params = model_json.at("params");
  if (params.contains("temperature")) sel["temperature"] = params.at("temperature");
  return sel;
}

template <typename T>
void set_if(const json& j, const char* key, T& target) {
  if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

void set_path(const json& j, const char* key, fs::path& target) {
  if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<std::string>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out.generic_string();
  j["bins"] = cfg.bins;
  j["kind"] = cfg.kind;
  j["synth"] = {{"k", cfg.synth.k},
                {"n_in", cfg.synth.n_in},
                {"n_shift", cfg.synth.n_shift},
                {"n_ood", cfg.synth.n_ood},
                {"in_margin", cfg.synth.in_margin},
                {"shift_margin", cfg.synth.shift_margin},
                {"ood_confidence_boost", cfg.synth.ood_confidence_boost},
                {"format", cfg.format}};
  j["data"] = cfg.data.generic_string();
  j["train"] = cfg.train.generic_string();
  j["val"] = cfg.val.generic_string();
  j["model"] = cfg.model.generic_string();
  j["split"] = {{"train", cfg.train_fraction}, {"val", cfg.val_fraction}, {"test", cfg.test_fraction}};
  j["hidden"] = cfg.hidden;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["grid"] = {{"lambda1", cfg.grid.lambda1_values}, {"lambda2", cfg.grid.lambda2_values}};
  j["rule"] = cfg.rule ? json(*cfg.rule) : json(nullptr);
  j["sb_bins"] = cfg.sb_bins;
  j["dirichlet"] = {{"rho_grid", cfg.rho_grid},
                    {"epochs", cfg.dirichlet_epochs},
                    {"learning_rate", cfg.dirichlet_learning_rate}};
  j["transfer"] = {{"train_cap", cfg.transfer_train_cap},
                   {"val_cap", cfg.transfer_val_cap},
                   {"epochs", cfg.transfer_epochs},
                   {"learning_rate", cfg.transfer_learning_rate}};
  return j;
}

void apply_json(RunConfig& cfg, const json& input) {
  const json& j = (input.contains("config") && input.at("config").is_object()) ? input.at("config") : input;
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  try {
    check_keys(j,
               {"command", "seed", "out", "bins", "kind", "synth", "data", "train", "val", "model",
                "split", "hidden", "epochs", "batch_size", "learning_rate", "grid", "rule", "sb_bins",
                "dirichlet", "transfer"},
               "config");
    set_if(j, "command", cfg.command);
    set_if(j, "seed", cfg.seed);
    set_path(j, "out", cfg.out);
    set_if(j, "bins", cfg.bins);
    set_if(j, "kind", cfg.kind);
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      check_keys(s, {"k", "n_in", "n_shift", "n_ood", "in_margin", "shift_margin",
                     "ood_confidence_boost", "format"},
                 "synth");
      set_if(s, "k", cfg.synth.k);
      set_if(s, "n_in", cfg.synth.n_in);
      set_if(s, "n_shift", cfg.synth.n_shift);
      set_if(s, "n_ood", cfg.synth.n_ood);
      set_if(s, "in_margin", cfg.synth.in_margin);
      set_if(s, "shift_margin", cfg.synth.shift_margin);
      set_if(s, "ood_confidence_boost", cfg.synth.ood_confidence_boost);
      set_if(s, "format", cfg.format);
    }
    set_path(j, "data", cfg.data);
    set_path(j, "train", cfg.train);
    set_path(j, "val", cfg.val);
    set_path(j, "model", cfg.model);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"train", "val", "test"}, "split");
      set_if(s, "train", cfg.train_fraction);
      set_if(s, "val", cfg.val_fraction);
      set_if(s, "test", cfg.test_fraction);
    }
    set_if(j, "hidden", cfg.hidden);
    set_if(j, "epochs", cfg.epochs);
    set_if(j, "batch_size", cfg.batch_size);
    set_if(j, "learning_rate", cfg.learning_rate);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      check_keys(g, {"lambda1", "lambda2"}, "grid");
      set_if(g, "lambda1", cfg.grid.lambda1_values);
      set_if(g, "lambda2", cfg.grid.lambda2_values);
    }
    if (j.contains("rule")) {
      cfg.rule = j.at("rule").is_null() ? std::nullopt
                                        : std::optional<std::string>(j.at("rule").get<std::string>());
    }
    set_if(j, "sb_bins", cfg.sb_bins);
    if (j.contains("dirichlet")) {
      const auto& d = j.at("dirichlet");
      check_keys(d, {"rho_grid", "epochs", "learning_rate"}, "dirichlet");
      set_if(d, "rho_grid", cfg.rho_grid);
      set_if(d, "epochs", cfg.dirichlet_epochs);
      set_if(d, "learning_rate", cfg.dirichlet_learning_rate);
    }
    if (j.contains("transfer")) {
      const auto& t = j.at("transfer");
      check_keys(t, {"train_cap", "val_cap", "epochs", "learning_rate"}, "transfer");
      set_if(t, "train_cap", cfg.transfer_train_cap);
      set_if(t, "val_cap", cfg.transfer_val_cap);
      set_if(t, "epochs", cfg.transfer_epochs);
      set_if(t, "learning_rate", cfg.transfer_learning_rate);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid config: ") + e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  RunConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

CommandResult cmd_synth(const RunConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.seed = derive_seed(cfg.seed, "synth");
  if (cfg.format != "csv" && cfg.format != "jsonl") {
    throw InvalidInput("format must be csv or jsonl");
  }
  const auto ds = generate(sc);
  const std::string name = "dataset." + cfg.format;
  const auto path = cfg.out / name;
  write_dataset(ds, path, cfg.format == "csv" ? DatasetFormat::kCsv : DatasetFormat::kJsonl);
  if (load_dataset(path).size() != ds.size()) throw Error("dataset file failed validation");

  CommandResult result;
  result.outputs = {name, "manifest.json"};
  write_manifest(cfg, result);
  return result;
}

CommandResult cmd_fit(const RunConfig& cfg) {
  if (cfg.bins < 1) throw InvalidInput("--bins must be at least 1");
  CommandResult result;
  std::optional<CalibrationDataset> train;
  std::optional<CalibrationDataset> val;
  if (!cfg.train.empty()) {
    if (cfg.val.empty()) throw InvalidInput("--train requires --val");
    train = load_dataset(cfg.train);
    val = load_dataset(cfg.val);
  } else {
    if (cfg.data.empty()) throw InvalidInput("fit needs --data or --train/--val");
    const auto all = load_dataset(cfg.data);
    auto parts = split(all, {cfg.train_fraction, cfg.val_fraction, cfg.test_fraction,
                             derive_seed(cfg.seed, "split")});
    write_dataset(parts.train, cfg.out / "splits" / "train.csv", DatasetFormat::kCsv);
    write_dataset(parts.val, cfg.out / "splits" / "val.csv", DatasetFormat::kCsv);
    write_dataset(parts.test, cfg.out / "splits" / "test.csv", DatasetFormat::kCsv);
    result.outputs.insert(result.outputs.end(),
                          {"splits/train.csv", "splits/val.csv", "splits/test.csv"});
    train = std::move(parts.train);
    val = std::move(parts.val);
  }
  if (train->k() != val->k()) throw InvalidInput("train and validation class counts differ");
  const int k = train->k();

  CalibratorModel model = MaxProbModel{k};
  if (cfg.kind == "mp") {
    model = MaxProbModel{k};
  } else if (cfg.kind == "ts") {
    model = fit_temperature(*train);
  } else if (cfg.kind == "sb") {
    model = fit_scaling_binning(*train, cfg.sb_bins);
  } else if (cfg.kind == "dirichlet") {
    DirichletOptions opts;
    opts.rho_grid = cfg.rho_grid;
    opts.train = {cfg.dirichlet_epochs, cfg.batch_size, cfg.dirichlet_learning_rate,
                  derive_seed(cfg.seed, "fit/dirichlet")};
    opts.ece_bins = cfg.bins;
    model = fit_dirichlet(*train, *val, opts);
  } else if (cfg.kind == "ccac") {
    CcacFitOptions opts;
    opts.hidden = cfg.hidden;
    opts.grid = cfg.grid;
    opts.train = train_options(cfg, "fit/ccac");
    opts.rule = parsed_rule(cfg);
    opts.ece_bins = cfg.bins;
    model = fit_ccac(*train, *val, opts);
  } else if (cfg.kind == "ccac-s") {
    CcacSFitOptions opts;
    opts.hidden = cfg.hidden;
    opts.grid = cfg.grid;
    opts.train = train_options(cfg, "fit/ccac-s");
    opts.rule = parsed_rule(cfg);
    opts.ece_bins = cfg.bins;
    model = fit_ccacs(*train, *val, opts);
  } else {
    throw InvalidInput("unknown calibrator kind '" + cfg.kind +
                       "' (expected mp, ts, sb, dirichlet, ccac or ccac-s)");
  }
  save_validated(model, cfg.out / "model.json");
  result.outputs.push_back("model.json");

  json report;
  report["command"] = "fit";
  report["kind"] = std::string(kind_name(model));
  report["k"] = k;
  report["train_size"] = train->size();
  report["val_size"] = val->size();
  report["selection"] = selection_report(model);
  if (val->empty()) {
    report["val_ece"] = nullptr;
    result.warnings.push_back("validation set is empty; val_ece not computed");
  } else {
    report["val_ece"] = ece(calibrated_confidences(model, *val), cfg.bins);
  }
  report["warnings"] = result.warnings;
  report["config"] = to_json(cfg);
  write_json(cfg.out / "report.json", report);
  result.outputs.push_back("report.json");
  result.outputs.push_back("manifest.json");
  write_manifest(cfg, result);
  return result;
}

CommandResult cmd_eval(const RunConfig& cfg) {
  if (cfg.bins < 1) throw InvalidInput("--bins must be at least 1");
  if (cfg.model.empty() || cfg.data.empty()) throw InvalidInput("eval needs --model and --data");
  const auto model = load_model(cfg.model);
  const auto ds = load_dataset(cfg.data);
  if (class_count(model) != ds.k()) {
    throw InvalidInput("class count mismatch: model has K=" + std::to_string(class_count(model)) +
                       " but dataset has K=" + std::to_string(ds.k()));
  }
  if (ds.empty()) throw InvalidInput("cannot evaluate on an empty dataset");
  const auto outcomes = calibrated_confidences(model, ds);

  CommandResult result;
  json metrics;
  metrics["ece"] = ece(outcomes, cfg.bins);
  metrics["brier"] = brier(outcomes);
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      metrics[name] = fn();
    } catch (const UndefinedMetric& e) {
      metrics[name] = nullptr;
      result.warnings.push_back(std::string(name) + ": " + e.what());
    }
  };
  guarded("auroc", [&] { return auroc(outcomes); });
  guarded("aupr", [&] { return aupr(outcomes); });
  guarded("p90", [&] { return precision_at_recall(outcomes, 0.9); });

  std::size_t correct = 0;
  for (const auto& o : outcomes) correct += o.correct ? 1 : 0;

  const auto reliability = reliability_table(outcomes, cfg.bins);
  const auto histogram = histogram_table(outcomes, cfg.bins);
  json rel = json::array();
  for (const auto& b : reliability) {
    rel.push_back({{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"count", b.count},
                   {"conf", b.mean_confidence}, {"acc", b.accuracy}});
  }
  json hist = json::array();
  for (const auto& b : histogram) {
    hist.push_back({{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"n_correct", b.n_correct},
                    {"n_wrong", b.n_wrong}});
  }
  write_file(cfg.out / "tables" / "reliability.csv", reliability_csv(reliability));
  write_file(cfg.out / "tables" / "histogram.csv", histogram_csv(histogram));

  json report;
  report["command"] = "eval";
  report["model_kind"] = std::string(kind_name(model));
  report["k"] = ds.k();
  report["n"] = ds.size();
  report["accuracy"] = static_cast<double>(correct) / static_cast<double>(ds.size());
  report["metrics"] = metrics;
  report["reliability"] = rel;
  report["histogram"] = hist;
  report["warnings"] = result.warnings;
  report["config"] = to_json(cfg);
  write_json(cfg.out / "report.json", report);
  result.outputs = {"tables/reliability.csv", "tables/histogram.csv", "report.json", "manifest.json"};
  write_manifest(cfg, result);
  return result;
}

CommandResult cmd_transfer(const RunConfig& cfg) {
  if (cfg.model.empty() || cfg.data.empty()) throw InvalidInput("transfer needs --model and --data");
  const auto loaded = load_model(cfg.model);
  const auto* pretrained = std::get_if<CcacSModel>(&loaded);
  if (pretrained == nullptr || pretrained->transferred) {
    throw ModelError("transfer requires a CCAC-S model (got '" + std::string(kind_name(loaded)) + "')");
  }
  if (cfg.transfer_train_cap < 1 || cfg.transfer_val_cap < 1) {
    throw InvalidInput("transfer sample caps must be positive");
  }
  const auto ds = load_dataset(cfg.data);
  if (ds.k() != pretrained->k) {
    throw InvalidInput("class count mismatch: model has K=" + std::to_string(pretrained->k) +
                       " but dataset has K=" + std::to_string(ds.k()));
  }
  if (ds.empty()) throw InvalidInput("transfer dataset is empty");

  CommandResult result;
  const auto shuffled = split(ds, {1.0, 0.0, 0.0, derive_seed(cfg.seed, "transfer/sample")}).train;
  const auto cap_train = static_cast<std::size_t>(cfg.transfer_train_cap);
  const auto cap_val = static_cast<std::size_t>(cfg.transfer_val_cap);
  const std::size_t n = shuffled.size();
  std::size_t n_train = cap_train;
  std::size_t n_val = cap_val;
  if (n < cap_train + cap_val) {
    // Too few samples: use all of them, split in the ratio of the caps.
    if (n < 2) throw InvalidInput("transfer needs at least two samples");
    n_train = std::clamp<std::size_t>(n * cap_train / (cap_train + cap_val), 1, n - 1);
    n_val = n - n_train;
    result.warnings.push_back("requested " + std::to_string(cap_train) + " train + " +
                              std::to_string(cap_val) + " validation samples but only " +
                              std::to_string(n) + " are available; using " + std::to_string(n_train) +
                              " + " + std::to_string(n_val));
  }
  auto slice = [&](std::size_t begin, std::size_t end) {
    std::vector<LogitRecord> r(shuffled.records().begin() + static_cast<std::ptrdiff_t>(begin),
                               shuffled.records().begin() + static_cast<std::ptrdiff_t>(end));
    return CalibrationDataset(ds.k(), std::move(r));
  };
  const auto small_train = slice(0, n_train);
  const auto small_val = slice(n_train, n_train + n_val);

  TransferOptions opts;
  opts.train = {cfg.transfer_epochs, cfg.batch_size, cfg.transfer_learning_rate,
                derive_seed(cfg.seed, "transfer")};
  opts.rule = parsed_rule(cfg);
  opts.ece_bins = cfg.bins;
  const CalibratorModel transferred = transfer_ccacs(*pretrained, small_train, small_val, opts);
  save_validated(transferred, cfg.out / "model.json");

  const auto& t = std::get<CcacSModel>(transferred);
  json report;
  report["command"] = "transfer";
  report["kind"] = std::string(kind_name(transferred));
  report["k"] = t.k;
  report["train_size"] = n_train;
  report["val_size"] = n_val;
  report["trainable_parameters"] = transfer_parameter_count(t);
  report["selection"] = selection_report(transferred);
  report["val_ece"] = t.val_ece;
  report["warnings"] = result.warnings;
  report["config"] = to_json(cfg);
  write_json(cfg.out / "report.json", report);
  result.outputs = {"model.json", "report.json", "manifest.json"};
  write_manifest(cfg, result);
  return result;
}

CommandResult run_command(const RunConfig& cfg) {
  if (cfg.command == "synth") return cmd_synth(cfg);
  if (cfg.command == "fit") return cmd_fit(cfg);
  if (cfg.command == "eval") return cmd_eval(cfg);
  if (cfg.command == "transfer") return cmd_transfer(cfg);
  throw InvalidInput("unknown command '" + cfg.command + "'");
}

}  // namespace auxcal::cli
