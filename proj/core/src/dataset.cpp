#include "auxcal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "auxcal/error.hpp"
#include "io_util.hpp"

namespace auxcal {

namespace detail {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

}  // namespace detail

namespace {

void check_record(const LogitRecord& r, int k, std::size_t index) {
  if (static_cast<int>(r.logits.size()) != k) {
    throw InvalidInput("record " + std::to_string(index) + " has " +
                       std::to_string(r.logits.size()) + " logits, expected " +
                       std::to_string(k));
  }
  for (double v : r.logits) {
    if (!std::isfinite(v)) {
      throw InvalidInput("record " + std::to_string(index) + " has a non-finite logit");
    }
  }
  if (r.label && (*r.label < 0 || *r.label >= k)) {
    throw InvalidInput("record " + std::to_string(index) + " label " +
                       std::to_string(*r.label) + " out of range");
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

double parse_number(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw ParseError("non-numeric logit '" + std::string(field) + "'", line_no);
  }
  if (!std::isfinite(value)) throw ParseError("non-finite logit", line_no);
  return value;
}

std::optional<int> parse_label(std::string_view field, int k, std::size_t line_no) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError("invalid label '" + std::string(field) + "'", line_no);
  }
  if (value == -1) return std::nullopt;
  if (value < 0 || value >= k) {
    throw ParseError("label " + std::to_string(value) + " out of range", line_no);
  }
  return value;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find('\n', start);
    auto line = text.substr(start, pos == std::string_view::npos ? text.size() - start
                                                                  : pos - start);
    ++line_no;
    fn(trim(line), line_no);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
}

}  // namespace

CalibrationDataset::CalibrationDataset(int k, std::vector<LogitRecord> records)
    : k_(k), records_(std::move(records)) {
  if (k_ < 2) throw InvalidInput("class count must be at least 2");
  for (std::size_t i = 0; i < records_.size(); ++i) check_record(records_[i], k_, i);
}

std::vector<double> softmax(std::span<const double> z) {
  if (z.empty()) throw InvalidInput("softmax of an empty vector");
  double max = z[0];
  for (double v : z) {
    if (!std::isfinite(v)) throw InvalidInput("softmax of a non-finite vector");
    max = std::max(max, v);
  }
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - max);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Prediction predict(std::span<const double> z) {
  auto p = softmax(z);
  // max_element returns the first maximum, which is the lowest-index tie-break.
  auto it = std::max_element(z.begin(), z.end());
  int label = static_cast<int>(it - z.begin());
  return {label, p[static_cast<std::size_t>(label)]};
}

std::vector<AuxLabeledRecord> assign_aux_labels(const CalibrationDataset& ds) {
  const int k = ds.k();
  std::vector<AuxLabeledRecord> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records()) {
    AuxLabeledRecord a;
    a.logits = r.logits;
    const int predicted = predict(r.logits).label;
    a.aux_label = (r.label && *r.label == predicted) ? predicted : k;
    a.one_hot.assign(static_cast<std::size_t>(k) + 1, 0.0);
    a.one_hot[static_cast<std::size_t>(a.aux_label)] = 1.0;
    out.push_back(std::move(a));
  }
  return out;
}

Split split(const CalibrationDataset& ds, const SplitSpec& spec) {
  for (double f : {spec.train_fraction, spec.val_fraction, spec.test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidInput("split fractions must lie in [0, 1]");
  }
  if (std::abs(spec.train_fraction + spec.val_fraction + spec.test_fraction - 1.0) > 1e-9) {
    throw InvalidInput("split fractions must sum to 1");
  }
  if (ds.empty()) throw InvalidInput("cannot split an empty dataset");

  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }

  auto count = [n](double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
  };
  const std::size_t n_val = count(spec.val_fraction);
  const std::size_t n_test = count(spec.test_fraction);
  const std::size_t n_train = n - n_val - n_test;

  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<LogitRecord> part;
    part.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) part.push_back(ds[order[i]]);
    return CalibrationDataset(ds.k(), std::move(part));
  };
  return {take(0, n_train), take(n_train, n_train + n_val), take(n_train + n_val, n)};
}

Eigen::MatrixXd logit_matrix(const CalibrationDataset& ds) {
  Eigen::MatrixXd m(ds.k(), static_cast<Eigen::Index>(ds.size()));
  for (std::size_t j = 0; j < ds.size(); ++j) {
    m.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXd>(ds[j].logits.data(), ds.k());
  }
  return m;
}

double target_accuracy(const CalibrationDataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : ds.records()) {
    if (r.label && predict(r.logits).label == *r.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".csv") return DatasetFormat::kCsv;
  if (ext == ".jsonl") return DatasetFormat::kJsonl;
  throw InvalidInput("cannot infer dataset format from '" + path.string() +
                     "' (expected .csv or .jsonl)");
}

CalibrationDataset parse_csv(std::string_view text) {
  int k = 0;
  std::vector<LogitRecord> records;
  bool have_header = false;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    auto fields = split_fields(line);
    if (!have_header) {
      if (fields.size() < 3 || fields.back() != "label") {
        throw ParseError("header must be logit_0,...,logit_{K-1},label with K >= 2", line_no);
      }
      for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
        if (fields[i] != "logit_" + std::to_string(i)) {
          throw ParseError("unexpected header column '" + std::string(fields[i]) + "'",
                           line_no);
        }
      }
      k = static_cast<int>(fields.size()) - 1;
      have_header = true;
      return;
    }
    if (fields.size() != static_cast<std::size_t>(k) + 1) {
      throw ParseError("expected " + std::to_string(k + 1) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    LogitRecord r;
    r.logits.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) r.logits.push_back(parse_number(fields[static_cast<std::size_t>(i)], line_no));
    r.label = parse_label(fields.back(), k, line_no);
    records.push_back(std::move(r));
  });
  if (!have_header) throw ParseError("missing CSV header");
  return CalibrationDataset(k, std::move(records));
}

CalibrationDataset parse_jsonl(std::string_view text) {
  int k = 0;
  std::vector<LogitRecord> records;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object() || !obj.contains("logits") || !obj["logits"].is_array() ||
        !obj.contains("label")) {
      throw ParseError("expected an object with 'logits' and 'label'", line_no);
    }
    const auto& logits = obj["logits"];
    if (k == 0) {
      k = static_cast<int>(logits.size());
      if (k < 2) throw ParseError("need at least 2 logits", line_no);
    }
    if (logits.size() != static_cast<std::size_t>(k)) {
      throw ParseError("expected " + std::to_string(k) + " logits, found " +
                           std::to_string(logits.size()),
                       line_no);
    }
    LogitRecord r;
    for (const auto& v : logits) {
      if (!v.is_number()) throw ParseError("non-numeric logit", line_no);
      double d = v.get<double>();
      if (!std::isfinite(d)) throw ParseError("non-finite logit", line_no);
      r.logits.push_back(d);
    }
    const auto& label = obj["label"];
    if (label.is_null()) {
      r.label = std::nullopt;
    } else if (label.is_number_integer()) {
      auto v = label.get<long long>();
      if (v == -1) {
        r.label = std::nullopt;
      } else if (v < 0 || v >= k) {
        throw ParseError("label " + std::to_string(v) + " out of range", line_no);
      } else {
        r.label = static_cast<int>(v);
      }
    } else {
      throw ParseError("label must be an integer or null", line_no);
    }
    records.push_back(std::move(r));
  });
  if (k == 0) throw ParseError("empty JSONL input; class count cannot be inferred");
  return CalibrationDataset(k, std::move(records));
}

std::string to_csv(const CalibrationDataset& ds) {
  std::string out;
  for (int i = 0; i < ds.k(); ++i) out += "logit_" + std::to_string(i) + ",";
  out += "label\n";
  for (const auto& r : ds.records()) {
    for (double v : r.logits) {
      out += detail::format_double(v);
      out += ',';
    }
    out += r.label ? std::to_string(*r.label) : "-1";
    out += '\n';
  }
  return out;
}

std::string to_jsonl(const CalibrationDataset& ds) {
  std::string out;
  for (const auto& r : ds.records()) {
    nlohmann::json obj;
    obj["logits"] = r.logits;
    obj["label"] = r.label ? nlohmann::json(*r.label) : nlohmann::json(nullptr);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

CalibrationDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const auto text = detail::read_text_file(path);
  return format == DatasetFormat::kCsv ? parse_csv(text) : parse_jsonl(text);
}

CalibrationDataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, format_from_path(path));
}

void write_dataset(const CalibrationDataset& ds, const std::filesystem::path& path,
                   DatasetFormat format) {
  detail::write_text_file(path, format == DatasetFormat::kCsv ? to_csv(ds) : to_jsonl(ds));
}

void write_dataset(const CalibrationDataset& ds, const std::filesystem::path& path) {
  write_dataset(ds, path, format_from_path(path));
}

}  // namespace auxcal
