#include "auxcal/model_io.hpp"

#include "auxcal/error.hpp"
#include "io_util.hpp"
#include "json_codec.hpp"

namespace auxcal {
namespace {

using nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

json selection_json(const LossConfig& loss, ConfidenceRule rule, double val_ece) {
  return {{"lambda1", loss.lambda1},
          {"lambda2", loss.lambda2},
          {"rule", std::string(to_string(rule))},
          {"val_ece", val_ece}};
}

}  // namespace

std::string model_to_json(const CalibratorModel& m) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = std::string(kind_name(m));
  j["k"] = class_count(m);
  std::visit(overloaded{
                 [&](const MaxProbModel&) {
                   j["params"] = json::object();
                   j["selection"] = json::object();
                 },
                 [&](const TemperatureModel& t) {
                   j["params"] = {{"temperature", t.temperature}};
                   j["selection"] = json::object();
                 },
                 [&](const ScalingBinningModel& s) {
                   j["params"] = {{"temperature", s.temperature},
                                  {"bin_edges", s.bin_edges},
                                  {"bin_values", s.bin_values}};
                   j["selection"] = {{"bins", s.bin_values.size()}};
                 },
                 [&](const DirichletModel& d) {
                   j["params"] = {{"weights", row_major(d.weights)},
                                  {"bias", std::vector<double>(d.bias.data(), d.bias.data() + d.bias.size())},
                                  {"rho", d.rho}};
                   j["selection"] = {{"rho", d.rho}, {"val_ece", d.val_ece}};
                 },
                 [&](const CcacModel& c) {
                   j["params"] = {{"net", detail::net_to_json_value(c.net)},
                                  {"loss", detail::loss_to_json_value(c.loss)},
                                  {"rule", std::string(to_string(c.rule))}};
                   j["selection"] = selection_json(c.loss, c.rule, c.val_ece);
                 },
                 [&](const CcacSModel& c) {
                   j["params"] = {{"temperature", c.temperature},
                                  {"aux_net", detail::net_to_json_value(c.aux_net)},
                                  {"loss", detail::loss_to_json_value(c.loss)},
                                  {"rule", std::string(to_string(c.rule))}};
                   j["selection"] = selection_json(c.loss, c.rule, c.val_ece);
                 },
             },
             m);
  return j.dump(2) + "\n";
}

CalibratorModel model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
  try {
    if (detail::require(j, "format_version").get<int>() != kModelFormatVersion) {
      throw ParseError("unsupported model format version");
    }
    const auto kind = detail::require(j, "kind").get<std::string>();
    const int k = detail::require(j, "k").get<int>();
    if (k < 2) throw ParseError("model class count must be at least 2");
    const auto& params = detail::require(j, "params");
    const auto& selection = detail::require(j, "selection");
    auto positive_temperature = [&]() {
      const double t = detail::require(params, "temperature").get<double>();
      if (!(t > 0.0)) throw ModelError("temperature must be positive");
      return t;
    };

    if (kind == "mp") return MaxProbModel{k};
    if (kind == "ts") return TemperatureModel{k, positive_temperature()};
    if (kind == "sb") {
      ScalingBinningModel s{k, positive_temperature(),
                            detail::require(params, "bin_edges").get<std::vector<double>>(),
                            detail::require(params, "bin_values").get<std::vector<double>>()};
      if (s.bin_values.empty() || s.bin_edges.size() != s.bin_values.size() + 1) {
        throw ModelError("scaling-binning edges and values disagree");
      }
      return s;
    }
    if (kind == "dirichlet") {
      const auto w = detail::require(params, "weights").get<std::vector<double>>();
      const auto b = detail::require(params, "bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(k) ||
          b.size() != static_cast<std::size_t>(k)) {
        throw ModelError("Dirichlet parameters do not match K");
      }
      DirichletModel d;
      d.weights.resize(k, k);
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) d.weights(r, c) = w[static_cast<std::size_t>(r * k + c)];
      }
      d.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), k);
      d.rho = detail::require(params, "rho").get<double>();
      d.val_ece = selection.value("val_ece", 0.0);
      return d;
    }
    if (kind == "ccac") {
      CcacModel c;
      c.k = k;
      c.net = detail::net_from_json_value(detail::require(params, "net"));
      c.loss = detail::loss_from_json_value(detail::require(params, "loss"));
      c.rule = rule_from_string(detail::require(params, "rule").get<std::string>());
      c.val_ece = selection.value("val_ece", 0.0);
      if (c.net.input_dim() != k || c.net.output_dim() != k + 1) {
        throw ModelError("CCAC net must map K inputs to K+1 outputs");
      }
      return c;
    }
    if (kind == "ccac-s" || kind == "ccac-t") {
      CcacSModel c;
      c.k = k;
      c.temperature = positive_temperature();
      c.aux_net = detail::net_from_json_value(detail::require(params, "aux_net"));
      c.loss = detail::loss_from_json_value(detail::require(params, "loss"));
      c.rule = rule_from_string(detail::require(params, "rule").get<std::string>());
      c.val_ece = selection.value("val_ece", 0.0);
      c.transferred = kind == "ccac-t";
      if (c.aux_net.input_dim() != k || c.aux_net.output_dim() != 1) {
        throw ModelError("CCAC-S auxiliary net must map K inputs to one output");
      }
      return c;
    }
    throw ParseError("unknown calibrator kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
}

void save_model(const CalibratorModel& m, const std::filesystem::path& path) {
  detail::write_text_file(path, model_to_json(m));
}

CalibratorModel load_model(const std::filesystem::path& path) {
  return model_from_json(detail::read_text_file(path));
}

}  // namespace auxcal
