#include "config.hpp"

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "chain_io.hpp"
#include "cli_error.hpp"
#include "digest.hpp"

namespace avgmart::cli {
namespace {

using nlohmann::json;

const std::set<std::string> kCommonKeys = {"kind", "master_seed", "n_paths", "dt",   "t0",
                                           "T",    "threads",     "output_dir", "tolerances"};

std::set<std::string> kind_keys(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return {"model", "x0", "rows", "sample_paths"};
    case ExperimentKind::Decompose: return {"model", "x0", "observable"};
    case ExperimentKind::Chain: return {"chain_file"};
    case ExperimentKind::Concentration: return {"model", "x0", "observable", "n_R", "R_max"};
    case ExperimentKind::Averaging: return {"preset", "params", "x0_minus_y0"};
    case ExperimentKind::Report: return {};
  }
  return {};
}

std::set<std::string> tolerance_names(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return {"z"};
    case ExperimentKind::Decompose: return {"z", "residual_dt_factor", "quadrature_rel"};
    case ExperimentKind::Chain: return {"exact"};
    case ExperimentKind::Concentration: return {"ci_z"};
    case ExperimentKind::Averaging: return {"z", "dt_factor"};
    case ExperimentKind::Report: return {};
  }
  return {};
}

double number(const json& obj, const std::string& key, const std::string& path,
              std::optional<double> fallback = std::nullopt) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw schema_error(path, "required");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) throw schema_error(path, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw schema_error(path, "must be finite");
  return x;
}

std::size_t count(const json& obj, const std::string& key, std::size_t fallback, std::size_t min) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
    throw schema_error(key, "must be an integer >= " + std::to_string(min));
  }
  return v.get<std::size_t>();
}

Eigen::VectorXd vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw schema_error(path, "must be an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw schema_error(path, "must be an array of numbers");
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

Eigen::MatrixXd matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw schema_error(path, "must be a non-empty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const Eigen::VectorXd row = vector(v[r], path);
    if (static_cast<std::size_t>(row.size()) != cols) throw schema_error(path, "rows differ in length");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw schema_error(prefix + key, "unknown key");
  }
}

LinearModel parse_model(const json& doc) {
  if (!doc.contains("model")) throw schema_error("model", "required");
  const json& m = doc.at("model");
  if (!m.is_object() || !m.contains("type") || !m.at("type").is_string()) {
    throw schema_error("model.type", "required string");
  }
  const std::string type = m.at("type").get<std::string>();
  try {
    if (type == "ou") {
      only_keys(m, {"type", "kappa", "sigma"}, "model.");
      return make_ou(number(m, "kappa", "model.kappa"), number(m, "sigma", "model.sigma"));
    }
    if (type == "two_timescale") {
      only_keys(m, {"type", "alpha", "kappaX", "kappaY", "sigmaX", "sigmaY"}, "model.");
      TwoTimescaleParams p;
      p.alpha = number(m, "alpha", "model.alpha");
      p.kappaX = number(m, "kappaX", "model.kappaX");
      p.kappaY = number(m, "kappaY", "model.kappaY");
      p.sigmaX = number(m, "sigmaX", "model.sigmaX");
      p.sigmaY = number(m, "sigmaY", "model.sigmaY");
      return two_timescale_model(p);
    }
    if (type == "linear_ab") {
      only_keys(m, {"type", "alpha", "beta"}, "model.");
      return make_linear_ab(number(m, "alpha", "model.alpha"), number(m, "beta", "model.beta"));
    }
    if (type == "linear") {
      only_keys(m, {"type", "A", "Sigma", "labels"}, "model.");
      if (!m.contains("A")) throw schema_error("model.A", "required");
      if (!m.contains("Sigma")) throw schema_error("model.Sigma", "required");
      std::vector<std::string> labels;
      if (m.contains("labels")) {
        if (!m.at("labels").is_array()) throw schema_error("model.labels", "must be strings");
        for (const auto& l : m.at("labels")) {
          if (!l.is_string()) throw schema_error("model.labels", "must be strings");
          labels.push_back(l.get<std::string>());
        }
      }
      return make_linear_model(matrix(m.at("A"), "model.A"), matrix(m.at("Sigma"), "model.Sigma"),
                               std::move(labels));
    }
  } catch (const Error& e) {
    throw schema_error("model", e.what());
  }
  throw schema_error("model.type", "unknown model type '" + type + "'");
}

Eigen::VectorXd parse_x0(const json& doc, Eigen::Index dim) {
  if (!doc.contains("x0")) return Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd x0 = vector(doc.at("x0"), "x0");
  if (x0.size() != dim) throw schema_error("x0", "length must match the model dimension");
  return x0;
}

std::pair<Eigen::VectorXd, double> parse_observable(const json& doc, Eigen::Index dim) {
  Eigen::VectorXd w = Eigen::VectorXd::Unit(dim, 0);
  double c = 0.0;
  if (doc.contains("observable")) {
    const json& o = doc.at("observable");
    if (!o.is_object()) throw schema_error("observable", "must be an object");
    only_keys(o, {"weight", "offset"}, "observable.");
    if (o.contains("weight")) w = vector(o.at("weight"), "observable.weight");
    c = number(o, "offset", "observable.offset", 0.0);
  }
  if (w.size() != dim) throw schema_error("observable.weight", "length must match the model dimension");
  return {w, c};
}

TwoTimescaleParams parse_averaging_params(const json& doc) {
  TwoTimescaleParams p;  // unit preset
  std::string preset = "unit";
  if (doc.contains("preset")) {
    if (!doc.at("preset").is_string()) throw schema_error("preset", "must be a string");
    preset = doc.at("preset").get<std::string>();
    if (preset != "unit" && preset != "alpha_only") {
      throw schema_error("preset", "must be 'unit' or 'alpha_only'");
    }
  }
  if (doc.contains("params")) {
    const json& q = doc.at("params");
    if (!q.is_object()) throw schema_error("params", "must be an object");
    if (preset == "alpha_only") {
      only_keys(q, {"alpha"}, "params.");
    } else {
      only_keys(q, {"alpha", "kappaX", "kappaY", "sigmaX", "sigmaY"}, "params.");
    }
    p.alpha = number(q, "alpha", "params.alpha", p.alpha);
    p.kappaX = number(q, "kappaX", "params.kappaX", p.kappaX);
    p.kappaY = number(q, "kappaY", "params.kappaY", p.kappaY);
    p.sigmaX = number(q, "sigmaX", "params.sigmaX", p.sigmaX);
    p.sigmaY = number(q, "sigmaY", "params.sigmaY", p.sigmaY);
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw schema_error("params", e.what());
  }
  return p;
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::Decompose: return "decompose";
    case ExperimentKind::Chain: return "chain";
    case ExperimentKind::Concentration: return "concentration";
    case ExperimentKind::Averaging: return "averaging";
    case ExperimentKind::Report: return "report";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
  for (auto kind : {ExperimentKind::Simulate, ExperimentKind::Decompose, ExperimentKind::Chain,
                    ExperimentKind::Concentration, ExperimentKind::Averaging,
                    ExperimentKind::Report}) {
    if (name == to_string(kind)) return kind;
  }
  throw CliError(CliErrorKind::UnknownKind, name, "not an experiment kind");
}

ExperimentConfig config_from_json(const json& doc, std::optional<ExperimentKind> kind,
                                  const ConfigOverrides& overrides,
                                  const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw schema_error("config", "must be a JSON object");
  ExperimentConfig cfg;

  if (doc.contains("kind")) {
    if (!doc.at("kind").is_string()) throw schema_error("kind", "must be a string");
    const ExperimentKind in_file = parse_kind(doc.at("kind").get<std::string>());
    if (kind && *kind != in_file) throw schema_error("kind", "disagrees with the command line");
    kind = in_file;
  }
  if (!kind) throw schema_error("kind", "required");
  cfg.kind = *kind;

  std::set<std::string> allowed = kCommonKeys;
  for (const auto& k : kind_keys(cfg.kind)) allowed.insert(k);
  only_keys(doc, allowed, "");

  if (overrides.master_seed) {
    cfg.master_seed = *overrides.master_seed;
  } else {
    if (!doc.contains("master_seed")) throw schema_error("master_seed", "required");
    const auto& s = doc.at("master_seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw schema_error("master_seed", "must be a non-negative integer");
    }
    cfg.master_seed = s.get<std::uint64_t>();
  }

  cfg.n_paths = overrides.n_paths ? *overrides.n_paths : count(doc, "n_paths", 10000, 1);
  if (cfg.n_paths < 1) throw schema_error("n_paths", "must be >= 1");
  cfg.dt = overrides.dt ? *overrides.dt : number(doc, "dt", "dt", 1e-3);
  if (!(cfg.dt > 0.0)) throw schema_error("dt", "must be > 0");
  cfg.t0 = number(doc, "t0", "t0", 0.0);
  cfg.T = number(doc, "T", "T", 1.0);
  if (!(cfg.T > cfg.t0)) throw schema_error("T", "must exceed t0");
  if (cfg.dt > cfg.T - cfg.t0) throw schema_error("dt", "must not exceed T - t0");
  cfg.threads = static_cast<unsigned>(count(doc, "threads", 0, 0));

  if (overrides.output_dir) {
    cfg.output_dir = *overrides.output_dir;
  } else if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) throw schema_error("output_dir", "must be a string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  } else {
    cfg.output_dir = std::filesystem::path("avgmart-out") / to_string(cfg.kind);
  }

  if (doc.contains("tolerances")) {
    const json& t = doc.at("tolerances");
    if (!t.is_object()) throw schema_error("tolerances", "must be an object");
    const auto names = tolerance_names(cfg.kind);
    for (const auto& [name, value] : t.items()) {
      if (!names.count(name)) throw schema_error("tolerances." + name, "unknown tolerance");
      const double v = number(t, name, "tolerances." + name);
      if (!(v > 0.0)) throw schema_error("tolerances." + name, "must be > 0");
      cfg.tolerances[name] = v;
    }
  }

  switch (cfg.kind) {
    case ExperimentKind::Simulate: {
      SimulateSettings s{parse_model(doc), {}, count(doc, "rows", 100, 1),
                         count(doc, "sample_paths", 5, 0)};
      s.x0 = parse_x0(doc, s.model.dim());
      cfg.settings = std::move(s);
      break;
    }
    case ExperimentKind::Decompose: {
      DecomposeSettings s;
      s.model = parse_model(doc);
      s.x0 = parse_x0(doc, s.model.dim());
      std::tie(s.weight, s.offset) = parse_observable(doc, s.model.dim());
      cfg.settings = std::move(s);
      break;
    }
    case ExperimentKind::Chain: {
      if (!doc.contains("chain_file") || !doc.at("chain_file").is_string()) {
        throw schema_error("chain_file", "required string");
      }
      ChainSettings s;
      s.chain_file = doc.at("chain_file").get<std::string>();
      if (s.chain_file.is_relative()) s.chain_file = base_dir / s.chain_file;
      s.chain = load_chain(s.chain_file);
      cfg.settings = std::move(s);
      break;
    }
    case ExperimentKind::Concentration: {
      ConcentrationSettings s;
      s.model = parse_model(doc);
      s.x0 = parse_x0(doc, s.model.dim());
      double offset = 0.0;
      std::tie(s.weight, offset) = parse_observable(doc, s.model.dim());
      s.n_R = count(doc, "n_R", 20, 1);
      if (doc.contains("R_max")) {
        s.R_max = number(doc, "R_max", "R_max");
        if (!(*s.R_max > 0.0)) throw schema_error("R_max", "must be > 0");
      }
      cfg.settings = std::move(s);
      break;
    }
    case ExperimentKind::Averaging: {
      AveragingSettings s;
      s.params = parse_averaging_params(doc);
      s.x0_minus_y0 = number(doc, "x0_minus_y0", "x0_minus_y0", 2.0);
      cfg.settings = s;
      break;
    }
    case ExperimentKind::Report:
      cfg.settings = ReportSettings{};
      break;
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path,
                              std::optional<ExperimentKind> kind,
                              const ConfigOverrides& overrides) {
  if (!std::filesystem::is_regular_file(path)) {
    throw CliError(CliErrorKind::FileNotFound, path.string(), "config file not found");
  }
  const std::string bytes = read_file(path);
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw schema_error("config", e.what());
  }
  ExperimentConfig cfg = config_from_json(doc, kind, overrides, path.parent_path());
  cfg.config_path = path;
  cfg.config_sha256 = sha256_hex(bytes);
  return cfg;
}

}  // namespace avgmart::cli
