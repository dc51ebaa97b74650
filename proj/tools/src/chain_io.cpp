#include "chain_io.hpp"

#include <fstream>
#include <string>

#include "cli_error.hpp"

namespace avgmart::cli {
namespace {

int positive_int(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) throw schema_error(key, "required");
  const auto& v = doc.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw schema_error(key, "must be a positive integer");
  }
  return v.get<int>();
}

Eigen::VectorXd number_row(const nlohmann::json& row, int size, const std::string& key) {
  if (!row.is_array() || static_cast<int>(row.size()) != size) {
    throw schema_error(key, "must be an array of " + std::to_string(size) + " numbers");
  }
  Eigen::VectorXd out(size);
  for (int i = 0; i < size; ++i) {
    if (!row[static_cast<std::size_t>(i)].is_number()) throw schema_error(key, "must hold numbers");
    out(i) = row[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

}  // namespace

ChainModel chain_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw schema_error("chain", "must be a JSON object");
  ChainModel chain;
  chain.n_states = positive_int(doc, "n_states");
  chain.N = positive_int(doc, "N");
  const int S = chain.n_states;

  if (!doc.contains("transitions")) throw schema_error("transitions", "required");
  const auto& ts = doc.at("transitions");
  if (!ts.is_array() || static_cast<int>(ts.size()) != chain.N) {
    throw schema_error("transitions", "must hold N matrices");
  }
  for (std::size_t n = 0; n < ts.size(); ++n) {
    const std::string key = "transitions[" + std::to_string(n) + "]";
    if (!ts[n].is_array() || static_cast<int>(ts[n].size()) != S) {
      throw schema_error(key, "must have n_states rows");
    }
    Eigen::MatrixXd P(S, S);
    for (int r = 0; r < S; ++r) {
      P.row(r) = number_row(ts[n][static_cast<std::size_t>(r)], S,
                            key + "[" + std::to_string(r) + "]")
                     .transpose();
    }
    chain.transitions.push_back(std::move(P));
  }

  if (!doc.contains("f")) throw schema_error("f", "required");
  const auto& f = doc.at("f");
  if (!f.is_array() || static_cast<int>(f.size()) != chain.N + 1) {
    throw schema_error("f", "must hold N + 1 rows");
  }
  chain.f.resize(chain.N + 1, S);
  for (int n = 0; n <= chain.N; ++n) {
    chain.f.row(n) =
        number_row(f[static_cast<std::size_t>(n)], S, "f[" + std::to_string(n) + "]").transpose();
  }

  if (!doc.contains("mu0")) throw schema_error("mu0", "required");
  chain.mu0 = number_row(doc.at("mu0"), S, "mu0");

  try {
    validate_chain(chain);
  } catch (const Error& e) {
    throw schema_error("chain", e.what());
  }
  return chain;
}

ChainModel load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CliError(CliErrorKind::FileNotFound, path.string(), "cannot open chain file");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw schema_error(path.string(), e.what());
  }
  return chain_from_json(doc);
}

nlohmann::json chain_to_json(const ChainModel& chain) {
  nlohmann::json doc;
  doc["n_states"] = chain.n_states;
  doc["N"] = chain.N;
  doc["transitions"] = nlohmann::json::array();
  for (const auto& P : chain.transitions) {
    nlohmann::json m = nlohmann::json::array();
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      m.push_back(std::vector<double>(P.row(r).begin(), P.row(r).end()));
    }
    doc["transitions"].push_back(std::move(m));
  }
  doc["f"] = nlohmann::json::array();
  for (Eigen::Index n = 0; n < chain.f.rows(); ++n) {
    doc["f"].push_back(std::vector<double>(chain.f.row(n).begin(), chain.f.row(n).end()));
  }
  doc["mu0"] = std::vector<double>(chain.mu0.begin(), chain.mu0.end());
  return doc;
}

}  // namespace avgmart::cli
