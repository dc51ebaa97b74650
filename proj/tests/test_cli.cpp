#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "chain_io.hpp"
#include "cli_error.hpp"
#include "config.hpp"
#include "digest.hpp"
#include "experiments.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
using namespace avgmart;
using namespace avgmart::cli;
using nlohmann::json;

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / (stem + "-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::permissions(path_, fs::perms::owner_all, fs::perm_options::add, ec);
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

  fs::path write(const std::string& name, const json& doc) const {
    const fs::path p = path_ / name;
    std::ofstream(p) << doc.dump(2);
    return p;
  }

 private:
  fs::path path_;
};

std::optional<CliErrorKind> cli_error_kind(const std::function<void()>& fn, std::string* subject = nullptr) {
  try {
    fn();
  } catch (const CliError& e) {
    if (subject) *subject = e.subject();
    return e.kind();
  }
  return std::nullopt;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string("\"") + AVGMART_TOOL_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST(Config, MinimalAveragingDefaults) {
  TempDir dir("avgmart-cfg");
  const auto path = dir.write("a.json", json{{"kind", "averaging"}, {"master_seed", 7}});
  const ExperimentConfig cfg = parse_config(path);
  EXPECT_EQ(cfg.kind, ExperimentKind::Averaging);
  EXPECT_EQ(cfg.dt, 1e-3);
  EXPECT_EQ(cfg.n_paths, 10000u);
  EXPECT_EQ(cfg.T, 1.0);
  EXPECT_EQ(cfg.master_seed, 7u);
  EXPECT_EQ(cfg.config_sha256.size(), 64u);
  const auto& s = std::get<AveragingSettings>(cfg.settings);
  EXPECT_EQ(s.params.alpha, 1.0);
  EXPECT_EQ(s.x0_minus_y0, 2.0);
}

TEST(Config, OverridesTakePrecedence) {
  TempDir dir("avgmart-cfg");
  const auto path = dir.write("a.json", json{{"kind", "averaging"}, {"master_seed", 7}, {"n_paths", 50}});
  const ExperimentConfig cfg =
      parse_config(path, ExperimentKind::Averaging, ConfigOverrides{dir.path() / "o", 12, 0.01, 99});
  EXPECT_EQ(cfg.n_paths, 12u);
  EXPECT_EQ(cfg.dt, 0.01);
  EXPECT_EQ(cfg.master_seed, 99u);
  EXPECT_EQ(cfg.output_dir, dir.path() / "o");
}

TEST(Config, SchemaErrorsNameTheKey) {
  TempDir dir("avgmart-cfg");
  std::string subject;
  const auto no_seed = dir.write("a.json", json{{"kind", "averaging"}});
  EXPECT_EQ(cli_error_kind([&] { parse_config(no_seed); }, &subject), CliErrorKind::SchemaError);
  EXPECT_EQ(subject, "master_seed");
  const auto extra = dir.write("b.json", json{{"kind", "averaging"}, {"master_seed", 1}, {"bogus", 1}});
  EXPECT_EQ(cli_error_kind([&] { parse_config(extra); }, &subject), CliErrorKind::SchemaError);
  EXPECT_EQ(subject, "bogus");
  const auto bad_tol = dir.write(
      "c.json", json{{"kind", "chain"}, {"master_seed", 1}, {"tolerances", {{"z", 3}}}, {"chain_file", "x"}});
  EXPECT_EQ(cli_error_kind([&] { parse_config(bad_tol); }, &subject), CliErrorKind::SchemaError);
  EXPECT_EQ(subject, "tolerances.z");
  const auto mismatch = dir.write("d.json", json{{"kind", "chain"}, {"master_seed", 1}});
  EXPECT_EQ(cli_error_kind([&] { parse_config(mismatch, ExperimentKind::Averaging); }),
            CliErrorKind::SchemaError);
}

TEST(Config, UnknownKindAndMissingFile) {
  std::string subject;
  EXPECT_EQ(cli_error_kind([&] { parse_kind("frobnicate"); }, &subject), CliErrorKind::UnknownKind);
  EXPECT_EQ(subject, "frobnicate");
  for (const char* k : {"simulate", "decompose", "chain", "concentration", "averaging", "report"}) {
    EXPECT_STREQ(to_string(parse_kind(k)), k);
  }
  EXPECT_EQ(cli_error_kind([] { parse_config("/nonexistent/avgmart.json"); }), CliErrorKind::FileNotFound);
}

TEST(ChainJson, RoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const ChainModel c = oracle::random_chain(rng, 3, 4);
    const ChainModel back = chain_from_json(chain_to_json(c));
    EXPECT_EQ(back.n_states, c.n_states);
    EXPECT_EQ(back.N, c.N);
    EXPECT_EQ(back.f, c.f);
    EXPECT_EQ(back.mu0, c.mu0);
    for (std::size_t n = 0; n < c.transitions.size(); ++n) EXPECT_EQ(back.transitions[n], c.transitions[n]);
  }
  const ChainModel c = oracle::random_chain(rng, 3, 4);
  json broken = chain_to_json(c);
  broken["mu0"] = std::vector<double>(static_cast<std::size_t>(c.n_states) + 1, 0.1);
  std::string subject;
  EXPECT_EQ(cli_error_kind([&] { chain_from_json(broken); }, &subject), CliErrorKind::SchemaError);
  EXPECT_EQ(subject, "mu0");
}

TEST(Outputs, UnwritableDirectoryIsIoError) {
  TempDir dir("avgmart-io");
  const fs::path blocker = dir.path() / "file";
  std::ofstream(blocker) << "x";
  RunResults results;
  results.tables.push_back(Table{"t.csv", {"a"}, {{1.0}}});
  std::string subject;
  EXPECT_EQ(cli_error_kind([&] { write_outputs(results, blocker / "sub"); }, &subject),
            CliErrorKind::IoError);
  EXPECT_NE(subject.find(blocker.string()), std::string::npos);
}

TEST(Outputs, NumberFormatRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345.0}) {
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
  Table t{"t.csv", {"a", "b", "c"}, {{1.5, std::int64_t{2}, std::string("pass")}}};
  EXPECT_EQ(render_csv(t), "a,b,c\r\n1.5,2,pass\r\n");
}

TEST(Run, ChainConfigPassesEveryRow) {
  TempDir dir("avgmart-chain");
  const ExperimentConfig cfg = parse_config(fs::path(AVGMART_CONFIG_DIR) / "chain.json", std::nullopt,
                                            ConfigOverrides{dir.path(), {}, {}, {}});
  const RunManifest m = dispatch(cfg);
  EXPECT_TRUE(m.all_pass);
  const auto rows = read_csv(dir.path() / "chain_qv.csv");
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows[0].back(), "qv_check");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].back(), "pass");
  EXPECT_TRUE(fs::exists(dir.path() / "manifest.json"));
}

TEST(Run, AveragingColumns) {
  TempDir dir("avgmart-avg");
  const ExperimentConfig cfg = parse_config(fs::path(AVGMART_CONFIG_DIR) / "averaging.json", std::nullopt,
                                            ConfigOverrides{dir.path(), 400, 0.01, {}});
  dispatch(cfg);
  const auto rows = read_csv(dir.path() / "averaging.csv");
  ASSERT_GE(rows.size(), 3u);
  const std::vector<std::string> header = {"quantity", "formula", "variantA_formula", "variantB_formula",
                                           "bound", "mc_estimate", "mc_se", "matched_variant"};
  EXPECT_EQ(rows[0], header);
  EXPECT_EQ(rows[1][0], "y_mse");
  EXPECT_NEAR(std::stod(rows[1][3]), 0.0951891, 1e-7);
  EXPECT_NEAR(std::stod(rows[1][2]), 0.0109956, 1e-7);
  EXPECT_TRUE(fs::exists(dir.path() / "time_average.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "h_kernel.dat"));
}

TEST(Run, ConcentrationTailColumns) {
  TempDir dir("avgmart-conc");
  const ExperimentConfig cfg = parse_config(fs::path(AVGMART_CONFIG_DIR) / "concentration.json",
                                            std::nullopt, ConfigOverrides{dir.path(), 200, 0.01, {}});
  dispatch(cfg);
  const auto rows = read_csv(dir.path() / "tail.csv");
  ASSERT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"R", "bound", "empirical", "ci_low", "ci_high"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(std::stod(rows[i][3]), std::stod(rows[i][2]));
    EXPECT_GE(std::stod(rows[i][4]), std::stod(rows[i][2]));
  }
}

TEST(Run, SameSeedSameBytes) {
  TempDir a("avgmart-rep"), b("avgmart-rep");
  const fs::path config = fs::path(AVGMART_CONFIG_DIR) / "decompose.json";
  const RunManifest ma = dispatch(parse_config(config, std::nullopt, ConfigOverrides{a.path(), 50, 0.01, {}}));
  const RunManifest mb = dispatch(parse_config(config, std::nullopt, ConfigOverrides{b.path(), 50, 0.01, {}}));
  ASSERT_EQ(ma.files.size(), mb.files.size());
  for (std::size_t i = 0; i < ma.files.size(); ++i) {
    EXPECT_EQ(ma.files[i].name, mb.files[i].name);
    EXPECT_EQ(ma.files[i].sha256, mb.files[i].sha256);
    EXPECT_EQ(read_file(a.path() / ma.files[i].name), read_file(b.path() / mb.files[i].name));
  }
  const RunManifest mc = dispatch(parse_config(config, std::nullopt, ConfigOverrides{a.path(), 50, 0.01, 12345}));
  bool any_differs = false;
  for (std::size_t i = 0; i < ma.files.size(); ++i) any_differs |= ma.files[i].sha256 != mc.files[i].sha256;
  EXPECT_TRUE(any_differs);
}

TEST(Digest, KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Binary, ExitCodes) {
  TempDir dir("avgmart-bin");
  const std::string out = " --out \"" + dir.path().string() + "\"";
  const std::string configs = AVGMART_CONFIG_DIR;
  EXPECT_EQ(run_tool("frobnicate --config \"" + configs + "/chain.json\"" + out), 2);
  EXPECT_EQ(run_tool("chain --config /nonexistent.json" + out), 2);
  EXPECT_EQ(run_tool("chain" + out), 2);
  EXPECT_EQ(run_tool("chain --config \"" + configs + "/chain.json\"" + out), 0);
  EXPECT_EQ(run_tool("report --config \"" + configs + "/report.json\"" + out), 0);
  const fs::path blocker = dir.path() / "blocker";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(run_tool("chain --config \"" + configs + "/chain.json\" --out \"" + (blocker / "x").string() + "\""), 3);
}

}  // namespace
