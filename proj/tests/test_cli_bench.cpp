#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "fednorm/bench/cost_report.hpp"
#include "fednorm/bench/precision_report.hpp"
#include "fednorm/core/csv.hpp"
#include "fednorm/protocols/session.hpp"

namespace fednorm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- cost report ---------------------------------------------------------------

json run_result(protocols::ProtocolKind kind, int P, std::vector<double> v_abs = {1.0}) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(P));
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<FeatureTable> t;
  for (int p = 0; p < P; ++p) {
    FeatureTable ft({"a", "b"});
    for (int r = 0; r < 6; ++r) ft.append_row(std::vector<double>{u(rng), u(rng)});
    t.push_back(std::move(ft));
  }
  protocols::SessionConfig c;
  c.protocol = kind;
  c.backend = he::BackendKind::kSimulated;
  c.v_abs = std::move(v_abs);
  c.seed = 3;
  if (kind == protocols::ProtocolKind::kKth) c.kth.q = 50;
  return protocols::run_session(c, t).result;
}

const bench::CostRow& row(const bench::CostReport& r, const std::string& metric) {
  for (const auto& x : r.rows) {
    if (x.metric == metric) return x;
  }
  throw std::runtime_error("no row " + metric);
}

TEST(IterationBound, Examples) {
  EXPECT_EQ(bench::kth_iteration_bound(1024, 1), 11u);
  EXPECT_EQ(bench::kth_iteration_bound(std::exp2(20), 1e-4), 35u);
  EXPECT_EQ(bench::kth_iteration_bound(0.5, 1), 0u);
}

TEST(CostReport, ZScoreTenParties) {
  const auto rep = bench::cost_report(run_result(protocols::ProtocolKind::kZScore, 10));
  EXPECT_EQ(row(rep, "ct_uploads").measured, 30u);
  EXPECT_EQ(row(rep, "ct_uploads").predicted, 30u);
  EXPECT_EQ(row(rep, "explicit_bootstraps").measured, 1u);
  EXPECT_TRUE(rep.pass());
}

TEST(CostReport, MinMaxTenParties) {
  const auto rep = bench::cost_report(run_result(protocols::ProtocolKind::kMinMax, 10));
  EXPECT_EQ(row(rep, "explicit_bootstraps").measured, 18u);
  EXPECT_EQ(row(rep, "ct_uploads").measured, 20u);
  EXPECT_EQ(row(rep, "cdecrypts").measured, 2u);
  EXPECT_TRUE(rep.pass());
}

TEST(CostReport, RobustAndKthPass) {
  for (auto kind : {protocols::ProtocolKind::kRobust, protocols::ProtocolKind::kKth}) {
    const auto rep = bench::cost_report(run_result(kind, 4));
    for (const auto& r : rep.rows) {
      EXPECT_TRUE(r.pass()) << r.metric;
      if (r.exact) {
        EXPECT_EQ(r.measured, r.predicted) << r.metric;
      }
    }
  }
}

TEST(CostReport, FlagsExcessAsFail) {
  auto result = run_result(protocols::ProtocolKind::kZScore, 3);
  result["ledger"]["ct_transfers"] = 10;
  const auto rep = bench::cost_report(result);
  EXPECT_FALSE(rep.pass());
  EXPECT_EQ(json(rep)["status"], "FAIL");
  result["protocol"] = "bogus";
  EXPECT_THROW(bench::cost_report(result), Error);
}

// ---- precision report -------------------------------------------------------------

TEST(Precision, RelativeErrors) {
  const auto e = bench::relative_errors({1.1, 2.0, 0.5}, {1.0, 2.0, 0.0});
  EXPECT_NEAR(e.max, 0.5, 1e-15);
  EXPECT_NEAR(e.mean, (0.1 + 0.5) / 3, 1e-15);
}

TEST(Precision, DefaultReportPassesChecks) {
  const auto rep = bench::precision_report({});
  ASSERT_EQ(rep.regimes.size(), 2u);
  for (const auto& c : bench::precision_checks(rep)) EXPECT_TRUE(c.pass()) << c.name << " = " << c.value;
  EXPECT_LE(rep.regimes[0].min.max, 1e-4);
}

TEST(Precision, NoiselessBackendIsExactUpToSearch) {
  bench::PrecisionConfig cfg;
  cfg.backend_params = cfg.backend_params.noiseless();
  const auto rep = bench::precision_report(cfg);
  for (const auto& rr : rep.regimes) {
    EXPECT_LE(rr.mean.max, 1e-12);
    EXPECT_LE(rr.variance.max, 1e-12);
    EXPECT_LE(rr.min.max, 1e-12);
    EXPECT_LE(rr.max.max, 1e-12);
    // Median error is left to the binary search: at most eps over the value.
    const auto spec = bench::regime_spec(rr.regime);
    for (const auto& [eps, e] : rr.median) EXPECT_LE(e.max, eps / spec.lo) << eps;
  }
}

TEST(Precision, DatasetShape) {
  bench::PrecisionConfig cfg;
  const auto t = bench::precision_dataset(cfg, bench::regime_spec(bench::Regime::kSmallValued));
  ASSERT_EQ(t.size(), 10u);
  EXPECT_EQ(concatenate(t).rows() % 2, 1u);
  EXPECT_EQ(t[0].features(), 13u);
  const auto s = pooled_stats(concatenate(t));
  for (std::size_t j = 0; j < 13; ++j) {
    EXPECT_GE(s.min[j], 1e-3);
    EXPECT_LE(s.max[j], 1e-2);
  }
}

// ---- command line ----------------------------------------------------------------

struct Cli {
  int code = -1;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(FEDNORM_CLI_PATH) + " " + args + " 2>&1";
  Cli r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fednorm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(10, 4);
    std::ofstream out(dir_ / "data.csv");
    out << "a,b,label\n";
    for (int r = 0; r < 200; ++r) out << nd(rng) << ',' << nd(rng) * 100 << ',' << r % 3 << '\n';
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, PartitionIidSplitsEvenlyAndRepeats) {
  {
    std::ofstream small(dir_ / "ten.csv");
    small << "x\n";
    for (int i = 0; i < 10; ++i) small << i << '\n';
  }
  ASSERT_EQ(cli("partition " + p("ten.csv") + " --kind iid --parties 2 --seed 4 --out " + p("s")).code, 0);
  const auto m = json::parse(slurp(dir_ / "s" / "manifest.json"));
  EXPECT_EQ(m["counts"], (std::vector<int>{5, 5}));

  for (const char* kind : {"label", "feature", "quantity"}) {
    ASSERT_EQ(cli(std::string("partition ") + p("data.csv") + " --kind " + kind + " --parties 4 --seed 9 --out " +
                  p("r1"))
                  .code,
              0);
    ASSERT_EQ(cli(std::string("partition ") + p("data.csv") + " --kind " + kind + " --parties 4 --seed 9 --out " +
                  p("r2"))
                  .code,
              0);
    for (const char* f : {"party_1.csv", "party_4.csv", "manifest.json"}) {
      EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << kind << " " << f;
    }
  }
}

TEST_F(CliTest, FeatureNoiseLeavesLabelsIntact) {
  ASSERT_EQ(cli("partition " + p("data.csv") + " --kind feature --beta 5 --parties 3 --seed 2 --out " + p("f")).code,
            0);
  for (int i = 1; i <= 3; ++i) {
    const auto t = csv::read_file(dir_ / "f" / ("party_" + std::to_string(i) + ".csv"));
    for (double v : t.present(2)) EXPECT_EQ(v, std::round(v));
  }
}

TEST_F(CliTest, FederatedMatchesPooledForEveryKind) {
  ASSERT_EQ(cli("partition " + p("data.csv") + " --kind quantity --beta 0.5 --parties 3 --seed 1 --out " + p("q")).code,
            0);
  const std::string parts = p("q/party_1.csv") + " " + p("q/party_2.csv") + " " + p("q/party_3.csv");
  for (const char* kind : {"zscore", "minmax", "robust"}) {
    ASSERT_EQ(cli("normalize " + parts + " --mode pooled --kind " + kind + " --out " + p("pooled")).code, 0);
    ASSERT_EQ(cli("normalize " + parts + " --mode federated --kind " + kind + " --out " + p("fed")).code, 0);
    const auto a = json::parse(slurp(dir_ / "pooled" / "params.json"));
    const auto b = json::parse(slurp(dir_ / "fed" / "params.json"));
    for (const auto& [key, val] : a.items()) {
      if (!val.is_array() || val.empty() || !val[0].is_number()) continue;
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double x = val[j].get<double>(), y = b[key][j].get<double>();
        EXPECT_LE(std::abs(x - y), 1e-9 * std::max(1.0, std::abs(x))) << kind << " " << key;
      }
    }
    for (int i = 1; i <= 3; ++i) {
      const auto na = csv::read_file(dir_ / "pooled" / ("party_" + std::to_string(i) + ".normalized.csv"));
      const auto nb = csv::read_file(dir_ / "fed" / ("party_" + std::to_string(i) + ".normalized.csv"));
      for (std::size_t j = 0; j < na.features(); ++j) {
        for (std::size_t r = 0; r < na.rows(); ++r) EXPECT_NEAR(na.value(j, r), nb.value(j, r), 1e-9);
      }
    }
  }
}

TEST_F(CliTest, PpfZScoreCloseToPooledAndCostReportPasses) {
  ASSERT_EQ(cli("partition " + p("data.csv") + " --kind iid --parties 3 --seed 1 --out " + p("i")).code, 0);
  const std::string parts = p("i/party_1.csv") + " " + p("i/party_2.csv") + " " + p("i/party_3.csv");
  ASSERT_EQ(cli("normalize " + parts + " --mode pooled --kind zscore --out " + p("pooled")).code, 0);
  const auto run = cli("normalize " + parts + " --mode ppf --kind zscore --backend simulated --seed 3 --out " + p("ppf"));
  ASSERT_EQ(run.code, 0) << run.out;
  const auto a = json::parse(slurp(dir_ / "pooled" / "params.json"));
  const auto b = json::parse(slurp(dir_ / "ppf" / "params.json"));
  for (const char* key : {"mean", "variance"}) {
    ASSERT_TRUE(a.contains(key)) << key;
    for (std::size_t j = 0; j < a[key].size(); ++j) {
      const double x = a[key][j].get<double>();
      EXPECT_LE(std::abs(b[key][j].get<double>() - x), 1e-3 * std::abs(x)) << key;
    }
  }
  EXPECT_EQ(cli("cost-report " + p("ppf/result.json")).code, 0);

  auto result = json::parse(slurp(dir_ / "ppf" / "result.json"));
  result["ledger"]["ct_transfers"] = 1000;
  std::ofstream(dir_ / "bad.json") << result.dump();
  const auto bad = cli("cost-report " + p("bad.json"));
  EXPECT_EQ(bad.code, 4);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, KthByRank) {
  {
    std::ofstream(dir_ / "p1.csv") << "x\n1\n3\n5\n";
    std::ofstream(dir_ / "p2.csv") << "x\n2\n4\n";
  }
  const auto r = cli("kth " + p("p1.csv") + " " + p("p2.csv") +
                     " --k 3 --lo 1 --hi 5 --epsilon 0.01 --backend plaintext --out " + p("kth.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(slurp(dir_ / "kth.json"));
  EXPECT_NEAR(j["params"]["value"][0].get<double>(), 3.0, 0.01);
  EXPECT_EQ(cli("cost-report " + p("kth.json")).code, 0);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(cli("partition " + p("missing.csv") + " --out " + p("x")).code, 2);
  {
    std::ofstream(dir_ / "p1.csv") << "x\n1\n3\n5\n";
    std::ofstream(dir_ / "p2.csv") << "x\n2\n4\n";
  }
  EXPECT_EQ(cli("kth " + p("p1.csv") + " " + p("p2.csv") + " --k 9 --lo 1 --hi 5 --backend plaintext").code, 2);
  EXPECT_EQ(cli("normalize " + p("p1.csv") + " " + p("p2.csv") +
                " --mode ppf --kind minmax --v-abs 1 --backend simulated --out " + p("o"))
                .code,
            2);
  EXPECT_NE(cli("no-such-command").code, 0);
}

TEST_F(CliTest, PrecisionReportCommand) {
  const auto r = cli("precision-report --out " + p("prec.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(slurp(dir_ / "prec.json"));
  EXPECT_EQ(j["status"], "PASS");
  EXPECT_TRUE(j.contains("reference_real_ckks"));
  EXPECT_TRUE(j["regimes"]["small_valued"].contains("median_eps_1e-06"));
}

}  // namespace
}  // namespace fednorm
