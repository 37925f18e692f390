// End-to-end protocol sessions over the in-process transport: worked
// examples, oracle comparisons, ledger invariants and a traffic audit.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fednorm/core/stats.hpp"
#include "fednorm/protocols/session.hpp"

namespace fednorm::protocols {
namespace {

using he::BackendKind;

std::vector<FeatureTable> one_feature(std::vector<std::vector<double>> parts) {
  std::vector<FeatureTable> out;
  for (auto& p : parts) out.push_back(FeatureTable::from_columns({"x"}, {std::move(p)}));
  return out;
}

std::vector<FeatureTable> random_parties(int parties, std::size_t features, double lo, double hi,
                                         std::uint64_t seed, std::size_t min_rows = 20, std::size_t max_rows = 80) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::uniform_int_distribution<std::size_t> rows(min_rows, max_rows);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < features; ++j) names.push_back("f" + std::to_string(j));
  std::vector<FeatureTable> out;
  for (int p = 0; p < parties; ++p) {
    FeatureTable t(names);
    std::vector<double> row(features);
    for (std::size_t r = rows(rng); r > 0; --r) {
      for (auto& v : row) v = u(rng);
      t.append_row(row);
    }
    out.push_back(std::move(t));
  }
  return out;
}

SessionConfig config(ProtocolKind kind, BackendKind backend = BackendKind::kPlaintext, std::vector<double> v_abs = {},
                     double eps = 1e-4) {
  SessionConfig c;
  c.protocol = kind;
  c.backend = backend;
  c.v_abs = std::move(v_abs);
  c.epsilon = eps;
  c.seed = 5;
  return c;
}

std::vector<double> vec(const nlohmann::json& result, const char* key) {
  return result.at("params").at(key).get<std::vector<double>>();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::vector<double> pooled_sorted(const std::vector<FeatureTable>& t, std::size_t j) {
  auto v = concatenate(t).present(j);
  std::sort(v.begin(), v.end());
  return v;
}

TEST(ZScore, WorkedExample) {
  const auto t = one_feature({{1, 2, 3}, {4, 5}});
  const auto r = run_session(config(ProtocolKind::kZScore), t).result;
  EXPECT_NEAR(vec(r, "mean")[0], 3.0, 1e-12);
  EXPECT_NEAR(vec(r, "variance")[0], 2.0, 1e-12);
}

TEST(ZScore, SinglePartyEqualsLocalStats) {
  const auto t = random_parties(1, 4, -5, 5, 2);
  const auto r = run_session(config(ProtocolKind::kZScore), t).result;
  const auto s = pooled_stats(t[0]);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_LE(rel(vec(r, "mean")[j], s.mean[j]), 1e-12);
    EXPECT_LE(rel(vec(r, "variance")[j], s.variance[j]), 1e-12);
  }
}

TEST(ZScore, SimulatedTenPartiesWithinTolerance) {
  const auto t = random_parties(10, 13, 1, 1000, 3);
  const auto r = run_session(config(ProtocolKind::kZScore, BackendKind::kSimulated), t).result;
  const auto s = pooled_stats(concatenate(t));
  for (std::size_t j = 0; j < 13; ++j) {
    EXPECT_LE(rel(vec(r, "mean")[j], s.mean[j]), 1e-3);
    EXPECT_LE(rel(vec(r, "variance")[j], s.variance[j]), 1e-3);
  }
}

TEST(ZScore, LedgerMatchesClosedForm) {
  for (int P : {1, 3, 7}) {
    const auto t = random_parties(P, 3, 0, 1, 4);
    const auto out = run_session(config(ProtocolKind::kZScore, BackendKind::kSimulated), t);
    const auto& l = out.ledger;
    EXPECT_EQ(l.ct_uploads, 3u * static_cast<unsigned>(P));
    EXPECT_EQ(l.bootstraps, 1u);
    EXPECT_EQ(l.cdecrypts, 2u);
    EXPECT_EQ(l.invs, 1u);
    EXPECT_EQ(l.min_max_ops, 0u);
  }
}

TEST(MinMax, WorkedExample) {
  const auto t = one_feature({{-1, 4}, {2, 9}});
  const auto exact = run_session(config(ProtocolKind::kMinMax, BackendKind::kPlaintext, {10}), t).result;
  EXPECT_NEAR(vec(exact, "min")[0], -1.0, 1e-12);
  EXPECT_NEAR(vec(exact, "max")[0], 9.0, 1e-12);
  const auto noisy = run_session(config(ProtocolKind::kMinMax, BackendKind::kSimulated, {10}), t).result;
  EXPECT_LE(rel(vec(noisy, "min")[0], -1.0), 1e-3);
  EXPECT_LE(rel(vec(noisy, "max")[0], 9.0), 1e-3);
}

TEST(MinMax, SinglePartyLocalExtremes) {
  const auto t = one_feature({{3, -7, 0.5}});
  const auto out = run_session(config(ProtocolKind::kMinMax, BackendKind::kPlaintext, {8}), t);
  EXPECT_EQ(vec(out.result, "min")[0], -7.0);
  EXPECT_EQ(vec(out.result, "max")[0], 3.0);
  EXPECT_EQ(out.ledger.bootstraps, 0u);
}

TEST(MinMax, SimulatedLargeValues) {
  const auto t = random_parties(10, 5, 1e3, 1e6, 6);
  const auto s = pooled_stats(concatenate(t));
  for (auto backend : {BackendKind::kPlaintext, BackendKind::kSimulated}) {
    const auto out = run_session(config(ProtocolKind::kMinMax, backend, {1e6}), t);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_LE(rel(vec(out.result, "min")[j], s.min[j]), 1e-3);
      EXPECT_LE(rel(vec(out.result, "max")[j], s.max[j]), 1e-3);
    }
    EXPECT_EQ(out.ledger.bootstraps, 18u);
    EXPECT_EQ(out.ledger.ct_uploads, 20u);
    EXPECT_EQ(out.ledger.cdecrypts, 2u);
  }
}

TEST(MinMax, VAbsTooSmallNamesFeature) {
  auto t = random_parties(2, 3, 0, 1, 7);
  t[1].set(2, 0, 50.0);
  try {
    run_session(config(ProtocolKind::kMinMax, BackendKind::kSimulated, {10}), t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kVAbsTooSmall);
    EXPECT_NE(std::string(e.what()).find("f2"), std::string::npos) << e.what();
  }
}

SessionConfig kth_config(std::size_t k, bool between, double lo, double hi, double eps) {
  auto c = config(ProtocolKind::kKth, BackendKind::kPlaintext, {}, eps);
  c.kth.k = k;
  c.kth.between = between;
  c.kth.lo = std::vector<double>{lo};
  c.kth.hi = std::vector<double>{hi};
  return c;
}

TEST(Kth, ExactRankExample) {
  const auto out = run_session(kth_config(3, false, 1, 5, 0.01), one_feature({{1, 3, 5}, {2, 4}}));
  EXPECT_LE(std::abs(vec(out.result, "value")[0] - 3.0), 0.01);
  EXPECT_EQ(out.ledger.bootstraps, 0u);
}

TEST(Kth, GapExample) {
  const double eps = 1e-4;
  const auto out = run_session(kth_config(2, true, 1, 4, eps), one_feature({{1, 2}, {3, 4}}));
  const double q = vec(out.result, "value")[0];
  EXPECT_GE(q, 2 - eps);
  EXPECT_LE(q, 3 + eps);
}

TEST(Kth, InvalidRank) {
  try {
    run_session(kth_config(6, false, 1, 5, 0.01), one_feature({{1, 3, 5}, {2, 4}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kInvalidRank);
  }
  KthQuery q{{0}, {1}, {0}, {true}, {3}, 0.1};
  EXPECT_THROW(KthSearchState{q}, Error);
  q.k = {1};
  q.epsilon = 0;
  EXPECT_THROW(KthSearchState{q}, Error);
}

TEST(Kth, DegenerateRangeNeedsNoIterations) {
  const auto out = run_session(kth_config(1, false, 2.5, 2.5, 1e-4), one_feature({{2.5, 2.5}, {2.5}}));
  EXPECT_EQ(vec(out.result, "value")[0], 2.5);
  EXPECT_EQ(out.result.at("iterations"), 0);
  EXPECT_EQ(out.ledger.ct_uploads, 2u);
}

// On the plaintext backend: exact rank => |Q - x_(K)| <= eps, else Q lies
// in [x_(K) - eps, x_(K+1) + eps]; iterations within the search bound.
TEST(Kth, CorrectnessProperty) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const int P = 1 + static_cast<int>(rng() % 5);
    auto t = random_parties(P, 3, -100, 100, rng(), 1, 15);
    for (auto& pt : t) {
      for (std::size_t r = 0; r < pt.rows(); ++r) pt.set(1, r, std::round(pt.value(1, r) / 20));  // ties
    }
    const double eps = trial % 2 ? 1e-3 : 1e-6;
    const auto n = concatenate(t).rows();
    const std::size_t k = 1 + rng() % n;
    const bool between = k < n && rng() % 2;
    auto c = config(ProtocolKind::kKth, BackendKind::kPlaintext, {}, eps);
    c.kth.k = k;
    c.kth.between = between;
    c.kth.lo = std::vector<double>{-101};
    c.kth.hi = std::vector<double>{101};
    const auto r = run_session(c, t).result;
    const auto q = vec(r, "value");
    for (std::size_t j = 0; j < 3; ++j) {
      const auto s = pooled_sorted(t, j);
      if (!between) {
        EXPECT_LE(std::abs(q[j] - s[k - 1]), eps) << trial << " " << j;
      } else {
        EXPECT_GE(q[j], s[k - 1] - eps);
        EXPECT_LE(q[j], s[k] + eps);
      }
    }
    const auto bound = static_cast<std::size_t>(std::ceil(std::log2(202 / eps))) + 1;
    EXPECT_LE(r.at("iterations").get<std::size_t>(), bound);
  }
}

TEST(Kth, SearchRangeFromMinMax) {
  auto c = config(ProtocolKind::kKth, BackendKind::kPlaintext, {100}, 1e-6);
  c.kth.q = 50;
  const auto t = one_feature({{10, 30}, {20, 40, 50}});
  const auto out = run_session(c, t);
  EXPECT_NEAR(vec(out.result, "value")[0], 30.0, 1e-6);
  const auto iters = out.result.at("iterations").get<std::uint64_t>();
  EXPECT_EQ(out.ledger.ct_uploads, 2 + 4 + 4 * iters);
  EXPECT_EQ(out.ledger.bootstraps, 2u);
  EXPECT_EQ(out.ledger.plaintext_msgs, 2 * iters);
}

TEST(Robust, WorkedExample) {
  const auto t = one_feature({{1, 4}, {2, 3, 5}});
  const auto r = run_session(config(ProtocolKind::kRobust, BackendKind::kPlaintext, {10}, 1e-6), t).result;
  EXPECT_NEAR(vec(r, "median")[0], 3.0, 1e-6);
  // n = 5: q1 sits at position 1.5 and q3 at 4.5, between order statistics.
  EXPECT_GE(vec(r, "q1")[0], 1.0 - 1e-6);
  EXPECT_LE(vec(r, "q1")[0], 2.0 + 1e-6);
  EXPECT_GE(vec(r, "q3")[0], 4.0 - 1e-6);
  EXPECT_LE(vec(r, "q3")[0], 5.0 + 1e-6);
  EXPECT_EQ(r.at("params").at("n"), std::vector<int>{5});
}

TEST(Robust, SinglePartyOddMedian) {
  const auto t = one_feature({{9, 1, 7, 3, 5, 11, 2}});
  const auto r = run_session(config(ProtocolKind::kRobust, BackendKind::kPlaintext, {20}, 1e-6), t).result;
  EXPECT_NEAR(vec(r, "median")[0], 5.0, 1e-6);
}

TEST(Robust, SimulatedTenPartiesMedian) {
  auto t = random_parties(10, 6, 0, 100, 9);
  FeatureTable extra(t[0].names());
  extra.append_row(std::vector<double>(6, 50.0));
  t[0] = concatenate(std::vector<FeatureTable>{t[0], extra});
  if (concatenate(t).rows() % 2 == 0) t[1] = concatenate(std::vector<FeatureTable>{t[1], extra});
  const double eps = 1e-6;
  const auto out = run_session(config(ProtocolKind::kRobust, BackendKind::kSimulated, {100}, eps), t);
  for (std::size_t j = 0; j < 6; ++j) {
    const auto s = pooled_sorted(t, j);
    const double truth = s[s.size() / 2];
    EXPECT_LE(std::abs(vec(out.result, "median")[j] - truth), eps * 100 + 1e-6) << j;
  }
  std::uint64_t iters = 0;
  for (const char* q : {"q1", "median", "q3"}) iters += out.result.at("iterations").at(q).get<std::uint64_t>();
  EXPECT_EQ(out.ledger.ct_uploads, 10 + 20 + 20 * iters);
  EXPECT_EQ(out.ledger.cdecrypts, 3 + 2 * iters);
  EXPECT_EQ(out.ledger.bootstraps, 18u);
  EXPECT_EQ(out.ledger.plaintext_msgs, 10 * iters);
}

TEST(NormalizeFederated, ZScoreEqualsPooled) {
  const auto t = random_parties(4, 5, -20, 20, 10);
  const auto fed = normalize_federated(t, NormKind::kZScore, config(ProtocolKind::kZScore));
  const auto pooled = apply_normalization(concatenate(t), params_from_stats(pooled_stats(concatenate(t)),
                                                                           NormKind::kZScore));
  const auto joined = concatenate(fed);
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t r = 0; r < joined.rows(); ++r) {
      EXPECT_NEAR(joined.value(j, r), pooled.value(j, r), 1e-9 * std::max(1.0, std::abs(pooled.value(j, r))));
    }
  }
}

TEST(NormalizeFederated, MinMaxInUnitInterval) {
  const auto t = random_parties(3, 4, -50, 50, 11);
  const auto fed = normalize_federated(t, NormKind::kMinMax, config(ProtocolKind::kMinMax, BackendKind::kPlaintext, {50}));
  for (const auto& pt : fed) {
    for (std::size_t j = 0; j < pt.features(); ++j) {
      for (double v : pt.present(j)) {
        EXPECT_GE(v, -1e-12);
        EXPECT_LE(v, 1.0 + 1e-12);
      }
    }
  }
}

TEST(NormalizeFederated, RobustCentresMedian) {
  auto t = random_parties(3, 2, 0, 10, 12);
  if (concatenate(t).rows() % 2 == 0) {
    t[0] = concatenate(std::vector<FeatureTable>{t[0], t[0].select_rows(std::vector<std::size_t>{0})});
  }
  const double eps = 1e-6;
  const auto fed = normalize_federated(t, NormKind::kRobust, config(ProtocolKind::kRobust, BackendKind::kPlaintext,
                                                                   {10}, eps));
  const auto s = pooled_stats(concatenate(fed));
  const auto raw = pooled_stats(concatenate(t));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_LE(std::abs(s.median[j]), eps / (raw.q3[j] - raw.q1[j]) + 1e-9);
  }
}

TEST(Session, DeterministicResultsAndTraffic) {
  const auto t = random_parties(3, 3, 0, 10, 13);
  auto run = [&] {
    TrafficLog log;
    auto r = run_session(config(ProtocolKind::kRobust, BackendKind::kSimulated, {10}), t, &log).result;
    r.erase("elapsed_seconds");
    std::map<std::pair<int, int>, std::vector<transport::Frame>> by_link;
    for (const auto& rec : *log.records) by_link[{rec.from, rec.to}].push_back(rec.frame);
    return std::make_pair(r, by_link);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

// No frame sent by anyone carries a raw row, and parties never send
// plaintext values.
TEST(Session, TrafficAuditFindsNoRawRows) {
  const auto t = random_parties(4, 6, -1000, 1000, 14, 5, 12);
  for (auto kind : {ProtocolKind::kZScore, ProtocolKind::kMinMax, ProtocolKind::kRobust}) {
    TrafficLog log;
    auto c = config(kind, BackendKind::kSimulated, {1000});
    c.apply = true;
    run_session(c, t, &log);
    ASSERT_FALSE(log.records->empty());
    for (const auto& rec : *log.records) {
      const auto m = transport::decode_frame(rec.frame);
      std::vector<std::vector<double>> arrays{m.payload.values};
      for (const auto& [_, ev] : m.payload.ciphertexts) {
        for (const auto& ch : ev.chunks) arrays.push_back(ch.slots);
      }
      if (rec.from != transport::kAggregatorId) {
        EXPECT_TRUE(m.payload.values.empty()) << m.payload.command;
      }
      for (const auto& pt : t) {
        for (std::size_t r = 0; r < pt.rows(); ++r) {
          const auto row = pt.row(r);
          for (const auto& arr : arrays) {
            EXPECT_EQ(std::search(arr.begin(), arr.end(), row.begin(), row.end()), arr.end())
                << "row leaked in " << m.payload.command;
          }
        }
      }
    }
  }
}

TEST(Session, WithheldShareAborts) {
  const auto t = random_parties(3, 2, 0, 1, 15);
  auto c = config(ProtocolKind::kZScore, BackendKind::kSimulated);
  c.withhold_shares = {2};
  try {
    run_session(c, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kMissingShares);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Session, SchemaMismatchRejected) {
  std::vector<FeatureTable> t{FeatureTable::from_columns({"a"}, {{1.0}}),
                              FeatureTable::from_columns({"b"}, {{1.0}})};
  try {
    run_session(config(ProtocolKind::kZScore), t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kSchemaMismatch);
  }
}

TEST(Session, ChunkedFeaturesScaleLedger) {
  auto c = config(ProtocolKind::kZScore, BackendKind::kPlaintext);
  c.backend_params.slot_count = 4;
  const auto t = random_parties(2, 10, 0, 1, 16);
  const auto out = run_session(c, t);
  EXPECT_EQ(out.result.at("chunks"), 3);
  EXPECT_EQ(out.ledger.ct_uploads, 3u * 2 * 3);
  EXPECT_EQ(out.ledger.bootstraps, 3u);
  const auto s = pooled_stats(concatenate(t));
  for (std::size_t j = 0; j < 10; ++j) EXPECT_LE(rel(vec(out.result, "mean")[j], s.mean[j]), 1e-12);
}

TEST(Session, ConfigFromJson) {
  const auto c = nlohmann::json::parse(R"({"protocol":"robust","P":4,"epsilon":1e-5,"v_abs":[3,4],
      "backend":"plaintext","transport":"tcp","seed":9})").get<SessionConfig>();
  EXPECT_EQ(c.protocol, ProtocolKind::kRobust);
  EXPECT_EQ(c.parties, 4);
  EXPECT_EQ(c.epsilon, 1e-5);
  EXPECT_EQ(c.v_abs, (std::vector<double>{3, 4}));
  EXPECT_EQ(c.backend, BackendKind::kPlaintext);
  EXPECT_EQ(c.transport, TransportKind::kTcp);
  EXPECT_EQ(c.seed, 9u);
}

}  // namespace
}  // namespace fednorm::protocols
