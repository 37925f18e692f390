/*
 * Copyright 2026 The fednorm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// fednorm command-line tool: partition, normalize, kth, cost-report,
// precision-report.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fednorm/fednorm.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitProtocol = 3;
constexpr int kExitFail = 4;

int exit_code_for(fednorm::Errc code) {
  using fednorm::Errc;
  switch (code) {
    case Errc::kValidation:
    case Errc::kEmptyFeature:
    case Errc::kSchemaMismatch:
    case Errc::kTooFewRows:
    case Errc::kTooManySlots:
    case Errc::kShapeMismatch:
    case Errc::kInvalidRank:
    case Errc::kVAbsTooSmall:
      return kExitValidation;
    default:
      return kExitProtocol;
  }
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw fednorm::Error(fednorm::Errc::kValidation, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw fednorm::Error(fednorm::Errc::kValidation, p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << j.dump(2) << '\n';
  if (!out) throw fednorm::Error(fednorm::Errc::kValidation, "cannot write " + p.string());
}

std::vector<fednorm::FeatureTable> read_tables(const std::vector<std::string>& paths) {
  std::vector<fednorm::FeatureTable> out;
  for (const auto& p : paths) out.push_back(fednorm::csv::read_file(p));
  return out;
}

fs::path normalized_path(const fs::path& out_dir, const std::string& input) {
  return out_dir / (fs::path(input).stem().string() + ".normalized.csv");
}

// Options shared by the protocol-running subcommands.
struct SessionFlags {
  std::string config;
  std::string backend;
  std::string transport;
  std::string listen;
  std::string connect;
  int party_id = 0;
  int parties = 0;
  std::vector<double> v_abs;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<double> timeout;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Session config JSON");
    app->add_option("--backend", backend, "plaintext | simulated")->check(CLI::IsMember({"plaintext", "simulated"}));
    app->add_option("--transport", transport, "inproc | tcp")->check(CLI::IsMember({"inproc", "tcp"}));
    app->add_option("--listen", listen, "Run only the aggregator, listening on host:port");
    app->add_option("--connect", connect, "Run only one party, connecting to host:port");
    app->add_option("--party-id", party_id, "Party id (1-based) with --connect");
    app->add_option("--parties", parties, "Number of parties (required with --listen)");
    app->add_option("--v-abs", v_abs, "Per-feature absolute bound (one value broadcasts)");
    app->add_option("--epsilon", epsilon, "Binary-search precision");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--timeout", timeout, "Gather timeout in seconds");
  }

  fednorm::protocols::SessionConfig build() const {
    fednorm::protocols::SessionConfig cfg;
    if (!config.empty()) cfg = read_json(config).get<fednorm::protocols::SessionConfig>();
    if (!backend.empty()) cfg.backend = fednorm::he::parse_backend_kind(backend);
    if (!transport.empty()) cfg.transport = fednorm::protocols::parse_transport_kind(transport);
    if (!listen.empty()) cfg.listen = listen;
    if (parties > 0) cfg.parties = parties;
    if (!v_abs.empty()) cfg.v_abs = v_abs;
    if (epsilon) cfg.epsilon = *epsilon;
    if (seed) cfg.seed = *seed;
    if (timeout) cfg.timeout_secs = *timeout;
    return cfg;
  }
};

int cmd_partition(const std::string& input, const std::string& kind, double beta, int parties, std::uint64_t seed,
                  const std::string& label_column, const fs::path& out_dir) {
  const auto table = fednorm::csv::read_file(input);
  fednorm::PartitionSpec spec{fednorm::parse_partition_kind(kind), beta, parties, seed};
  std::vector<std::int64_t> labels;
  const auto& names = table.names();
  const auto it = std::find(names.begin(), names.end(), label_column);
  const bool has_label = it != names.end();
  const auto label_j = static_cast<std::size_t>(it - names.begin());
  if (spec.kind == fednorm::PartitionKind::kLabelDirichlet) {
    if (!has_label) {
      throw fednorm::Error(fednorm::Errc::kValidation, "label column '" + label_column + "' not found");
    }
    for (std::size_t r = 0; r < table.rows(); ++r) {
      labels.push_back(static_cast<std::int64_t>(table.value(label_j, r)));
    }
  }
  auto [tables, part] = fednorm::make_partition(table, labels, spec);
  if (spec.kind == fednorm::PartitionKind::kFeatureNoise && has_label) {
    // Noise applies to features only; restore the label column.
    const auto raw = fednorm::split_table(table, part);
    for (std::size_t p = 0; p < tables.size(); ++p) {
      for (std::size_t r = 0; r < raw[p].rows(); ++r) tables[p].set(label_j, r, raw[p].value(label_j, r));
    }
  }
  fs::create_directories(out_dir);
  for (std::size_t p = 0; p < tables.size(); ++p) {
    fednorm::csv::write_file(out_dir / ("party_" + std::to_string(p + 1) + ".csv"), tables[p]);
  }
  const auto manifest = fednorm::manifest_json(spec, part);
  write_json(out_dir / "manifest.json", manifest);
  std::cout << manifest.dump(2) << '\n';
  return kExitOk;
}

int cmd_normalize(const std::vector<std::string>& inputs, const std::string& mode, const std::string& kind_name,
                  const SessionFlags& flags, const fs::path& out_dir) {
  const auto kind = fednorm::parse_norm_kind(kind_name);
  fs::create_directories(out_dir);
  if (mode == "ppf") {
    auto cfg = flags.build();
    cfg.protocol = fednorm::protocols::protocol_for(kind);
    cfg.apply = true;
    if (!flags.connect.empty()) {
      if (inputs.size() != 1 || flags.party_id < 1) {
        throw fednorm::Error(fednorm::Errc::kValidation, "--connect needs exactly one input and --party-id");
      }
      auto normalized = fednorm::protocols::serve_party_tcp(cfg, flags.connect, flags.party_id,
                                                            fednorm::csv::read_file(inputs.front()));
      if (normalized) fednorm::csv::write_file(normalized_path(out_dir, inputs.front()), *normalized);
      return kExitOk;
    }
    fednorm::protocols::SessionOutcome outcome;
    if (!flags.listen.empty()) {
      if (cfg.parties < 1) throw fednorm::Error(fednorm::Errc::kValidation, "--listen needs --parties");
      outcome = fednorm::protocols::serve_aggregator_tcp(cfg);
    } else {
      const auto tables = read_tables(inputs);
      cfg.parties = static_cast<int>(tables.size());
      outcome = fednorm::protocols::run_session(cfg, tables);
      for (std::size_t p = 0; p < tables.size(); ++p) {
        fednorm::csv::write_file(normalized_path(out_dir, inputs[p]), outcome.normalized[p]);
      }
    }
    write_json(out_dir / "result.json", outcome.result);
    write_json(out_dir / "params.json", fednorm::to_json(*outcome.params, outcome.result.at("features")));
    std::cout << outcome.result.dump(2) << '\n';
    return kExitOk;
  }

  const auto tables = read_tables(inputs);
  if (tables.empty()) throw fednorm::Error(fednorm::Errc::kValidation, "no input tables");
  json stats_out;
  std::vector<fednorm::NormalizationParams> params;
  if (mode == "pooled" || mode == "federated") {
    const auto stats = mode == "pooled" ? fednorm::pooled_stats(fednorm::concatenate(tables))
                                        : fednorm::federated_stats(tables);
    params.assign(tables.size(), fednorm::params_from_stats(stats, kind));
    stats_out = fednorm::to_json(stats);
    write_json(out_dir / "params.json", fednorm::to_json(params.front(), stats.names));
  } else if (mode == "local") {
    json all = json::array();
    for (const auto& t : tables) {
      const auto stats = fednorm::local_stats(t);
      params.push_back(fednorm::params_from_stats(stats, kind));
      stats_out.push_back(fednorm::to_json(stats));
      all.push_back(fednorm::to_json(params.back(), stats.names));
    }
    write_json(out_dir / "params.json", all);
  } else {
    throw fednorm::Error(fednorm::Errc::kValidation, "unknown mode '" + mode + "'");
  }
  for (std::size_t p = 0; p < tables.size(); ++p) {
    fednorm::csv::write_file(normalized_path(out_dir, inputs[p]), fednorm::apply_normalization(tables[p], params[p]));
  }
  write_json(out_dir / "stats.json", stats_out);
  std::cout << stats_out.dump(2) << '\n';
  return kExitOk;
}

int cmd_kth(const std::vector<std::string>& inputs, std::optional<int> q, std::optional<std::size_t> k, bool between,
            const std::vector<double>& lo, const std::vector<double>& hi, const SessionFlags& flags,
            const std::string& out) {
  auto cfg = flags.build();
  cfg.protocol = fednorm::protocols::ProtocolKind::kKth;
  if (q) cfg.kth.q = q;
  if (k) cfg.kth.k = k;
  if (between) cfg.kth.between = true;
  if (!lo.empty()) cfg.kth.lo = lo;
  if (!hi.empty()) cfg.kth.hi = hi;
  if (cfg.kth.lo.has_value() != cfg.kth.hi.has_value()) {
    throw fednorm::Error(fednorm::Errc::kValidation, "--lo and --hi go together");
  }
  if (!flags.connect.empty()) {
    if (inputs.size() != 1 || flags.party_id < 1) {
      throw fednorm::Error(fednorm::Errc::kValidation, "--connect needs exactly one input and --party-id");
    }
    fednorm::protocols::serve_party_tcp(cfg, flags.connect, flags.party_id, fednorm::csv::read_file(inputs.front()));
    return kExitOk;
  }
  fednorm::protocols::SessionOutcome outcome;
  if (!flags.listen.empty()) {
    outcome = fednorm::protocols::serve_aggregator_tcp(cfg);
  } else {
    const auto tables = read_tables(inputs);
    cfg.parties = static_cast<int>(tables.size());
    outcome = fednorm::protocols::run_session(cfg, tables);
  }
  if (!out.empty()) write_json(out, outcome.result);
  std::cout << outcome.result.dump(2) << '\n';
  return kExitOk;
}

int cmd_cost_report(const std::string& result_path) {
  const auto report = fednorm::bench::cost_report(read_json(result_path));
  std::cout << json(report).dump(2) << '\n';
  return report.pass() ? kExitOk : kExitFail;
}

int cmd_precision_report(int parties, std::uint64_t seed, const std::vector<double>& epsilons, bool noiseless,
                         const std::string& config, const std::string& out) {
  fednorm::bench::PrecisionConfig cfg;
  cfg.parties = parties;
  cfg.seed = seed;
  if (!epsilons.empty()) cfg.epsilons = epsilons;
  if (!config.empty()) cfg.backend_params = read_json(config).get<fednorm::he::BackendParams>();
  if (noiseless) cfg.backend_params = cfg.backend_params.noiseless();
  const auto report = fednorm::bench::precision_report(cfg);
  const auto checks = fednorm::bench::precision_checks(report);
  json j = report;
  j["checks"] = checks;
  bool ok = true;
  for (const auto& c : checks) ok = ok && c.pass();
  j["status"] = ok ? "PASS" : "FAIL";
  if (!out.empty()) write_json(out, j);
  std::cout << j.dump(2) << '\n';
  return ok ? kExitOk : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated data normalization toolkit"};
  app.require_subcommand(1);

  // partition
  auto* part = app.add_subcommand("partition", "Split a CSV into non-IID party files");
  std::string part_input, part_kind = "iid", label_column = "label", part_out = "parties";
  double beta = 0.5;
  int part_parties = 2;
  std::uint64_t part_seed = 0;
  part->add_option("input", part_input, "Input CSV")->required();
  part->add_option("--kind", part_kind, "iid | label | feature | quantity")
      ->check(CLI::IsMember({"iid", "label", "feature", "quantity"}));
  part->add_option("--beta", beta, "Imbalance parameter");
  part->add_option("--parties", part_parties, "Number of parties");
  part->add_option("--seed", part_seed, "Random seed");
  part->add_option("--label-column", label_column, "Label column for label partitions");
  part->add_option("--out", part_out, "Output directory");

  // normalize
  auto* norm = app.add_subcommand("normalize", "Normalize party CSVs");
  std::vector<std::string> norm_inputs;
  std::string mode = "federated", kind = "zscore", norm_out = "out";
  SessionFlags norm_flags;
  norm->add_option("inputs", norm_inputs, "Party CSV files");
  norm->add_option("--mode", mode, "pooled | local | federated | ppf")
      ->check(CLI::IsMember({"pooled", "local", "federated", "ppf"}));
  norm->add_option("--kind", kind, "zscore | minmax | robust")->check(CLI::IsMember({"zscore", "minmax", "robust"}));
  norm->add_option("--out", norm_out, "Output directory");
  norm_flags.attach(norm);

  // kth
  auto* kth = app.add_subcommand("kth", "Privacy-preserving k-th ranked element");
  std::vector<std::string> kth_inputs;
  std::optional<int> q;
  std::optional<std::size_t> k;
  bool between = false;
  std::vector<double> lo, hi;
  std::string kth_out;
  SessionFlags kth_flags;
  kth->add_option("inputs", kth_inputs, "Party CSV files");
  auto* q_opt = kth->add_option("--q", q, "Percentile (1..99)");
  kth->add_option("--k", k, "Explicit 1-based rank")->excludes(q_opt);
  kth->add_flag("--between", between, "With --k: any point between ranks k and k+1 is acceptable");
  kth->add_option("--lo", lo, "Search lower bound per feature");
  kth->add_option("--hi", hi, "Search upper bound per feature");
  kth->add_option("--out", kth_out, "Write result JSON here");
  kth_flags.attach(kth);

  // cost-report
  auto* cost = app.add_subcommand("cost-report", "Measured vs closed-form operation counts");
  std::string result_path;
  cost->add_option("result", result_path, "Session result JSON")->required();

  // precision-report
  auto* prec = app.add_subcommand("precision-report", "Relative error of PPF parameters vs plaintext");
  int prec_parties = 10;
  std::uint64_t prec_seed = 7;
  std::vector<double> prec_eps;
  bool noiseless = false;
  std::string prec_config, prec_out;
  prec->add_option("--parties", prec_parties, "Number of parties");
  prec->add_option("--seed", prec_seed, "Random seed");
  prec->add_option("--epsilon", prec_eps, "Median search precisions");
  prec->add_flag("--noiseless", noiseless, "Zero all backend noise");
  prec->add_option("--config", prec_config, "Backend params JSON");
  prec->add_option("--out", prec_out, "Write report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*part) return cmd_partition(part_input, part_kind, beta, part_parties, part_seed, label_column, part_out);
    if (*norm) return cmd_normalize(norm_inputs, mode, kind, norm_flags, norm_out);
    if (*kth) return cmd_kth(kth_inputs, q, k, between, lo, hi, kth_flags, kth_out);
    if (*cost) return cmd_cost_report(result_path);
    if (*prec) return cmd_precision_report(prec_parties, prec_seed, prec_eps, noiseless, prec_config, prec_out);
  } catch (const fednorm::Error& e) {
    std::cerr << "fednorm: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "fednorm: " << e.what() << '\n';
    return kExitProtocol;
  }
  return kExitOk;
}
