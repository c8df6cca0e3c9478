#include "ctnas/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ctnas/eval_metrics.hpp"
#include "ctnas/nac.hpp"

namespace ctnas {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- RunConfig

void RunConfig::check() const {
  space.check();
  search.check();
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("oracle.noise_sigma must be finite and >= 0");
  }
  if (train.iterations < 1) throw std::invalid_argument("train.iterations must be >= 1");
  if (train.batch < 1) throw std::invalid_argument("train.batch must be >= 1");
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

std::set<std::string> keys_of(const nlohmann::json& j) {
  std::set<std::string> out;
  for (const auto& [key, value] : j.items()) out.insert(key);
  return out;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"space", "oracle", "search", "train", "seed"}, "config");
  RunConfig c;
  if (j.contains("space")) {
    reject_unknown(j.at("space"), {"max_nodes", "max_edges", "ops"}, "space");
    c.space = j.at("space").get<SpaceSpec>();
  }
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    reject_unknown(o, {"seed", "noise_sigma", "label_noise"}, "oracle");
    c.oracle_seed = o.value("seed", c.oracle_seed);
    c.noise_sigma = o.value("noise_sigma", c.noise_sigma);
    c.label_noise = o.value("label_noise", c.label_noise);
  }
  if (j.contains("search")) {
    auto allowed = keys_of(nlohmann::json(SearchConfig{}));
    allowed.erase("seed");
    reject_unknown(j.at("search"), allowed, "search");
    reject_unknown(j.at("search").value("nac", nlohmann::json::object()),
                   {"dim", "readout", "raw_adjacency"}, "search.nac");
    c.search = j.at("search").get<SearchConfig>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"labeled", "held_out", "iterations", "batch", "checkpoint_every"}, "train");
    c.train.labeled = t.value("labeled", c.train.labeled);
    c.train.held_out = t.value("held_out", c.train.held_out);
    c.train.iterations = t.value("iterations", c.train.iterations);
    c.train.batch = t.value("batch", c.train.batch);
    c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
  }
  c.seed = j.value("seed", c.seed);
  c.search.seed = c.seed;
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json search = c.search;
  search.erase("seed");
  return {
      {"space", c.space},
      {"oracle", {{"seed", c.oracle_seed}, {"noise_sigma", c.noise_sigma}, {"label_noise", c.label_noise}}},
      {"search", search},
      {"train",
       {{"labeled", c.train.labeled},
        {"held_out", c.train.held_out},
        {"iterations", c.train.iterations},
        {"batch", c.train.batch},
        {"checkpoint_every", c.train.checkpoint_every}}},
      {"seed", c.seed},
  };
}

BenchSplit split_bench(const BenchTable& table, const RunConfig& config) {
  const auto& recs = table.records();
  std::vector<std::size_t> idx(recs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(config.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  BenchSplit s;
  const std::size_t n_train = std::min(config.train.labeled, idx.size());
  const std::size_t n_held = std::min(config.train.held_out, idx.size() - n_train);
  for (std::size_t i = 0; i < n_train; ++i) s.train.push_back({recs[idx[i]].arch, recs[idx[i]].mean_acc});
  for (std::size_t i = n_train; i < n_train + n_held; ++i)
    s.held_out.push_back({recs[idx[i]].arch, recs[idx[i]].mean_acc});
  return s;
}

// ----------------------------------------------------------------- commands

namespace {

/// Bad flags, config or inputs; raised before any output is written.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "JSON run config")->check(CLI::ExistingFile);
  c.seed_opt = cmd->add_option("--seed", c.seed, "Overrides the config seed");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

RunConfig load_config(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw UsageError("cannot open config " + c.config_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config " + c.config_path + ": " + e.what());
    }
  }
  RunConfig rc;
  try {
    rc = run_config_from_json(j);
    if (c.seed_opt && c.seed_opt->count()) {
      rc.seed = c.seed;
      rc.search.seed = c.seed;
    }
    rc.check();
  } catch (const std::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return rc;
}

void require_writable(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw UsageError("output directory does not exist: " + parent.string());
  }
}

BenchTable load_bench(const std::string& path, const SpaceSpec& space) {
  try {
    return load_table(path, space);
  } catch (const std::exception& e) {
    throw UsageError("bench " + path + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

void write_config_echo(const std::string& out, const RunConfig& rc) {
  write_file(out + ".config.json", run_config_to_json(rc).dump(2) + "\n");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

struct HeldOutMetrics {
  double ktau = 0.0;
  RiskEval ranking;
  double surrogate = 0.0;
};

HeldOutMetrics held_out_metrics(const Comparator& compare, const std::vector<double>& scores,
                                const std::vector<ArchAcc>& held, const SpaceSpec& space) {
  std::vector<double> truth;
  for (const auto& r : held) truth.push_back(r.acc);
  HeldOutMetrics m;
  m.ktau = kendall_tau(scores, truth).ktau;
  std::vector<TruthPair> pairs;
  for (std::size_t i = 0; i < held.size(); ++i)
    for (std::size_t j = i + 1; j < held.size(); ++j)
      pairs.push_back({held[i].arch, held[j].arch, held[i].acc, held[j].acc});
  m.ranking = ranking_risk(compare, pairs);
  m.surrogate = surrogate_risk(compare, build_pairs(held, space, false));
  return m;
}

HeldOutMetrics nac_metrics(const Nac& nac, const std::vector<ArchAcc>& held) {
  std::vector<Architecture> archs;
  for (const auto& r : held) archs.push_back(r.arch);
  return held_out_metrics(nac_comparator(nac), nac_scores(nac, archs, workers_from_env()), held,
                          nac.spec());
}

const char* kMetricsHeader = "ktau,ranking_risk,surrogate_risk,checkpoint\n";

std::string metrics_row(const HeldOutMetrics& m, std::size_t checkpoint) {
  return fmt(m.ktau) + "," + fmt(m.ranking.risk) + "," + fmt(m.surrogate) + "," +
         std::to_string(checkpoint) + "\n";
}

// gen-bench -----------------------------------------------------------------

struct GenBenchArgs {
  Common common;
  std::size_t count = 0;
  bool all = false;
  CLI::Option* count_opt = nullptr;
};

int cmd_gen_bench(const GenBenchArgs& a, std::ostream& out) {
  if (!a.all && a.count_opt->count() == 0) throw UsageError("pass --count N or --all");
  const RunConfig rc = load_config(a.common);
  require_writable(a.common.out);
  std::vector<Architecture> archs;
  if (a.all) {
    try {
      archs = enumerate_all(rc.space);
    } catch (const EnumerationCapError& e) {
      throw UsageError(std::string("--all: ") + e.what());
    }
  } else {
    std::mt19937_64 rng(rc.seed);
    std::unordered_set<std::string> seen;
    const std::size_t budget = 1000 * a.count + 1000;
    for (std::size_t attempt = 0; archs.size() < a.count; ++attempt) {
      if (attempt >= budget) {
        throw std::runtime_error("could only draw " + std::to_string(archs.size()) + " of " +
                                 std::to_string(a.count) + " distinct architectures");
      }
      Architecture arch = random_arch(rc.space, rng);
      if (seen.insert(arch_key(arch, rc.space)).second) archs.push_back(std::move(arch));
    }
  }
  std::ostringstream body;
  write_table(synth_table(rc.space, archs, rc.oracle_seed), body);
  write_file(a.common.out, body.str());
  write_config_echo(a.common.out, rc);
  out << "wrote " << archs.size() << " records to " << a.common.out << "\n";
  return kExitOk;
}

// train-nac -----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string bench;
};

int cmd_train_nac(const TrainArgs& a, std::ostream& out) {
  const RunConfig rc = load_config(a.common);
  require_writable(a.common.out);
  const BenchTable table = load_bench(a.bench, rc.space);
  if (table.size() < 2) throw UsageError("bench needs at least 2 records, has " + std::to_string(table.size()));
  const BenchSplit split = split_bench(table, rc);
  if (split.train.size() < 2) throw UsageError("train.labeled must be >= 2");

  std::seed_seq seq{rc.seed, std::uint64_t{1}};
  std::mt19937_64 rng(seq);
  Nac nac(rc.space, rc.search.nac, rng);
  AdamState adam(rc.search.nac_adam, nac.params().tensors());
  const auto pairs = build_pairs(split.train, rc.space, rc.search.augment_pairs);

  std::string loss_csv = "iteration,loss\n";
  std::string checkpoints = kMetricsHeader;
  const bool track = rc.train.checkpoint_every > 0 && split.held_out.size() >= 2;
  std::size_t done = 0;
  while (done < rc.train.iterations) {
    std::size_t chunk = rc.train.iterations - done;
    if (track) chunk = std::min(chunk, rc.train.checkpoint_every);
    const auto trace = train_nac(nac, adam, pairs, rc.train.batch, chunk, rng);
    for (std::size_t i = 0; i < trace.size(); ++i)
      loss_csv += std::to_string(done + i + 1) + "," + fmt(trace[i]) + "\n";
    done += chunk;
    if (track) checkpoints += metrics_row(nac_metrics(nac, split.held_out), done);
  }

  nlohmann::json model = nac.to_json();
  model["iterations"] = rc.train.iterations;
  model["run_config"] = run_config_to_json(rc);
  write_file(a.common.out, model.dump(2) + "\n");
  write_file(with_suffix(a.common.out, ".loss.csv"), loss_csv);
  if (track) write_file(with_suffix(a.common.out, ".checkpoints.csv"), checkpoints);
  write_config_echo(a.common.out, rc);

  out << "trained on " << split.train.size() << " records (" << pairs.size() << " pairs)\n";
  if (split.held_out.size() >= 2) {
    out << "held-out ktau: " << fmt(nac_metrics(nac, split.held_out).ktau) << "\n";
  } else {
    out << "held-out ktau: n/a (fewer than 2 held-out records)\n";
  }
  return kExitOk;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string bench;
  std::string model;
  bool perfect = false;
  double constant = 0.5;
  CLI::Option* constant_opt = nullptr;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig rc = load_config(a.common);
  require_writable(a.common.out);
  const int sources = (!a.model.empty()) + a.perfect + (a.constant_opt->count() > 0);
  if (sources != 1) throw UsageError("pass exactly one of --model, --perfect-oracle, --constant");
  if (a.constant_opt->count() && !(a.constant >= 0.0 && a.constant <= 1.0)) {
    throw UsageError("--constant must lie in [0, 1]");
  }
  std::optional<Nac> nac;
  std::size_t checkpoint = 0;
  if (!a.model.empty()) {
    std::ifstream in(a.model);
    if (!in) throw UsageError("cannot open model " + a.model);
    try {
      const auto j = nlohmann::json::parse(in);
      nac.emplace(Nac::from_json(j));
      checkpoint = j.value("iterations", std::size_t{0});
    } catch (const std::exception& e) {
      throw UsageError("model " + a.model + ": " + e.what());
    }
    if (nac->spec().hash() != rc.space.hash()) {
      throw UsageError("spec hash mismatch: model " + nac->spec().hash() + " vs config " +
                       rc.space.hash());
    }
  }
  const BenchTable table = load_bench(a.bench, rc.space);
  const BenchSplit split = split_bench(table, rc);
  if (split.held_out.size() < 2) throw UsageError("held-out split has fewer than 2 records");

  HeldOutMetrics m;
  if (nac) {
    m = nac_metrics(*nac, split.held_out);
  } else {
    const TableOracle oracle(table);
    const Comparator compare = a.perfect ? perfect_comparator(oracle) : constant_comparator(a.constant);
    std::vector<Architecture> archs;
    for (const auto& r : split.held_out) archs.push_back(r.arch);
    m = held_out_metrics(compare, nac_scores(compare, archs), split.held_out, rc.space);
  }
  write_file(a.common.out, std::string(kMetricsHeader) + metrics_row(m, checkpoint));
  write_config_echo(a.common.out, rc);
  out << "held-out ktau: " << fmt(m.ktau) << "\n";
  return kExitOk;
}

// search --------------------------------------------------------------------

struct SearchArgs {
  Common common;
  std::string bench;
};

void write_report(const SearchReport& report, const std::string& path) {
  write_file(path, report.to_json().dump(2) + "\n");
  write_file(with_suffix(path, ".rounds.csv"), report.rounds_csv());
}

int cmd_search(const SearchArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_config(a.common);
  require_writable(a.common.out);
  std::optional<BenchTable> table;
  std::unique_ptr<Oracle> oracle;
  if (!a.bench.empty()) {
    table.emplace(load_bench(a.bench, rc.space));
    oracle = std::make_unique<TableOracle>(*table);
  } else {
    oracle = std::make_unique<SynthOracle>(rc.space, rc.oracle_seed, rc.noise_sigma, rc.label_noise,
                                           rc.seed);
  }
  write_config_echo(a.common.out, rc);
  try {
    const SearchReport report = run_search(rc.search, rc.space, *oracle);
    write_report(report, a.common.out);
    out << "final: " << arch_key(report.final_arch, rc.space);
    if (report.final_acc) out << " acc " << fmt(*report.final_acc);
    if (report.final_percentile) out << " percentile " << fmt(*report.final_percentile);
    out << "\n";
    return kExitOk;
  } catch (const SearchError& e) {
    write_report(e.snapshot(), a.common.out);
    err << "search failed: " << e.what() << " (partial report written to " << a.common.out << ")\n";
    return kExitRuntime;
  }
}

// report --------------------------------------------------------------------

struct ReportArgs {
  Common common;
  std::string input;
  std::string bench;
};

std::string opt_str(const nlohmann::json& v) { return v.is_null() ? "n/a" : fmt(v.get<double>()); }

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const RunConfig rc = load_config(a.common);
  if (!a.common.out.empty()) require_writable(a.common.out);
  nlohmann::json report;
  {
    std::ifstream in(a.input);
    if (!in) throw UsageError("cannot open report " + a.input);
    try {
      report = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("report " + a.input + ": " + e.what());
    }
  }
  if (report.value("format", std::string()) != "ctnas-search-report/1") {
    throw UsageError("report " + a.input + ": unsupported or missing format tag");
  }
  SpaceSpec space = rc.space;
  if (report.contains("config") && report["config"].contains("space")) {
    space = report["config"]["space"].get<SpaceSpec>();
  }
  std::optional<BenchTable> table;
  if (!a.bench.empty()) table.emplace(load_bench(a.bench, space));

  std::ostringstream s;
  s << "final architecture: " << report.value("final_key", std::string()) << "\n";
  s << "final accuracy: " << opt_str(report["final_acc"]) << "\n";
  s << "final percentile: " << opt_str(report["final_percentile"]) << "\n";
  if (table && !report["final_arch"].is_null()) {
    const Architecture arch = arch_from_json(report["final_arch"], space);
    const PerfRecord* rec = table->find(arch_key(arch, space));
    if (rec) {
      std::vector<double> accs;
      for (const auto& r : table->records()) accs.push_back(r.mean_acc);
      std::sort(accs.begin(), accs.end(), std::greater<>());
      const auto rank = static_cast<std::size_t>(
          std::upper_bound(accs.begin(), accs.end(), rec->mean_acc, std::greater<>()) -
          std::lower_bound(accs.begin(), accs.end(), rec->mean_acc, std::greater<>()));
      const auto better = static_cast<std::size_t>(
          std::lower_bound(accs.begin(), accs.end(), rec->mean_acc, std::greater<>()) - accs.begin());
      s << "bench rank: " << better + 1 << " of " << accs.size() << " (" << rank
        << " tied), percentile " << fmt(100.0 * static_cast<double>(better + 1) / static_cast<double>(accs.size()))
        << "\n";
    } else {
      s << "bench rank: final architecture not in bench\n";
    }
  }
  s << "best sampled accuracy: " << opt_str(report["best_sampled_acc"]) << "\n";
  s << "oracle queries: " << report.value("oracle_queries", 0) << "\n";
  s << "distinct sampled: " << report.value("distinct_sampled", 0) << "\n";
  if (report.contains("error")) s << "error: " << report["error"].get<std::string>() << "\n";
  s << "rounds:\n";
  for (const auto& r : report["rounds"]) {
    s << "  " << r["round"].get<std::size_t>() << "  step " << r["controller_step"].get<std::size_t>()
      << "  baseline " << r["baseline_key"].get<std::string>() << "  acc "
      << opt_str(r["baseline_acc"]) << "  reward " << fmt(r["mean_reward"].get<double>()) << "\n";
  }
  if (a.common.out.empty()) {
    out << s.str();
  } else {
    write_file(a.common.out, s.str());
    write_config_echo(a.common.out, rc);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive neural architecture search on tabular or synthetic oracles", "ctnas"};
  app.require_subcommand(1);

  GenBenchArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-bench", "Write a synthetic JSON-lines benchmark");
  add_common(gen_cmd, gen.common, true);
  gen.count_opt = gen_cmd->add_option("--count", gen.count, "Number of distinct random architectures");
  gen.count_opt->excludes(gen_cmd->add_flag("--all", gen.all, "Enumerate the whole space"));

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-nac", "Train a comparator on benchmark pairs");
  add_common(train_cmd, train.common, true);
  train_cmd->add_option("--bench", train.bench, "Benchmark file")->required()->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Held-out KTau and risks");
  add_common(eval_cmd, ev.common, true);
  eval_cmd->add_option("--bench", ev.bench, "Benchmark file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", ev.model, "Comparator model JSON")->check(CLI::ExistingFile);
  eval_cmd->add_flag("--perfect-oracle", ev.perfect, "Use the ground-truth comparator");
  ev.constant_opt = eval_cmd->add_option("--constant", ev.constant, "Use a constant comparator");

  SearchArgs search;
  auto* search_cmd = app.add_subcommand("search", "Run the search loop");
  add_common(search_cmd, search.common, true);
  search_cmd->add_option("--bench", search.bench, "Benchmark file used as the oracle")
      ->check(CLI::ExistingFile);

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Summarise a search report");
  add_common(report_cmd, rep.common, false);
  report_cmd->add_option("--input", rep.input, "Search report JSON")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--bench", rep.bench, "Benchmark file for an independent rank")
      ->check(CLI::ExistingFile);

  std::vector<const char*> argv{"ctnas"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_bench(gen, out);
    if (*train_cmd) return cmd_train_nac(train, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*search_cmd) return cmd_search(search, out, err);
    if (*report_cmd) return cmd_report(rep, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ctnas
