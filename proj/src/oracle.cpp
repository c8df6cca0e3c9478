#include "ctnas/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "ctnas/log.hpp"
#include "ctnas/matrix.hpp"

namespace ctnas {

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void require_valid(const Architecture& arch, const SpaceSpec& spec, const char* who) {
  const auto violations = validate(arch, spec);
  if (!violations.empty()) {
    throw std::invalid_argument(std::string(who) + ": invalid architecture (" +
                                violations.front().message + ")");
  }
}

}  // namespace

std::vector<double> synth_features(const Architecture& arch, const SpaceSpec& spec) {
  const auto real = spec.real_ops();
  const std::size_t n = arch.n_nodes();
  const double max_nodes = static_cast<double>(spec.max_nodes);

  std::vector<long> depth(n, -1);
  std::vector<double> paths(n, 0.0);
  depth[0] = 0;
  paths[0] = 1.0;
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (!arch.edge(i, j)) continue;
      paths[j] += paths[i];
      if (depth[i] >= 0) depth[j] = std::max(depth[j], depth[i] + 1);
    }
  }

  std::vector<double> counts(real.size(), 0.0), depth_sums(real.size(), 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (std::size_t k = 0; k < real.size(); ++k) {
      if (arch.op(i) != real[k]) continue;
      counts[k] += 1.0;
      depth_sums[k] += static_cast<double>(std::max(depth[i], 0L));
    }
  }
  double out_degree = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) out_degree += arch.edge(i, n - 1) ? 1.0 : 0.0;

  std::vector<double> phi;
  phi.reserve(2 * real.size() + 4);
  for (double c : counts) phi.push_back(c / max_nodes);
  phi.push_back(static_cast<double>(arch.edge_count()) / static_cast<double>(spec.max_edges));
  phi.push_back(static_cast<double>(longest_path(arch)) / max_nodes);
  for (double s : depth_sums) phi.push_back(s / (max_nodes * max_nodes));
  phi.push_back(out_degree / max_nodes);
  phi.push_back((n ? paths[n - 1] : 0.0) / std::ldexp(1.0, static_cast<int>(spec.max_nodes) - 2));
  return phi;
}

std::vector<double> synth_weights(const SpaceSpec& spec, std::uint64_t oracle_seed) {
  std::mt19937_64 rng(oracle_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(2 * spec.real_ops().size() + 4);
  for (double& v : w) v = normal(rng);
  return w;
}

double synth_perf(const Architecture& arch, const SpaceSpec& spec,
                  const std::vector<double>& weights) {
  require_valid(arch, spec, "synth_perf");
  const auto phi = synth_features(arch, spec);
  if (phi.size() != weights.size()) {
    throw std::invalid_argument("synth_perf: weight vector has the wrong length");
  }
  double z = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) z += weights[i] * phi[i];
  return 0.80 + 0.15 * sigmoid(z);
}

double synth_perf(const Architecture& arch, const SpaceSpec& spec, std::uint64_t oracle_seed) {
  return synth_perf(arch, spec, synth_weights(spec, oracle_seed));
}

double seed_noise(const std::string& key, std::uint64_t train_seed, double sigma) {
  if (sigma == 0.0) return 0.0;
  std::mt19937_64 rng(fnv1a(key) ^ (train_seed * 0x9E3779B97F4A7C15ULL));
  std::normal_distribution<double> normal(0.0, sigma);
  return normal(rng);
}

double noisy_eval(const Architecture& arch, const SpaceSpec& spec, std::uint64_t oracle_seed,
                  std::uint64_t train_seed, double sigma) {
  const double mean = synth_perf(arch, spec, oracle_seed);
  return std::clamp(mean + seed_noise(arch_key(arch, spec), train_seed, sigma), 0.0, 1.0);
}

int label_pair(double r_a, double r_b) { return r_a - r_b >= 0.0 ? 1 : 0; }

// --------------------------------------------------------------- BenchTable

bool BenchTable::upsert(PerfRecord record) {
  auto it = index_.find(record.arch_key);
  if (it != index_.end()) {
    records_[it->second] = std::move(record);
    return false;
  }
  index_.emplace(record.arch_key, records_.size());
  records_.push_back(std::move(record));
  return true;
}

const PerfRecord* BenchTable::find(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &records_[it->second];
}

TableParseError::TableParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

double checked_acc(const nlohmann::json& v, std::size_t line) {
  if (!v.is_number()) throw TableParseError(line, "accuracy must be a number");
  const double acc = v.get<double>();
  if (!(acc >= 0.0 && acc <= 1.0)) {
    throw TableParseError(line, "accuracy " + v.dump() + " outside [0, 1]");
  }
  return acc;
}

}  // namespace

BenchTable parse_table(std::istream& in, const SpaceSpec& spec) {
  BenchTable table(spec, Provenance::kLoaded);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw TableParseError(line, e.what());
    }
    PerfRecord rec;
    try {
      rec.arch = arch_from_json(j, spec);
    } catch (const std::exception& e) {
      throw TableParseError(line, e.what());
    }
    const auto violations = validate(rec.arch, spec);
    if (!violations.empty()) throw TableParseError(line, violations.front().message);
    if (!j.contains("acc")) throw TableParseError(line, "missing field acc");
    rec.mean_acc = checked_acc(j["acc"], line);
    if (j.contains("seed_accs")) {
      if (!j["seed_accs"].is_array()) throw TableParseError(line, "seed_accs must be an array");
      for (const auto& v : j["seed_accs"]) rec.seed_accs.push_back(checked_acc(v, line));
    }
    rec.arch_key = arch_key(rec.arch, spec);
    const std::string key = rec.arch_key;
    if (!table.upsert(std::move(rec))) {
      warn("line " + std::to_string(line) + ": duplicate architecture " + key +
           ", keeping the later record");
    }
  }
  return table;
}

BenchTable load_table(const std::filesystem::path& path, const SpaceSpec& spec) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open benchmark file " + path.string());
  return parse_table(in, spec);
}

void write_table(const BenchTable& table, std::ostream& out) {
  for (const auto& rec : table.records()) {
    nlohmann::json j = arch_to_json(rec.arch, table.spec());
    j["acc"] = rec.mean_acc;
    if (!rec.seed_accs.empty()) j["seed_accs"] = rec.seed_accs;
    out << j.dump() << '\n';
  }
}

void save_table(const BenchTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write benchmark file " + path.string());
  write_table(table, out);
}

BenchTable synth_table(const SpaceSpec& spec, const std::vector<Architecture>& archs,
                       std::uint64_t oracle_seed) {
  const auto w = synth_weights(spec, oracle_seed);
  BenchTable table(spec, Provenance::kSynthetic);
  for (const auto& a : archs) {
    table.upsert(PerfRecord{arch_key(a, spec), a, synth_perf(a, spec, w), {}});
  }
  return table;
}

// ------------------------------------------------------------------ oracles

SynthOracle::SynthOracle(SpaceSpec spec, std::uint64_t oracle_seed, double noise_sigma,
                         bool label_noise, std::uint64_t train_seed)
    : spec_(std::move(spec)),
      weights_(synth_weights(spec_, oracle_seed)),
      sigma_(noise_sigma),
      label_noise_(label_noise),
      train_seed_(train_seed) {}

double SynthOracle::accuracy(const Architecture& arch) const {
  const double mean = synth_perf(arch, spec_, weights_);
  if (!label_noise_) return mean;
  return std::clamp(mean + seed_noise(arch_key(arch, spec_), train_seed_, sigma_), 0.0, 1.0);
}

TableOracle::TableOracle(const BenchTable& table) : table_(&table) {
  population_.reserve(table.size());
  for (const auto& rec : table.records()) population_.push_back(rec.arch);
}

double TableOracle::accuracy(const Architecture& arch) const {
  const std::string key = arch_key(arch, table_->spec());
  const PerfRecord* rec = table_->find(key);
  if (!rec) throw std::out_of_range("benchmark has no record for " + key);
  return rec->mean_acc;
}

}  // namespace ctnas
