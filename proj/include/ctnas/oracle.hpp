#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctnas/arch_space.hpp"

namespace ctnas {

/// Feature vector of the synthetic scorer. Per real op: count / max_nodes;
/// then edges / max_edges; longest IN->OUT path / max_nodes; per real op:
/// sum of node depths / max_nodes^2; OUT in-degree / max_nodes; number of
/// IN->OUT paths / 2^(max_nodes-2).
std::vector<double> synth_features(const Architecture& arch, const SpaceSpec& spec);

/// Standard-normal weights, one per feature, drawn from oracle_seed.
std::vector<double> synth_weights(const SpaceSpec& spec, std::uint64_t oracle_seed);

/// 0.80 + 0.15 * sigmoid(w . phi). Throws std::invalid_argument on an invalid
/// architecture.
double synth_perf(const Architecture& arch, const SpaceSpec& spec, std::uint64_t oracle_seed);
double synth_perf(const Architecture& arch, const SpaceSpec& spec,
                  const std::vector<double>& weights);

inline constexpr double kDefaultNoiseSigma = 0.002;

/// Noise draw for one (architecture, training seed); deterministic.
double seed_noise(const std::string& key, std::uint64_t train_seed, double sigma);

/// synth_perf plus N(0, sigma^2) noise keyed by (arch_key, train_seed),
/// clamped to [0, 1].
double noisy_eval(const Architecture& arch, const SpaceSpec& spec, std::uint64_t oracle_seed,
                  std::uint64_t train_seed, double sigma = kDefaultNoiseSigma);

/// 1 iff r_a >= r_b.
int label_pair(double r_a, double r_b);

struct PerfRecord {
  std::string arch_key;
  Architecture arch;
  double mean_acc = 0.0;
  std::vector<double> seed_accs;
};

enum class Provenance { kSynthetic, kLoaded };

/// Records in insertion order with key lookup.
class BenchTable {
 public:
  BenchTable() = default;
  BenchTable(SpaceSpec spec, Provenance provenance)
      : spec_(std::move(spec)), provenance_(provenance) {}

  const SpaceSpec& spec() const { return spec_; }
  Provenance provenance() const { return provenance_; }
  const std::vector<PerfRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Replaces an existing record with the same key in place. Returns false
  /// when the key was already present.
  bool upsert(PerfRecord record);
  const PerfRecord* find(const std::string& key) const;

 private:
  SpaceSpec spec_;
  Provenance provenance_ = Provenance::kSynthetic;
  std::vector<PerfRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

class TableParseError : public std::runtime_error {
 public:
  TableParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One JSON object per line: {"n", "ops", "adj", "acc"} plus optional
/// "seed_accs". Blank lines are skipped.
BenchTable load_table(const std::filesystem::path& path, const SpaceSpec& spec);
BenchTable parse_table(std::istream& in, const SpaceSpec& spec);
void save_table(const BenchTable& table, const std::filesystem::path& path);
void write_table(const BenchTable& table, std::ostream& out);

/// Source of ground-truth accuracy for the search engine.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual double accuracy(const Architecture& arch) const = 0;
  /// Candidate architectures when the oracle only covers a fixed set.
  virtual const std::vector<Architecture>* population() const { return nullptr; }
};

class SynthOracle : public Oracle {
 public:
  /// With label_noise set, accuracy() returns noisy_eval under train_seed
  /// instead of the mean.
  SynthOracle(SpaceSpec spec, std::uint64_t oracle_seed, double noise_sigma = kDefaultNoiseSigma,
              bool label_noise = false, std::uint64_t train_seed = 0);

  double accuracy(const Architecture& arch) const override;

 private:
  SpaceSpec spec_;
  std::vector<double> weights_;
  double sigma_;
  bool label_noise_;
  std::uint64_t train_seed_;
};

class TableOracle : public Oracle {
 public:
  explicit TableOracle(const BenchTable& table);
  /// Throws std::out_of_range for architectures missing from the table.
  double accuracy(const Architecture& arch) const override;
  const std::vector<Architecture>* population() const override { return &population_; }

 private:
  const BenchTable* table_;
  std::vector<Architecture> population_;
};

/// Synthetic table over a list of architectures.
BenchTable synth_table(const SpaceSpec& spec, const std::vector<Architecture>& archs,
                       std::uint64_t oracle_seed);

}  // namespace ctnas
