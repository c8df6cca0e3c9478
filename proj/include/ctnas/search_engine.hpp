#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctnas/arch_space.hpp"
#include "ctnas/controller.hpp"
#include "ctnas/eval_metrics.hpp"
#include "ctnas/nac.hpp"
#include "ctnas/optim.hpp"
#include "ctnas/oracle.hpp"

namespace ctnas {

enum class BaselineScheme { kCurriculum, kFixed, kRandom };
enum class ComparatorKind { kNac, kPerfectOracle };

struct SearchConfig {
  std::size_t labeled_archs = 423;     // M
  std::size_t samples_per_step = 1;    // N
  std::size_t pseudo_keep = 256;       // K
  std::size_t pseudo_pool = 512;       // candidate pairs scored per round
  std::size_t controller_steps = 10000;
  std::size_t baseline_every = 1000;
  std::size_t nac_batch = 256;
  std::size_t nac_warmup_iters = 1000;  // before the first round
  std::size_t nac_iters_per_round = 200;
  double eta = 0.1;
  double pseudo_ratio = 0.5;
  double entropy_weight = 5e-4;
  std::size_t history_cap = 64;
  std::size_t pseudo_buffer_factor = 10;
  BaselineScheme baseline_scheme = BaselineScheme::kCurriculum;
  ComparatorKind comparator = ComparatorKind::kNac;
  bool variance_reduction = false;
  bool cold_start = false;
  bool augment_pairs = true;
  AdamConfig nac_adam;
  NacConfig nac;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the first offending field.
  void check() const;
};

void to_json(nlohmann::json& j, const SearchConfig& c);
void from_json(const nlohmann::json& j, SearchConfig& c);

struct Bootstrap {
  std::vector<ArchAcc> records;
  std::vector<LabeledPair> pairs;
  Architecture baseline;
};

/// Labels M distinct architectures (drawn from the oracle's population when
/// it has one, else random_arch), builds their pairs and draws the initial
/// baseline from `policy`.
Bootstrap bootstrap(const SearchConfig& config, const SpaceSpec& spec, const Oracle& oracle,
                    const PolicyParams& policy, std::mt19937_64& rng);

/// Top-K of the candidate pairs by confidence |p - 0.5|, pseudo-labelled
/// 1{p >= 0.5}; ties keep candidate order. K larger than the candidate count
/// returns everything with a warning.
std::vector<LabeledPair> explore_pairs(
    std::span<const std::pair<Architecture, Architecture>> candidates, const Comparator& compare,
    std::size_t k);

/// explore_pairs over every ordered pair of distinct architectures.
std::vector<LabeledPair> explore_data(std::span<const Architecture> sampled,
                                      const Comparator& compare, std::size_t k,
                                      const SpaceSpec& spec);

struct BaselineChoice {
  Architecture arch;
  std::size_t index = 0;        // position in the deduplicated candidate set
  std::vector<Architecture> candidates;
  std::vector<double> scores;   // empty when there is a single candidate
};

/// Curriculum update: candidates = history followed by sampled, deduplicated
/// by key (first occurrence kept). Each candidate scores the mean of
/// compare(it, other) over all others; a scan with ">=" keeps the last
/// maximum.
BaselineChoice update_baseline(std::span<const Architecture> history,
                               std::span<const Architecture> sampled, const Comparator& compare,
                               const SpaceSpec& spec);

struct RoundRecord {
  std::size_t round = 0;
  std::size_t controller_step = 0;  // steps completed at the end of the round
  std::string baseline_key;
  std::optional<double> baseline_acc;
  double mean_reward = 0.0;
  std::optional<double> nac_loss;
  std::size_t pseudo_pairs = 0;
  std::size_t ground_truth_pairs = 0;
  std::size_t candidates = 0;
};

struct SearchReport {
  nlohmann::json config_echo;
  SpaceSpec spec;
  std::vector<RoundRecord> rounds;
  std::vector<double> reward_trace;
  Architecture final_arch;
  std::optional<double> final_acc;
  std::optional<double> final_percentile;
  Architecture best_sampled;
  std::optional<double> best_sampled_acc;
  std::size_t oracle_queries = 0;
  std::size_t distinct_sampled = 0;
  PolicyParams policy;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
  /// Header round,controller_step,baseline_key,baseline_acc,mean_reward,nac_loss,pseudo_pairs
  std::string rounds_csv() const;
};

class SearchError : public std::runtime_error {
 public:
  SearchError(const std::string& what, SearchReport snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const SearchReport& snapshot() const { return snapshot_; }

 private:
  SearchReport snapshot_;
};

/// Runs the contrastive search loop. Any failure is rethrown as SearchError
/// carrying the report built so far.
SearchReport run_search(const SearchConfig& config, const SpaceSpec& spec, const Oracle& oracle);

/// Best of `budget` distinct oracle-labelled architectures drawn the same way
/// as the bootstrap set.
ArchAcc random_search(const SpaceSpec& spec, const Oracle& oracle, std::size_t budget,
                      std::mt19937_64& rng);

}  // namespace ctnas
