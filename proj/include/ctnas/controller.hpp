#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctnas/arch_space.hpp"

namespace ctnas {

/// One categorical decision of the policy.
struct DecisionSlot {
  enum class Kind { kEdge, kOp };
  Kind kind;
  std::size_t from = 0;  // edge: source node; op: node index
  std::size_t to = 0;    // edge: target node
  std::size_t classes = 2;

  /// "edge:0-3" or "op:2".
  std::string name() const;
};

/// Decision layout for a space: every forward edge slot (absent/present) of
/// the full max_nodes graph in (to, from) order, then one op choice per
/// middle node over the real ops.
std::vector<DecisionSlot> decision_layout(const SpaceSpec& spec);

/// Factorised categorical policy pi(alpha; theta): independent logits per
/// decision slot.
struct PolicyParams {
  std::vector<DecisionSlot> slots;
  std::vector<std::vector<double>> logits;

  /// All-zero (uniform) logits.
  static PolicyParams uniform(const SpaceSpec& spec);

  std::size_t num_params() const;
  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.logits == b.logits;
  }
};

std::vector<double> softmax(std::span<const double> logits);

struct SampleTrace {
  Architecture arch;
  std::vector<std::size_t> choices;  // one per slot
  double log_prob = 0.0;
};

/// Architecture decoded from a full choice vector (isolated middle nodes
/// dropped); not validated.
Architecture decode_choices(const SpaceSpec& spec, const PolicyParams& policy,
                            std::span<const std::size_t> choices);

class PolicyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Draws every decision from its softmax and resamples whole architectures
/// until one validates. log_prob is that of the accepted draw, not
/// renormalised over valid architectures.
SampleTrace sample(const PolicyParams& policy, const SpaceSpec& spec, std::mt19937_64& rng,
                   std::size_t max_retries = kDefaultRetryBudget);

/// Sum of per-decision log-probabilities of the trace's choices.
double log_prob(const PolicyParams& policy, const SampleTrace& trace);

/// d log_prob / d logits, laid out like policy.logits.
std::vector<std::vector<double>> grad_log_prob(const PolicyParams& policy,
                                               const SampleTrace& trace);

/// Sum of categorical entropies over slots.
double entropy(const PolicyParams& policy);
std::vector<std::vector<double>> grad_entropy(const PolicyParams& policy);

struct ReinforceOptions {
  double lr = 0.1;
  double entropy_weight = 5e-4;
  /// Subtract a moving-average reward baseline (off reproduces the plain
  /// update).
  bool variance_reduction = false;
  double baseline_decay = 0.95;
};

/// Running reward mean used when variance_reduction is on.
struct RewardBaseline {
  bool initialised = false;
  double value = 0.0;
};

/// theta += lr * ((1/N) sum_j grad log pi(alpha_j) (r_j - b) + w_H grad H).
/// Rewards must lie in [0, 1].
void reinforce_update(PolicyParams& policy, std::span<const SampleTrace> traces,
                      std::span<const double> rewards, const ReinforceOptions& options,
                      RewardBaseline* baseline = nullptr);

nlohmann::json policy_to_json(const PolicyParams& policy);
PolicyParams policy_from_json(const nlohmann::json& j, const SpaceSpec& spec);

}  // namespace ctnas
