#include "ctnas/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctnas {

std::string DecisionSlot::name() const {
  return kind == Kind::kEdge ? "edge:" + std::to_string(from) + "-" + std::to_string(to)
                             : "op:" + std::to_string(from);
}

std::vector<DecisionSlot> decision_layout(const SpaceSpec& spec) {
  spec.check();
  std::vector<DecisionSlot> slots;
  const std::size_t n = spec.max_nodes;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i) slots.push_back({DecisionSlot::Kind::kEdge, i, j, 2});
  const std::size_t k = spec.real_ops().size();
  for (std::size_t v = 1; v + 1 < n; ++v) slots.push_back({DecisionSlot::Kind::kOp, v, 0, k});
  return slots;
}

PolicyParams PolicyParams::uniform(const SpaceSpec& spec) {
  PolicyParams p;
  p.slots = decision_layout(spec);
  for (const auto& s : p.slots) p.logits.emplace_back(s.classes, 0.0);
  return p;
}

std::size_t PolicyParams::num_params() const {
  std::size_t n = 0;
  for (const auto& l : logits) n += l.size();
  return n;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= s;
  return p;
}

namespace {

double log_softmax_at(std::span<const double> logits, std::size_t k) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return logits[k] - mx - std::log(s);
}

void check_layout(const PolicyParams& policy) {
  if (policy.slots.size() != policy.logits.size()) {
    throw PolicyError("policy: slot and logit counts differ");
  }
  for (std::size_t s = 0; s < policy.slots.size(); ++s) {
    if (policy.logits[s].size() != policy.slots[s].classes) {
      throw PolicyError("policy: slot " + policy.slots[s].name() + " has wrong logit count");
    }
  }
}

void check_trace(const PolicyParams& policy, std::span<const std::size_t> choices) {
  check_layout(policy);
  if (choices.size() != policy.slots.size()) {
    throw PolicyError("trace has " + std::to_string(choices.size()) + " choices, policy has " +
                      std::to_string(policy.slots.size()) + " slots");
  }
  for (std::size_t s = 0; s < choices.size(); ++s) {
    if (choices[s] >= policy.slots[s].classes) {
      throw PolicyError("trace choice out of range at slot " + policy.slots[s].name());
    }
  }
}

}  // namespace

Architecture decode_choices(const SpaceSpec& spec, const PolicyParams& policy,
                            std::span<const std::size_t> choices) {
  check_trace(policy, choices);
  const std::size_t n = spec.max_nodes;
  const auto real = spec.real_ops();
  std::vector<std::uint8_t> adj(n * n, 0);
  std::vector<std::size_t> ops(n - 2, real.front());
  for (std::size_t s = 0; s < policy.slots.size(); ++s) {
    const auto& slot = policy.slots[s];
    if (slot.kind == DecisionSlot::Kind::kEdge) {
      adj[slot.from * n + slot.to] = choices[s] == 1 ? 1 : 0;
    } else {
      ops[slot.from - 1] = real.at(choices[s]);
    }
  }
  return prune_isolated(spec, adj, ops);
}

SampleTrace sample(const PolicyParams& policy, const SpaceSpec& spec, std::mt19937_64& rng,
                   std::size_t max_retries) {
  check_layout(policy);
  std::vector<std::vector<double>> probs;
  probs.reserve(policy.logits.size());
  for (const auto& l : policy.logits) probs.push_back(softmax(l));

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SampleTrace trace;
  trace.choices.resize(policy.slots.size());
  for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
    double lp = 0.0;
    for (std::size_t s = 0; s < probs.size(); ++s) {
      const auto& p = probs[s];
      const double u = unif(rng);
      std::size_t k = 0;
      double acc = p[0];
      while (u >= acc && k + 1 < p.size()) acc += p[++k];
      trace.choices[s] = k;
      lp += log_softmax_at(policy.logits[s], k);
    }
    Architecture a = decode_choices(spec, policy, trace.choices);
    if (is_valid(a, spec)) {
      trace.arch = std::move(a);
      trace.log_prob = lp;
      return trace;
    }
  }
  throw SamplingError("controller: no valid architecture after " + std::to_string(max_retries) +
                      " draws");
}

double log_prob(const PolicyParams& policy, const SampleTrace& trace) {
  check_trace(policy, trace.choices);
  double lp = 0.0;
  for (std::size_t s = 0; s < policy.logits.size(); ++s)
    lp += log_softmax_at(policy.logits[s], trace.choices[s]);
  return lp;
}

std::vector<std::vector<double>> grad_log_prob(const PolicyParams& policy,
                                               const SampleTrace& trace) {
  check_trace(policy, trace.choices);
  std::vector<std::vector<double>> g;
  g.reserve(policy.logits.size());
  for (std::size_t s = 0; s < policy.logits.size(); ++s) {
    auto p = softmax(policy.logits[s]);
    for (double& v : p) v = -v;
    p[trace.choices[s]] += 1.0;
    g.push_back(std::move(p));
  }
  return g;
}

double entropy(const PolicyParams& policy) {
  check_layout(policy);
  double h = 0.0;
  for (const auto& l : policy.logits) {
    const auto p = softmax(l);
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::vector<std::vector<double>> grad_entropy(const PolicyParams& policy) {
  check_layout(policy);
  std::vector<std::vector<double>> g;
  g.reserve(policy.logits.size());
  for (const auto& l : policy.logits) {
    const auto p = softmax(l);
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
    // dH/dz_k = -p_k (log p_k + H)
    std::vector<double> gs(p.size());
    for (std::size_t k = 0; k < p.size(); ++k)
      gs[k] = p[k] > 0.0 ? -p[k] * (std::log(p[k]) + h) : 0.0;
    g.push_back(std::move(gs));
  }
  return g;
}

void reinforce_update(PolicyParams& policy, std::span<const SampleTrace> traces,
                      std::span<const double> rewards, const ReinforceOptions& options,
                      RewardBaseline* baseline) {
  if (traces.size() != rewards.size()) {
    throw std::invalid_argument("reinforce_update: " + std::to_string(traces.size()) +
                                " traces vs " + std::to_string(rewards.size()) + " rewards");
  }
  if (traces.empty()) throw std::invalid_argument("reinforce_update: no traces");
  for (double r : rewards) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("reinforce_update: reward outside [0, 1]");
  }
  check_layout(policy);

  double b = 0.0;
  if (options.variance_reduction && baseline && baseline->initialised) b = baseline->value;

  std::vector<std::vector<double>> step;
  for (const auto& l : policy.logits) step.emplace_back(l.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(traces.size());
  for (std::size_t j = 0; j < traces.size(); ++j) {
    const double adv = rewards[j] - b;
    if (adv == 0.0) continue;
    const auto g = grad_log_prob(policy, traces[j]);
    for (std::size_t s = 0; s < g.size(); ++s)
      for (std::size_t k = 0; k < g[s].size(); ++k) step[s][k] += inv_n * adv * g[s][k];
  }
  if (options.entropy_weight != 0.0) {
    const auto gh = grad_entropy(policy);
    for (std::size_t s = 0; s < gh.size(); ++s)
      for (std::size_t k = 0; k < gh[s].size(); ++k) step[s][k] += options.entropy_weight * gh[s][k];
  }
  for (std::size_t s = 0; s < step.size(); ++s)
    for (std::size_t k = 0; k < step[s].size(); ++k) policy.logits[s][k] += options.lr * step[s][k];

  if (options.variance_reduction && baseline) {
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) * inv_n;
    if (!baseline->initialised) {
      baseline->value = mean;
      baseline->initialised = true;
    } else {
      baseline->value = options.baseline_decay * baseline->value +
                        (1.0 - options.baseline_decay) * mean;
    }
  }
}

nlohmann::json policy_to_json(const PolicyParams& policy) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t s = 0; s < policy.slots.size(); ++s) j[policy.slots[s].name()] = policy.logits[s];
  return j;
}

PolicyParams policy_from_json(const nlohmann::json& j, const SpaceSpec& spec) {
  PolicyParams p = PolicyParams::uniform(spec);
  for (std::size_t s = 0; s < p.slots.size(); ++s) {
    const std::string name = p.slots[s].name();
    if (!j.contains(name)) throw PolicyError("policy JSON: missing slot " + name);
    auto logits = j.at(name).get<std::vector<double>>();
    if (logits.size() != p.slots[s].classes) {
      throw PolicyError("policy JSON: slot " + name + " has wrong logit count");
    }
    p.logits[s] = std::move(logits);
  }
  return p;
}

}  // namespace ctnas
