#include "ctnas/search_engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ctnas/log.hpp"

namespace ctnas {

// ------------------------------------------------------------------- config

void SearchConfig::check() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("search config: " + what); };
  if (labeled_archs < 2) fail("labeled_archs (M) must be >= 2");
  if (samples_per_step < 1) fail("samples_per_step (N) must be >= 1");
  if (controller_steps < 1) fail("controller_steps (T) must be >= 1");
  if (baseline_every < 1) fail("baseline_every must be >= 1");
  if (nac_batch < 1) fail("nac_batch must be >= 1");
  if (!(pseudo_ratio >= 0.0 && pseudo_ratio < 1.0)) fail("pseudo_ratio (r) must lie in [0, 1)");
  if (pseudo_ratio > 0.0 && pseudo_keep < 1) fail("pseudo_keep (K) must be >= 1 when r > 0");
  if (pseudo_keep > pseudo_pool) fail("pseudo_keep (K) must not exceed pseudo_pool");
  if (!std::isfinite(eta) || eta < 0.0) fail("eta must be finite and >= 0");
  if (!std::isfinite(entropy_weight) || entropy_weight < 0.0) fail("entropy_weight must be >= 0");
  if (history_cap < 1) fail("history_cap must be >= 1");
  if (pseudo_buffer_factor < 1) fail("pseudo_buffer_factor must be >= 1");
  if (!(nac_adam.lr >= 0.0) || !(nac_adam.weight_decay >= 0.0)) fail("nac adam lr/weight_decay must be >= 0");
  if (nac.dim < 1) fail("nac.dim must be >= 1");
}

namespace {

const char* scheme_name(BaselineScheme s) {
  switch (s) {
    case BaselineScheme::kCurriculum: return "curriculum";
    case BaselineScheme::kFixed: return "fixed";
    case BaselineScheme::kRandom: return "random";
  }
  return "curriculum";
}

BaselineScheme parse_scheme(const std::string& s) {
  if (s == "curriculum") return BaselineScheme::kCurriculum;
  if (s == "fixed") return BaselineScheme::kFixed;
  if (s == "random") return BaselineScheme::kRandom;
  throw std::invalid_argument("search config: baseline_scheme must be curriculum|fixed|random");
}

}  // namespace

void to_json(nlohmann::json& j, const SearchConfig& c) {
  j = nlohmann::json{
      {"labeled_archs", c.labeled_archs},
      {"samples_per_step", c.samples_per_step},
      {"pseudo_keep", c.pseudo_keep},
      {"pseudo_pool", c.pseudo_pool},
      {"controller_steps", c.controller_steps},
      {"baseline_every", c.baseline_every},
      {"nac_batch", c.nac_batch},
      {"nac_warmup_iters", c.nac_warmup_iters},
      {"nac_iters_per_round", c.nac_iters_per_round},
      {"eta", c.eta},
      {"pseudo_ratio", c.pseudo_ratio},
      {"entropy_weight", c.entropy_weight},
      {"history_cap", c.history_cap},
      {"pseudo_buffer_factor", c.pseudo_buffer_factor},
      {"baseline_scheme", scheme_name(c.baseline_scheme)},
      {"comparator", c.comparator == ComparatorKind::kNac ? "nac" : "perfect_oracle"},
      {"variance_reduction", c.variance_reduction},
      {"cold_start", c.cold_start},
      {"augment_pairs", c.augment_pairs},
      {"nac_lr", c.nac_adam.lr},
      {"nac_weight_decay", c.nac_adam.weight_decay},
      {"nac", c.nac},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, SearchConfig& c) {
  const SearchConfig d;
  c.labeled_archs = j.value("labeled_archs", d.labeled_archs);
  c.samples_per_step = j.value("samples_per_step", d.samples_per_step);
  c.pseudo_keep = j.value("pseudo_keep", d.pseudo_keep);
  c.pseudo_pool = j.value("pseudo_pool", d.pseudo_pool);
  c.controller_steps = j.value("controller_steps", d.controller_steps);
  c.baseline_every = j.value("baseline_every", d.baseline_every);
  c.nac_batch = j.value("nac_batch", d.nac_batch);
  c.nac_warmup_iters = j.value("nac_warmup_iters", d.nac_warmup_iters);
  c.nac_iters_per_round = j.value("nac_iters_per_round", d.nac_iters_per_round);
  c.eta = j.value("eta", d.eta);
  c.pseudo_ratio = j.value("pseudo_ratio", d.pseudo_ratio);
  c.entropy_weight = j.value("entropy_weight", d.entropy_weight);
  c.history_cap = j.value("history_cap", d.history_cap);
  c.pseudo_buffer_factor = j.value("pseudo_buffer_factor", d.pseudo_buffer_factor);
  c.baseline_scheme = parse_scheme(j.value("baseline_scheme", std::string("curriculum")));
  const std::string comp = j.value("comparator", std::string("nac"));
  if (comp == "nac") {
    c.comparator = ComparatorKind::kNac;
  } else if (comp == "perfect_oracle") {
    c.comparator = ComparatorKind::kPerfectOracle;
  } else {
    throw std::invalid_argument("search config: comparator must be nac|perfect_oracle");
  }
  c.variance_reduction = j.value("variance_reduction", d.variance_reduction);
  c.cold_start = j.value("cold_start", d.cold_start);
  c.augment_pairs = j.value("augment_pairs", d.augment_pairs);
  c.nac_adam = d.nac_adam;
  c.nac_adam.lr = j.value("nac_lr", d.nac_adam.lr);
  c.nac_adam.weight_decay = j.value("nac_weight_decay", d.nac_adam.weight_decay);
  c.nac = j.contains("nac") ? j.at("nac").get<NacConfig>() : d.nac;
  c.seed = j.value("seed", d.seed);
}

// ---------------------------------------------------------------- bootstrap

namespace {

std::vector<Architecture> draw_distinct(const SpaceSpec& spec, const Oracle& oracle,
                                        std::size_t count, std::mt19937_64& rng) {
  if (const auto* pop = oracle.population()) {
    if (count > pop->size()) {
      throw std::invalid_argument("cannot draw " + std::to_string(count) +
                                  " distinct architectures from a population of " +
                                  std::to_string(pop->size()));
    }
    std::vector<std::size_t> idx(pop->size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<Architecture> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back((*pop)[idx[i]]);
    return out;
  }
  std::vector<Architecture> out;
  std::unordered_set<std::string> seen;
  const std::size_t budget = 1000 * count + 1000;
  for (std::size_t attempt = 0; out.size() < count; ++attempt) {
    if (attempt >= budget) {
      throw std::invalid_argument("cannot draw " + std::to_string(count) +
                                  " distinct architectures (got " + std::to_string(out.size()) +
                                  ")");
    }
    Architecture a = random_arch(spec, rng);
    if (seen.insert(arch_key(a, spec)).second) out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

Bootstrap bootstrap(const SearchConfig& config, const SpaceSpec& spec, const Oracle& oracle,
                    const PolicyParams& policy, std::mt19937_64& rng) {
  Bootstrap b;
  for (auto& a : draw_distinct(spec, oracle, config.labeled_archs, rng)) {
    const double acc = oracle.accuracy(a);
    b.records.push_back({std::move(a), acc});
  }
  b.pairs = build_pairs(b.records, spec, config.augment_pairs);
  b.baseline = sample(policy, spec, rng).arch;
  return b;
}

ArchAcc random_search(const SpaceSpec& spec, const Oracle& oracle, std::size_t budget,
                      std::mt19937_64& rng) {
  if (budget == 0) throw std::invalid_argument("random_search: budget must be positive");
  ArchAcc best;
  bool first = true;
  for (auto& a : draw_distinct(spec, oracle, budget, rng)) {
    const double acc = oracle.accuracy(a);
    if (first || acc > best.acc) best = {std::move(a), acc};
    first = false;
  }
  return best;
}

// ---------------------------------------------------------- data exploration

std::vector<LabeledPair> explore_pairs(
    std::span<const std::pair<Architecture, Architecture>> candidates, const Comparator& compare,
    std::size_t k) {
  if (k > candidates.size()) {
    warn("explore: K=" + std::to_string(k) + " exceeds the " + std::to_string(candidates.size()) +
         " candidate pairs; keeping all of them");
    k = candidates.size();
  }
  std::vector<double> prob(candidates.size()), conf(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    prob[i] = compare(candidates[i].first, candidates[i].second);
    conf[i] = std::abs(prob[i] - 0.5);
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  std::vector<LabeledPair> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = order[r];
    out.push_back({candidates[i].first, candidates[i].second, prob[i] >= 0.5 ? 1 : 0,
                   PairSource::kPseudo});
  }
  return out;
}

std::vector<LabeledPair> explore_data(std::span<const Architecture> sampled,
                                      const Comparator& compare, std::size_t k,
                                      const SpaceSpec& spec) {
  if (sampled.size() < 2) throw std::invalid_argument("explore_data: need at least 2 architectures");
  std::unordered_set<std::string> keys;
  for (const auto& a : sampled) {
    if (!keys.insert(arch_key(a, spec)).second) {
      throw DuplicateKeyError("explore_data: duplicate architecture " + arch_key(a, spec));
    }
  }
  std::vector<std::pair<Architecture, Architecture>> g;
  g.reserve(sampled.size() * (sampled.size() - 1));
  for (std::size_t i = 0; i < sampled.size(); ++i)
    for (std::size_t j = 0; j < sampled.size(); ++j)
      if (i != j) g.emplace_back(sampled[i], sampled[j]);
  return explore_pairs(g, compare, k);
}

// ---------------------------------------------------------- baseline update

BaselineChoice update_baseline(std::span<const Architecture> history,
                               std::span<const Architecture> sampled, const Comparator& compare,
                               const SpaceSpec& spec) {
  BaselineChoice c;
  std::unordered_set<std::string> keys;
  for (auto part : {history, sampled})
    for (const auto& a : part)
      if (keys.insert(arch_key(a, spec)).second) c.candidates.push_back(a);
  if (c.candidates.empty()) throw std::invalid_argument("update_baseline: empty candidate set");
  if (c.candidates.size() == 1) {
    c.arch = c.candidates.front();
    return c;
  }
  const std::size_t h = c.candidates.size();
  c.scores.assign(h, 0.0);
  double best = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < h; ++j)
      if (j != i) s += compare(c.candidates[i], c.candidates[j]);
    c.scores[i] = s / static_cast<double>(h - 1);
    if (c.scores[i] >= best) {
      best = c.scores[i];
      c.index = i;
    }
  }
  c.arch = c.candidates[c.index];
  return c;
}

// ------------------------------------------------------------------- report

namespace {

std::string num(double v) { return nlohmann::json(v).dump(); }

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json SearchReport::to_json() const {
  nlohmann::json j;
  j["format"] = "ctnas-search-report/1";
  j["config"] = config_echo;
  nlohmann::json rounds_json = nlohmann::json::array();
  for (const auto& r : rounds) {
    rounds_json.push_back({{"round", r.round},
                           {"controller_step", r.controller_step},
                           {"baseline_key", r.baseline_key},
                           {"baseline_acc", opt_json(r.baseline_acc)},
                           {"mean_reward", r.mean_reward},
                           {"nac_loss", opt_json(r.nac_loss)},
                           {"pseudo_pairs", r.pseudo_pairs},
                           {"ground_truth_pairs", r.ground_truth_pairs},
                           {"candidates", r.candidates}});
  }
  j["rounds"] = rounds_json;
  j["reward_trace"] = reward_trace;
  j["final_arch"] = final_arch.n_nodes() ? arch_to_json(final_arch, spec) : nlohmann::json(nullptr);
  j["final_key"] = final_arch.n_nodes() ? arch_key(final_arch, spec) : "";
  j["final_acc"] = opt_json(final_acc);
  j["final_percentile"] = opt_json(final_percentile);
  j["best_sampled"] =
      best_sampled.n_nodes() ? arch_to_json(best_sampled, spec) : nlohmann::json(nullptr);
  j["best_sampled_acc"] = opt_json(best_sampled_acc);
  j["oracle_queries"] = oracle_queries;
  j["distinct_sampled"] = distinct_sampled;
  j["policy"] = policy_to_json(policy);
  if (error) j["error"] = *error;
  return j;
}

std::string SearchReport::rounds_csv() const {
  std::ostringstream out;
  out << "round,controller_step,baseline_key,baseline_acc,mean_reward,nac_loss,pseudo_pairs\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << r.controller_step << ",\"" << r.baseline_key << "\","
        << (r.baseline_acc ? num(*r.baseline_acc) : "") << ',' << num(r.mean_reward) << ','
        << (r.nac_loss ? num(*r.nac_loss) : "") << ',' << r.pseudo_pairs << '\n';
  }
  return out.str();
}

// --------------------------------------------------------------- run_search

namespace {

std::optional<double> try_accuracy(const Oracle& oracle, const Architecture& a) {
  try {
    return oracle.accuracy(a);
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

class SearchLoop {
 public:
  SearchLoop(const SearchConfig& config, const SpaceSpec& spec, const Oracle& oracle)
      : cfg_(config),
        spec_(spec),
        oracle_(oracle),
        rng_(config.seed),
        policy_(PolicyParams::uniform(spec)),
        nac_(spec, config.nac, rng_),
        adam_(config.nac_adam, nac_.params().tensors()) {
    report_.spec = spec;
    nlohmann::json echo = cfg_;
    echo["space"] = spec;
    report_.config_echo = std::move(echo);
  }

  SearchReport run() {
    const Bootstrap boot = bootstrap(cfg_, spec_, oracle_, policy_, rng_);
    report_.oracle_queries = boot.records.size();
    labeled_ = boot.pairs;
    beta_ = boot.baseline;

    const std::size_t rounds = (cfg_.controller_steps + cfg_.baseline_every - 1) / cfg_.baseline_every;
    std::size_t done = 0;
    for (std::size_t round = 0; round < rounds; ++round) {
      RoundRecord rec;
      rec.round = round;
      if (cfg_.comparator == ComparatorKind::kNac) rec.nac_loss = train_round(round);
      const Comparator compare = make_comparator();

      const std::size_t steps = std::min(cfg_.baseline_every, cfg_.controller_steps - done);
      std::vector<Architecture> round_samples;
      std::unordered_set<std::string> round_keys;
      double reward_sum = 0.0;
      for (std::size_t s = 0; s < steps; ++s) {
        std::vector<SampleTrace> traces;
        std::vector<double> rewards;
        for (std::size_t j = 0; j < cfg_.samples_per_step; ++j) {
          traces.push_back(sample(policy_, spec_, rng_));
          rewards.push_back(compare(traces.back().arch, beta_));
          remember(traces.back().arch, round_samples, round_keys);
        }
        reinforce_update(policy_, traces, rewards,
                         {cfg_.eta, cfg_.entropy_weight, cfg_.variance_reduction, 0.95},
                         &reward_baseline_);
        const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                            static_cast<double>(rewards.size());
        report_.reward_trace.push_back(mean);
        reward_sum += mean;
      }
      done += steps;
      rec.controller_step = done;
      rec.mean_reward = reward_sum / static_cast<double>(steps);

      if (cfg_.comparator == ComparatorKind::kNac && cfg_.pseudo_ratio > 0.0) explore(compare);
      rec.pseudo_pairs = pseudo_.size();
      rec.ground_truth_pairs = audit_labeled();

      history_.push_back(beta_);
      const auto candidates = candidate_set(round_samples);
      rec.candidates = candidates.size();
      // Updates fire every baseline_every steps; a shorter final round keeps beta.
      const bool update_due = steps == cfg_.baseline_every;
      switch (update_due ? cfg_.baseline_scheme : BaselineScheme::kFixed) {
        case BaselineScheme::kCurriculum:
          beta_ = update_baseline(candidates, {}, compare, spec_).arch;
          break;
        case BaselineScheme::kFixed:
          break;
        case BaselineScheme::kRandom: {
          std::uniform_int_distribution<std::size_t> pick(0, round_samples.size() - 1);
          beta_ = round_samples[pick(rng_)];
          break;
        }
      }
      rec.baseline_key = arch_key(beta_, spec_);
      rec.baseline_acc = try_accuracy(oracle_, beta_);
      report_.rounds.push_back(rec);
      last_candidates_ = candidates;
    }

    // Curriculum already ends on the comparator's pick; the other schemes get
    // the same final selection over their last candidate set.
    report_.final_arch = beta_;
    if (cfg_.baseline_scheme != BaselineScheme::kCurriculum) {
      report_.final_arch = update_baseline(last_candidates_, {}, make_comparator(), spec_).arch;
    }
    finish();
    return report_;
  }

  SearchReport snapshot(const std::string& error) {
    report_.error = error;
    report_.final_arch = beta_;
    report_.policy = policy_;
    return report_;
  }

 private:
  double train_round(std::size_t round) {
    if (cfg_.cold_start && round > 0) {
      nac_ = Nac(spec_, cfg_.nac, rng_);
      adam_ = AdamState(cfg_.nac_adam, nac_.params().tensors());
    }
    const std::size_t iters =
        round == 0 || cfg_.cold_start ? cfg_.nac_warmup_iters : cfg_.nac_iters_per_round;
    if (iters == 0) return 0.0;
    std::vector<LabeledPair> pseudo(pseudo_.begin(), pseudo_.end());
    const auto trace = train_nac(nac_, adam_, labeled_, pseudo, cfg_.pseudo_ratio, cfg_.nac_batch,
                                 iters, rng_);
    const std::size_t tail = std::min<std::size_t>(trace.size(), 20);
    return std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(tail), trace.end(), 0.0) /
           static_cast<double>(tail);
  }

  std::size_t audit_labeled() const {
    for (const auto& p : labeled_) {
      if (p.source != PairSource::kGroundTruth) throw std::logic_error("pseudo pair in the labeled set");
    }
    for (const auto& p : pseudo_) {
      if (p.source != PairSource::kPseudo) throw std::logic_error("labeled pair in the pseudo buffer");
    }
    return labeled_.size();
  }

  Comparator make_comparator() const {
    return cfg_.comparator == ComparatorKind::kNac ? nac_comparator(nac_)
                                                   : perfect_comparator(oracle_);
  }

  void remember(const Architecture& a, std::vector<Architecture>& round_samples,
                std::unordered_set<std::string>& round_keys) {
    std::string key = arch_key(a, spec_);
    if (round_keys.insert(key).second) round_samples.push_back(a);
    if (all_keys_.insert(std::move(key)).second) all_samples_.push_back(a);
  }

  void explore(const Comparator& compare) {
    std::vector<std::pair<Architecture, Architecture>> candidates;
    const std::size_t max_attempts = 4 * cfg_.pseudo_pool;
    for (std::size_t attempt = 0; attempt < max_attempts && candidates.size() < cfg_.pseudo_pool;
         ++attempt) {
      Architecture a = sample(policy_, spec_, rng_).arch;
      Architecture b = sample(policy_, spec_, rng_).arch;
      if (a == b) continue;
      candidates.emplace_back(std::move(a), std::move(b));
    }
    if (candidates.empty()) return;
    const std::size_t k = std::min(cfg_.pseudo_keep, candidates.size());
    for (auto& p : explore_pairs(candidates, compare, k)) pseudo_.push_back(std::move(p));
    const std::size_t cap = cfg_.pseudo_buffer_factor * cfg_.pseudo_keep;
    while (pseudo_.size() > cap) pseudo_.pop_front();
  }

  // Current baseline plus the most recent distinct members of history and
  // this round's samples, oldest first.
  std::vector<Architecture> candidate_set(const std::vector<Architecture>& round_samples) const {
    std::vector<Architecture> ordered = history_;
    ordered.insert(ordered.end(), round_samples.begin(), round_samples.end());
    std::vector<Architecture> recent;
    std::unordered_set<std::string> seen;
    for (auto it = ordered.rbegin(); it != ordered.rend() && recent.size() < cfg_.history_cap; ++it)
      if (seen.insert(arch_key(*it, spec_)).second) recent.push_back(*it);
    std::reverse(recent.begin(), recent.end());
    if (!seen.count(arch_key(beta_, spec_))) recent.insert(recent.begin(), beta_);
    return recent;
  }

  void finish() {
    report_.policy = policy_;
    report_.final_acc = try_accuracy(oracle_, report_.final_arch);
    report_.distinct_sampled = all_samples_.size();
    for (const auto& a : all_samples_) {
      const auto acc = try_accuracy(oracle_, a);
      if (acc && (!report_.best_sampled_acc || *acc > *report_.best_sampled_acc)) {
        report_.best_sampled = a;
        report_.best_sampled_acc = acc;
      }
    }
    if (const auto* pop = oracle_.population(); pop && report_.final_acc) {
      std::vector<double> accs;
      accs.reserve(pop->size());
      for (const auto& a : *pop) accs.push_back(oracle_.accuracy(a));
      report_.final_percentile = percentile_rank(*report_.final_acc, accs);
    }
  }

  const SearchConfig& cfg_;
  const SpaceSpec& spec_;
  const Oracle& oracle_;
  std::mt19937_64 rng_;
  PolicyParams policy_;
  Nac nac_;
  AdamState adam_;
  RewardBaseline reward_baseline_;
  std::vector<LabeledPair> labeled_;
  std::deque<LabeledPair> pseudo_;
  Architecture beta_;
  std::vector<Architecture> history_;
  std::vector<Architecture> last_candidates_;
  std::vector<Architecture> all_samples_;
  std::unordered_set<std::string> all_keys_;
  SearchReport report_;
};

}  // namespace

SearchReport run_search(const SearchConfig& config, const SpaceSpec& spec, const Oracle& oracle) {
  config.check();
  spec.check();
  SearchLoop loop(config, spec, oracle);
  try {
    return loop.run();
  } catch (const std::exception& e) {
    throw SearchError(e.what(), loop.snapshot(e.what()));
  }
}

}  // namespace ctnas
