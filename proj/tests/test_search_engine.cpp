#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "ctnas/log.hpp"
#include "ctnas/search_engine.hpp"
#include "support.hpp"

namespace ctnas {
namespace {

using testing::desk_spec;

SearchConfig small_config() {
  SearchConfig c;
  c.labeled_archs = 8;
  c.pseudo_keep = 8;
  c.pseudo_pool = 16;
  c.controller_steps = 40;
  c.baseline_every = 10;
  c.nac_batch = 16;
  c.nac_warmup_iters = 20;
  c.nac_iters_per_round = 10;
  c.nac.dim = 8;
  c.nac_adam.lr = 1e-3;
  c.eta = 0.3;
  return c;
}

struct Desk {
  SpaceSpec spec = desk_spec();
  std::vector<Architecture> all = enumerate_all(spec);
  BenchTable table = synth_table(spec, all, 7);
  TableOracle oracle{table};
};

const Desk& desk() {
  static const Desk d;
  return d;
}

Comparator lookup(const std::map<std::string, double>& p, const SpaceSpec& s) {
  return [&p, s](const Architecture& a, const Architecture&) { return p.at(arch_key(a, s)); };
}

TEST(ExplorePairs, ConfidenceSelectionExample) {
  const auto& d = desk();
  const std::vector<std::pair<Architecture, Architecture>> g{
      {d.all[0], d.all[1]}, {d.all[2], d.all[3]}, {d.all[4], d.all[5]}};
  const std::map<std::string, double> p{{arch_key(d.all[0], d.spec), 0.9},
                                        {arch_key(d.all[2], d.spec), 0.55},
                                        {arch_key(d.all[4], d.spec), 0.1}};
  const auto kept = explore_pairs(g, lookup(p, d.spec), 2);
  ASSERT_EQ(kept.size(), 2u);
  std::map<std::string, int> labels;
  for (const auto& lp : kept) {
    labels[arch_key(lp.a, d.spec)] = lp.y;
    EXPECT_EQ(lp.source, PairSource::kPseudo);
  }
  EXPECT_EQ(labels.at(arch_key(d.all[0], d.spec)), 1);
  EXPECT_EQ(labels.at(arch_key(d.all[4], d.spec)), 0);
}

TEST(ExplorePairs, CoinFlipPairIsLastAndLabelledOne) {
  const auto& d = desk();
  const std::vector<std::pair<Architecture, Architecture>> g{
      {d.all[0], d.all[1]}, {d.all[2], d.all[3]}, {d.all[4], d.all[5]}};
  const std::map<std::string, double> p{{arch_key(d.all[0], d.spec), 0.5},
                                        {arch_key(d.all[2], d.spec), 0.6},
                                        {arch_key(d.all[4], d.spec), 0.45}};
  const auto two = explore_pairs(g, lookup(p, d.spec), 2);
  for (const auto& lp : two) EXPECT_NE(lp.a, d.all[0]);
  const auto three = explore_pairs(g, lookup(p, d.spec), 3);
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(three.back().a, d.all[0]);
  EXPECT_EQ(three.back().y, 1);
}

TEST(ExplorePairs, EqualConfidenceKeepsCandidateOrder) {
  const auto& d = desk();
  std::vector<std::pair<Architecture, Architecture>> g;
  for (std::size_t i = 0; i < 6; ++i) g.emplace_back(d.all[i], d.all[i + 10]);
  const auto kept = explore_pairs(g, constant_comparator(0.8), 4);
  ASSERT_EQ(kept.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(kept[i].a, d.all[i]);
}

TEST(ExplorePairs, OversizedKReturnsAllWithWarning) {
  const auto& d = desk();
  std::vector<std::string> warnings;
  auto previous = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  const std::vector<Architecture> sampled{d.all[0], d.all[1], d.all[2]};
  const auto kept = explore_data(sampled, constant_comparator(0.7), 10, d.spec);
  set_warning_sink(previous);
  EXPECT_EQ(kept.size(), 6u);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(ExploreData, PreconditionErrors) {
  const auto& d = desk();
  const std::vector<Architecture> dup{d.all[0], d.all[0]};
  EXPECT_THROW(explore_data(dup, constant_comparator(0.7), 1, d.spec), DuplicateKeyError);
  const std::vector<Architecture> one{d.all[0]};
  EXPECT_THROW(explore_data(one, constant_comparator(0.7), 1, d.spec), std::invalid_argument);
}

TEST(UpdateBaseline, SingleCandidate) {
  const auto& d = desk();
  const std::vector<Architecture> h{d.all[3], d.all[3]};
  const BaselineChoice c = update_baseline(h, {}, constant_comparator(0.5), d.spec);
  EXPECT_EQ(c.arch, d.all[3]);
  EXPECT_TRUE(c.scores.empty());
  EXPECT_THROW(update_baseline({}, {}, constant_comparator(0.5), d.spec), std::invalid_argument);
}

TEST(UpdateBaseline, PinnedMatrixByHand) {
  const auto& d = desk();
  const std::vector<Architecture> h{d.all[0], d.all[1], d.all[2]};
  const double m[3][3] = {{0, 0.9, 0.6}, {0.1, 0, 0.7}, {0.4, 0.3, 0}};
  auto index = [&](const Architecture& a) {
    return static_cast<std::size_t>(std::find(h.begin(), h.end(), a) - h.begin());
  };
  const Comparator compare = [&](const Architecture& a, const Architecture& b) { return m[index(a)][index(b)]; };
  const BaselineChoice c = update_baseline(std::span(h).first(1), std::span(h).subspan(1), compare, d.spec);
  ASSERT_EQ(c.scores.size(), 3u);
  EXPECT_NEAR(c.scores[0], (0.9 + 0.6) / 2, 1e-15);
  EXPECT_NEAR(c.scores[1], (0.1 + 0.7) / 2, 1e-15);
  EXPECT_NEAR(c.scores[2], (0.4 + 0.3) / 2, 1e-15);
  EXPECT_EQ(c.index, 0u);
  EXPECT_EQ(c.arch, d.all[0]);
}

TEST(UpdateBaseline, TiesGoToTheLastMaximum) {
  const auto& d = desk();
  const std::vector<Architecture> h{d.all[0], d.all[1], d.all[2], d.all[3]};
  const BaselineChoice c = update_baseline(h, {}, constant_comparator(0.5), d.spec);
  EXPECT_EQ(c.index, 3u);
  EXPECT_EQ(c.arch, d.all[3]);
}

TEST(UpdateBaseline, PerfectComparatorFindsTrueArgmaxInsideH) {
  const auto& d = desk();
  std::mt19937_64 rng(80);
  const Comparator perfect = perfect_comparator(d.oracle);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Architecture> b, s;
    for (int i = 0; i < 5; ++i) b.push_back(d.all[rng() % d.all.size()]);
    for (int i = 0; i < 8; ++i) s.push_back(d.all[rng() % d.all.size()]);
    const BaselineChoice c = update_baseline(b, s, perfect, d.spec);
    double best = 0.0;
    for (const auto& a : c.candidates) best = std::max(best, d.oracle.accuracy(a));
    EXPECT_EQ(d.oracle.accuracy(c.arch), best);
    const bool member = std::find(b.begin(), b.end(), c.arch) != b.end() ||
                        std::find(s.begin(), s.end(), c.arch) != s.end();
    EXPECT_TRUE(member);
    std::set<std::string> keys;
    for (const auto& a : c.candidates) EXPECT_TRUE(keys.insert(arch_key(a, d.spec)).second);
  }
}

TEST(Bootstrap, PairCountsAndDeterminism) {
  const auto& d = desk();
  SearchConfig c = small_config();
  c.labeled_archs = 4;
  const PolicyParams policy = PolicyParams::uniform(d.spec);
  std::mt19937_64 r1(81), r2(81);
  const Bootstrap b1 = bootstrap(c, d.spec, d.oracle, policy, r1);
  const Bootstrap b2 = bootstrap(c, d.spec, d.oracle, policy, r2);
  EXPECT_EQ(b1.pairs.size(), 12u);
  EXPECT_EQ(b1.records.size(), 4u);
  EXPECT_EQ(b1.baseline, b2.baseline);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(b1.records[i].arch, b2.records[i].arch);
    EXPECT_EQ(b1.records[i].acc, d.oracle.accuracy(b1.records[i].arch));
  }
  std::set<std::string> keys;
  for (const auto& r : b1.records) keys.insert(arch_key(r.arch, d.spec));
  EXPECT_EQ(keys.size(), 4u);

  c.augment_pairs = false;
  std::mt19937_64 r3(81);
  EXPECT_EQ(bootstrap(c, d.spec, d.oracle, policy, r3).pairs.size(), 6u);
}

TEST(Bootstrap, TooSmallPopulationIsAnError) {
  const auto& d = desk();
  const BenchTable tiny = synth_table(d.spec, {d.all[0], d.all[1], d.all[2]}, 7);
  const TableOracle oracle(tiny);
  SearchConfig c = small_config();
  c.labeled_archs = 4;
  std::mt19937_64 rng(82);
  EXPECT_THROW(bootstrap(c, d.spec, oracle, PolicyParams::uniform(d.spec), rng), std::invalid_argument);
}

TEST(SearchConfig, ValidationAndJsonRoundTrip) {
  SearchConfig c = small_config();
  c.baseline_scheme = BaselineScheme::kRandom;
  c.variance_reduction = true;
  nlohmann::json j = c;
  const SearchConfig back = j.get<SearchConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  SearchConfig bad = small_config();
  bad.pseudo_ratio = 1.0;
  EXPECT_THROW(bad.check(), std::invalid_argument);
  bad = small_config();
  bad.controller_steps = 0;
  EXPECT_THROW(bad.check(), std::invalid_argument);
}

TEST(RunSearch, SingleStepWithFrozenPolicyKeepsBootstrapBaseline) {
  const auto& d = desk();
  SearchConfig c = small_config();
  c.controller_steps = 1;
  c.eta = 0.0;
  c.entropy_weight = 0.0;
  const SearchReport r = run_search(c, d.spec, d.oracle);

  std::mt19937_64 rng(c.seed);
  const Nac init(d.spec, c.nac, rng);  // the loop draws NAC weights first
  const Bootstrap b = bootstrap(c, d.spec, d.oracle, PolicyParams::uniform(d.spec), rng);
  EXPECT_EQ(r.final_arch, b.baseline);
  ASSERT_EQ(r.rounds.size(), 1u);
  EXPECT_EQ(r.rounds[0].baseline_key, arch_key(b.baseline, d.spec));
  EXPECT_EQ(r.policy, PolicyParams::uniform(d.spec));
  EXPECT_EQ(r.reward_trace.size(), 1u);

  const nlohmann::json j = r.to_json();
  EXPECT_EQ(j.at("format"), "ctnas-search-report/1");
  for (const char* key : {"config", "rounds", "reward_trace", "final_arch", "final_acc", "final_percentile",
                          "best_sampled", "oracle_queries", "policy"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(r.rounds_csv().substr(0, r.rounds_csv().find('\n')),
            "round,controller_step,baseline_key,baseline_acc,mean_reward,nac_loss,pseudo_pairs");
}

TEST(RunSearch, ByteIdenticalAcrossRuns) {
  const auto& d = desk();
  const SearchConfig c = small_config();
  const SearchReport a = run_search(c, d.spec, d.oracle), b = run_search(c, d.spec, d.oracle);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.rounds_csv(), b.rounds_csv());
}

TEST(RunSearch, GroundTruthSubsetNeverChangesAndPseudoIsBounded) {
  const auto& d = desk();
  const SearchConfig c = small_config();
  const SearchReport r = run_search(c, d.spec, d.oracle);
  ASSERT_EQ(r.rounds.size(), 4u);
  std::size_t prev_pseudo = 0;
  for (const auto& rec : r.rounds) {
    EXPECT_EQ(rec.ground_truth_pairs, c.labeled_archs * (c.labeled_archs - 1));
    EXPECT_GE(rec.pseudo_pairs, prev_pseudo);
    EXPECT_LE(rec.pseudo_pairs, c.pseudo_buffer_factor * c.pseudo_keep);
    prev_pseudo = rec.pseudo_pairs;
  }
  EXPECT_EQ(r.oracle_queries, c.labeled_archs);
}

TEST(RunSearch, PerfectComparatorBaselineNeverGetsWorse) {
  const auto& d = desk();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SearchConfig c = small_config();
    c.comparator = ComparatorKind::kPerfectOracle;
    c.controller_steps = 200;
    c.seed = seed;
    const SearchReport r = run_search(c, d.spec, d.oracle);
    double prev = 0.0;
    for (const auto& rec : r.rounds) {
      ASSERT_TRUE(rec.baseline_acc.has_value());
      EXPECT_GE(*rec.baseline_acc, prev);
      prev = *rec.baseline_acc;
    }
  }
}

class FailingOracle : public Oracle {
 public:
  FailingOracle(const Oracle& inner, std::size_t allowed) : inner_(inner), allowed_(allowed) {}
  double accuracy(const Architecture& a) const override {
    if (calls_++ >= allowed_) throw std::runtime_error("oracle offline");
    return inner_.accuracy(a);
  }
  const std::vector<Architecture>* population() const override { return inner_.population(); }

 private:
  const Oracle& inner_;
  std::size_t allowed_;
  mutable std::size_t calls_ = 0;
};

TEST(RunSearch, FailureCarriesPartialReport) {
  const auto& d = desk();
  const SearchConfig c = small_config();
  const FailingOracle oracle(d.oracle, c.labeled_archs + 1);  // bootstrap plus one round
  try {
    run_search(c, d.spec, oracle);
    FAIL() << "expected SearchError";
  } catch (const SearchError& e) {
    const SearchReport& snap = e.snapshot();
    ASSERT_TRUE(snap.error.has_value());
    EXPECT_NE(snap.error->find("oracle offline"), std::string::npos);
    EXPECT_EQ(snap.rounds.size(), 1u);
    EXPECT_EQ(snap.reward_trace.size(), 20u);
    EXPECT_TRUE(snap.to_json().contains("error"));
  }
}

TEST(RandomSearch, ReturnsBestOfDistinctDraws) {
  const auto& d = desk();
  std::mt19937_64 rng(83);
  const ArchAcc best = random_search(d.spec, d.oracle, 50, rng);
  std::mt19937_64 again(83);
  std::vector<Architecture> pop = *d.oracle.population();
  std::vector<std::size_t> idx(pop.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), again);
  double top = 0.0;
  for (std::size_t i = 0; i < 50; ++i) top = std::max(top, d.oracle.accuracy(pop[idx[i]]));
  EXPECT_EQ(best.acc, top);
  EXPECT_THROW(random_search(d.spec, d.oracle, 0, rng), std::invalid_argument);
}

}  // namespace
}  // namespace ctnas
