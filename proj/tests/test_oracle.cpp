#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "ctnas/log.hpp"
#include "ctnas/oracle.hpp"
#include "support.hpp"

namespace ctnas {
namespace {

using testing::chain;
using testing::desk_spec;

TEST(SynthPerf, DeterministicAndInRange) {
  const SpaceSpec s = desk_spec();
  for (const auto& a : enumerate_all(s)) {
    const double acc = synth_perf(a, s, 7);
    EXPECT_EQ(acc, synth_perf(a, s, 7));
    EXPECT_GT(acc, 0.80);
    EXPECT_LT(acc, 0.95);
  }
}

TEST(SynthPerf, ChainWithPinnedWeightsMatchesHandFormula) {
  const SpaceSpec s = desk_spec();
  const Architecture a = chain(s, {2});  // IN -> conv3x3 -> OUT
  const std::vector<double> w{0.3, -1.2, 0.8, 1.5, -0.4, 2.0, 0.6, -0.9};
  // conv count, pool count, edges, longest path, conv depth sum, pool depth
  // sum, OUT in-degree, IN->OUT paths; each with its normaliser.
  const std::vector<double> phi{1.0 / 5, 0.0, 2.0 / 9, 2.0 / 5, 1.0 / 25, 0.0, 1.0 / 5, 1.0 / 8};
  double dot = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) dot += w[i] * phi[i];
  const double expected = 0.80 + 0.15 / (1.0 + std::exp(-dot));
  EXPECT_NEAR(synth_perf(a, s, w), expected, 1e-15);
}

TEST(SynthPerf, RejectsInvalidArchitectures) {
  const SpaceSpec s = desk_spec();
  Architecture bad(3, {0, 2, 1});
  EXPECT_THROW(synth_perf(bad, s, 7), std::invalid_argument);
  EXPECT_THROW(noisy_eval(bad, s, 7, 0), std::invalid_argument);
}

TEST(SynthPerf, FewExactTies) {
  const SpaceSpec s = desk_spec();
  auto tie_fraction = [&](const std::vector<Architecture>& archs) {
    std::vector<double> accs;
    for (const auto& a : archs) accs.push_back(synth_perf(a, s, 7));
    std::size_t ties = 0, pairs = 0;
    for (std::size_t i = 0; i < accs.size(); ++i)
      for (std::size_t j = i + 1; j < accs.size(); ++j, ++pairs) ties += accs[i] == accs[j];
    return static_cast<double>(ties) / static_cast<double>(pairs);
  };
  EXPECT_LT(tie_fraction(enumerate_all(s)), 0.01);

  std::mt19937_64 rng(21);
  std::vector<Architecture> drawn;
  std::set<std::string> keys;
  for (int i = 0; i < 1000; ++i) {
    Architecture a = random_arch(s, rng);
    if (keys.insert(arch_key(a, s)).second) drawn.push_back(std::move(a));
  }
  EXPECT_LT(tie_fraction(drawn), 0.01);
}

TEST(NoisyEval, ZeroSigmaEqualsMean) {
  const SpaceSpec s = desk_spec();
  const Architecture a = chain(s, {3, 2});
  EXPECT_EQ(noisy_eval(a, s, 7, 5, 0.0), synth_perf(a, s, 7));
}

TEST(NoisyEval, NoiseIsCentredAndSeedDependent) {
  const SpaceSpec s = desk_spec();
  const Architecture a = chain(s, {3, 2});
  const std::string key = arch_key(a, s);
  double total = 0.0;
  for (std::uint64_t t = 0; t < 1000; ++t) total += seed_noise(key, t, kDefaultNoiseSigma);
  EXPECT_LT(std::abs(total / 1000.0), 3.0 * kDefaultNoiseSigma / std::sqrt(1000.0));
  EXPECT_NE(noisy_eval(a, s, 7, 1), noisy_eval(a, s, 7, 2));
  EXPECT_EQ(noisy_eval(a, s, 7, 1), noisy_eval(a, s, 7, 1));
}

TEST(LabelPair, Examples) {
  EXPECT_EQ(label_pair(0.9, 0.8), 1);
  EXPECT_EQ(label_pair(0.8, 0.9), 0);
  EXPECT_EQ(label_pair(0.5, 0.5), 1);
}

TEST(LabelPair, ComplementUnlessTied) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = (i % 10 == 0) ? a : u(rng);
    if (a == b) {
      EXPECT_EQ(label_pair(a, b) + label_pair(b, a), 2);
    } else {
      EXPECT_EQ(label_pair(a, b) + label_pair(b, a), 1);
    }
  }
}

BenchTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_table(in, desk_spec());
}

TEST(Table, EmptyInputGivesEmptyTable) {
  EXPECT_TRUE(parse("").empty());
  EXPECT_TRUE(parse("\n\n").empty());
}

TEST(Table, ThreeWellFormedLines) {
  const std::string text =
      R"({"n":3,"ops":["IN","conv3x3-bn-relu","OUT"],"adj":["010","001","000"],"acc":0.9})"
      "\n"
      R"({"n":3,"ops":["IN","maxpool3x3","OUT"],"adj":["010","001","000"],"acc":0.8})"
      "\n"
      R"({"n":3,"ops":["IN","maxpool3x3","OUT"],"adj":["011","001","000"],"acc":0.85,"seed_accs":[0.84,0.86]})"
      "\n";
  const BenchTable t = parse(text);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t.provenance(), Provenance::kLoaded);
  EXPECT_EQ(t.records()[2].seed_accs, (std::vector<double>{0.84, 0.86}));
}

TEST(Table, OutOfRangeAccuracyNamesTheLine) {
  const std::string text =
      R"({"n":3,"ops":["IN","conv3x3-bn-relu","OUT"],"adj":["010","001","000"],"acc":0.9})"
      "\n"
      R"({"n":3,"ops":["IN","maxpool3x3","OUT"],"adj":["010","001","000"],"acc":1.5})"
      "\n";
  try {
    parse(text);
    FAIL() << "expected TableParseError";
  } catch (const TableParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Table, MalformedJsonNamesTheLine) {
  try {
    parse("\n{not json}\n");
    FAIL() << "expected TableParseError";
  } catch (const TableParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Table, DuplicateKeyLastWinsWithWarning) {
  std::vector<std::string> warnings;
  auto previous = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  const std::string line = R"({"n":3,"ops":["IN","conv3x3-bn-relu","OUT"],"adj":["010","001","000"],"acc":)";
  const BenchTable t = parse(line + "0.9}\n" + line + "0.7}\n");
  set_warning_sink(previous);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.records()[0].mean_acc, 0.7);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Table, SaveLoadRoundTrip) {
  const SpaceSpec s = desk_spec();
  const BenchTable table = synth_table(s, enumerate_all(s), 3);
  testing::TempDir dir("oracle");
  save_table(table, dir.file("bench.jsonl"));
  const BenchTable back = load_table(dir.file("bench.jsonl"), s);
  ASSERT_EQ(back.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(back.records()[i].arch_key, table.records()[i].arch_key);
    EXPECT_EQ(back.records()[i].arch, table.records()[i].arch);
    EXPECT_EQ(back.records()[i].mean_acc, table.records()[i].mean_acc);
  }
}

TEST(Table, MissingFileIsAnError) {
  EXPECT_ANY_THROW(load_table("/nonexistent/bench.jsonl", desk_spec()));
}

TEST(Oracles, TableOracleCoversOnlyItsRecords) {
  const SpaceSpec s = desk_spec();
  const auto all = enumerate_all(s);
  const BenchTable table = synth_table(s, {all[0], all[1]}, 7);
  const TableOracle oracle(table);
  EXPECT_EQ(oracle.accuracy(all[1]), synth_perf(all[1], s, 7));
  EXPECT_THROW(oracle.accuracy(all[2]), std::out_of_range);
  ASSERT_NE(oracle.population(), nullptr);
  EXPECT_EQ(oracle.population()->size(), 2u);
}

TEST(Oracles, SynthOracleUsesMeanUnlessLabelNoise) {
  const SpaceSpec s = desk_spec();
  const Architecture a = chain(s, {2, 3});
  EXPECT_EQ(SynthOracle(s, 7).accuracy(a), synth_perf(a, s, 7));
  EXPECT_EQ(SynthOracle(s, 7, 0.002, true, 4).accuracy(a), noisy_eval(a, s, 7, 4, 0.002));
  EXPECT_EQ(SynthOracle(s, 7).population(), nullptr);
}

}  // namespace
}  // namespace ctnas
