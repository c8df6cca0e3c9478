#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ctnas/arch_space.hpp"
#include "ctnas/nac.hpp"
#include "ctnas/oracle.hpp"

namespace ctnas {

/// Probability that the first architecture is at least as good as the second.
using Comparator = std::function<double(const Architecture&, const Architecture&)>;

/// NAC comparator that caches per-architecture readouts. The returned
/// function is not safe for concurrent calls; the Nac must outlive it.
Comparator nac_comparator(const Nac& nac);
/// label_pair on oracle accuracies: 1 when acc(a) >= acc(b), else 0.
Comparator perfect_comparator(const Oracle& oracle);
/// 1 - perfect_comparator.
Comparator anti_comparator(const Oracle& oracle);
Comparator constant_comparator(double p);

struct RankEval {
  double ktau = 0.0;
  std::size_t n = 0;
  std::size_t concordant = 0;
  std::size_t discordant = 0;
};

/// Tau-a: mean over all unordered pairs of sgn(pred_i - pred_j) *
/// sgn(truth_i - truth_j), with sgn(0) = 0.
RankEval kendall_tau(std::span<const double> pred, std::span<const double> truth);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// score_i = mean over j != i of compare(archs[i], archs[j]).
std::vector<double> nac_scores(const Comparator& compare, std::span<const Architecture> archs);
/// Same scores from a NAC, computing each readout once and fanning rows out
/// over `workers` threads.
std::vector<double> nac_scores(const Nac& nac, std::span<const Architecture> archs,
                               std::size_t workers = 1);

/// 100 * (1-based descending rank, ties share the best rank) / population.
double percentile_rank(double acc, std::span<const double> all_accs);

struct TruthPair {
  Architecture a;
  Architecture b;
  double acc_a = 0.0;
  double acc_b = 0.0;
};

struct RiskEval {
  double risk = 0.0;
  std::size_t evaluated = 0;
  std::size_t ties_skipped = 0;
};

/// Empirical 0-1 ranking risk: a pair is a mistake when
/// (acc_a - acc_b) * (compare(a, b) - 0.5) <= 0. Pairs with equal accuracy
/// are skipped and counted.
RiskEval ranking_risk(const Comparator& compare, std::span<const TruthPair> pairs);

/// Mean bce(compare(a, b), y).
double surrogate_risk(const Comparator& compare, std::span<const LabeledPair> pairs);

/// Number of workers from CTNAS_WORKERS (default 1, minimum 1).
std::size_t workers_from_env();

}  // namespace ctnas
