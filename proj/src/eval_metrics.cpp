#include "ctnas/eval_metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>

namespace ctnas {

Comparator nac_comparator(const Nac& nac) {
  auto cache = std::make_shared<std::unordered_map<std::string, std::vector<double>>>();
  const Nac* model = &nac;
  return [model, cache](const Architecture& a, const Architecture& b) {
    auto lookup = [&](const Architecture& x) -> const std::vector<double>& {
      std::string key = arch_key(x, model->spec());
      auto it = cache->find(key);
      if (it == cache->end()) {
        it = cache->emplace(std::move(key), model->readout(model->features(x))).first;
      }
      return it->second;
    };
    const auto& ra = lookup(a);
    const auto& rb = lookup(b);
    return model->compare_readouts(ra, rb);
  };
}

Comparator perfect_comparator(const Oracle& oracle) {
  return [&oracle](const Architecture& a, const Architecture& b) {
    return static_cast<double>(label_pair(oracle.accuracy(a), oracle.accuracy(b)));
  };
}

Comparator anti_comparator(const Oracle& oracle) {
  return [&oracle](const Architecture& a, const Architecture& b) {
    return 1.0 - static_cast<double>(label_pair(oracle.accuracy(a), oracle.accuracy(b)));
  };
}

Comparator constant_comparator(double p) {
  return [p](const Architecture&, const Architecture&) { return p; };
}

namespace {

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

RankEval kendall_tau(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("kendall_tau: length mismatch (" + std::to_string(pred.size()) +
                                " vs " + std::to_string(truth.size()) + ")");
  }
  if (pred.size() < 2) throw std::invalid_argument("kendall_tau: need at least 2 items");
  RankEval r;
  r.n = pred.size();
  for (std::size_t i = 0; i < r.n; ++i) {
    for (std::size_t j = i + 1; j < r.n; ++j) {
      const int s = sgn(pred[i] - pred[j]) * sgn(truth[i] - truth[j]);
      if (s > 0) ++r.concordant;
      if (s < 0) ++r.discordant;
    }
  }
  const double pairs = static_cast<double>(r.n) * static_cast<double>(r.n - 1) / 2.0;
  r.ktau = (static_cast<double>(r.concordant) - static_cast<double>(r.discordant)) / pairs;
  return r;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series of at least 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> nac_scores(const Comparator& compare, std::span<const Architecture> archs) {
  const std::size_t n = archs.size();
  if (n < 2) throw std::invalid_argument("nac_scores: need at least 2 architectures");
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s += compare(archs[i], archs[j]);
    scores[i] = s / static_cast<double>(n - 1);
  }
  return scores;
}

namespace {

template <typename Fn>
void parallel_rows(std::size_t rows, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, rows));
  if (workers == 1) {
    for (std::size_t i = 0; i < rows; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < rows; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<double> nac_scores(const Nac& nac, std::span<const Architecture> archs,
                               std::size_t workers) {
  const std::size_t n = archs.size();
  if (n < 2) throw std::invalid_argument("nac_scores: need at least 2 architectures");
  std::vector<std::vector<double>> readouts(n);
  parallel_rows(n, workers, [&](std::size_t i) { readouts[i] = nac.readout(nac.features(archs[i])); });
  std::vector<double> scores(n, 0.0);
  parallel_rows(n, workers, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s += nac.compare_readouts(readouts[i], readouts[j]);
    scores[i] = s / static_cast<double>(n - 1);
  });
  return scores;
}

double percentile_rank(double acc, std::span<const double> all_accs) {
  if (all_accs.empty()) throw std::invalid_argument("percentile_rank: empty population");
  const auto better = static_cast<std::size_t>(
      std::count_if(all_accs.begin(), all_accs.end(), [acc](double v) { return v > acc; }));
  return 100.0 * static_cast<double>(better + 1) / static_cast<double>(all_accs.size());
}

RiskEval ranking_risk(const Comparator& compare, std::span<const TruthPair> pairs) {
  RiskEval r;
  std::size_t mistakes = 0;
  for (const auto& p : pairs) {
    const double diff = p.acc_a - p.acc_b;
    if (diff == 0.0) {
      ++r.ties_skipped;
      continue;
    }
    ++r.evaluated;
    if (diff * (compare(p.a, p.b) - 0.5) <= 0.0) ++mistakes;
  }
  r.risk = r.evaluated ? static_cast<double>(mistakes) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

double surrogate_risk(const Comparator& compare, std::span<const LabeledPair> pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) total += bce(compare(p.a, p.b), p.y);
  return total / static_cast<double>(pairs.size());
}

std::size_t workers_from_env() {
  const char* v = std::getenv("CTNAS_WORKERS");
  if (!v || !*v) return 1;
  try {
    const long n = std::stol(v);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace ctnas
