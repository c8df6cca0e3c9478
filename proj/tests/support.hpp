#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctnas/arch_space.hpp"
#include "ctnas/matrix.hpp"

namespace ctnas::testing {

/// max_nodes 5, two real ops: 1012 valid architectures.
inline SpaceSpec desk_spec() {
  SpaceSpec s;
  s.max_nodes = 5;
  s.max_edges = 9;
  s.op_vocab = {"IN", "OUT", "conv3x3-bn-relu", "maxpool3x3"};
  return s;
}

inline SpaceSpec tiny_spec(std::size_t max_nodes, std::size_t real_ops) {
  SpaceSpec s;
  s.max_nodes = max_nodes;
  s.max_edges = 9;
  s.op_vocab = {"IN", "OUT"};
  for (std::size_t i = 0; i < real_ops; ++i) s.op_vocab.push_back("op" + std::to_string(i));
  return s;
}

/// IN -> op -> ... -> OUT chain over the given middle ops.
inline Architecture chain(const SpaceSpec& spec, const std::vector<std::size_t>& middle) {
  const std::size_t n = middle.size() + 2;
  std::vector<std::size_t> ops{spec.input_id()};
  ops.insert(ops.end(), middle.begin(), middle.end());
  ops.push_back(spec.output_id());
  Architecture a(n, ops);
  for (std::size_t i = 0; i + 1 < n; ++i) a.set_edge(i, i + 1);
  return a;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Independent validity filter: reachability by repeated relaxation over the
// raw bitmask, no shared code with validate().
inline bool brute_valid(std::size_t n, std::uint64_t mask, std::size_t max_edges) {
  auto has = [&](std::size_t i, std::size_t j) {
    std::size_t bit = 0;
    for (std::size_t b = 0; b < i; ++b) bit += n - 1 - b;
    bit += j - i - 1;
    return (mask >> bit) & 1u;
  };
  if (static_cast<std::size_t>(__builtin_popcountll(mask)) > max_edges) return false;
  std::vector<bool> from_in(n, false), to_out(n, false);
  from_in[0] = true;
  to_out[n - 1] = true;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (has(i, j) && from_in[i]) from_in[j] = true;
  for (std::size_t i = n - 1; i-- > 0;)
    for (std::size_t j = i + 1; j < n; ++j)
      if (has(i, j) && to_out[j]) to_out[i] = true;
  if (!from_in[n - 1]) return false;
  for (std::size_t v = 1; v + 1 < n; ++v)
    if (!from_in[v] || !to_out[v]) return false;
  return true;
}

inline std::size_t brute_count(const SpaceSpec& spec) {
  const std::size_t k = spec.real_ops().size();
  std::size_t total = 0;
  for (std::size_t n = 3; n <= spec.max_nodes; ++n) {
    const std::size_t slots = n * (n - 1) / 2;
    std::size_t op_combos = 1;
    for (std::size_t v = 0; v + 2 < n; ++v) op_combos *= k;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << slots); ++mask)
      if (brute_valid(n, mask, spec.max_edges)) total += op_combos;
  }
  return total;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ctnas-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace ctnas::testing
