#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctnas/matrix.hpp"

namespace ctnas {

inline constexpr std::string_view kInputOp = "IN";
inline constexpr std::string_view kOutputOp = "OUT";

/// Cell search space: graphs of 3..max_nodes nodes with at most max_edges
/// edges. op_vocab holds IN, OUT and the real operations; the PAD id used by
/// padding is op_vocab.size().
struct SpaceSpec {
  std::size_t max_nodes = 7;
  std::size_t max_edges = 9;
  std::vector<std::string> op_vocab{"IN", "OUT", "conv3x3-bn-relu", "conv1x1-bn-relu",
                                    "maxpool3x3"};

  /// Throws std::invalid_argument when the invariants do not hold.
  void check() const;

  std::size_t input_id() const;
  std::size_t output_id() const;
  std::size_t pad_id() const { return op_vocab.size(); }
  /// Embedding rows needed: every vocab entry plus PAD.
  std::size_t embedding_rows() const { return op_vocab.size() + 1; }
  /// Vocab ids of the real (non IN/OUT) operations, in vocab order.
  std::vector<std::size_t> real_ops() const;
  /// Throws std::out_of_range on unknown names.
  std::size_t op_id(std::string_view name) const;

  /// Stable textual form; equal specs give equal strings.
  std::string canonical() const;
  /// 64-bit FNV-1a of canonical(), as 16 hex digits.
  std::string hash() const;

  friend bool operator==(const SpaceSpec&, const SpaceSpec&) = default;
};

void to_json(nlohmann::json& j, const SpaceSpec& s);
void from_json(const nlohmann::json& j, SpaceSpec& s);

/// Cell DAG. Edges only exist for i < j, so every value is acyclic.
class Architecture {
 public:
  Architecture() = default;
  /// n nodes, no edges, ops all zero.
  explicit Architecture(std::size_t n_nodes);
  Architecture(std::size_t n_nodes, std::vector<std::size_t> ops);

  std::size_t n_nodes() const { return n_; }
  const std::vector<std::size_t>& ops() const { return ops_; }
  std::size_t op(std::size_t node) const { return ops_.at(node); }
  void set_op(std::size_t node, std::size_t op_id) { ops_.at(node) = op_id; }

  bool edge(std::size_t from, std::size_t to) const;
  /// Throws std::invalid_argument unless from < to < n_nodes.
  void set_edge(std::size_t from, std::size_t to, bool present = true);
  std::size_t edge_count() const;

  /// n x n 0/1 adjacency, entry (i, j) = 1 for an edge i -> j.
  Matrix adjacency() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> ops_;
  std::vector<std::uint8_t> adj_;
};

enum class ViolationKind {
  kNodeBudget,
  kTooFewNodes,
  kEdgeBudget,
  kOpVocab,
  kTerminals,
  kNoPath,
  kDanglingNode,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

/// Every violated constraint; empty means valid.
std::vector<Violation> validate(const Architecture& arch, const SpaceSpec& spec);
inline bool is_valid(const Architecture& arch, const SpaceSpec& spec) {
  return validate(arch, spec).empty();
}

/// Longest IN -> OUT path, in edges.
std::size_t longest_path(const Architecture& arch);

/// Architecture zero-padded to a fixed node count.
struct PaddedArch {
  Matrix adjacency;
  std::vector<std::size_t> ops;

  std::size_t size() const { return ops.size(); }
  friend bool operator==(const PaddedArch&, const PaddedArch&) = default;
};

PaddedArch pad(const Architecture& arch, const SpaceSpec& spec);
PaddedArch pad(const Architecture& arch, std::size_t max_nodes, std::size_t pad_id);
/// Re-padding an already padded value to the same size is the identity.
PaddedArch pad(const PaddedArch& padded, std::size_t max_nodes, std::size_t pad_id);
/// Strips PAD nodes.
Architecture unpad(const PaddedArch& padded, std::size_t pad_id);

class EnumerationCapError : public std::runtime_error {
 public:
  EnumerationCapError(std::size_t partial, std::size_t cap);
  std::size_t partial_count() const { return partial_; }

 private:
  std::size_t partial_;
};

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

/// Visits every valid architecture once, ordered by node count, then edge
/// bitmask, then op assignment. Throws EnumerationCapError once more than
/// `cap` architectures have been produced.
void enumerate(const SpaceSpec& spec, const std::function<void(const Architecture&)>& visit,
               std::size_t cap = kDefaultEnumerationCap);
std::vector<Architecture> enumerate_all(const SpaceSpec& spec,
                                        std::size_t cap = kDefaultEnumerationCap);

/// Builds an architecture from a graph over all max_nodes slots: middle nodes
/// with no incident edge are dropped and the rest renumbered. The result is
/// not validated.
Architecture prune_isolated(const SpaceSpec& spec, const std::vector<std::uint8_t>& full_adj,
                            const std::vector<std::size_t>& middle_ops);

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultRetryBudget = 10'000;

/// Fair coin per edge slot of the full max_nodes graph and a uniform op per
/// middle node, pruned and rejection-sampled until valid.
Architecture random_arch(const SpaceSpec& spec, std::mt19937_64& rng,
                         std::size_t max_retries = kDefaultRetryBudget);

/// "n|op,op,...|row-row-..." e.g. "3|IN,conv3,OUT|011-001-000".
std::string arch_key(const Architecture& arch, const SpaceSpec& spec);

/// {"n": int, "ops": [names], "adj": [row strings]}.
nlohmann::json arch_to_json(const Architecture& arch, const SpaceSpec& spec);
/// Throws std::invalid_argument on malformed input or unknown op names.
Architecture arch_from_json(const nlohmann::json& j, const SpaceSpec& spec);

}  // namespace ctnas
