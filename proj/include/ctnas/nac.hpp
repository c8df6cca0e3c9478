#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctnas/arch_space.hpp"
#include "ctnas/matrix.hpp"
#include "ctnas/optim.hpp"

namespace ctnas {

enum class Readout { kFlatten, kMeanPool };

struct NacConfig {
  std::size_t dim = 32;
  Readout readout = Readout::kFlatten;
  /// Use the padded adjacency as-is instead of row-normalised (A^T + I).
  bool raw_adjacency = false;
};

void to_json(nlohmann::json& j, const NacConfig& c);
void from_json(const nlohmann::json& j, NacConfig& c);

/// Learnable tensors of the comparator.
struct NacParams {
  Matrix op_embeddings;  // (|op_vocab| + 1) x d, last row is PAD
  Matrix w0;             // d x d
  Matrix w1;             // d x d
  Matrix w_fc;           // readout width x 1

  static NacParams init(const SpaceSpec& spec, const NacConfig& config, std::mt19937_64& rng);

  /// Tensors in a fixed order: embeddings, w0, w1, w_fc.
  std::vector<Matrix> tensors() const;
  static NacParams from_tensors(std::vector<Matrix> tensors);

  friend bool operator==(const NacParams&, const NacParams&) = default;
};

/// Width of the FC input for a space/config pair.
std::size_t readout_width(const SpaceSpec& spec, const NacConfig& config);

/// Propagation matrix. Row i mixes node i with its predecessors:
/// row-normalise(A^T + I). PAD nodes only see themselves.
Matrix normalized_adjacency(const Matrix& adjacency);

/// Z = A ReLU(A X W0) W1.
Matrix gcn_forward(const Matrix& propagation, const Matrix& x, const Matrix& w0,
                   const Matrix& w1);

enum class PairSource { kGroundTruth, kPseudo };

struct LabeledPair {
  Architecture a;
  Architecture b;
  int y = 0;
  PairSource source = PairSource::kGroundTruth;
};

struct ArchAcc {
  Architecture arch;
  double acc = 0.0;
};

/// Neural architecture comparator: two padded graphs through a shared
/// two-layer GCN, concatenated readout, one FC unit and a sigmoid.
class Nac {
 public:
  Nac(SpaceSpec spec, NacConfig config, NacParams params);
  Nac(SpaceSpec spec, NacConfig config, std::mt19937_64& rng);

  const SpaceSpec& spec() const { return spec_; }
  const NacConfig& config() const { return config_; }
  const NacParams& params() const { return params_; }
  NacParams& params() { return params_; }

  /// Rows are the embeddings of the padded op ids; throws on unknown ids.
  Matrix embed(const PaddedArch& padded) const;
  Matrix propagation(const PaddedArch& padded) const;
  /// GCN features of one architecture (max_nodes x d).
  Matrix features(const Architecture& arch) const;
  /// Flattened or mean-pooled feature row.
  std::vector<double> readout(const Matrix& z) const;
  /// sigmoid of the FC unit over [readout(a) | readout(b)].
  double compare_readouts(std::span<const double> ra, std::span<const double> rb) const;
  /// Probability that `a` performs at least as well as `b`. Throws
  /// std::invalid_argument if either is not valid under this comparator's space.
  double compare(const Architecture& a, const Architecture& b) const;

  /// Mean BCE over the pairs; fills per-tensor gradients when non-null.
  double batch_loss(std::span<const LabeledPair* const> batch, std::vector<Matrix>* grads) const;

  nlohmann::json to_json() const;
  static Nac from_json(const nlohmann::json& j);

 private:
  void check_arch(const Architecture& arch) const;

  SpaceSpec spec_;
  NacConfig config_;
  NacParams params_;
};

class DuplicateKeyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// All m(m-1)/2 unordered pairs (i < j) labelled with label_pair; with
/// `augment`, each is followed by its swapped copy labelled 1 - y.
std::vector<LabeledPair> build_pairs(std::span<const ArchAcc> records, const SpaceSpec& spec,
                                     bool augment = true);

/// Number of pseudo pairs in a batch: round(ratio * batch) when at least that
/// many pseudo pairs exist, else all of them.
std::size_t pseudo_share(std::size_t batch_size, double ratio, std::size_t pseudo_available);

/// Adam training on uniformly resampled batches. Each batch holds
/// pseudo_share(...) pairs from `pseudo` and the rest from `labeled`, both
/// drawn with replacement. Returns the mean loss of every iteration.
std::vector<double> train_nac(Nac& nac, AdamState& adam, std::span<const LabeledPair> labeled,
                              std::span<const LabeledPair> pseudo, double pseudo_ratio,
                              std::size_t batch_size, std::size_t iterations,
                              std::mt19937_64& rng);

inline std::vector<double> train_nac(Nac& nac, AdamState& adam,
                                     std::span<const LabeledPair> pairs, std::size_t batch_size,
                                     std::size_t iterations, std::mt19937_64& rng) {
  return train_nac(nac, adam, pairs, {}, 0.0, batch_size, iterations, rng);
}

}  // namespace ctnas
