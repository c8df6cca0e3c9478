#include "ctnas/nac.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ctnas/autodiff.hpp"
#include "ctnas/oracle.hpp"

namespace ctnas {

void to_json(nlohmann::json& j, const NacConfig& c) {
  j = nlohmann::json{{"dim", c.dim},
                     {"readout", c.readout == Readout::kFlatten ? "flatten" : "mean"},
                     {"raw_adjacency", c.raw_adjacency}};
}

void from_json(const nlohmann::json& j, NacConfig& c) {
  NacConfig def;
  c.dim = j.value("dim", def.dim);
  const std::string readout = j.value("readout", std::string("flatten"));
  if (readout == "flatten") {
    c.readout = Readout::kFlatten;
  } else if (readout == "mean") {
    c.readout = Readout::kMeanPool;
  } else {
    throw std::invalid_argument("nac.readout must be 'flatten' or 'mean'");
  }
  c.raw_adjacency = j.value("raw_adjacency", def.raw_adjacency);
  if (c.dim == 0) throw std::invalid_argument("nac.dim must be positive");
}

std::size_t readout_width(const SpaceSpec& spec, const NacConfig& config) {
  const std::size_t per_arch =
      config.readout == Readout::kFlatten ? spec.max_nodes * config.dim : config.dim;
  return 2 * per_arch;
}

NacParams NacParams::init(const SpaceSpec& spec, const NacConfig& config, std::mt19937_64& rng) {
  NacParams p;
  p.op_embeddings = xavier_uniform(spec.embedding_rows(), config.dim, rng);
  p.w0 = xavier_uniform(config.dim, config.dim, rng);
  p.w1 = xavier_uniform(config.dim, config.dim, rng);
  p.w_fc = xavier_uniform(readout_width(spec, config), 1, rng);
  return p;
}

std::vector<Matrix> NacParams::tensors() const { return {op_embeddings, w0, w1, w_fc}; }

NacParams NacParams::from_tensors(std::vector<Matrix> t) {
  if (t.size() != 4) throw std::invalid_argument("NacParams: expected 4 tensors");
  return NacParams{std::move(t[0]), std::move(t[1]), std::move(t[2]), std::move(t[3])};
}

Matrix normalized_adjacency(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) a(i, j) = adjacency(j, i);
    double s = 0.0;
    for (double v : a.row(i)) s += v;
    for (double& v : a.row(i)) v /= s;
  }
  return a;
}

Matrix gcn_forward(const Matrix& propagation, const Matrix& x, const Matrix& w0,
                   const Matrix& w1) {
  const Matrix h = relu(matmul(matmul(propagation, x), w0));
  return matmul(matmul(propagation, h), w1);
}

// ---------------------------------------------------------------------- Nac

Nac::Nac(SpaceSpec spec, NacConfig config, NacParams params)
    : spec_(std::move(spec)), config_(config), params_(std::move(params)) {
  spec_.check();
  const std::size_t d = config_.dim;
  if (params_.op_embeddings.rows() != spec_.embedding_rows() ||
      params_.op_embeddings.cols() != d || params_.w0.rows() != d || params_.w0.cols() != d ||
      params_.w1.rows() != d || params_.w1.cols() != d ||
      params_.w_fc.rows() != readout_width(spec_, config_) || params_.w_fc.cols() != 1) {
    throw ShapeError("Nac: parameter shapes do not match the space and config");
  }
}

Nac::Nac(SpaceSpec spec, NacConfig config, std::mt19937_64& rng)
    : Nac(spec, config, NacParams::init(spec, config, rng)) {}

Matrix Nac::embed(const PaddedArch& padded) const {
  const Matrix& table = params_.op_embeddings;
  Matrix x(padded.size(), table.cols());
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const std::size_t id = padded.ops[i];
    if (id >= table.rows()) {
      throw std::out_of_range("embed: unknown op id " + std::to_string(id));
    }
    std::copy_n(table.row(id).begin(), table.cols(), x.row(i).begin());
  }
  return x;
}

Matrix Nac::propagation(const PaddedArch& padded) const {
  return config_.raw_adjacency ? padded.adjacency : normalized_adjacency(padded.adjacency);
}

void Nac::check_arch(const Architecture& arch) const {
  const auto violations = validate(arch, spec_);
  if (!violations.empty()) {
    throw std::invalid_argument("architecture does not belong to the comparator's space: " +
                                violations.front().message);
  }
}

Matrix Nac::features(const Architecture& arch) const {
  check_arch(arch);
  const PaddedArch p = pad(arch, spec_);
  return gcn_forward(propagation(p), embed(p), params_.w0, params_.w1);
}

std::vector<double> Nac::readout(const Matrix& z) const {
  if (config_.readout == Readout::kFlatten) return {z.data().begin(), z.data().end()};
  std::vector<double> r(z.cols(), 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t c = 0; c < z.cols(); ++c) r[c] += z(i, c);
  for (double& v : r) v /= static_cast<double>(z.rows());
  return r;
}

double Nac::compare_readouts(std::span<const double> ra, std::span<const double> rb) const {
  const auto w = params_.w_fc.data();
  if (ra.size() + rb.size() != w.size()) throw ShapeError("compare: readout width mismatch");
  double logit = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) logit += ra[i] * w[i];
  for (std::size_t i = 0; i < rb.size(); ++i) logit += rb[i] * w[ra.size() + i];
  return sigmoid(logit);
}

double Nac::compare(const Architecture& a, const Architecture& b) const {
  const auto ra = readout(features(a));
  const auto rb = readout(features(b));
  return compare_readouts(ra, rb);
}

double Nac::batch_loss(std::span<const LabeledPair* const> batch,
                       std::vector<Matrix>* grads) const {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const std::size_t m = batch.size(), n = spec_.max_nodes, d = config_.dim;

  // Rows [0, m*n) hold the first architectures, [m*n, 2*m*n) the second.
  std::vector<std::size_t> ids;
  std::vector<Matrix> blocks;
  std::vector<int> labels;
  ids.reserve(2 * m * n);
  blocks.reserve(2 * m);
  for (int side = 0; side < 2; ++side) {
    for (const LabeledPair* pair : batch) {
      const Architecture& arch = side == 0 ? pair->a : pair->b;
      check_arch(arch);
      PaddedArch p = pad(arch, spec_);
      ids.insert(ids.end(), p.ops.begin(), p.ops.end());
      blocks.push_back(propagation(p));
    }
  }
  for (const LabeledPair* pair : batch) labels.push_back(pair->y);

  Tape tape;
  Var emb = tape.leaf(params_.op_embeddings);
  Var w0 = tape.leaf(params_.w0);
  Var w1 = tape.leaf(params_.w1);
  Var wfc = tape.leaf(params_.w_fc);

  Var x = gather_rows(emb, std::move(ids));
  Var h = relu(matmul(block_matmul(blocks, x), w0));
  Var z = matmul(block_matmul(std::move(blocks), h), w1);
  Var r = config_.readout == Readout::kFlatten ? reshape(z, 2 * m, n * d) : mean_pool_rows(z, n);
  Var joint = concat_cols(slice_rows(r, 0, m), slice_rows(r, m, m));
  Var p = sigmoid(matmul(joint, wfc));
  Var loss = bce_mean(p, std::move(labels));

  if (grads) {
    tape.backward(loss);
    *grads = {emb.grad(), w0.grad(), w1.grad(), wfc.grad()};
  }
  return loss.value()(0, 0);
}

namespace {

nlohmann::json tensor_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows()},
                        {"cols", m.cols()},
                        {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix tensor_from_json(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) throw std::invalid_argument(std::string("model: missing tensor ") + name);
  const auto& t = j.at(name);
  return Matrix(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                t.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json Nac::to_json() const {
  nlohmann::json j;
  j["format"] = "ctnas-nac/1";
  j["spec_hash"] = spec_.hash();
  j["space"] = spec_;
  j["config"] = config_;
  j["tensors"] = {{"op_embeddings", tensor_json(params_.op_embeddings)},
                  {"w0", tensor_json(params_.w0)},
                  {"w1", tensor_json(params_.w1)},
                  {"w_fc", tensor_json(params_.w_fc)}};
  return j;
}

Nac Nac::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "ctnas-nac/1") {
    throw std::invalid_argument("model: unsupported or missing format tag");
  }
  const SpaceSpec spec = j.at("space").get<SpaceSpec>();
  if (j.at("spec_hash").get<std::string>() != spec.hash()) {
    throw std::invalid_argument("model: spec_hash does not match the embedded space");
  }
  const NacConfig config = j.at("config").get<NacConfig>();
  const auto& t = j.at("tensors");
  NacParams p{tensor_from_json(t, "op_embeddings"), tensor_from_json(t, "w0"),
              tensor_from_json(t, "w1"), tensor_from_json(t, "w_fc")};
  return Nac(spec, config, std::move(p));
}

// -------------------------------------------------------------------- pairs

std::vector<LabeledPair> build_pairs(std::span<const ArchAcc> records, const SpaceSpec& spec,
                                     bool augment) {
  std::unordered_set<std::string> keys;
  for (const auto& r : records) {
    if (!keys.insert(arch_key(r.arch, spec)).second) {
      throw DuplicateKeyError("build_pairs: duplicate architecture " + arch_key(r.arch, spec));
    }
  }
  const std::size_t m = records.size();
  std::vector<LabeledPair> pairs;
  pairs.reserve((augment ? 2 : 1) * m * (m > 0 ? m - 1 : 0) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const int y = label_pair(records[i].acc, records[j].acc);
      pairs.push_back({records[i].arch, records[j].arch, y, PairSource::kGroundTruth});
      if (augment) pairs.push_back({records[j].arch, records[i].arch, 1 - y, PairSource::kGroundTruth});
    }
  }
  return pairs;
}

std::size_t pseudo_share(std::size_t batch_size, double ratio, std::size_t pseudo_available) {
  if (pseudo_available == 0 || ratio <= 0.0) return 0;
  const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(batch_size)));
  return std::min(want, pseudo_available);
}

std::vector<double> train_nac(Nac& nac, AdamState& adam, std::span<const LabeledPair> labeled,
                              std::span<const LabeledPair> pseudo, double pseudo_ratio,
                              std::size_t batch_size, std::size_t iterations,
                              std::mt19937_64& rng) {
  if (labeled.empty() && pseudo.empty()) throw std::invalid_argument("train_nac: no pairs");
  if (batch_size == 0) throw std::invalid_argument("train_nac: batch size must be positive");
  if (!(pseudo_ratio >= 0.0 && pseudo_ratio < 1.0)) {
    throw std::invalid_argument("train_nac: pseudo ratio must lie in [0, 1)");
  }
  std::size_t n_pseudo = pseudo_share(batch_size, pseudo_ratio, pseudo.size());
  if (labeled.empty()) n_pseudo = batch_size;
  const std::size_t n_labeled = batch_size - n_pseudo;

  std::vector<double> trace;
  trace.reserve(iterations);
  std::vector<const LabeledPair*> batch(batch_size);
  std::vector<Matrix> grads;
  for (std::size_t it = 0; it < iterations; ++it) {
    if (n_labeled) {
      std::uniform_int_distribution<std::size_t> pick(0, labeled.size() - 1);
      for (std::size_t k = 0; k < n_labeled; ++k) batch[k] = &labeled[pick(rng)];
    }
    if (n_pseudo) {
      std::uniform_int_distribution<std::size_t> pick(0, pseudo.size() - 1);
      for (std::size_t k = 0; k < n_pseudo; ++k) batch[n_labeled + k] = &pseudo[pick(rng)];
    }
    trace.push_back(nac.batch_loss(batch, &grads));
    NacParams& p = nac.params();
    std::vector<Matrix> tensors = p.tensors();
    adam_step(tensors, grads, adam);
    p = NacParams::from_tensors(std::move(tensors));
  }
  return trace;
}

}  // namespace ctnas
