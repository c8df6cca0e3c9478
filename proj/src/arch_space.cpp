#include "ctnas/arch_space.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <set>

namespace ctnas {

// ---------------------------------------------------------------- SpaceSpec

void SpaceSpec::check() const {
  if (max_nodes < 3) throw std::invalid_argument("space: max_nodes must be >= 3");
  if (max_nodes > 11) throw std::invalid_argument("space: max_nodes must be <= 11");
  if (max_edges < 2) throw std::invalid_argument("space: max_edges must be >= 2");
  std::set<std::string> seen;
  for (const auto& name : op_vocab) {
    if (name.empty()) throw std::invalid_argument("space: empty op name");
    if (name.find_first_of(",|\"") != std::string::npos) {
      throw std::invalid_argument("space: op name '" + name + "' contains a reserved character");
    }
    if (!seen.insert(name).second) throw std::invalid_argument("space: duplicate op " + name);
  }
  if (!seen.count(std::string(kInputOp)) || !seen.count(std::string(kOutputOp))) {
    throw std::invalid_argument("space: op_vocab must contain IN and OUT");
  }
  if (op_vocab.size() < 3) throw std::invalid_argument("space: need at least one real op");
}

std::size_t SpaceSpec::input_id() const { return op_id(kInputOp); }
std::size_t SpaceSpec::output_id() const { return op_id(kOutputOp); }

std::vector<std::size_t> SpaceSpec::real_ops() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < op_vocab.size(); ++i) {
    if (op_vocab[i] != kInputOp && op_vocab[i] != kOutputOp) ids.push_back(i);
  }
  return ids;
}

std::size_t SpaceSpec::op_id(std::string_view name) const {
  for (std::size_t i = 0; i < op_vocab.size(); ++i)
    if (op_vocab[i] == name) return i;
  throw std::out_of_range("unknown op '" + std::string(name) + "'");
}

std::string SpaceSpec::canonical() const {
  std::string s = "nodes=" + std::to_string(max_nodes) + ";edges=" + std::to_string(max_edges) +
                  ";ops=";
  for (std::size_t i = 0; i < op_vocab.size(); ++i) {
    if (i) s += ',';
    s += op_vocab[i];
  }
  return s;
}

std::string SpaceSpec::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void to_json(nlohmann::json& j, const SpaceSpec& s) {
  j = nlohmann::json{{"max_nodes", s.max_nodes}, {"max_edges", s.max_edges}, {"ops", s.op_vocab}};
}

void from_json(const nlohmann::json& j, SpaceSpec& s) {
  SpaceSpec def;
  s.max_nodes = j.value("max_nodes", def.max_nodes);
  s.max_edges = j.value("max_edges", def.max_edges);
  s.op_vocab = j.value("ops", def.op_vocab);
}

// ------------------------------------------------------------- Architecture

Architecture::Architecture(std::size_t n_nodes)
    : n_(n_nodes), ops_(n_nodes, 0), adj_(n_nodes * n_nodes, 0) {}

Architecture::Architecture(std::size_t n_nodes, std::vector<std::size_t> ops)
    : n_(n_nodes), ops_(std::move(ops)), adj_(n_nodes * n_nodes, 0) {
  if (ops_.size() != n_) throw std::invalid_argument("Architecture: ops length != n_nodes");
}

bool Architecture::edge(std::size_t from, std::size_t to) const {
  if (from >= n_ || to >= n_) return false;
  return adj_[from * n_ + to] != 0;
}

void Architecture::set_edge(std::size_t from, std::size_t to, bool present) {
  if (!(from < to && to < n_)) {
    throw std::invalid_argument("Architecture: edge " + std::to_string(from) + "->" +
                                std::to_string(to) + " is not forward within " +
                                std::to_string(n_) + " nodes");
  }
  adj_[from * n_ + to] = present ? 1 : 0;
}

std::size_t Architecture::edge_count() const {
  return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), std::uint8_t{1}));
}

Matrix Architecture::adjacency() const {
  Matrix m(n_, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) m(i, j) = adj_[i * n_ + j];
  return m;
}

// --------------------------------------------------------------- validation

namespace {

// Forward reachability from IN and backward reachability from OUT; edges
// only go forward so one pass in each direction suffices.
void reachability(const Architecture& a, std::vector<bool>& from_in, std::vector<bool>& to_out) {
  const std::size_t n = a.n_nodes();
  from_in.assign(n, false);
  to_out.assign(n, false);
  if (n == 0) return;
  from_in[0] = true;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j && !from_in[j]; ++i)
      if (from_in[i] && a.edge(i, j)) from_in[j] = true;
  to_out[n - 1] = true;
  for (std::size_t i = n - 1; i-- > 0;)
    for (std::size_t j = i + 1; j < n && !to_out[i]; ++j)
      if (to_out[j] && a.edge(i, j)) to_out[i] = true;
}

}  // namespace

std::vector<Violation> validate(const Architecture& arch, const SpaceSpec& spec) {
  std::vector<Violation> out;
  const std::size_t n = arch.n_nodes();
  if (n > spec.max_nodes) {
    out.push_back({ViolationKind::kNodeBudget, "node budget: " + std::to_string(n) + " > " +
                                                   std::to_string(spec.max_nodes)});
  }
  if (n < 3) {
    out.push_back({ViolationKind::kTooFewNodes, "too few nodes: " + std::to_string(n) + " < 3"});
    return out;
  }
  if (arch.edge_count() > spec.max_edges) {
    out.push_back({ViolationKind::kEdgeBudget, "edge budget: " +
                                                   std::to_string(arch.edge_count()) + " > " +
                                                   std::to_string(spec.max_edges)});
  }
  const std::size_t in_id = spec.input_id(), out_id = spec.output_id();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t op = arch.op(i);
    if (op >= spec.op_vocab.size()) {
      out.push_back({ViolationKind::kOpVocab,
                     "op vocab: node " + std::to_string(i) + " has id " + std::to_string(op)});
      continue;
    }
    const bool terminal = i == 0 || i == n - 1;
    const bool ok = i == 0 ? op == in_id : i == n - 1 ? op == out_id : op != in_id && op != out_id;
    if (!ok) {
      out.push_back({ViolationKind::kTerminals,
                     terminal ? "terminals: node " + std::to_string(i) + " must be " +
                                    std::string(i == 0 ? kInputOp : kOutputOp)
                              : "terminals: middle node " + std::to_string(i) + " uses " +
                                    spec.op_vocab[op]});
    }
  }
  std::vector<bool> from_in, to_out;
  reachability(arch, from_in, to_out);
  if (!from_in[n - 1]) out.push_back({ViolationKind::kNoPath, "no path from IN to OUT"});
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!from_in[i] || !to_out[i]) {
      out.push_back({ViolationKind::kDanglingNode,
                     "dangling node: " + std::to_string(i) + " is not on an IN->OUT path"});
    }
  }
  return out;
}

std::size_t longest_path(const Architecture& arch) {
  const std::size_t n = arch.n_nodes();
  if (n == 0) return 0;
  // dist[j] = longest path IN -> j, -1 when unreachable.
  std::vector<long> dist(n, -1);
  dist[0] = 0;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (dist[i] >= 0 && arch.edge(i, j)) dist[j] = std::max(dist[j], dist[i] + 1);
  return dist[n - 1] < 0 ? 0 : static_cast<std::size_t>(dist[n - 1]);
}

// ------------------------------------------------------------------ padding

PaddedArch pad(const Architecture& arch, const SpaceSpec& spec) {
  return pad(arch, spec.max_nodes, spec.pad_id());
}

PaddedArch pad(const Architecture& arch, std::size_t max_nodes, std::size_t pad_id) {
  const std::size_t n = arch.n_nodes();
  if (n > max_nodes) {
    throw std::invalid_argument("pad: " + std::to_string(n) + " nodes exceed max_nodes " +
                                std::to_string(max_nodes));
  }
  PaddedArch p{Matrix(max_nodes, max_nodes), std::vector<std::size_t>(max_nodes, pad_id)};
  for (std::size_t i = 0; i < n; ++i) {
    p.ops[i] = arch.op(i);
    for (std::size_t j = i + 1; j < n; ++j) p.adjacency(i, j) = arch.edge(i, j) ? 1.0 : 0.0;
  }
  return p;
}

PaddedArch pad(const PaddedArch& padded, std::size_t max_nodes, std::size_t pad_id) {
  const std::size_t n = padded.size();
  if (n > max_nodes) {
    throw std::invalid_argument("pad: " + std::to_string(n) + " nodes exceed max_nodes " +
                                std::to_string(max_nodes));
  }
  PaddedArch p{Matrix(max_nodes, max_nodes), std::vector<std::size_t>(max_nodes, pad_id)};
  for (std::size_t i = 0; i < n; ++i) {
    p.ops[i] = padded.ops[i];
    for (std::size_t j = 0; j < n; ++j) p.adjacency(i, j) = padded.adjacency(i, j);
  }
  return p;
}

Architecture unpad(const PaddedArch& padded, std::size_t pad_id) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < padded.size(); ++i)
    if (padded.ops[i] != pad_id) keep.push_back(i);
  Architecture a(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    a.set_op(i, padded.ops[keep[i]]);
    for (std::size_t j = i + 1; j < keep.size(); ++j)
      if (padded.adjacency(keep[i], keep[j]) != 0.0) a.set_edge(i, j);
  }
  return a;
}

// -------------------------------------------------------------- enumeration

EnumerationCapError::EnumerationCapError(std::size_t partial, std::size_t cap)
    : std::runtime_error("enumeration cap of " + std::to_string(cap) + " exceeded after " +
                         std::to_string(partial) + " architectures"),
      partial_(partial) {}

void enumerate(const SpaceSpec& spec, const std::function<void(const Architecture&)>& visit,
               std::size_t cap) {
  spec.check();
  const auto real = spec.real_ops();
  const std::size_t in_id = spec.input_id(), out_id = spec.output_id();
  std::size_t produced = 0;
  for (std::size_t n = 3; n <= spec.max_nodes; ++n) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) slots.emplace_back(i, j);
    const std::uint64_t masks = std::uint64_t{1} << slots.size();
    const std::size_t middle = n - 2;
    std::size_t combos = 1;
    for (std::size_t m = 0; m < middle; ++m) combos *= real.size();
    for (std::uint64_t mask = 0; mask < masks; ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) > spec.max_edges) continue;
      Architecture a(n);
      for (std::size_t s = 0; s < slots.size(); ++s)
        if (mask >> s & 1U) a.set_edge(slots[s].first, slots[s].second);
      a.set_op(0, in_id);
      a.set_op(n - 1, out_id);
      for (std::size_t i = 1; i + 1 < n; ++i) a.set_op(i, real.front());
      if (!is_valid(a, spec)) continue;
      // Op assignments in lexicographic order, first middle node most significant.
      for (std::size_t combo = 0; combo < combos; ++combo) {
        std::size_t rest = combo;
        for (std::size_t m = middle; m-- > 0;) {
          a.set_op(m + 1, real[rest % real.size()]);
          rest /= real.size();
        }
        if (++produced > cap) throw EnumerationCapError(produced - 1, cap);
        visit(a);
      }
    }
  }
}

std::vector<Architecture> enumerate_all(const SpaceSpec& spec, std::size_t cap) {
  std::vector<Architecture> out;
  enumerate(spec, [&](const Architecture& a) { out.push_back(a); }, cap);
  return out;
}

// ----------------------------------------------------------------- sampling

Architecture prune_isolated(const SpaceSpec& spec, const std::vector<std::uint8_t>& full_adj,
                            const std::vector<std::size_t>& middle_ops) {
  const std::size_t n = spec.max_nodes;
  if (full_adj.size() != n * n || middle_ops.size() != n - 2) {
    throw std::invalid_argument("prune_isolated: shapes do not match the space");
  }
  std::vector<std::size_t> keep{0};
  for (std::size_t v = 1; v + 1 < n; ++v) {
    bool touched = false;
    for (std::size_t u = 0; u < n && !touched; ++u)
      touched = (u < v && full_adj[u * n + v]) || (v < u && full_adj[v * n + u]);
    if (touched) keep.push_back(v);
  }
  keep.push_back(n - 1);
  Architecture a(keep.size());
  a.set_op(0, spec.input_id());
  a.set_op(keep.size() - 1, spec.output_id());
  for (std::size_t i = 1; i + 1 < keep.size(); ++i) a.set_op(i, middle_ops[keep[i] - 1]);
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = i + 1; j < keep.size(); ++j)
      if (full_adj[keep[i] * n + keep[j]]) a.set_edge(i, j);
  return a;
}

Architecture random_arch(const SpaceSpec& spec, std::mt19937_64& rng, std::size_t max_retries) {
  const std::size_t n = spec.max_nodes;
  const auto real = spec.real_ops();
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::size_t> pick(0, real.size() - 1);
  std::vector<std::uint8_t> adj(n * n);
  std::vector<std::size_t> ops(n - 2);
  for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
    std::fill(adj.begin(), adj.end(), 0);
    for (std::size_t j = 1; j < n; ++j)
      for (std::size_t i = 0; i < j; ++i) adj[i * n + j] = coin(rng) ? 1 : 0;
    for (auto& op : ops) op = real[pick(rng)];
    Architecture a = prune_isolated(spec, adj, ops);
    if (is_valid(a, spec)) return a;
  }
  throw SamplingError("random_arch: no valid architecture after " + std::to_string(max_retries) +
                      " draws");
}

// ------------------------------------------------------------ serialization

std::string arch_key(const Architecture& arch, const SpaceSpec& spec) {
  const std::size_t n = arch.n_nodes();
  std::string key = std::to_string(n) + "|";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += ',';
    const std::size_t op = arch.op(i);
    key += op < spec.op_vocab.size() ? spec.op_vocab[op] : "PAD";
  }
  key += '|';
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += '-';
    for (std::size_t j = 0; j < n; ++j) key += arch.edge(i, j) ? '1' : '0';
  }
  return key;
}

nlohmann::json arch_to_json(const Architecture& arch, const SpaceSpec& spec) {
  const std::size_t n = arch.n_nodes();
  std::vector<std::string> ops, rows;
  for (std::size_t i = 0; i < n; ++i) {
    ops.push_back(spec.op_vocab.at(arch.op(i)));
    std::string row;
    for (std::size_t j = 0; j < n; ++j) row += arch.edge(i, j) ? '1' : '0';
    rows.push_back(std::move(row));
  }
  nlohmann::json j;
  j["n"] = n;
  j["ops"] = ops;
  j["adj"] = rows;
  return j;
}

Architecture arch_from_json(const nlohmann::json& j, const SpaceSpec& spec) {
  if (!j.is_object() || !j.contains("n") || !j.contains("ops") || !j.contains("adj")) {
    throw std::invalid_argument("architecture JSON needs fields n, ops, adj");
  }
  if (!j["n"].is_number_integer() || j["n"].get<long long>() < 0) {
    throw std::invalid_argument("architecture JSON: n must be a non-negative integer");
  }
  const auto n = j["n"].get<std::size_t>();
  const auto& ops = j["ops"];
  const auto& adj = j["adj"];
  if (!ops.is_array() || ops.size() != n || !adj.is_array() || adj.size() != n) {
    throw std::invalid_argument("architecture JSON: ops/adj length must equal n");
  }
  Architecture a(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ops[i].is_string()) throw std::invalid_argument("architecture JSON: op must be a string");
    try {
      a.set_op(i, spec.op_id(ops[i].get<std::string>()));
    } catch (const std::out_of_range& e) {
      throw std::invalid_argument(std::string("architecture JSON: ") + e.what());
    }
    if (!adj[i].is_string()) throw std::invalid_argument("architecture JSON: adj rows are strings");
    const auto row = adj[i].get<std::string>();
    if (row.size() != n) throw std::invalid_argument("architecture JSON: adj row length != n");
    for (std::size_t c = 0; c < n; ++c) {
      if (row[c] == '0') continue;
      if (row[c] != '1') throw std::invalid_argument("architecture JSON: adj must be 0/1");
      if (c <= i) throw std::invalid_argument("architecture JSON: edges must go forward (i<j)");
      a.set_edge(i, c);
    }
  }
  return a;
}

}  // namespace ctnas
