#include "hgx/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "hgx/error.hpp"

namespace hgx {

Hypergraph Hypergraph::from_edge_list(std::size_t n, std::vector<std::vector<NodeId>> raw_edges,
                                      std::optional<std::vector<double>> weights) {
  Hypergraph hg;
  hg.n_ = n;
  for (std::size_t e = 0; e < raw_edges.size(); ++e) {
    auto& edge = raw_edges[e];
    for (NodeId v : edge) {
      if (v >= n) {
        fail(ErrorKind::NodeIdOutOfRange,
             "edge " + std::to_string(e) + " references node " + std::to_string(v) + " but n = " + std::to_string(n));
      }
    }
    std::sort(edge.begin(), edge.end());
    edge.erase(std::unique(edge.begin(), edge.end()), edge.end());
    if (edge.empty()) fail(ErrorKind::EmptyEdge, "edge " + std::to_string(e) + " has no nodes");
  }
  if (weights) {
    if (weights->size() != raw_edges.size()) {
      fail(ErrorKind::NonpositiveWeight, "expected " + std::to_string(raw_edges.size()) + " weights, got " +
                                             std::to_string(weights->size()));
    }
    for (std::size_t e = 0; e < weights->size(); ++e) {
      const double w = (*weights)[e];
      if (!(w > 0.0) || !std::isfinite(w)) {
        fail(ErrorKind::NonpositiveWeight, "edge " + std::to_string(e) + " has weight " + std::to_string(w));
      }
    }
  }
  hg.edges_ = std::move(raw_edges);
  hg.weights_ = std::move(weights);
  hg.node_to_edges_.assign(n, {});
  for (EdgeId e = 0; e < hg.edges_.size(); ++e) {
    for (NodeId v : hg.edges_[e]) hg.node_to_edges_[v].push_back(e);
    hg.incidences_ += hg.edges_[e].size();
  }
  return hg;
}

std::optional<std::size_t> Hypergraph::uniform_order() const noexcept {
  if (edges_.empty()) return std::nullopt;
  const std::size_t d = edges_.front().size();
  for (const auto& e : edges_)
    if (e.size() != d) return std::nullopt;
  return d;
}

bool Hypergraph::is_uniform(std::size_t d) const noexcept {
  return std::all_of(edges_.begin(), edges_.end(), [d](const auto& e) { return e.size() == d; });
}

Hypergraph Hypergraph::relabeled(std::span<const NodeId> perm) const {
  if (perm.size() != n_) fail(ErrorKind::ShapeMismatch, "permutation length differs from node count");
  std::vector<std::vector<NodeId>> edges = edges_;
  for (auto& e : edges)
    for (auto& v : e) v = perm[v];
  return from_edge_list(n_, std::move(edges), weights_);
}

namespace {

Distribution summarize(std::vector<std::size_t> values) {
  Distribution d;
  if (values.empty()) return d;
  d.defined = true;
  std::sort(values.begin(), values.end());
  d.min = values.front();
  d.max = values.back();
  d.total = std::accumulate(values.begin(), values.end(), std::size_t{0});
  d.mean = static_cast<double>(d.total) / static_cast<double>(values.size());
  d.median = values[(values.size() - 1) / 2];
  return d;
}

}  // namespace

HypergraphStats stats(const Hypergraph& hg) {
  HypergraphStats s;
  s.num_nodes = hg.num_nodes();
  s.num_edges = hg.num_edges();
  std::vector<std::size_t> sizes;
  sizes.reserve(hg.num_edges());
  for (EdgeId e = 0; e < hg.num_edges(); ++e) sizes.push_back(hg.edge_size(e));
  std::vector<std::size_t> degrees;
  degrees.reserve(hg.num_nodes());
  for (NodeId v = 0; v < hg.num_nodes(); ++v) degrees.push_back(hg.degree(v));
  s.edge_size = summarize(std::move(sizes));
  s.node_degree = summarize(std::move(degrees));
  return s;
}

Matrix clique_expansion_incidence(const Hypergraph& hg) {
  Matrix m(hg.num_nodes(), hg.num_nodes());
  for (const auto& edge : hg.edges())
    for (NodeId u : edge)
      for (NodeId v : edge) m(u, v) += 1.0;
  return m;
}

Matrix clique_expansion_adjacency(const Hypergraph& hg) {
  Matrix m = clique_expansion_incidence(hg);
  for (std::size_t v = 0; v < m.rows(); ++v) m(v, v) = 0.0;
  return m;
}

std::vector<std::pair<NodeId, EdgeId>> star_expansion(const Hypergraph& hg) {
  std::vector<std::pair<NodeId, EdgeId>> pairs;
  pairs.reserve(hg.num_incidences());
  for (EdgeId e = 0; e < hg.num_edges(); ++e)
    for (NodeId v : hg.edge(e)) pairs.emplace_back(v, e);
  return pairs;
}

Hypergraph from_star_expansion(std::size_t n, std::span<const std::pair<NodeId, EdgeId>> pairs) {
  std::map<EdgeId, std::vector<NodeId>> grouped;
  for (const auto& [v, e] : pairs) grouped[e].push_back(v);
  std::vector<std::vector<NodeId>> edges;
  edges.reserve(grouped.size());
  for (auto& [id, members] : grouped) edges.push_back(std::move(members));
  return Hypergraph::from_edge_list(n, std::move(edges));
}

AdjacencyTensor::AdjacencyTensor(const Hypergraph& hg, std::size_t order) : n_(hg.num_nodes()), d_(order) {
  if (order < 2) fail(ErrorKind::NotUniform, "adjacency tensor needs order >= 2");
  if (!hg.is_uniform(order)) fail(ErrorKind::NotUniform, "hypergraph is not " + std::to_string(order) + "-uniform");
  double total = 1.0;
  for (std::size_t i = 0; i < order; ++i) {
    total *= static_cast<double>(n_);
    if (total > static_cast<double>(kMaxEntries)) {
      fail(ErrorKind::TooLarge, "n^d exceeds " + std::to_string(kMaxEntries) + " entries");
    }
  }
  entries_.assign(static_cast<std::size_t>(total), 0.0);
  double factorial = 1.0;
  for (std::size_t k = 2; k <= order - 2; ++k) factorial *= static_cast<double>(k);
  const double coefficient = 1.0 / factorial;
  // Duplicate hyperedges accumulate, matching the co-membership counts of H H^T.
  for (const auto& edge : hg.edges()) {
    std::vector<std::size_t> index(edge.begin(), edge.end());
    do {
      entries_[flat_index(index)] += coefficient;
    } while (std::next_permutation(index.begin(), index.end()));
  }
}

std::size_t AdjacencyTensor::flat_index(std::span<const std::size_t> index) const {
  std::size_t flat = 0;
  for (std::size_t i : index) flat = flat * n_ + i;
  return flat;
}

double AdjacencyTensor::at(std::span<const std::size_t> index) const {
  if (index.size() != d_) fail(ErrorKind::ShapeMismatch, "tensor index has wrong arity");
  return entries_[flat_index(index)];
}

Matrix AdjacencyTensor::marginalize_to_matrix() const {
  Matrix m(n_, n_);
  std::size_t tail = 1;
  for (std::size_t k = 2; k < d_; ++k) tail *= n_;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t base = (i * n_ + j) * tail;
      double s = 0.0;
      for (std::size_t t = 0; t < tail; ++t) s += entries_[base + t];
      m(i, j) = s;
    }
  return m;
}

Matrix AdjacencyTensor::contract(const Matrix& x) const {
  if (x.rows() != n_) fail(ErrorKind::ShapeMismatch, "feature rows differ from tensor dimension");
  Matrix out(n_, x.cols());
  std::size_t tail = 1;
  for (std::size_t k = 1; k < d_; ++k) tail *= n_;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < tail; ++t) {
        const double a = entries_[i * tail + t];
        if (a == 0.0) continue;
        std::size_t rest = t;
        double prod = a;
        for (std::size_t k = d_ - 1; k-- > 0;) {
          prod *= x(rest % n_, c);
          rest /= n_;
        }
        s += prod;
      }
      out(i, c) = s;
    }
  }
  return out;
}

}  // namespace hgx

namespace hgx {

Hypergraph random_hypergraph(Rng& rng, std::size_t n, std::size_t m, std::size_t min_size, std::size_t max_size) {
  if (n == 0 && m > 0) fail(ErrorKind::InvalidConfig, "random_hypergraph: edges need at least one node");
  if (min_size == 0 || min_size > max_size) fail(ErrorKind::InvalidConfig, "random_hypergraph: bad size range");
  if (min_size > n) fail(ErrorKind::InvalidConfig, "random_hypergraph: edge size exceeds node count");
  const std::size_t hi = std::min(max_size, n);
  std::vector<std::vector<NodeId>> edges;
  edges.reserve(m);
  for (std::size_t e = 0; e < m; ++e) {
    const std::size_t size = min_size + rng.index(hi - min_size + 1);
    auto perm = rng.permutation(n);
    perm.resize(size);
    edges.push_back(std::move(perm));
  }
  return Hypergraph::from_edge_list(n, std::move(edges));
}

}  // namespace hgx
