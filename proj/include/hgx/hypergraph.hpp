#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hgx/matrix.hpp"
#include "hgx/rng.hpp"

namespace hgx {

using NodeId = std::size_t;
using EdgeId = std::size_t;

/// Immutable hypergraph: n nodes, hyperedges stored as strictly increasing
/// node-id lists, optional positive per-edge weights, and the dual
/// node -> incident-edges index.
class Hypergraph {
 public:
  Hypergraph() = default;

  /// Canonicalizes each raw edge (sort + dedup) and validates ids/weights.
  static Hypergraph from_edge_list(std::size_t n, std::vector<std::vector<NodeId>> raw_edges,
                                   std::optional<std::vector<double>> weights = std::nullopt);

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  /// Number of (node, edge) incidences, i.e. sum of edge sizes.
  std::size_t num_incidences() const noexcept { return incidences_; }

  std::span<const NodeId> edge(EdgeId e) const noexcept { return edges_[e]; }
  const std::vector<std::vector<NodeId>>& edges() const noexcept { return edges_; }
  std::span<const EdgeId> incident_edges(NodeId v) const noexcept { return node_to_edges_[v]; }

  std::size_t degree(NodeId v) const noexcept { return node_to_edges_[v].size(); }
  std::size_t edge_size(EdgeId e) const noexcept { return edges_[e].size(); }

  bool has_weights() const noexcept { return weights_.has_value(); }
  /// w_e, 1.0 when the hypergraph is unweighted.
  double weight(EdgeId e) const noexcept { return weights_ ? (*weights_)[e] : 1.0; }
  const std::optional<std::vector<double>>& weights() const noexcept { return weights_; }

  /// The common edge size if every edge has it, otherwise nullopt (also for no edges).
  std::optional<std::size_t> uniform_order() const noexcept;
  bool is_uniform(std::size_t d) const noexcept;

  /// Applies the node relabeling v -> perm[v].
  Hypergraph relabeled(std::span<const NodeId> perm) const;

  friend bool operator==(const Hypergraph& a, const Hypergraph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_ && a.weights_ == b.weights_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<NodeId>> edges_;
  std::vector<std::vector<EdgeId>> node_to_edges_;
  std::optional<std::vector<double>> weights_;
  std::size_t incidences_ = 0;
};

/// Summary of a size distribution. `defined` is false for an empty sample.
struct Distribution {
  bool defined = false;
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
  std::size_t median = 0;  // lower-middle element for even counts
  std::size_t total = 0;
};

struct HypergraphStats {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  Distribution edge_size;
  Distribution node_degree;
};

HypergraphStats stats(const Hypergraph& hg);

/// H H^T: entry (u, v) counts hyperedges containing both u and v.
Matrix clique_expansion_incidence(const Hypergraph& hg);
/// H H^T with the diagonal zeroed.
Matrix clique_expansion_adjacency(const Hypergraph& hg);

/// One (node, edge) pair per incidence, ordered by edge then node.
std::vector<std::pair<NodeId, EdgeId>> star_expansion(const Hypergraph& hg);
/// Inverse of star_expansion; edges are numbered by first appearance order of their ids.
Hypergraph from_star_expansion(std::size_t n, std::span<const std::pair<NodeId, EdgeId>> pairs);

/// m random hyperedges over n nodes, sizes uniform in [min_size, max_size]
/// (clamped to n), members drawn without replacement.
Hypergraph random_hypergraph(Rng& rng, std::size_t n, std::size_t m, std::size_t min_size, std::size_t max_size);
/// m random d-node hyperedges over n >= d nodes.
inline Hypergraph random_uniform_hypergraph(Rng& rng, std::size_t n, std::size_t m, std::size_t d) {
  return random_hypergraph(rng, n, m, d, d);
}

/// Dense order-d adjacency tensor of a d-uniform hypergraph. Only meant as a
/// brute-force oracle for small instances.
class AdjacencyTensor {
 public:
  static constexpr std::size_t kMaxEntries = 10'000'000;

  AdjacencyTensor(const Hypergraph& hg, std::size_t order);

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t order() const noexcept { return d_; }
  double at(std::span<const std::size_t> index) const;
  const std::vector<double>& entries() const noexcept { return entries_; }

  /// sum_{i3..id} A[i, j, i3, ..., id]
  Matrix marginalize_to_matrix() const;
  /// sum_{i2..id} A[:, i2..id] x_{i2} ... x_{id}, applied independently to each feature column.
  Matrix contract(const Matrix& x) const;

 private:
  std::size_t flat_index(std::span<const std::size_t> index) const;

  std::size_t n_;
  std::size_t d_;
  std::vector<double> entries_;
};

}  // namespace hgx
