#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sjde {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Simple undirected sensor graph. Nodes are 0-based; `edges` holds each
/// undirected edge once with first < second.
struct NetworkGraph {
  Eigen::Matrix<double, Eigen::Dynamic, 2> coordinates;
  double radius = 0.0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> neighbors;  // open neighbourhoods, sorted

  int size() const { return static_cast<int>(neighbors.size()); }
  bool connected() const;
  bool has_edge(int k, int l) const;
  int degree(int k) const { return static_cast<int>(neighbors[k].size()); }
};

/// Builds a graph from an explicit edge list. Rejects self loops, duplicates
/// and out-of-range node ids.
NetworkGraph graph_from_edges(int node_count, const std::vector<std::pair<int, int>>& edges,
                              Eigen::Matrix<double, Eigen::Dynamic, 2> coordinates = {},
                              double radius = 0.0);

/// Unit-disk graph on the given coordinates: edge iff distance <= radius.
NetworkGraph geometric_graph(const Eigen::Matrix<double, Eigen::Dynamic, 2>& coordinates,
                             double radius);

/// Samples node positions uniformly in the unit square until the unit-disk
/// graph is connected. Throws NetworkError once `max_attempts` draws failed.
NetworkGraph generate_geometric_network(int node_count, double radius, std::uint64_t seed,
                                        int max_attempts = 10000, int* attempts_used = nullptr);

Eigen::MatrixXd equal_weights(const NetworkGraph& graph);

struct LaplacianWeights {
  Eigen::MatrixXd weights;
  bool nonnegative = true;  // false => unusable for policy design
};

/// W = I - c L. Rows always sum to one; negative entries are reported through
/// `nonnegative` rather than corrected.
LaplacianWeights laplacian_weights(const NetworkGraph& graph, double c);

template <typename Derived>
bool is_row_stochastic(const Eigen::MatrixBase<Derived>& w, double tol = 1e-12) {
  if (w.rows() != w.cols() || w.rows() == 0) return false;
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    if (std::abs(static_cast<double>(w.row(k).sum()) - 1.0) > tol) return false;
  }
  return true;
}

template <typename Derived>
bool is_nonnegative(const Eigen::MatrixBase<Derived>& w) {
  return (w.array() >= 0).all();
}

/// Second-order statistics of the consensus+innovations state recursion
/// s_n = W((n-1)/n s_{n-1} + x_n / n), s_0 = 0, for i.i.d. N(theta, sigma^2)
/// observations. Index n runs over 0..horizon; n = 0 is the deterministic
/// initial state (all variances zero).
template <typename Scalar = double>
struct StateStats {
  int horizon = 0;
  Scalar noise_var = 0;
  Matrix<Scalar> weights;
  std::vector<Matrix<Scalar>> covariance;  // Sigma_n
  Matrix<Scalar> state_var;                // K x (N+1): Sigma_n[k,k]
  Matrix<Scalar> neighbor_var;             // K x (N+1): var of sum_{l != k} w_kl s_n^l
  Vector<Scalar> innovation_var;           // K: sigma^2 (W W^T)[k,k]

  int nodes() const { return static_cast<int>(weights.rows()); }
  Scalar self_weight(int k) const { return weights(k, k); }
};

template <typename Scalar>
StateStats<Scalar> compute_state_stats(const Matrix<Scalar>& w, Scalar sigma, int horizon) {
  if (w.rows() != w.cols() || w.rows() == 0)
    throw std::invalid_argument("weight matrix must be square and non-empty");
  if (!is_row_stochastic(w)) throw std::invalid_argument("weight matrix rows must sum to 1");
  if (!is_nonnegative(w))
    throw std::invalid_argument("weight matrix has negative entries; the state model needs a convex combination");
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");

  const auto k_count = w.rows();
  StateStats<Scalar> stats;
  stats.horizon = horizon;
  stats.noise_var = sigma * sigma;
  stats.weights = w;

  Matrix<Scalar> open = w;
  open.diagonal().setZero();
  const Matrix<Scalar> wwt = w * w.transpose();

  stats.covariance.reserve(horizon + 1);
  stats.covariance.push_back(Matrix<Scalar>::Zero(k_count, k_count));
  stats.state_var = Matrix<Scalar>::Zero(k_count, horizon + 1);
  stats.neighbor_var = Matrix<Scalar>::Zero(k_count, horizon + 1);
  stats.innovation_var = stats.noise_var * wwt.diagonal();

  for (int n = 1; n <= horizon; ++n) {
    const Scalar nn = static_cast<Scalar>(n);
    const Scalar carry = (nn - 1) * (nn - 1) / (nn * nn);
    Matrix<Scalar> next = carry * (w * stats.covariance.back() * w.transpose()) +
                          (stats.noise_var / (nn * nn)) * wwt;
    next = (Scalar(0.5) * (next + next.transpose())).eval();
    stats.covariance.push_back(std::move(next));
  }
  for (int n = 0; n <= horizon; ++n) {
    const auto& cov = stats.covariance[n];
    stats.state_var.col(n) = cov.diagonal();
    stats.neighbor_var.col(n) = (open * cov * open.transpose()).diagonal();
  }
  return stats;
}

}  // namespace sjde
