#include "sjde/network.hpp"

#include "sjde/rng.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

namespace sjde {

bool NetworkGraph::connected() const {
  const int k_count = size();
  if (k_count <= 1) return true;
  std::vector<char> seen(k_count, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int k = frontier.front();
    frontier.pop();
    for (int l : neighbors[k]) {
      if (!seen[l]) {
        seen[l] = 1;
        ++reached;
        frontier.push(l);
      }
    }
  }
  return reached == k_count;
}

bool NetworkGraph::has_edge(int k, int l) const {
  const auto& nb = neighbors.at(k);
  return std::binary_search(nb.begin(), nb.end(), l);
}

NetworkGraph graph_from_edges(int node_count, const std::vector<std::pair<int, int>>& edges,
                              Eigen::Matrix<double, Eigen::Dynamic, 2> coordinates, double radius) {
  if (node_count < 1) throw std::invalid_argument("graph needs at least one node");
  if (coordinates.rows() != 0 && coordinates.rows() != node_count)
    throw std::invalid_argument("coordinate count does not match node count");

  NetworkGraph g;
  g.coordinates = coordinates.rows() == 0
                      ? Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(node_count, 2)
                      : std::move(coordinates);
  g.radius = radius;
  g.neighbors.assign(node_count, {});
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= node_count || b >= node_count) {
      std::ostringstream msg;
      msg << "edge (" << a << "," << b << ") references a node outside 0.." << node_count - 1;
      throw std::invalid_argument(msg.str());
    }
    if (a == b) throw std::invalid_argument("self loop on node " + std::to_string(a));
    const int lo = std::min(a, b);
    const int hi = std::max(a, b);
    g.edges.emplace_back(lo, hi);
  }
  std::sort(g.edges.begin(), g.edges.end());
  if (std::adjacent_find(g.edges.begin(), g.edges.end()) != g.edges.end())
    throw std::invalid_argument("duplicate edge in edge list");
  for (auto [a, b] : g.edges) {
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return g;
}

NetworkGraph geometric_graph(const Eigen::Matrix<double, Eigen::Dynamic, 2>& coordinates,
                             double radius) {
  const int k_count = static_cast<int>(coordinates.rows());
  std::vector<std::pair<int, int>> edges;
  // Boundary points (distance == radius) count as neighbours.
  for (int k = 0; k < k_count; ++k)
    for (int l = k + 1; l < k_count; ++l)
      if ((coordinates.row(k) - coordinates.row(l)).norm() <= radius) edges.emplace_back(k, l);
  return graph_from_edges(k_count, edges, coordinates, radius);
}

NetworkGraph generate_geometric_network(int node_count, double radius, std::uint64_t seed,
                                        int max_attempts, int* attempts_used) {
  if (node_count < 1) throw std::invalid_argument("node count must be >= 1");
  if (!(radius > 0)) throw std::invalid_argument("communication radius must be > 0");
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");

  Rng rng = make_stream(seed, {0x6e6574ULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::Matrix<double, Eigen::Dynamic, 2> xy(node_count, 2);
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    for (int k = 0; k < node_count; ++k) {
      xy(k, 0) = unit(rng);
      xy(k, 1) = unit(rng);
    }
    NetworkGraph g = geometric_graph(xy, radius);
    if (g.connected()) {
      if (attempts_used) *attempts_used = attempt;
      return g;
    }
  }
  std::ostringstream msg;
  msg << "no connected geometric graph with K=" << node_count << " and d_com=" << radius
      << " after " << max_attempts << " attempts; increase the radius or the retry cap";
  throw NetworkError(msg.str());
}

Eigen::MatrixXd equal_weights(const NetworkGraph& graph) {
  const int k_count = graph.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k_count, k_count);
  for (int k = 0; k < k_count; ++k) {
    const double share = 1.0 / static_cast<double>(graph.degree(k) + 1);
    w(k, k) = share;
    for (int l : graph.neighbors[k]) w(k, l) = share;
  }
  return w;
}

LaplacianWeights laplacian_weights(const NetworkGraph& graph, double c) {
  if (!(c > 0)) throw std::invalid_argument("laplacian step c must be > 0");
  const int k_count = graph.size();
  Eigen::MatrixXd laplacian = Eigen::MatrixXd::Zero(k_count, k_count);
  for (int k = 0; k < k_count; ++k) {
    laplacian(k, k) = graph.degree(k);
    for (int l : graph.neighbors[k]) laplacian(k, l) = -1.0;
  }
  LaplacianWeights out;
  out.weights = Eigen::MatrixXd::Identity(k_count, k_count) - c * laplacian;
  out.nonnegative = is_nonnegative(out.weights);
  return out;
}

}  // namespace sjde
