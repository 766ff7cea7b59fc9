#include "doctest.h"
#include "oracles.hpp"

#include "sjde/network.hpp"
#include "sjde/rng.hpp"

#include <set>

using namespace sjde;

TEST_SUITE("network") {

TEST_CASE("single node state variance is sigma^2/n") {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Ones(1, 1);
  const auto stats = compute_state_stats<double>(w, 4.0, 50);
  CHECK(stats.state_var(0, 0) == 0.0);
  for (int n = 1; n <= 50; ++n) CHECK(std::abs(stats.state_var(0, n) - 16.0 / n) <= 1e-12);
  CHECK(stats.neighbor_var(0, 10) == 0.0);
  CHECK(stats.innovation_var(0) == doctest::Approx(16.0));
}

TEST_CASE("generated geometric network is connected and edges follow the radius") {
  int attempts = 0;
  const auto g = generate_geometric_network(20, 0.3, 11, 10000, &attempts);
  CHECK(g.size() == 20);
  CHECK(g.connected());
  CHECK(attempts >= 1);
  for (int k = 0; k < 20; ++k) {
    for (int l = 0; l < 20; ++l) {
      if (k == l) continue;
      const double d = (g.coordinates.row(k) - g.coordinates.row(l)).norm();
      CHECK(g.has_edge(k, l) == (d <= 0.3));
    }
    CHECK(g.coordinates(k, 0) >= 0.0);
    CHECK(g.coordinates(k, 1) <= 1.0);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = generate_geometric_network(15, 0.4, 3);
  const auto b = generate_geometric_network(15, 0.4, 3);
  const auto c = generate_geometric_network(15, 0.4, 4);
  CHECK(a.coordinates == b.coordinates);
  CHECK(a.edges == b.edges);
  CHECK(a.coordinates != c.coordinates);
}

TEST_CASE("retry cap surfaces as an error") {
  CHECK_THROWS_AS(generate_geometric_network(20, 0.01, 1, 5), NetworkError);
  CHECK_THROWS(generate_geometric_network(5, -0.1, 1));
}

TEST_CASE("distance exactly at the radius is an edge") {
  Eigen::Matrix<double, Eigen::Dynamic, 2> xy(3, 2);
  xy << 0, 0, 0.5, 0, 1.0, 0;
  const auto g = geometric_graph(xy, 0.5);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 2));
  CHECK_FALSE(g.has_edge(0, 2));
  CHECK(g.connected());
}

TEST_CASE("single node graph") {
  const auto g = generate_geometric_network(1, 0.3, 1);
  CHECK(g.size() == 1);
  CHECK(g.edges.empty());
  CHECK(g.connected());
  CHECK(equal_weights(g)(0, 0) == 1.0);
}

TEST_CASE("edge lists are validated") {
  CHECK_THROWS(graph_from_edges(3, {{0, 0}}));
  CHECK_THROWS(graph_from_edges(3, {{0, 1}, {1, 0}}));
  CHECK_THROWS(graph_from_edges(3, {{0, 3}}));
  const auto g = graph_from_edges(4, {{2, 1}, {0, 1}});
  CHECK(g.edges.size() == 2);
  CHECK_FALSE(g.connected());
  CHECK(g.neighbors[1] == std::vector<int>{0, 2});
}

TEST_CASE("equal weights are 1/(degree+1) over the closed neighbourhood") {
  const auto g = generate_geometric_network(20, 0.3, 5);
  const auto w = equal_weights(g);
  CHECK(is_row_stochastic(w, 1e-12));
  CHECK(is_nonnegative(w));
  for (int k = 0; k < g.size(); ++k) {
    CHECK(std::abs(w.row(k).sum() - 1.0) <= 1e-12);
    for (int l = 0; l < g.size(); ++l) {
      const bool linked = k == l || g.has_edge(k, l);
      CHECK((w(k, l) > 0) == linked);
      if (linked) CHECK(w(k, l) == doctest::Approx(1.0 / (g.degree(k) + 1)));
    }
  }
}

TEST_CASE("laplacian weights keep unit rows and flag negative entries") {
  const auto g = generate_geometric_network(20, 0.3, 5);
  int dmax = 0;
  for (int k = 0; k < g.size(); ++k) dmax = std::max(dmax, g.degree(k));
  const auto ok = laplacian_weights(g, 1.0 / (dmax + 1));
  CHECK(is_row_stochastic(ok.weights, 1e-12));
  CHECK(ok.nonnegative);
  const auto bad = laplacian_weights(g, 2.0 / dmax);
  CHECK(is_row_stochastic(bad.weights, 1e-12));
  CHECK_FALSE(bad.nonnegative);
  CHECK_THROWS(compute_state_stats<double>(bad.weights, 4.0, 5));
}

TEST_CASE("incremental covariance recursion matches the direct power sum") {
  const auto g = generate_geometric_network(20, 0.3, 2);
  const auto w = equal_weights(g);
  const auto stats = compute_state_stats<double>(w, 4.0, 50);
  double worst = 0;
  for (int n : {1, 2, 7, 25, 50}) {
    const Eigen::MatrixXd direct = oracle::direct_covariance(w, 4.0, n);
    worst = std::max(worst, (stats.covariance[n] - direct).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("covariance recursion matches simulated states") {
  const auto g = generate_geometric_network(5, 0.6, 7);
  const auto w = equal_weights(g);
  const int horizon = 6, trials = 40000;
  const auto stats = compute_state_stats<double>(w, 2.0, horizon);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5), sq = Eigen::VectorXd::Zero(5);
  Rng rng = make_stream(9, {1});
  std::normal_distribution<double> z;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(5);
    for (int n = 1; n <= horizon; ++n) {
      Eigen::VectorXd x(5);
      for (int k = 0; k < 5; ++k) x[k] = 1.5 + 2.0 * z(rng);
      s = w * (((n - 1.0) / n) * s + x / double(n));
    }
    sum += s;
    sq += (s.array() - 1.5).square().matrix();
  }
  for (int k = 0; k < 5; ++k) {
    const double var = stats.state_var(k, horizon);
    CHECK(std::abs(sum[k] / trials - 1.5) < 5 * std::sqrt(var / trials));
    CHECK(sq[k] / trials == doctest::Approx(var).epsilon(0.03));
  }
}

TEST_CASE("state variance decreases in n and is below the isolated-node value") {
  const auto g = generate_geometric_network(20, 0.3, 8);
  const auto stats = compute_state_stats<double>(equal_weights(g), 4.0, 50);
  for (int k = 0; k < 20; ++k)
    for (int n = 1; n <= 50; ++n) {
      CHECK(stats.state_var(k, n) <= 16.0 / n + 1e-12);
      if (n > 1) CHECK(stats.state_var(k, n) < stats.state_var(k, n - 1));
    }
}

TEST_CASE("invalid inputs to the state statistics") {
  Eigen::MatrixXd w(2, 2);
  w << 0.5, 0.4, 0.5, 0.5;
  CHECK_THROWS(compute_state_stats<double>(w, 4.0, 5));
  CHECK_THROWS(compute_state_stats<double>(Eigen::MatrixXd::Identity(2, 2), 0.0, 5));
  CHECK_THROWS(compute_state_stats<double>(Eigen::MatrixXd::Identity(2, 2), 1.0, 0));
}

}
