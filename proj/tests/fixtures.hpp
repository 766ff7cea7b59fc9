#pragma once

#include "sjde/design.hpp"
#include "sjde/policy.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace fixture {

using namespace sjde;

// Hand-built instance on the grid {-1, 0, 1}: posteriors and kernels are
// fixed numbers, not derived from a model.
struct ToyInstance {
  StateGrid grid{-1, 1, 3};
  int horizon = 2;
  PosteriorTable post;
  TransitionOperator transitions;
  CostCoefficients costs{{8.0, 8.0}, {4.0, 5.0}};
};

inline ToyInstance toy_instance(int horizon = 2) {
  ToyInstance t;
  t.horizon = horizon;
  t.post = PosteriorTable::zeros(horizon, t.grid, {0.45, 0.55});
  for (int n = 0; n <= horizon; ++n) {
    const double sharp = 1.0 + n;
    for (int j = 0; j < 3; ++j) {
      const double x = t.grid[j];
      const double p1 = 1.0 / (1.0 + std::exp(-2.2 * sharp * x - 0.1));
      t.post.prob[n][1][j] = n == 0 ? 0.55 : p1;
      t.post.prob[n][0][j] = n == 0 ? 0.45 : 1.0 - p1;
      for (int i = 0; i < 2; ++i) {
        t.post.mean[n][i][j] = (i ? 2.0 : -2.0) * 0.8 + 0.3 * x;
        t.post.var[n][i][j] = 0.25 / (1.0 + 0.7 * n + 0.1 * j);
      }
    }
  }
  const double rows[3][3][3] = {{{0.6, 0.3, 0.1}, {0.25, 0.5, 0.25}, {0.1, 0.3, 0.6}},
                                {{0.7, 0.2, 0.1}, {0.2, 0.55, 0.25}, {0.05, 0.25, 0.7}},
                                {{0.5, 0.4, 0.1}, {0.3, 0.4, 0.3}, {0.15, 0.15, 0.7}}};
  for (int n = 0; n < horizon; ++n) {
    Eigen::MatrixXd m(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) m(a, b) = rows[n % 3][a][b];
    t.transitions.steps.push_back(m.sparseView());
  }
  return t;
}

// Minimum over every stop/continue assignment of the expected cost from each
// state at n = 0. Stage N always stops; stage 0 may stop only if allowed.
inline Eigen::ArrayXd brute_force_start_values(const ToyInstance& t, bool stop_at_start,
                                               std::vector<Eigen::ArrayXd>* best_values = nullptr) {
  const int points = t.grid.points;
  const int first = stop_at_start ? 0 : 1;
  const int free_cells = (t.horizon - first) * points;
  Eigen::ArrayXd best = Eigen::ArrayXd::Constant(points, std::numeric_limits<double>::infinity());
  std::vector<Eigen::ArrayXd> best_all(t.horizon + 1, best);
  for (long mask = 0; mask < (1L << free_cells); ++mask) {
    std::vector<Eigen::ArrayXd> v(t.horizon + 1);
    for (int n = t.horizon; n >= 0; --n) {
      const Eigen::ArrayXd g =
          stopping_cost(t.post, n, 0, t.costs).min(stopping_cost(t.post, n, 1, t.costs));
      v[n].resize(points);
      for (int j = 0; j < points; ++j) {
        bool stop;
        if (n == t.horizon) {
          stop = true;
        } else if (n < first) {
          stop = false;
        } else {
          stop = (mask >> ((n - first) * points + j)) & 1L;
        }
        if (stop) {
          v[n][j] = g[j];
        } else {
          double cont = 1.0;
          for (SparseRowMatrix::InnerIterator it(t.transitions.steps[n], j); it; ++it)
            cont += it.value() * v[n + 1][it.col()];
          v[n][j] = cont;
        }
      }
    }
    for (int n = 0; n <= t.horizon; ++n) best_all[n] = best_all[n].min(v[n]);
  }
  if (best_values) *best_values = best_all;
  return best_all[0];
}

// Conditional kernels on the toy grid: two theta bins per hypothesis, every
// (hypothesis, bin, n) with its own 3x3 row-stochastic matrix.
inline MatrixConditionalTransitions toy_conditional(int horizon) {
  std::array<ThetaBins, 2> bins;
  bins[0].value = Eigen::ArrayXd::LinSpaced(2, -2.3, -1.7);
  bins[0].weight = (Eigen::ArrayXd(2) << 0.4, 0.6).finished();
  bins[1].value = Eigen::ArrayXd::LinSpaced(2, 1.6, 2.4);
  bins[1].weight = (Eigen::ArrayXd(2) << 0.7, 0.3).finished();
  std::array<std::vector<std::vector<Eigen::MatrixXd>>, 2> kernels;
  for (int i = 0; i < 2; ++i) {
    kernels[i].resize(2);
    for (int b = 0; b < 2; ++b)
      for (int n = 0; n < horizon; ++n) {
        Eigen::MatrixXd m(3, 3);
        for (int a = 0; a < 3; ++a) {
          for (int c = 0; c < 3; ++c) {
            const double pull = i ? c : 2 - c;
            m(a, c) = 1.0 + pull * (0.5 + 0.3 * b) + 0.2 * ((a + c + n) % 3);
          }
          m.row(a) /= m.row(a).sum();
        }
        kernels[i][b].push_back(m);
      }
  }
  return MatrixConditionalTransitions(StateGrid{-1, 1, 3}, bins, kernels);
}

// Exhaustive path enumeration of the policy's errors and stopping time.
inline GridEvaluation enumerate_paths(const PolicyTable& p, const MatrixConditionalTransitions& k,
                                      const std::array<double, 2>& prior) {
  GridEvaluation out;
  const int horizon = p.horizon;
  const int start = p.grid.origin_index();
  for (int i = 0; i < 2; ++i) {
    for (int b = 0; b < k.bins(i).value.size(); ++b) {
      const double w = k.bins(i).weight[b], theta = k.bins(i).value[b];
      std::vector<int> path(horizon + 1, 0);
      long total = 1;
      for (int n = 0; n < horizon; ++n) total *= 3;
      for (long code = 0; code < total; ++code) {
        long c = code;
        path[0] = start;
        for (int n = 1; n <= horizon; ++n) {
          path[n] = static_cast<int>(c % 3);
          c /= 3;
        }
        double prob = 1.0;
        int tau = 0;
        for (int n = 1; n <= horizon; ++n) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(3), o(3);
          e[path[n - 1]] = 1.0;
          k.propagate(i, b, n - 1, e, o);
          prob *= o[path[n]];
          if (p.stop[n][path[n]]) {
            tau = n;
            break;
          }
        }
        // Paths that stop early are counted once per distinct tail; keep only the canonical tail.
        bool canonical = true;
        for (int n = tau + 1; n <= horizon; ++n) canonical = canonical && path[n] == 0;
        if (!canonical || tau == 0) continue;
        const int j = path[tau];
        const int decision = p.decide[tau][j] ? 1 : 0;
        if (decision != i) {
          out.alpha[i] += w * prob;
        } else {
          const double err = theta - p.estimate[tau][i][j];
          out.mse[i] += w * prob * err * err;
        }
        out.asn_given[i] += w * prob * tau;
      }
    }
  }
  out.asn = prior[0] * out.asn_given[0] + prior[1] * out.asn_given[1];
  return out;
}

}  // namespace fixture
