#include "sjde/lp.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sjde {

void LpProblem::validate() const {
  const auto n = objective.size();
  if (constraints.cols() != n || constraints.rows() != rhs.size())
    throw std::invalid_argument("LP constraint matrix shape does not match objective/rhs");
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("LP bound vectors have the wrong length");
  if (structure && (structure->variables() != n || structure->rows() != rhs.size()))
    throw std::invalid_argument("LP stage structure does not match its dimensions");
}

double LpProblem::max_violation(const Eigen::VectorXd& x) const {
  double worst = 0.0;
  const Eigen::VectorXd ax = constraints * x;
  for (Eigen::Index r = 0; r < rhs.size(); ++r) worst = std::max(worst, ax[r] - rhs[r]);
  for (Eigen::Index v = 0; v < x.size(); ++v) worst = std::max({worst, lower[v] - x[v], x[v] - upper[v]});
  return worst;
}

std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

struct Tableau {
  Eigen::MatrixXd t;  // rows 0..m-1 constraints, row m objective; last column rhs
  std::vector<int> basis;
  std::vector<char> banned;

  int rows() const { return static_cast<int>(t.rows()) - 1; }
  int cols() const { return static_cast<int>(t.cols()) - 1; }

  void pivot(int r, int c) {
    t.row(r) /= t(r, c);
    for (int i = 0; i < t.rows(); ++i) {
      if (i == r) continue;
      const double f = t(i, c);
      if (f != 0.0) t.row(i) -= f * t.row(r);
    }
    basis[r] = c;
  }

  // Returns 0 optimal, 1 unbounded, 2 iteration limit.
  int run(double tol, int max_iterations, int& iterations) {
    const int m = rows();
    const int rhs = cols();
    int degenerate_run = 0;
    while (true) {
      if (iterations >= max_iterations) return 2;
      const bool bland = degenerate_run > 50;
      int enter = -1;
      double best = -tol;
      for (int j = 0; j < rhs; ++j) {
        if (banned[j]) continue;
        if (t(m, j) < best) {
          enter = j;
          best = t(m, j);
          if (bland) break;
        }
      }
      if (enter < 0) return 0;
      int leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r) {
        const double a = t(r, enter);
        if (a <= tol) continue;
        const double q = t(r, rhs) / a;
        if (q < ratio - 1e-12 || (q <= ratio + 1e-12 && leave >= 0 && basis[r] < basis[leave])) {
          ratio = q;
          leave = r;
        }
      }
      if (leave < 0) return 1;
      degenerate_run = ratio <= tol ? degenerate_run + 1 : 0;
      pivot(leave, enter);
      ++iterations;
    }
  }
};

}  // namespace

LpSolution DenseSimplexSolver::solve(const LpProblem& lp) const {
  lp.validate();
  const int n = lp.variables();
  const Eigen::MatrixXd a = Eigen::MatrixXd(lp.constraints);

  // x = shift + map * y with y >= 0.
  struct Column {
    int var;
    double sign;
  };
  std::vector<Column> columns;
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(n);
  std::vector<std::pair<int, double>> bound_rows;  // (y column, limit)
  LpSolution sol;
  for (int v = 0; v < n; ++v) {
    const double lo = lp.lower[v];
    const double hi = lp.upper[v];
    if (lo > hi) {
      sol.status = LpStatus::infeasible;
      sol.message = "variable bounds cross";
      return sol;
    }
    if (std::isfinite(lo)) {
      shift[v] = lo;
      columns.push_back({v, 1.0});
      if (std::isfinite(hi)) bound_rows.emplace_back(static_cast<int>(columns.size()) - 1, hi - lo);
    } else if (std::isfinite(hi)) {
      shift[v] = hi;
      columns.push_back({v, -1.0});
    } else {
      columns.push_back({v, 1.0});
      columns.push_back({v, -1.0});
    }
  }
  const int ny = static_cast<int>(columns.size());
  const int m = lp.rows() + static_cast<int>(bound_rows.size());

  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(m, ny);
  Eigen::VectorXd b(m);
  const Eigen::VectorXd b0 = lp.rhs - a * shift;
  for (int r = 0; r < lp.rows(); ++r) {
    for (int c = 0; c < ny; ++c) rows(r, c) = a(r, columns[c].var) * columns[c].sign;
    b[r] = b0[r];
  }
  for (std::size_t q = 0; q < bound_rows.size(); ++q) {
    rows(lp.rows() + static_cast<int>(q), bound_rows[q].first) = 1.0;
    b[lp.rows() + static_cast<int>(q)] = bound_rows[q].second;
  }
  Eigen::VectorXd cost(ny);
  for (int c = 0; c < ny; ++c) cost[c] = lp.objective[columns[c].var] * columns[c].sign;

  int artificial = 0;
  for (int r = 0; r < m; ++r)
    if (b[r] < 0) ++artificial;
  const int width = ny + m + artificial;
  if (static_cast<long>(m + 1) * (width + 1) > max_cells_) {
    sol.status = LpStatus::iteration_limit;
    sol.message = "problem too large for the dense tableau";
    return sol;
  }

  Tableau tab;
  tab.t = Eigen::MatrixXd::Zero(m + 1, width + 1);
  tab.basis.assign(m, -1);
  tab.banned.assign(width, 0);
  int next_art = ny + m;
  for (int r = 0; r < m; ++r) {
    const double sgn = b[r] < 0 ? -1.0 : 1.0;
    tab.t.row(r).head(ny) = sgn * rows.row(r);
    tab.t(r, ny + r) = sgn;
    tab.t(r, width) = sgn * b[r];
    if (b[r] < 0) {
      tab.t(r, next_art) = 1.0;
      tab.basis[r] = next_art++;
    } else {
      tab.basis[r] = ny + r;
    }
  }

  int iterations = 0;
  if (artificial > 0) {
    // Phase 1: maximize -sum(artificials).
    tab.t.row(m).setZero();
    for (int j = ny + m; j < width; ++j) tab.t(m, j) = 1.0;
    for (int r = 0; r < m; ++r)
      if (tab.basis[r] >= ny + m) tab.t.row(m) -= tab.t.row(r);
    const int code = tab.run(tol_, max_iterations_, iterations);
    if (code == 2) {
      sol.status = LpStatus::iteration_limit;
      sol.iterations = iterations;
      return sol;
    }
    if (tab.t(m, width) < -tol_ * std::max(1.0, b.cwiseAbs().maxCoeff())) {
      sol.status = LpStatus::infeasible;
      sol.iterations = iterations;
      sol.message = "phase one could not remove the artificial variables";
      return sol;
    }
    for (int r = 0; r < m; ++r) {
      if (tab.basis[r] < ny + m) continue;
      for (int j = 0; j < ny + m; ++j) {
        if (std::abs(tab.t(r, j)) > tol_) {
          tab.pivot(r, j);
          break;
        }
      }
    }
    for (int j = ny + m; j < width; ++j) tab.banned[j] = 1;
  }

  // Phase 2 objective row: c_B B^-1 A - c.
  tab.t.row(m).setZero();
  tab.t.row(m).head(ny) = -cost.transpose();
  for (int r = 0; r < m; ++r) {
    const int bj = tab.basis[r];
    if (bj < ny && cost[bj] != 0.0) tab.t.row(m) += cost[bj] * tab.t.row(r);
  }
  const int code = tab.run(tol_, max_iterations_, iterations);
  sol.iterations = iterations;
  if (code == 1) {
    sol.status = LpStatus::unbounded;
    sol.message = "objective unbounded above";
    return sol;
  }
  if (code == 2) {
    sol.status = LpStatus::iteration_limit;
    return sol;
  }

  Eigen::VectorXd y = Eigen::VectorXd::Zero(ny);
  for (int r = 0; r < m; ++r)
    if (tab.basis[r] < ny) y[tab.basis[r]] = tab.t(r, width);
  sol.x = shift;
  for (int c = 0; c < ny; ++c) sol.x[columns[c].var] += columns[c].sign * y[c];
  sol.status = LpStatus::optimal;
  sol.objective = lp.objective.dot(sol.x);
  sol.bound = sol.objective;
  return sol;
}

}  // namespace sjde
