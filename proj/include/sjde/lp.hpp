#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <limits>
#include <optional>
#include <string>

namespace sjde {

/// Index layout of a staged optimal-stopping LP (see design.hpp). Generic
/// solvers ignore it; structure-aware solvers use it to locate the blocks.
struct StageStructure {
  int horizon = 0;     // N
  int points = 0;      // M
  int start = 0;       // grid index of the initial state
  int first_stop = 1;  // earliest stage with stopping rows (0 or 1)

  int value_index(int n, int j) const { return n * points + j; }
  int coefficient_index(int c) const { return (horizon + 1) * points + c; }
  int stop_stages() const { return horizon + 1 - first_stop; }
  int stop_row(int n, int j, int i) const { return 2 * ((n - first_stop) * points + j) + i; }
  int continue_row(int n, int j) const { return 2 * stop_stages() * points + n * points + j; }
  int variables() const { return (horizon + 1) * points + 4; }
  int rows() const { return 2 * stop_stages() * points + horizon * points; }
};

/// maximize objective' x  subject to  constraints x <= rhs,  lower <= x <= upper.
/// Bounds may be infinite.
struct LpProblem {
  Eigen::VectorXd objective;
  Eigen::SparseMatrix<double, Eigen::RowMajor> constraints;
  Eigen::VectorXd rhs;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::optional<StageStructure> structure;

  int variables() const { return static_cast<int>(objective.size()); }
  int rows() const { return static_cast<int>(rhs.size()); }
  void validate() const;
  /// Largest violation of rows and bounds at x (0 if feasible).
  double max_violation(const Eigen::VectorXd& x) const;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::iteration_limit;
  Eigen::VectorXd x;
  double objective = -std::numeric_limits<double>::infinity();
  double bound = std::numeric_limits<double>::infinity();  // proven upper bound on the optimum
  int iterations = 0;
  std::string message;
};

class LpSolver {
 public:
  virtual ~LpSolver() = default;
  virtual std::string name() const = 0;
  virtual LpSolution solve(const LpProblem& lp) const = 0;
};

/// Two-phase tableau simplex (Dantzig pricing with a Bland fallback against
/// cycling). Dense, so only for small problems.
class DenseSimplexSolver final : public LpSolver {
 public:
  explicit DenseSimplexSolver(double tolerance = 1e-9, int max_iterations = 100000, long max_cells = 50'000'000)
      : tol_(tolerance), max_iterations_(max_iterations), max_cells_(max_cells) {}
  std::string name() const override { return "dense-simplex"; }
  LpSolution solve(const LpProblem& lp) const override;

 private:
  double tol_;
  int max_iterations_;
  long max_cells_;
};

}  // namespace sjde
