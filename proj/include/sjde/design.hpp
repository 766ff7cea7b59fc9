#pragma once

#include "sjde/lp.hpp"
#include "sjde/model.hpp"
#include "sjde/network.hpp"
#include "sjde/policy.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

namespace sjde {

class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tolerated error levels: alpha_i in (0,1), beta_i in (0,inf).
struct ErrorConstraints {
  std::array<double, 2> alpha{1e-3, 1e-3};
  std::array<double, 2> beta{0.1, 0.1};

  void validate() const;
  /// (alpha_0, alpha_1, beta_0, beta_1): the constraint paired with each packed coefficient.
  Eigen::Vector4d packed() const { return {alpha[0], alpha[1], beta[0], beta[1]}; }
};

struct DesignSpec {
  ErrorConstraints constraints;
  int horizon = 50;
  StateGrid grid;
  int samples = 50000;  // posterior-predictive draws per grid point
  std::uint64_t seed = 1;
  double tolerance = 1e-9;  // relative optimality gap of the LP
  int theta_bins = 201;     // grid evaluator resolution
  bool stop_at_start = false;  // also emit stopping rows at n = 0
  StepModel step_model = StepModel::predictive;  // design kernel

  void validate() const;
};

/// Everything the per-node design needs: posteriors and the frozen design
/// kernel on the grid, plus the hypothesis-conditional kernels used to
/// evaluate candidate policies under either step model.
struct NodeContext {
  int node = 0;
  PosteriorTable posteriors;
  TransitionOperator transitions;
  std::shared_ptr<const ConditionalTransitions> predictive;
  std::shared_ptr<const ConditionalTransitions> network;

  const ConditionalTransitions& kernels(StepModel m) const;
};

NodeContext build_node_context(const DesignSpec& spec, const Model& m, const StateStats<double>& stats, int k,
                               int workers = 1);

/// The design LP over (rho_n(j), lambda, mu):
///   maximize  rho_0(j0) - sum_i P(H_i) (lambda_i alpha_i + mu_i beta_i)
///   s.t.      rho_n(j) <= D_{i,n}(j)                      for all n, j, i
///             rho_n(j) <= 1 + sum_j' T_n[j,j'] rho_{n+1}(j')  for n < N.
/// Variable and row order follow StageStructure.
LpProblem assemble_lp(const DesignSpec& spec, const NodeContext& ctx);

/// Exact solver for LPs with StageStructure. For fixed coefficients the
/// largest feasible rho is the Bellman solution (the kernels are nonnegative),
/// so the LP reduces to maximising a concave piecewise-linear function of the
/// four coefficients. That function is maximised by Kelley's cutting planes;
/// every cut is the affine value of one stopping policy.
class StagedStoppingSolver final : public LpSolver {
 public:
  explicit StagedStoppingSolver(double tolerance = 1e-9, int max_cuts = 5000)
      : tol_(tolerance), max_cuts_(max_cuts) {}
  std::string name() const override { return "staged-cutting-plane"; }
  LpSolution solve(const LpProblem& lp) const override;

 private:
  double tol_;
  int max_cuts_;
};

struct DesignResult {
  CostCoefficients coefficients;
  PolicyTable policy;
  LpSolution lp;
  double lp_start_value = 0;      // rho_0(j0) in the LP primal
  double policy_start_value = 0;  // rho_0(j0) from backward induction
  Eigen::Vector4d design_errors = Eigen::Vector4d::Zero();  // errors implied by the design kernel
  double design_asn = 0;
};

/// Solves the design LP and rebuilds the policy for the returned coefficients.
/// Throws DesignError on solver failure or if the LP and backward induction
/// disagree on rho_0(j0) by more than 10x the solver tolerance.
DesignResult solve_coefficients(const DesignSpec& spec, const NodeContext& ctx, const LpSolver& solver);

struct DualAscentOptions {
  int max_iterations = 40;
  double initial_step = 0.05;  // in units of the coefficient scale N / (P(H_i) * constraint)
  double tolerance = 0.01;     // relative error at which an active constraint counts as met
  StepModel evaluator = StepModel::predictive;
  int workers = 1;
};

struct DualAscentStep {
  CostCoefficients coefficients;
  GridEvaluation evaluation;
  double score = 0;
};

struct DualAscentResult {
  CostCoefficients coefficients;
  PolicyTable policy;
  GridEvaluation evaluation;
  std::vector<DualAscentStep> trajectory;
  bool converged = false;
};

/// Projected subgradient ascent on the coefficients using grid-evaluated errors.
/// Returns the iterate with the lowest ASN + N * (summed relative violation).
DualAscentResult dual_ascent_fallback(const DesignSpec& spec, const NodeContext& ctx, const DualAscentOptions& options);

/// (alpha_0, alpha_1, mse_0, mse_1) in packed order.
inline Eigen::Vector4d packed_errors(const GridEvaluation& e) { return {e.alpha[0], e.alpha[1], e.mse[0], e.mse[1]}; }

}  // namespace sjde
