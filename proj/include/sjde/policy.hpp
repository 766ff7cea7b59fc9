#pragma once

#include "sjde/grid.hpp"
#include "sjde/model.hpp"
#include "sjde/network.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sjde {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Stop whenever g <= d + kStopTieTolerance.
inline constexpr double kStopTieTolerance = 1e-9;

/// Detection costs lambda_i and estimation costs mu_i. The packed order used
/// by linear forms and the LP is (lambda_0, lambda_1, mu_0, mu_1).
struct CostCoefficients {
  std::array<double, 2> lambda{0, 0};
  std::array<double, 2> mu{0, 0};

  void validate() const;
  Eigen::Vector4d packed() const { return {lambda[0], lambda[1], mu[0], mu[1]}; }
  static CostCoefficients unpack(const Eigen::Vector4d& v) { return {{v[0], v[1]}, {v[2], v[3]}}; }
};

/// Posterior quantities on the grid for every time n = 0..N of one node.
/// n = 0 is the data-free initial state, where the posterior is the prior.
struct PosteriorTable {
  int horizon = 0;
  StateGrid grid;
  std::array<double, 2> prior_prob{0.5, 0.5};
  std::vector<std::array<Eigen::ArrayXd, 2>> prob;  // P(H_i | s_j)
  std::vector<std::array<Eigen::ArrayXd, 2>> mean;  // E[theta_i | H_i, s_j]
  std::vector<std::array<Eigen::ArrayXd, 2>> var;   // Var[theta_i | H_i, s_j]

  /// Allocates zeroed tables; used for hand-built instances.
  static PosteriorTable zeros(int horizon, const StateGrid& grid, std::array<double, 2> prior_prob);
};

PosteriorTable build_posterior_table(const Model& m, const StateStats<double>& stats, int k, const StateGrid& grid);

/// Coefficient-linear form of D_{i,n}(s_j): D = basis . packed coefficients.
Eigen::Vector4d stopping_cost_basis(const PosteriorTable& post, int n, int j, int i);

/// D_{i,n}(s_j) = lambda_{1-i} P(H_{1-i}|s) + mu_i P(H_i|s) Var[theta_i | H_i, s].
double stopping_cost(const PosteriorTable& post, int n, int j, int i, const CostCoefficients& c);
Eigen::ArrayXd stopping_cost(const PosteriorTable& post, int n, int i, const CostCoefficients& c);

/// g_n = min(D_{0,n}, D_{1,n}).
Eigen::ArrayXd instantaneous_cost(const PosteriorTable& post, int n, const CostCoefficients& c);

/// Conditional law of one step s_n -> s_{n+1} given (H_i, theta).
///  predictive: the posterior-predictive model used for design, with the
///    neighbour term independent of s_n:
///    mean (n w s + (n(1-w) + 1) theta) / (n+1), var (n^2 var_nb(n) + var_inn) / (n+1)^2.
///  network: the Gaussian Markov step that reproduces the exact marginal
///    variances Sigma_n[k,k] and lag-one covariances of the network recursion:
///    mean theta + a_n (s - theta), a_n = n (W Sigma_n)[k,k] / ((n+1) Sigma_n[k,k]),
///    var Sigma_{n+1}[k,k] - a_n^2 Sigma_n[k,k].
/// The two coincide for a single node.
enum class StepModel { predictive, network };

std::string to_string(StepModel m);
StepModel parse_step_model(const std::string& s);

/// Slope on s and variance of the step n -> n+1; the mean is slope s + (1 - slope) theta.
struct StepLaw {
  double slope;
  double var;
};
StepLaw step_law(const StateStats<double>& stats, int k, int n, StepModel model);

/// Row-stochastic kernels T_n (n = 0..N-1) realising E[f(s_{n+1}) | s_n = s_j]
/// as (T_n f)[j].
struct TransitionOperator {
  std::vector<SparseRowMatrix> steps;

  int horizon() const { return static_cast<int>(steps.size()); }
  /// Largest |row sum - 1| and the smallest entry over all steps.
  std::pair<double, double> row_sum_error_and_min() const;
};

/// Adds `weight` split over the two grid points bracketing x (linear
/// interpolation weights); values outside the grid go to the boundary point.
inline void deposit(const StateGrid& grid, double x, double weight, double* row) {
  const auto [j, w] = grid.bracket(x);
  row[j] += (1.0 - w) * weight;
  row[j + 1] += w * weight;
}

/// One row of T_n by Monte Carlo: `draw()` returns (neighbour term,
/// innovation) pairs and each sample lands at (n w s + n s~ + v) / (n+1).
template <typename Draw>
Eigen::VectorXd monte_carlo_transition_row(const StateGrid& grid, int n, double self_weight, double s,
                                           int samples, Draw&& draw) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(grid.points);
  const double nn = n;
  for (int l = 0; l < samples; ++l) {
    const auto [neighbor, innovation] = draw();
    deposit(grid, (nn * self_weight * s + nn * neighbor + innovation) / (nn + 1.0), 1.0, row.data());
  }
  row /= row.sum();
  return row;
}

/// T_n for node k with `samples` posterior-predictive draws per grid point.
/// Grid point j uses the rng stream derived from (seed, k, n, j). With the
/// network step model the draw after (H, theta) is the next state itself.
SparseRowMatrix build_transition_step(const StateStats<double>& stats, int k, const Model& m, const StateGrid& grid,
                                      int n, int samples, std::uint64_t seed, int workers = 1,
                                      StepModel model = StepModel::predictive);

TransitionOperator build_transition_operator(const StateStats<double>& stats, int k, const Model& m,
                                             const StateGrid& grid, int samples, std::uint64_t seed,
                                             int workers = 1, StepModel model = StepModel::predictive);

/// Optimal stopping policy of one node for fixed cost coefficients.
struct PolicyTable {
  int node = 0;
  int horizon = 0;
  StateGrid grid;
  CostCoefficients coefficients;
  std::uint64_t fingerprint = 0;  // identifies (W, model, grid, N); 0 = unset
  std::vector<Eigen::ArrayXd> value;  // rho_n, n = 0..N
  std::vector<Mask> stop;             // Psi_n
  std::vector<Mask> decide;           // delta_n (true = H_1)
  std::vector<std::array<Eigen::ArrayXd, 2>> estimate;

  bool stops_at(int n, double x) const { return stop[n][grid.nearest(x)]; }
  int decision_at(int n, double x) const { return decide[n][grid.nearest(x)] ? 1 : 0; }
  double estimate_at(int i, int n, double x) const { return grid.interpolate(estimate[n][i], x); }
};

/// rho_N = g; rho_n = min(g, 1 + T_n rho_{n+1}); masks and estimators follow.
/// Unless `stop_at_start`, stage 0 has no stopping option: rho_0 = 1 + T_0 rho_1.
PolicyTable backward_induction(const CostCoefficients& c, const TransitionOperator& transitions,
                               const PosteriorTable& post, bool stop_at_start = false);

/// Value of a fixed policy (its masks) under the design kernel as an affine
/// function of the packed coefficients: value_n = constant_n + gradient_n * c.
/// At the start state, constant = expected stopping time and gradient[m] =
/// P(H_i) * (the policy's error for the coefficient's constraint).
struct PolicyLinearization {
  std::vector<Eigen::ArrayXd> constant;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 4>> gradient;
};

PolicyLinearization linearize_policy(const PolicyTable& policy, const TransitionOperator& transitions,
                                     const PosteriorTable& post);

/// Discretised prior of theta under one hypothesis: `count` equal-width bins
/// on mean +- half_width * sd, weights are the prior mass per bin (normalised).
struct ThetaBins {
  Eigen::ArrayXd value;
  Eigen::ArrayXd weight;
};

ThetaBins prior_theta_bins(double mean, double sd, int count = 201, double half_width = 6.0);

/// Hypothesis- and parameter-conditional state kernels for grid evaluation.
class ConditionalTransitions {
 public:
  virtual ~ConditionalTransitions() = default;
  virtual int horizon() const = 0;
  virtual const StateGrid& grid() const = 0;
  virtual const ThetaBins& bins(int hypothesis) const = 0;
  /// out = T^T in for the step n -> n+1 under (hypothesis, theta bin b).
  virtual void propagate(int hypothesis, int bin, int n, const Eigen::VectorXd& in, Eigen::VectorXd& out) const = 0;
};

/// Kernels given explicitly as matrices [hypothesis][bin][n].
class MatrixConditionalTransitions final : public ConditionalTransitions {
 public:
  MatrixConditionalTransitions(StateGrid grid, std::array<ThetaBins, 2> bins,
                               std::array<std::vector<std::vector<Eigen::MatrixXd>>, 2> kernels);
  int horizon() const override { return horizon_; }
  const StateGrid& grid() const override { return grid_; }
  const ThetaBins& bins(int i) const override { return bins_[i]; }
  void propagate(int i, int b, int n, const Eigen::VectorXd& in, Eigen::VectorXd& out) const override;

 private:
  StateGrid grid_;
  std::array<ThetaBins, 2> bins_;
  std::array<std::vector<std::vector<Eigen::MatrixXd>>, 2> kernels_;
  int horizon_;
};

/// E[deposition weights] of X ~ N(mean, sd^2) under the clamped
/// linear-interpolation scheme, scaled by `mass` and added to `out`.
void add_expected_deposition(const StateGrid& grid, double mean, double sd, double mass, Eigen::VectorXd& out);

/// Gaussian step kernels on the grid. Each step deposits the conditional mean
/// onto the grid by linear interpolation and then convolves with a
/// discretised Gaussian whose variance is reduced by h^2/3, the average
/// variance both stages add. Mass leaving the grid is clamped to the
/// boundary points.
class GaussianConditionalTransitions final : public ConditionalTransitions {
 public:
  GaussianConditionalTransitions(const StateStats<double>& stats, int k, const Model& m, StateGrid grid,
                                 int theta_bins = 201, StepModel model = StepModel::predictive);
  int horizon() const override { return horizon_; }
  const StateGrid& grid() const override { return grid_; }
  const ThetaBins& bins(int i) const override { return bins_[i]; }
  void propagate(int i, int b, int n, const Eigen::VectorXd& in, Eigen::VectorXd& out) const override;

  struct Kernel {
    int half_width = 0;
    Eigen::VectorXd weight;  // offsets -half_width..half_width, sums to 1
    Eigen::VectorXd prefix;  // running sums from the left
    Eigen::VectorXd suffix;  // running sums from the right
  };
  static Kernel smoothing_kernel(double var, double spacing);

 private:
  StateGrid grid_;
  std::array<ThetaBins, 2> bins_;
  int horizon_;
  std::vector<double> slope_;    // per n
  std::vector<Kernel> kernels_;  // per n
  Eigen::ArrayXd points_;
};

struct GridEvaluation {
  std::array<double, 2> alpha{0, 0};  // P(decide != i | H_i)
  std::array<double, 2> mse{0, 0};    // E[1{decide = i} (theta - est)^2 | H_i]
  std::array<double, 2> asn_given{0, 0};
  double asn = 0;
  double residual_mass = 0;  // mass never stopped; 0 when Psi_N = 1
};

/// Deterministic forward evaluation of a policy: starts every (H_i, theta bin)
/// chain at the grid point of s_0 = 0, stops mass where Psi_n = 1 (n >= 1).
GridEvaluation evaluate_policy_on_grid(const PolicyTable& policy, const ConditionalTransitions& kernels,
                                       const std::array<double, 2>& prior_prob, int workers = 1);

}  // namespace sjde
