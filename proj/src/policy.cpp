#include "sjde/policy.hpp"

#include "sjde/parallel.hpp"
#include "sjde/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sjde {

namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t * std::numbers::sqrt2 / 2.0); }
double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }

void check_stage(const PosteriorTable& post, int n) {
  if (n < 0 || n > post.horizon) throw std::out_of_range("time index outside 0..N");
}

}  // namespace

std::string to_string(StepModel m) { return m == StepModel::network ? "network" : "predictive"; }

StepModel parse_step_model(const std::string& s) {
  if (s == "network") return StepModel::network;
  if (s == "predictive") return StepModel::predictive;
  throw std::invalid_argument("unknown step model '" + s + "' (expected predictive or network)");
}

void CostCoefficients::validate() const {
  for (double v : {lambda[0], lambda[1], mu[0], mu[1]})
    if (!(v >= 0) || !std::isfinite(v)) throw std::invalid_argument("cost coefficients must be finite and >= 0");
}

PosteriorTable PosteriorTable::zeros(int horizon, const StateGrid& grid, std::array<double, 2> prior_prob) {
  PosteriorTable t;
  t.horizon = horizon;
  t.grid = grid;
  t.prior_prob = prior_prob;
  const Eigen::ArrayXd z = Eigen::ArrayXd::Zero(grid.points);
  t.prob.assign(horizon + 1, {z, z});
  t.mean.assign(horizon + 1, {z, z});
  t.var.assign(horizon + 1, {z, z});
  return t;
}

PosteriorTable build_posterior_table(const Model& m, const StateStats<double>& stats, int k, const StateGrid& grid) {
  m.validate();
  grid.validate();
  if (k < 0 || k >= stats.nodes()) throw std::out_of_range("node index out of range");
  PosteriorTable t = PosteriorTable::zeros(stats.horizon, grid, m.prior_prob);
  for (int n = 0; n <= stats.horizon; ++n) {
    const double state_var = n == 0 ? std::numeric_limits<double>::infinity() : stats.state_var(k, n);
    for (int j = 0; j < grid.points; ++j) {
      const double s = grid[j];
      const auto p = hypothesis_posterior(s, state_var, m);
      for (int i = 0; i < 2; ++i) {
        const auto th = theta_posterior(s, state_var, m, i);
        t.prob[n][i][j] = p[i];
        t.mean[n][i][j] = th.mean;
        t.var[n][i][j] = th.var;
      }
    }
  }
  return t;
}

Eigen::Vector4d stopping_cost_basis(const PosteriorTable& post, int n, int j, int i) {
  check_stage(post, n);
  const double p0 = post.prob[n][0][j];
  const double p1 = post.prob[n][1][j];
  if (i == 0) return {0.0, p1, p0 * post.var[n][0][j], 0.0};
  return {p0, 0.0, 0.0, p1 * post.var[n][1][j]};
}

double stopping_cost(const PosteriorTable& post, int n, int j, int i, const CostCoefficients& c) {
  return stopping_cost_basis(post, n, j, i).dot(c.packed());
}

Eigen::ArrayXd stopping_cost(const PosteriorTable& post, int n, int i, const CostCoefficients& c) {
  check_stage(post, n);
  const auto& p = post.prob[n];
  if (i == 0) return c.lambda[1] * p[1] + c.mu[0] * p[0] * post.var[n][0];
  return c.lambda[0] * p[0] + c.mu[1] * p[1] * post.var[n][1];
}

Eigen::ArrayXd instantaneous_cost(const PosteriorTable& post, int n, const CostCoefficients& c) {
  return stopping_cost(post, n, 0, c).min(stopping_cost(post, n, 1, c));
}

std::pair<double, double> TransitionOperator::row_sum_error_and_min() const {
  double worst = 0.0;
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& t : steps) {
    const Eigen::VectorXd sums = t * Eigen::VectorXd::Ones(t.cols());
    worst = std::max(worst, (sums.array() - 1.0).abs().maxCoeff());
    for (Eigen::Index r = 0; r < t.outerSize(); ++r)
      for (SparseRowMatrix::InnerIterator it(t, r); it; ++it) smallest = std::min(smallest, it.value());
  }
  return {worst, smallest};
}

StepLaw step_law(const StateStats<double>& stats, int k, int n, StepModel model) {
  if (k < 0 || k >= stats.nodes()) throw std::out_of_range("node index out of range");
  if (n < 0 || n >= stats.horizon) throw std::out_of_range("step needs 0 <= n < N");
  const double nn = n;
  if (model == StepModel::predictive) {
    return {nn * stats.self_weight(k) / (nn + 1.0),
            (nn * nn * stats.neighbor_var(k, n) + stats.innovation_var(k)) / ((nn + 1.0) * (nn + 1.0))};
  }
  if (n == 0) return {0.0, stats.state_var(k, 1)};
  const double cross = stats.weights.row(k).dot(stats.covariance[n].col(k));
  const double slope = nn / (nn + 1.0) * cross / stats.state_var(k, n);
  return {slope, std::max(0.0, stats.state_var(k, n + 1) - slope * slope * stats.state_var(k, n))};
}

SparseRowMatrix build_transition_step(const StateStats<double>& stats, int k, const Model& m, const StateGrid& grid,
                                      int n, int samples, std::uint64_t seed, int workers, StepModel model) {
  if (n < 0 || n >= stats.horizon) throw std::out_of_range("transition step needs 0 <= n < N");
  if (samples < 1) throw std::invalid_argument("n_samp must be >= 1");
  const double state_var = n == 0 ? std::numeric_limits<double>::infinity() : stats.state_var(k, n);
  const PredictiveVariances vars{stats.neighbor_var(k, n), stats.innovation_var(k)};
  const double w_kk = stats.self_weight(k);
  const StepLaw law = step_law(stats, k, n, model);
  const double step_sd = std::sqrt(law.var);

  std::vector<std::vector<Eigen::Triplet<double>>> rows(grid.points);
  parallel_for(static_cast<std::size_t>(grid.points), workers, [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const double s = grid[j];
    const PredictiveSampler sampler(s, state_var, w_kk, vars, m);
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n),
                                 static_cast<std::uint64_t>(j)});
    std::normal_distribution<double> normal;
    Eigen::VectorXd row;
    if (model == StepModel::predictive) {
      row = monte_carlo_transition_row(grid, n, w_kk, s, samples, [&] {
        const auto d = sampler(rng, normal);
        return std::pair{d.neighbor, d.innovation};
      });
    } else {
      row = Eigen::VectorXd::Zero(grid.points);
      for (int l = 0; l < samples; ++l) {
        const auto d = sampler(rng, normal);
        deposit(grid, law.slope * s + (1.0 - law.slope) * d.theta + step_sd * normal(rng), 1.0, row.data());
      }
      row /= row.sum();
    }
    for (int c = 0; c < grid.points; ++c)
      if (row[c] != 0.0) rows[j].emplace_back(j, c, row[c]);
  });

  std::vector<Eigen::Triplet<double>> all;
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  all.reserve(total);
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  SparseRowMatrix t(grid.points, grid.points);
  t.setFromTriplets(all.begin(), all.end());
  t.makeCompressed();
  return t;
}

TransitionOperator build_transition_operator(const StateStats<double>& stats, int k, const Model& m,
                                             const StateGrid& grid, int samples, std::uint64_t seed, int workers,
                                             StepModel model) {
  TransitionOperator op;
  op.steps.reserve(stats.horizon);
  for (int n = 0; n < stats.horizon; ++n)
    op.steps.push_back(build_transition_step(stats, k, m, grid, n, samples, seed, workers, model));
  return op;
}

PolicyTable backward_induction(const CostCoefficients& c, const TransitionOperator& transitions,
                               const PosteriorTable& post, bool stop_at_start) {
  c.validate();
  const int horizon = post.horizon;
  if (transitions.horizon() != horizon) throw std::invalid_argument("transition operator horizon differs from N");
  const int points = post.grid.points;

  PolicyTable p;
  p.horizon = horizon;
  p.grid = post.grid;
  p.coefficients = c;
  p.value.resize(horizon + 1);
  p.stop.resize(horizon + 1);
  p.decide.resize(horizon + 1);
  p.estimate.resize(horizon + 1);

  for (int n = horizon; n >= 0; --n) {
    const Eigen::ArrayXd d0 = stopping_cost(post, n, 0, c);
    const Eigen::ArrayXd d1 = stopping_cost(post, n, 1, c);
    const Eigen::ArrayXd g = d0.min(d1);
    if (n == horizon) {
      p.value[n] = g;
      p.stop[n] = Mask::Constant(points, true);
    } else {
      const Eigen::ArrayXd d = 1.0 + (transitions.steps[n] * p.value[n + 1].matrix()).array();
      if (n == 0 && !stop_at_start) {
        p.stop[n] = Mask::Constant(points, false);
        p.value[n] = d;
      } else {
        p.stop[n] = g <= d + kStopTieTolerance;
        p.value[n] = g.min(d);
      }
    }
    p.decide[n] = d0 > d1;
    p.estimate[n] = {post.mean[n][0], post.mean[n][1]};
  }
  return p;
}

PolicyLinearization linearize_policy(const PolicyTable& policy, const TransitionOperator& transitions,
                                     const PosteriorTable& post) {
  const int horizon = policy.horizon;
  const int points = policy.grid.points;
  PolicyLinearization lin;
  lin.constant.resize(horizon + 1);
  lin.gradient.resize(horizon + 1);
  for (int n = horizon; n >= 0; --n) {
    Eigen::ArrayXd constant(points);
    Eigen::Matrix<double, Eigen::Dynamic, 4> gradient(points, 4);
    if (n < horizon) {
      constant = 1.0 + (transitions.steps[n] * lin.constant[n + 1].matrix()).array();
      gradient = transitions.steps[n] * lin.gradient[n + 1];
    }
    for (int j = 0; j < points; ++j) {
      if (!policy.stop[n][j]) continue;
      constant[j] = 0.0;
      gradient.row(j) = stopping_cost_basis(post, n, j, policy.decide[n][j] ? 1 : 0).transpose();
    }
    lin.constant[n] = std::move(constant);
    lin.gradient[n] = std::move(gradient);
  }
  return lin;
}

ThetaBins prior_theta_bins(double mean, double sd, int count, double half_width) {
  if (count < 1 || !(sd > 0) || !(half_width > 0)) throw std::invalid_argument("invalid theta discretisation");
  ThetaBins bins{Eigen::ArrayXd(count), Eigen::ArrayXd(count)};
  const double lo = -half_width;
  const double width = 2.0 * half_width / count;
  for (int b = 0; b < count; ++b) {
    const double a = lo + b * width;
    bins.value[b] = mean + sd * (a + 0.5 * width);
    bins.weight[b] = normal_cdf(a + width) - normal_cdf(a);
  }
  bins.weight /= bins.weight.sum();
  return bins;
}

MatrixConditionalTransitions::MatrixConditionalTransitions(
    StateGrid grid, std::array<ThetaBins, 2> bins, std::array<std::vector<std::vector<Eigen::MatrixXd>>, 2> kernels)
    : grid_(grid), bins_(std::move(bins)), kernels_(std::move(kernels)) {
  horizon_ = kernels_[0].empty() ? 0 : static_cast<int>(kernels_[0][0].size());
  for (int i = 0; i < 2; ++i) {
    if (static_cast<Eigen::Index>(kernels_[i].size()) != bins_[i].value.size())
      throw std::invalid_argument("one kernel sequence per theta bin is required");
    for (const auto& seq : kernels_[i])
      if (static_cast<int>(seq.size()) != horizon_) throw std::invalid_argument("kernel sequences differ in length");
  }
}

void MatrixConditionalTransitions::propagate(int i, int b, int n, const Eigen::VectorXd& in,
                                             Eigen::VectorXd& out) const {
  out = kernels_[i][b][n].transpose() * in;
}

void add_expected_deposition(const StateGrid& grid, double mean, double sd, double mass, Eigen::VectorXd& out) {
  if (!(sd > 0)) {
    deposit(grid, mean, mass, out.data());
    return;
  }
  // With L(y) = E[(y - X)_+], the expected hat weight of an interior point is the
  // second difference of L; the clamped boundary points are first differences.
  constexpr double cut = 9.0;
  const int last = grid.points - 1;
  const double h = grid.spacing();
  auto ramp = [&](int j) {
    const double d = grid[j] - mean;
    const double t = d / sd;
    if (t > cut) return d;
    if (t < -cut) return 0.0;
    return d * normal_cdf(t) + sd * normal_pdf(t);
  };
  const int lo = std::clamp(static_cast<int>(std::floor((mean - cut * sd - grid.lower) / h)) - 1, 0, last);
  const int hi = std::clamp(static_cast<int>(std::ceil((mean + cut * sd - grid.lower) / h)) + 1, 0, last);

  out[0] += mass * std::max(0.0, (ramp(1) - ramp(0)) / h);
  out[last] += mass * std::max(0.0, 1.0 + (ramp(last - 1) - ramp(last)) / h);
  const int first = std::max(1, lo);
  const int stop = std::min(last - 1, hi);
  if (first > stop) return;
  double left = ramp(first - 1);
  double centre = ramp(first);
  for (int j = first; j <= stop; ++j) {
    const double right = ramp(j + 1);
    out[j] += mass * std::max(0.0, (right - 2.0 * centre + left) / h);
    left = centre;
    centre = right;
  }
}

GaussianConditionalTransitions::GaussianConditionalTransitions(const StateStats<double>& stats, int k, const Model& m,
                                                               StateGrid grid, int theta_bins, StepModel model)
    : grid_(grid),
      bins_{prior_theta_bins(m.prior_mean[0], m.prior_std[0], theta_bins),
            prior_theta_bins(m.prior_mean[1], m.prior_std[1], theta_bins)},
      horizon_(stats.horizon),
      points_(grid.values()) {
  grid_.validate();
  if (k < 0 || k >= stats.nodes()) throw std::out_of_range("node index out of range");
  const double h = grid_.spacing();
  slope_.resize(horizon_);
  kernels_.resize(horizon_);
  for (int n = 0; n < horizon_; ++n) {
    const StepLaw law = step_law(stats, k, n, model);
    slope_[n] = law.slope;
    kernels_[n] = smoothing_kernel(law.var, h);
  }
}

GaussianConditionalTransitions::Kernel GaussianConditionalTransitions::smoothing_kernel(double var, double h) {
  // Both stages add about h^2/6 of variance on average.
  const double s2 = var - h * h / 3.0;
  Kernel kern;
  if (!(s2 > 0)) {
    kern.half_width = 0;
    kern.weight = Eigen::VectorXd::Ones(1);
  } else {
    const double s = std::sqrt(s2);
    kern.half_width = static_cast<int>(std::ceil(9.0 * s / h)) + 1;
    const int width = 2 * kern.half_width + 1;
    auto ramp = [&](int q) {
      const double t = q * h / s;
      return t * normal_cdf(t) + normal_pdf(t);
    };
    kern.weight.resize(width);
    for (int q = -kern.half_width; q <= kern.half_width; ++q)
      kern.weight[q + kern.half_width] = std::max(0.0, (s / h) * (ramp(q + 1) - 2.0 * ramp(q) + ramp(q - 1)));
    kern.weight /= kern.weight.sum();
  }
  const int width = static_cast<int>(kern.weight.size());
  kern.prefix.resize(width);
  kern.suffix.resize(width);
  double acc = 0;
  for (int q = 0; q < width; ++q) kern.prefix[q] = acc += kern.weight[q];
  acc = 0;
  for (int q = width - 1; q >= 0; --q) kern.suffix[q] = acc += kern.weight[q];
  return kern;
}

void GaussianConditionalTransitions::propagate(int i, int b, int n, const Eigen::VectorXd& in,
                                               Eigen::VectorXd& out) const {
  const int points = grid_.points;
  const int last = points - 1;
  const double theta = bins_[i].value[b];
  const double slope = slope_[n];
  const double shift = (1.0 - slope) * theta;

  // Stage 1: move the mass of every grid point to its conditional mean.
  Eigen::VectorXd moved = Eigen::VectorXd::Zero(points);
  for (int j = 0; j < points; ++j)
    if (in[j] != 0.0) deposit(grid_, slope * points_[j] + shift, in[j], moved.data());

  // Stage 2: spread with the discretised Gaussian, clamping at the ends.
  const Kernel& kern = kernels_[n];
  const int w = kern.half_width;
  out.setZero(points);
  for (int j = 0; j < points; ++j) {
    const double mass = moved[j];
    if (mass == 0.0) continue;
    const int from = std::max(-w, 1 - j);
    const int to = std::min(w, last - 1 - j);
    if (-j >= -w) out[0] += mass * kern.prefix[std::min(w, -j) + w];
    if (last - j <= w) out[last] += mass * kern.suffix[std::max(-w, last - j) + w];
    if (from <= to) out.segment(j + from, to - from + 1) += mass * kern.weight.segment(from + w, to - from + 1);
  }
}

GridEvaluation evaluate_policy_on_grid(const PolicyTable& policy, const ConditionalTransitions& kernels,
                                       const std::array<double, 2>& prior_prob, int workers) {
  if (kernels.horizon() != policy.horizon) throw std::invalid_argument("kernel horizon differs from policy horizon");
  if (!(kernels.grid() == policy.grid)) throw std::invalid_argument("kernel grid differs from policy grid");
  const int horizon = policy.horizon;
  const int points = policy.grid.points;
  const int start = policy.grid.origin_index();

  struct Chain {
    double wrong = 0, sq_error = 0, time = 0, residual = 0;
  };
  const auto bins0 = static_cast<std::size_t>(kernels.bins(0).value.size());
  const auto bins1 = static_cast<std::size_t>(kernels.bins(1).value.size());
  std::vector<Chain> chains(bins0 + bins1);

  parallel_for(chains.size(), workers, [&](std::size_t idx) {
    const int i = idx < bins0 ? 0 : 1;
    const int b = static_cast<int>(idx < bins0 ? idx : idx - bins0);
    const double theta = kernels.bins(i).value[b];
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(points);
    Eigen::VectorXd next(points);
    mass[start] = 1.0;
    Chain& c = chains[idx];
    for (int n = 0; n < horizon; ++n) {
      kernels.propagate(i, b, n, mass, next);
      const int t = n + 1;
      for (int j = 0; j < points; ++j) {
        if (!policy.stop[t][j] || next[j] == 0.0) continue;
        const double m = next[j];
        const int decision = policy.decide[t][j] ? 1 : 0;
        if (decision != i) {
          c.wrong += m;
        } else {
          const double e = theta - policy.estimate[t][i][j];
          c.sq_error += m * e * e;
        }
        c.time += m * t;
        next[j] = 0.0;
      }
      mass.swap(next);
    }
    c.residual = mass.sum();
  });

  GridEvaluation out;
  for (std::size_t idx = 0; idx < chains.size(); ++idx) {
    const int i = idx < bins0 ? 0 : 1;
    const int b = static_cast<int>(idx < bins0 ? idx : idx - bins0);
    const double w = kernels.bins(i).weight[b];
    out.alpha[i] += w * chains[idx].wrong;
    out.mse[i] += w * chains[idx].sq_error;
    out.asn_given[i] += w * chains[idx].time;
    out.residual_mass += prior_prob[i] * w * chains[idx].residual;
  }
  out.asn = prior_prob[0] * out.asn_given[0] + prior_prob[1] * out.asn_given[1];
  return out;
}

}  // namespace sjde
