#include "sjde/design.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sjde {

void ErrorConstraints::validate() const {
  for (int i = 0; i < 2; ++i) {
    if (!(alpha[i] > 0 && alpha[i] < 1)) throw std::invalid_argument("alpha constraints must lie in (0,1)");
    if (!(beta[i] > 0) || !std::isfinite(beta[i])) throw std::invalid_argument("beta constraints must lie in (0,inf)");
  }
}

void DesignSpec::validate() const {
  constraints.validate();
  grid.validate();
  grid.origin_index();
  if (horizon < 1) throw std::invalid_argument("horizon N must be >= 1");
  if (samples < 1) throw std::invalid_argument("n_samp must be >= 1");
  if (!(tolerance > 0)) throw std::invalid_argument("solver tolerance must be > 0");
  if (theta_bins < 1) throw std::invalid_argument("theta_bins must be >= 1");
}

NodeContext build_node_context(const DesignSpec& spec, const Model& m, const StateStats<double>& stats, int k,
                               int workers) {
  spec.validate();
  if (stats.horizon != spec.horizon) throw std::invalid_argument("state statistics horizon differs from design N");
  NodeContext ctx;
  ctx.node = k;
  ctx.posteriors = build_posterior_table(m, stats, k, spec.grid);
  ctx.transitions = build_transition_operator(stats, k, m, spec.grid, spec.samples, spec.seed, workers, spec.step_model);
  ctx.predictive = std::make_shared<GaussianConditionalTransitions>(stats, k, m, spec.grid, spec.theta_bins,
                                                                    StepModel::predictive);
  ctx.network =
      std::make_shared<GaussianConditionalTransitions>(stats, k, m, spec.grid, spec.theta_bins, StepModel::network);
  return ctx;
}

const ConditionalTransitions& NodeContext::kernels(StepModel m) const {
  const auto& p = m == StepModel::network ? network : predictive;
  if (!p) throw std::logic_error("node context has no " + to_string(m) + " kernels");
  return *p;
}

LpProblem assemble_lp(const DesignSpec& spec, const NodeContext& ctx) {
  spec.constraints.validate();
  const auto& post = ctx.posteriors;
  const StateGrid& grid = post.grid;
  const int horizon = post.horizon;
  if (ctx.transitions.horizon() != horizon) throw std::invalid_argument("transition operator horizon differs from N");
  if (grid.lower > 0 || grid.upper < 0)
    throw std::invalid_argument("the state grid must contain the initial state s_0 = 0; widen [grid_min, grid_max]");

  StageStructure st{horizon, grid.points, grid.origin_index(), spec.stop_at_start ? 0 : 1};
  const int points = st.points;
  LpProblem lp;
  lp.structure = st;
  const double inf = std::numeric_limits<double>::infinity();
  lp.objective = Eigen::VectorXd::Zero(st.variables());
  lp.lower = Eigen::VectorXd::Constant(st.variables(), -inf);
  lp.upper = Eigen::VectorXd::Constant(st.variables(), inf);
  lp.rhs = Eigen::VectorXd::Zero(st.rows());

  lp.objective[st.value_index(0, st.start)] = 1.0;
  const Eigen::Vector4d targets = spec.constraints.packed();
  const std::array<int, 4> hyp_of{0, 1, 0, 1};
  for (int c = 0; c < 4; ++c) {
    lp.objective[st.coefficient_index(c)] = -post.prior_prob[hyp_of[c]] * targets[c];
    lp.lower[st.coefficient_index(c)] = 0.0;
  }

  std::vector<Eigen::Triplet<double>> entries;
  std::size_t reserve = static_cast<std::size_t>(2 * (horizon + 1) * points * 3);
  for (const auto& t : ctx.transitions.steps) reserve += static_cast<std::size_t>(t.nonZeros() + points);
  entries.reserve(reserve);

  for (int n = st.first_stop; n <= horizon; ++n) {
    for (int j = 0; j < points; ++j) {
      for (int i = 0; i < 2; ++i) {
        const int row = st.stop_row(n, j, i);
        entries.emplace_back(row, st.value_index(n, j), 1.0);
        const Eigen::Vector4d basis = stopping_cost_basis(post, n, j, i);
        for (int c = 0; c < 4; ++c)
          if (basis[c] != 0.0) entries.emplace_back(row, st.coefficient_index(c), -basis[c]);
      }
    }
  }
  for (int n = 0; n < horizon; ++n) {
    const auto& t = ctx.transitions.steps[n];
    for (int j = 0; j < points; ++j) {
      const int row = st.continue_row(n, j);
      entries.emplace_back(row, st.value_index(n, j), 1.0);
      for (SparseRowMatrix::InnerIterator it(t, j); it; ++it)
        entries.emplace_back(row, st.value_index(n + 1, static_cast<int>(it.col())), -it.value());
      lp.rhs[row] = 1.0;
    }
  }
  lp.constraints.resize(st.rows(), st.variables());
  lp.constraints.setFromTriplets(entries.begin(), entries.end());
  lp.constraints.makeCompressed();
  return lp;
}

namespace {

// Blocks of a staged stopping LP, read back from its rows.
struct StagedBlocks {
  StageStructure st;
  std::vector<std::array<Eigen::ArrayXd, 2>> stop_const;                       // rhs of stop rows
  std::vector<std::array<Eigen::Matrix<double, Eigen::Dynamic, 4>, 2>> stop_basis;  // -coefficient entries
  std::vector<Eigen::ArrayXd> step_cost;
  std::vector<SparseRowMatrix> kernel;
  Eigen::VectorXd start_weight;  // objective weights on rho_0
  Eigen::Vector4d coefficient_cost;
  Eigen::Vector4d coefficient_lower;
  Eigen::Vector4d coefficient_upper;
};

[[noreturn]] void malformed(const std::string& what) {
  throw std::invalid_argument("LP does not have the staged stopping layout: " + what);
}

StagedBlocks extract_blocks(const LpProblem& lp) {
  lp.validate();
  if (!lp.structure) malformed("no stage structure attached");
  StagedBlocks blk;
  blk.st = *lp.structure;
  const auto& st = blk.st;
  const int horizon = st.horizon;
  const int points = st.points;
  const int first_coef = st.coefficient_index(0);

  if (st.first_stop < 0 || st.first_stop > 1) malformed("first stopping stage must be 0 or 1");
  const double inf = std::numeric_limits<double>::infinity();
  blk.stop_const.assign(horizon + 1, {Eigen::ArrayXd::Zero(points), Eigen::ArrayXd::Zero(points)});
  for (int n = 0; n < st.first_stop; ++n) blk.stop_const[n] = {Eigen::ArrayXd::Constant(points, inf),
                                                               Eigen::ArrayXd::Constant(points, inf)};
  blk.stop_basis.assign(horizon + 1, {Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(points, 4),
                                      Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(points, 4)});
  blk.step_cost.assign(horizon, Eigen::ArrayXd::Zero(points));

  for (int v = 0; v < first_coef; ++v) {
    if (std::isfinite(lp.lower[v]) || std::isfinite(lp.upper[v])) malformed("value variables must be free");
    if (lp.objective[v] != 0.0 && v >= points) malformed("objective may only weight rho_0");
  }
  blk.start_weight = lp.objective.head(points);
  if ((blk.start_weight.array() < 0).any()) malformed("negative objective weight on rho_0");
  for (int c = 0; c < 4; ++c) {
    blk.coefficient_cost[c] = lp.objective[first_coef + c];
    blk.coefficient_lower[c] = lp.lower[first_coef + c];
    blk.coefficient_upper[c] = lp.upper[first_coef + c];
    if (!std::isfinite(blk.coefficient_lower[c])) malformed("coefficients need a finite lower bound");
  }

  for (int n = st.first_stop; n <= horizon; ++n) {
    for (int j = 0; j < points; ++j) {
      for (int i = 0; i < 2; ++i) {
        const int row = st.stop_row(n, j, i);
        bool seen_value = false;
        for (SparseRowMatrix::InnerIterator it(lp.constraints, row); it; ++it) {
          const int col = static_cast<int>(it.col());
          if (col == st.value_index(n, j) && it.value() == 1.0) {
            seen_value = true;
          } else if (col >= first_coef) {
            blk.stop_basis[n][i](j, col - first_coef) = -it.value();
          } else {
            malformed("stop row touches another value variable");
          }
        }
        if (!seen_value) malformed("stop row without unit value entry");
        blk.stop_const[n][i][j] = lp.rhs[row];
      }
    }
  }
  blk.kernel.reserve(horizon);
  for (int n = 0; n < horizon; ++n) {
    std::vector<Eigen::Triplet<double>> entries;
    for (int j = 0; j < points; ++j) {
      const int row = st.continue_row(n, j);
      bool seen_value = false;
      for (SparseRowMatrix::InnerIterator it(lp.constraints, row); it; ++it) {
        const int col = static_cast<int>(it.col());
        if (col == st.value_index(n, j) && it.value() == 1.0) {
          seen_value = true;
        } else if (col >= st.value_index(n + 1, 0) && col < st.value_index(n + 1, 0) + points) {
          if (it.value() > 0.0) malformed("continuation kernel must be nonnegative");
          entries.emplace_back(j, col - st.value_index(n + 1, 0), -it.value());
        } else {
          malformed("continuation row touches a variable outside stages n, n+1");
        }
      }
      if (!seen_value) malformed("continuation row without unit value entry");
      blk.step_cost[n][j] = lp.rhs[row];
    }
    SparseRowMatrix t(points, points);
    t.setFromTriplets(entries.begin(), entries.end());
    blk.kernel.push_back(std::move(t));
  }
  return blk;
}

// Bellman solution for fixed coefficients plus the affine value of the
// resulting policy at every stage (constant + gradient . c).
struct BellmanPass {
  std::vector<Eigen::ArrayXd> value;
  double start_constant = 0;
  Eigen::Vector4d start_gradient = Eigen::Vector4d::Zero();
};

BellmanPass bellman(const StagedBlocks& blk, const Eigen::Vector4d& c) {
  const int horizon = blk.st.horizon;
  const int points = blk.st.points;
  BellmanPass out;
  out.value.resize(horizon + 1);
  Eigen::ArrayXd constant_next, constant(points);
  Eigen::Matrix<double, Eigen::Dynamic, 4> gradient_next, gradient(points, 4);
  for (int n = horizon; n >= 0; --n) {
    const Eigen::ArrayXd d0 = blk.stop_const[n][0] + (blk.stop_basis[n][0] * c).array();
    const Eigen::ArrayXd d1 = blk.stop_const[n][1] + (blk.stop_basis[n][1] * c).array();
    Eigen::ArrayXd v = d0.min(d1);
    if (n < horizon) {
      const Eigen::ArrayXd d = blk.step_cost[n] + (blk.kernel[n] * out.value[n + 1].matrix()).array();
      constant = blk.step_cost[n] + (blk.kernel[n] * constant_next.matrix()).array();
      gradient = blk.kernel[n] * gradient_next;
      for (int j = 0; j < points; ++j) {
        const double stop = std::min(d0[j], d1[j]);
        if (stop <= d[j]) {
          const int i = d0[j] <= d1[j] ? 0 : 1;
          constant[j] = blk.stop_const[n][i][j];
          gradient.row(j) = blk.stop_basis[n][i].row(j);
        }
      }
      v = v.min(d);
    } else {
      for (int j = 0; j < points; ++j) {
        const int i = d0[j] <= d1[j] ? 0 : 1;
        constant[j] = blk.stop_const[n][i][j];
        gradient.row(j) = blk.stop_basis[n][i].row(j);
      }
    }
    out.value[n] = std::move(v);
    constant_next.swap(constant);
    gradient_next.swap(gradient);
    constant.resize(points);
    gradient.resize(points, 4);
  }
  out.start_constant = blk.start_weight.dot(constant_next.matrix());
  out.start_gradient = gradient_next.transpose() * blk.start_weight;
  return out;
}

}  // namespace

LpSolution StagedStoppingSolver::solve(const LpProblem& lp) const {
  const StagedBlocks blk = extract_blocks(lp);
  const auto& st = blk.st;

  // Box for the coefficients. Without a user bound the box starts at a scale
  // where the coefficient cost alone exceeds the horizon and grows while the
  // optimum sits on its face.
  const double step_scale = std::max(1.0, blk.step_cost.empty() ? 1.0 : [&] {
    double s = 0;
    for (const auto& sc : blk.step_cost) s += sc.maxCoeff();
    return s;
  }());
  Eigen::Vector4d box_upper;
  std::array<bool, 4> user_bound{};
  for (int c = 0; c < 4; ++c) {
    user_bound[c] = std::isfinite(blk.coefficient_upper[c]);
    if (user_bound[c]) {
      box_upper[c] = blk.coefficient_upper[c];
    } else {
      const double cost = -blk.coefficient_cost[c];
      box_upper[c] = blk.coefficient_lower[c] + (cost > 0 ? 10.0 * step_scale / cost : 1e6);
    }
  }

  const Eigen::Vector4d initial_box = box_upper;
  constexpr double kMaxBoxGrowth = 1e6;

  struct Cut {
    double constant;
    Eigen::Vector4d gradient;
  };
  std::vector<Cut> cuts;
  const DenseSimplexSolver master_solver(1e-11);

  LpSolution sol;
  Eigen::Vector4d current = blk.coefficient_lower;
  Eigen::Vector4d best_point = current;
  double best = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();

  while (true) {
    const BellmanPass pass = bellman(blk, current);
    const double value = pass.start_constant + pass.start_gradient.dot(current) + blk.coefficient_cost.dot(current);
    if (value > best) {
      best = value;
      best_point = current;
    }
    cuts.push_back({pass.start_constant, pass.start_gradient});

    // Master: maximize t + cost.c over the cuts, in box-scaled coordinates.
    LpProblem master;
    const int rows = static_cast<int>(cuts.size());
    master.objective.resize(5);
    master.objective[0] = 1.0;
    for (int c = 0; c < 4; ++c) master.objective[c + 1] = blk.coefficient_cost[c] * box_upper[c];
    master.lower.resize(5);
    master.upper.resize(5);
    master.lower[0] = -std::numeric_limits<double>::infinity();
    master.upper[0] = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) {
      master.lower[c + 1] = blk.coefficient_lower[c] / box_upper[c];
      master.upper[c + 1] = 1.0;
    }
    std::vector<Eigen::Triplet<double>> entries;
    master.rhs.resize(rows);
    for (int r = 0; r < rows; ++r) {
      entries.emplace_back(r, 0, 1.0);
      for (int c = 0; c < 4; ++c)
        if (cuts[r].gradient[c] != 0.0) entries.emplace_back(r, c + 1, -cuts[r].gradient[c] * box_upper[c]);
      master.rhs[r] = cuts[r].constant;
    }
    master.constraints.resize(rows, 5);
    master.constraints.setFromTriplets(entries.begin(), entries.end());
    const LpSolution ms = master_solver.solve(master);
    if (ms.status != LpStatus::optimal) {
      sol.status = LpStatus::iteration_limit;
      sol.message = "cutting-plane master problem failed: " + to_string(ms.status) + " " + ms.message;
      break;
    }
    upper_bound = std::min(upper_bound, ms.objective);
    Eigen::Vector4d proposal;
    for (int c = 0; c < 4; ++c) proposal[c] = std::max(blk.coefficient_lower[c], ms.x[c + 1] * box_upper[c]);

    const double gap = upper_bound - best;
    if (gap <= tol_ * std::max(1.0, std::abs(best))) {
      bool grew = false;
      for (int c = 0; c < 4; ++c) {
        if (user_bound[c] || best_point[c] < box_upper[c] * (1.0 - 1e-6)) continue;
        box_upper[c] *= 16.0;
        grew = true;
        if (box_upper[c] > kMaxBoxGrowth * initial_box[c]) {
          sol.status = LpStatus::unbounded;
          sol.message = "coefficient " + std::to_string(c) + " diverges; constraints likely unattainable within N";
          sol.iterations = static_cast<int>(cuts.size());
          return sol;
        }
      }
      if (!grew) {
        sol.status = LpStatus::optimal;
        break;
      }
      upper_bound = std::numeric_limits<double>::infinity();
      continue;
    }
    if (static_cast<int>(cuts.size()) >= max_cuts_) {
      sol.status = LpStatus::iteration_limit;
      sol.message = "cut limit reached";
      break;
    }
    current = proposal;
  }

  const BellmanPass final_pass = bellman(blk, best_point);
  sol.x.resize(st.variables());
  for (int n = 0; n <= st.horizon; ++n)
    sol.x.segment(static_cast<Eigen::Index>(n) * st.points, st.points) = final_pass.value[n].matrix();
  sol.x.tail(4) = best_point;
  sol.objective = lp.objective.dot(sol.x);
  sol.bound = upper_bound;
  sol.iterations = static_cast<int>(cuts.size());
  if (sol.message.empty()) {
    std::ostringstream msg;
    msg << "gap " << (upper_bound - best);
    sol.message = msg.str();
  }
  return sol;
}

DesignResult solve_coefficients(const DesignSpec& spec, const NodeContext& ctx, const LpSolver& solver) {
  const LpProblem lp = assemble_lp(spec, ctx);
  const auto& st = *lp.structure;
  DesignResult out;
  out.lp = solver.solve(lp);
  if (out.lp.status != LpStatus::optimal) {
    std::ostringstream msg;
    msg << "node " << ctx.node << ": " << solver.name() << " returned " << to_string(out.lp.status) << " ("
        << out.lp.message << ") on an LP with " << lp.variables() << " variables, " << lp.rows() << " rows, "
        << lp.constraints.nonZeros() << " nonzeros after " << out.lp.iterations << " iterations";
    throw DesignError(msg.str());
  }
  Eigen::Vector4d packed;
  for (int c = 0; c < 4; ++c) packed[c] = std::max(0.0, out.lp.x[st.coefficient_index(c)]);
  out.coefficients = CostCoefficients::unpack(packed);
  out.policy = backward_induction(out.coefficients, ctx.transitions, ctx.posteriors, spec.stop_at_start);
  out.policy.node = ctx.node;

  out.lp_start_value = out.lp.x[st.value_index(0, st.start)];
  out.policy_start_value = out.policy.value[0][st.start];
  const double allowed = 10.0 * spec.tolerance * std::max(1.0, std::abs(out.policy_start_value));
  if (std::abs(out.lp_start_value - out.policy_start_value) > allowed) {
    std::ostringstream msg;
    msg << "node " << ctx.node << ": LP rho_0(s_0) = " << out.lp_start_value
        << " but backward induction gives " << out.policy_start_value;
    throw DesignError(msg.str());
  }

  const PolicyLinearization lin = linearize_policy(out.policy, ctx.transitions, ctx.posteriors);
  const std::array<int, 4> hyp_of{0, 1, 0, 1};
  for (int c = 0; c < 4; ++c)
    out.design_errors[c] = lin.gradient[0](st.start, c) / ctx.posteriors.prior_prob[hyp_of[c]];
  out.design_asn = lin.constant[0][st.start];
  return out;
}

DualAscentResult dual_ascent_fallback(const DesignSpec& spec, const NodeContext& ctx,
                                      const DualAscentOptions& options) {
  spec.validate();
  const ConditionalTransitions& kernels = ctx.kernels(options.evaluator);
  if (options.max_iterations < 1) throw std::invalid_argument("dual ascent needs at least one iteration");
  const Eigen::Vector4d targets = spec.constraints.packed();
  const std::array<int, 4> hyp_of{0, 1, 0, 1};
  Eigen::Vector4d scale;
  for (int c = 0; c < 4; ++c) scale[c] = spec.horizon / (ctx.posteriors.prior_prob[hyp_of[c]] * targets[c]);

  DualAscentResult out;
  Eigen::Vector4d z = Eigen::Vector4d::Zero();  // coefficients / scale
  Eigen::Vector4d step = Eigen::Vector4d::Constant(options.initial_step);
  Eigen::Vector4d last_sign = Eigen::Vector4d::Zero();
  double best_score = std::numeric_limits<double>::infinity();
  double best_overshoot = std::numeric_limits<double>::infinity();

  for (int it = 0; it < options.max_iterations; ++it) {
    const auto coeffs = CostCoefficients::unpack(z.cwiseProduct(scale));
    PolicyTable policy = backward_induction(coeffs, ctx.transitions, ctx.posteriors, spec.stop_at_start);
    policy.node = ctx.node;
    const GridEvaluation eval = evaluate_policy_on_grid(policy, kernels, ctx.posteriors.prior_prob, options.workers);
    const Eigen::Vector4d rel = (packed_errors(eval) - targets).cwiseQuotient(targets);

    // Smallest worst overshoot wins; ASN breaks ties among iterates within tolerance.
    const double overshoot = std::max(0.0, rel.maxCoeff() - options.tolerance);
    const double score = overshoot * (spec.horizon + 1) + eval.asn;
    out.trajectory.push_back({coeffs, eval, score});
    if (overshoot < best_overshoot || (overshoot == best_overshoot && score < best_score)) {
      best_overshoot = overshoot;
      best_score = score;
      out.coefficients = coeffs;
      out.policy = std::move(policy);
      out.evaluation = eval;
    }

    bool kkt = true;
    for (int c = 0; c < 4; ++c) {
      if (z[c] > 0 ? std::abs(rel[c]) > options.tolerance : rel[c] > options.tolerance) kkt = false;
    }
    if (kkt) {
      out.converged = true;
      out.coefficients = coeffs;
      out.evaluation = eval;
      out.policy = backward_induction(coeffs, ctx.transitions, ctx.posteriors, spec.stop_at_start);
      out.policy.node = ctx.node;
      break;
    }

    // Subgradient of the dual in coefficient c is P(H_i)(error - constraint);
    // normalised per coordinate, with a sign-adaptive step length.
    for (int c = 0; c < 4; ++c) {
      const double g = std::clamp(rel[c], -1.0, 1.0);
      const double sign = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
      if (sign != 0 && last_sign[c] != 0) step[c] *= sign == last_sign[c] ? 1.2 : 0.5;
      if (sign != 0) last_sign[c] = sign;
      z[c] = std::max(0.0, z[c] + step[c] * g);
    }
  }
  return out;
}

}  // namespace sjde
