#include "sjde/simulate.hpp"

#include "sjde/parallel.hpp"
#include "sjde/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace sjde {

namespace {

void check_inputs(const std::vector<PolicyTable>& policies, const Eigen::MatrixXd& weights, const Model& m) {
  m.validate();
  const auto nodes = static_cast<Eigen::Index>(policies.size());
  if (nodes == 0) throw std::invalid_argument("no policies given");
  if (weights.rows() != nodes || weights.cols() != nodes)
    throw std::invalid_argument("weight matrix size differs from the number of policies");
  if (!is_row_stochastic(weights, 1e-12)) throw std::invalid_argument("weight matrix is not row stochastic");
  for (std::size_t k = 0; k < policies.size(); ++k) {
    const auto& p = policies[k];
    if (p.horizon != policies[0].horizon) throw std::invalid_argument("policies disagree on the horizon N");
    if (p.horizon < 1 || static_cast<int>(p.stop.size()) != p.horizon + 1)
      throw std::invalid_argument("policy " + std::to_string(k) + " is incomplete");
  }
}

}  // namespace

TrialRecord run_trial(const std::vector<PolicyTable>& policies, const Eigen::MatrixXd& weights, const Model& m,
                      Rng& rng, std::uint64_t id, const TrialOptions& options) {
  const int nodes = static_cast<int>(policies.size());
  const int horizon = policies.front().horizon;
  TrialRecord rec;
  rec.id = id;
  rec.nodes.assign(nodes, NodeOutcome{});
  rec.selected_node = std::uniform_int_distribution<int>(0, nodes - 1)(rng);
  rec.hypothesis = std::generate_canonical<double, 53>(rng) < m.prior_prob[1] ? 1 : 0;
  std::normal_distribution<double> normal;
  rec.theta = m.prior_mean[rec.hypothesis] + m.prior_std[rec.hypothesis] * normal(rng);

  Eigen::VectorXd s = Eigen::VectorXd::Zero(nodes);
  Eigen::VectorXd x(nodes);
  int running = nodes;
  for (int n = 1; n <= horizon; ++n) {
    for (int k = 0; k < nodes; ++k) x[k] = rec.theta + m.sigma * normal(rng);
    const double nn = n;
    s = weights * (((nn - 1.0) / nn) * s + x / nn);
    if (running == 0) continue;
    for (int k = 0; k < nodes; ++k) {
      NodeOutcome& o = rec.nodes[k];
      if (o.stop_time != 0) continue;
      if (n < horizon && (options.never_stop_early || !policies[k].stops_at(n, s[k]))) continue;
      o.stop_time = n;
      o.decision = policies[k].decision_at(n, s[k]);
      o.estimate = policies[k].estimate_at(o.decision, n, s[k]);
      const double e = rec.theta - o.estimate;
      o.squared_error = e * e;
      --running;
    }
  }
  rec.final_state = s;
  return rec;
}

void MetricSums::add(int hypothesis, const NodeOutcome& o) {
  const int i = hypothesis;
  trials[i] += 1.0;
  if (o.decision != i) {
    wrong[i] += 1.0;
  } else {
    loss[i] += o.squared_error;
    loss_sq[i] += o.squared_error * o.squared_error;
  }
  time += o.stop_time;
  time_sq += static_cast<double>(o.stop_time) * o.stop_time;
}

void MetricSums::merge(const MetricSums& other) {
  for (int i = 0; i < 2; ++i) {
    trials[i] += other.trials[i];
    wrong[i] += other.wrong[i];
    loss[i] += other.loss[i];
    loss_sq[i] += other.loss_sq[i];
  }
  time += other.time;
  time_sq += other.time_sq;
}

Metrics MetricSums::finish() const {
  Metrics out;
  for (int i = 0; i < 2; ++i) {
    const double count = trials[i];
    if (count == 0) continue;
    out.alpha[i] = wrong[i] / count;
    out.mse[i] = loss[i] / count;
    out.alpha_se[i] = std::sqrt(out.alpha[i] * (1.0 - out.alpha[i]) / count);
    const double second = loss_sq[i] / count;
    out.mse_se[i] = std::sqrt(std::max(0.0, second - out.mse[i] * out.mse[i]) / count);
  }
  const double total = trials[0] + trials[1];
  if (total > 0) {
    out.asn = time / total;
    out.asn_se = std::sqrt(std::max(0.0, time_sq / total - out.asn * out.asn) / total);
  }
  return out;
}

SimulationSummary monte_carlo(const std::vector<PolicyTable>& policies, const Eigen::MatrixXd& weights,
                              const Model& m, std::uint64_t runs, std::uint64_t seed,
                              const SimulationOptions& options) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  check_inputs(policies, weights, m);
  const int nodes = static_cast<int>(policies.size());
  const std::uint64_t blocks = (runs + kTrialBlock - 1) / kTrialBlock;

  struct Block {
    std::vector<MetricSums> node;
    MetricSums network;
    std::vector<TrialRecord> trials;
  };
  std::vector<Block> partial(blocks);
  parallel_for(static_cast<std::size_t>(blocks), options.workers, [&](std::size_t b) {
    Block& blk = partial[b];
    blk.node.assign(nodes, MetricSums{});
    const std::uint64_t first = b * kTrialBlock;
    const std::uint64_t last = std::min(runs, first + kTrialBlock);
    if (options.keep_trials) blk.trials.reserve(last - first);
    for (std::uint64_t t = first; t < last; ++t) {
      Rng rng = make_stream(seed, {t});
      TrialRecord rec = run_trial(policies, weights, m, rng, t, options.trial);
      for (int k = 0; k < nodes; ++k) blk.node[k].add(rec.hypothesis, rec.nodes[k]);
      blk.network.add(rec.hypothesis, rec.nodes[rec.selected_node]);
      if (options.keep_trials) blk.trials.push_back(std::move(rec));
    }
  });

  std::vector<MetricSums> node(nodes);
  MetricSums network;
  SimulationSummary out;
  out.runs = runs;
  out.seed = seed;
  for (auto& blk : partial) {
    for (int k = 0; k < nodes; ++k) node[k].merge(blk.node[k]);
    network.merge(blk.network);
    if (options.keep_trials)
      for (auto& rec : blk.trials) out.trials.push_back(std::move(rec));
  }
  out.nodes.reserve(nodes);
  for (const auto& sums : node) out.nodes.push_back(sums.finish());
  out.network = network.finish();
  return out;
}

}  // namespace sjde
