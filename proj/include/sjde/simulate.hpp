#pragma once

#include "sjde/model.hpp"
#include "sjde/network.hpp"
#include "sjde/policy.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace sjde {

struct NodeOutcome {
  int stop_time = 0;  // tau^k in 1..N
  int decision = 0;
  double estimate = 0;
  double squared_error = 0;
};

struct TrialRecord {
  std::uint64_t id = 0;
  int hypothesis = 0;
  double theta = 0;
  int selected_node = 0;  // node drawn for the network average
  std::vector<NodeOutcome> nodes;
  Eigen::VectorXd final_state;  // s_N
};

struct TrialOptions {
  bool never_stop_early = false;  // ignore Psi_n for n < N
};

/// One network-wide trial. Draw order on `rng`: selected node, H, theta, then
/// x_n for n = 1..N (nodes in index order).
TrialRecord run_trial(const std::vector<PolicyTable>& policies, const Eigen::MatrixXd& weights, const Model& m,
                      Rng& rng, std::uint64_t id = 0, const TrialOptions& options = {});

struct Metrics {
  std::array<double, 2> alpha{0, 0};
  std::array<double, 2> mse{0, 0};
  double asn = 0;
  std::array<double, 2> alpha_se{0, 0};
  std::array<double, 2> mse_se{0, 0};
  double asn_se = 0;
};

/// Running sums for one node (or the network average). Combined in a fixed
/// order so totals do not depend on the worker count.
struct MetricSums {
  std::array<double, 2> trials{0, 0};
  std::array<double, 2> wrong{0, 0};
  std::array<double, 2> loss{0, 0};     // sum of 1{decide = i} (theta - est)^2 under H_i
  std::array<double, 2> loss_sq{0, 0};
  double time = 0;
  double time_sq = 0;

  void add(int hypothesis, const NodeOutcome& o);
  void merge(const MetricSums& other);
  Metrics finish() const;
};

struct SimulationSummary {
  std::uint64_t runs = 0;
  std::uint64_t seed = 0;
  std::vector<Metrics> nodes;
  Metrics network;
  std::vector<TrialRecord> trials;  // only with keep_trials
};

struct SimulationOptions {
  int workers = 1;
  bool keep_trials = false;
  TrialOptions trial;
};

inline constexpr std::uint64_t kTrialBlock = 1024;

/// Trial t uses the stream derived from (seed, t). Trials are summed in
/// blocks of kTrialBlock and the blocks are merged in index order, so the
/// summary is bit-identical for any worker count.
SimulationSummary monte_carlo(const std::vector<PolicyTable>& policies, const Eigen::MatrixXd& weights,
                              const Model& m, std::uint64_t runs, std::uint64_t seed,
                              const SimulationOptions& options = {});

}  // namespace sjde
