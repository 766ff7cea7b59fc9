#include "sjde/model.hpp"

namespace sjde {

PredictiveVariances predictive_component_variances(const StateStats<double>& stats, int k, int n) {
  if (k < 0 || k >= stats.nodes()) throw std::out_of_range("node index out of range");
  if (n < 1 || n >= stats.horizon)
    throw std::out_of_range("predictive variances need 1 <= n < N (got n=" + std::to_string(n) + ")");
  return {stats.neighbor_var(k, n), stats.innovation_var(k)};
}

PredictiveSampler::PredictiveSampler(double s, double state_var, double self_weight, PredictiveVariances vars,
                                     const Model& m)
    : prob_h1_(hypothesis_posterior(s, state_var, m)[1]),
      post_{theta_posterior(s, state_var, m, 0), theta_posterior(s, state_var, m, 1)},
      self_weight_(self_weight),
      neighbor_sd_(std::sqrt(vars.neighbor_var)),
      innovation_sd_(std::sqrt(vars.innovation_var)) {}

PredictiveDraw PredictiveSampler::operator()(Rng& rng, std::normal_distribution<double>& z) const {
  PredictiveDraw d;
  d.hypothesis = std::generate_canonical<double, 53>(rng) < prob_h1_ ? 1 : 0;
  const auto& p = post_[d.hypothesis];
  d.theta = p.mean + std::sqrt(p.var) * z(rng);
  d.neighbor = (1.0 - self_weight_) * d.theta + neighbor_sd_ * z(rng);
  d.innovation = d.theta + innovation_sd_ * z(rng);
  return d;
}

std::vector<PredictiveDraw> sample_posterior_predictive(double s, const StateStats<double>& stats, int k, int n,
                                                        const Model& m, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  const PredictiveSampler sampler(s, stats.state_var(k, n), stats.self_weight(k),
                                  predictive_component_variances(stats, k, n), m);
  std::vector<PredictiveDraw> out;
  out.reserve(count);
  std::normal_distribution<double> normal;
  for (int l = 0; l < count; ++l) out.push_back(sampler(rng, normal));
  return out;
}

}  // namespace sjde
