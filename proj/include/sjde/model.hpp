#pragma once

#include "sjde/network.hpp"
#include "sjde/rng.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sjde {

/// Two Gaussian hypotheses with Gaussian priors on the common mean:
///   H_i : x | theta ~ N(theta, sigma^2),  theta ~ N(m_i, v_i^2),  P(H_i) = p_i.
template <typename Scalar = double>
struct HypothesisModel {
  Scalar sigma = 4;
  std::array<Scalar, 2> prior_mean{-2, 2};
  std::array<Scalar, 2> prior_std{Scalar(0.5), Scalar(0.5)};
  std::array<Scalar, 2> prior_prob{Scalar(0.5), Scalar(0.5)};

  void validate() const {
    if (!(sigma > 0) || !std::isfinite(static_cast<double>(sigma)))
      throw std::invalid_argument("sigma must be positive and finite");
    for (int i = 0; i < 2; ++i) {
      if (!(prior_std[i] > 0)) throw std::invalid_argument("prior std v" + std::to_string(i) + " must be > 0");
      if (!(prior_prob[i] > 0 && prior_prob[i] < 1))
        throw std::invalid_argument("prior probability p" + std::to_string(i) + " must lie in (0,1)");
    }
    if (std::abs(static_cast<double>(prior_prob[0] + prior_prob[1]) - 1.0) > 1e-12)
      throw std::invalid_argument("prior probabilities must sum to 1");
  }
};

using Model = HypothesisModel<double>;

template <typename Scalar>
Scalar normal_log_pdf(Scalar x, Scalar mean, Scalar var) {
  using std::log;
  const Scalar d = x - mean;
  return Scalar(-0.5) * (d * d / var + log(Scalar(2) * std::numbers::pi_v<Scalar> * var));
}

/// Overlap mass of the two parameter priors, int min(p(theta_0), p(theta_1)).
template <typename Scalar>
Scalar prior_overlap(const HypothesisModel<Scalar>& m) {
  using std::exp;
  const Scalar lo = std::min(m.prior_mean[0] - 12 * m.prior_std[0], m.prior_mean[1] - 12 * m.prior_std[1]);
  const Scalar hi = std::max(m.prior_mean[0] + 12 * m.prior_std[0], m.prior_mean[1] + 12 * m.prior_std[1]);
  const int steps = 20000;  // composite Simpson, even
  const Scalar h = (hi - lo) / steps;
  Scalar acc = 0;
  for (int j = 0; j <= steps; ++j) {
    const Scalar t = lo + h * j;
    const Scalar f = std::min(exp(normal_log_pdf(t, m.prior_mean[0], m.prior_std[0] * m.prior_std[0])),
                              exp(normal_log_pdf(t, m.prior_mean[1], m.prior_std[1] * m.prior_std[1])));
    acc += f * ((j == 0 || j == steps) ? 1 : (j % 2 ? 4 : 2));
  }
  return acc * h / 3;
}

/// Diagnostic when the priors are far from disjoint (overlap mass > 1e-3).
template <typename Scalar>
std::optional<std::string> overlap_warning(const HypothesisModel<Scalar>& m) {
  const Scalar overlap = prior_overlap(m);
  if (overlap <= Scalar(1e-3)) return std::nullopt;
  return "parameter priors overlap with mass " + std::to_string(static_cast<double>(overlap)) +
         " (> 1e-3); the hypotheses are not almost disjoint";
}

/// (P(H_0 | s), P(H_1 | s)) for a state with conditional variance state_var.
/// An infinite state_var means "no data" and returns the prior. Both entries
/// are computed as logistic functions of the log-odds so that small
/// probabilities keep full relative precision.
template <typename Scalar>
std::array<Scalar, 2> hypothesis_posterior(Scalar s, Scalar state_var, const HypothesisModel<Scalar>& m) {
  using std::exp;
  using std::log;
  if (std::isinf(static_cast<double>(state_var))) return m.prior_prob;
  std::array<Scalar, 2> logp{};
  for (int i = 0; i < 2; ++i)
    logp[i] = log(m.prior_prob[i]) +
              normal_log_pdf(s, m.prior_mean[i], m.prior_std[i] * m.prior_std[i] + state_var);
  const Scalar diff = logp[1] - logp[0];
  if (diff == 0) return {Scalar(0.5), Scalar(0.5)};
  return {Scalar(1) / (Scalar(1) + exp(diff)), Scalar(1) / (Scalar(1) + exp(-diff))};
}

template <typename Scalar>
struct GaussianPosterior {
  Scalar mean;
  Scalar var;
};

/// Conjugate posterior of theta_i given the state under H_i.
template <typename Scalar>
GaussianPosterior<Scalar> theta_posterior(Scalar s, Scalar state_var, const HypothesisModel<Scalar>& m, int i) {
  const Scalar prior_var = m.prior_std[i] * m.prior_std[i];
  if (std::isinf(static_cast<double>(state_var))) return {m.prior_mean[i], prior_var};
  const Scalar var = Scalar(1) / (Scalar(1) / prior_var + Scalar(1) / state_var);
  return {var * (m.prior_mean[i] / prior_var + s / state_var), var};
}

template <typename Scalar>
Scalar posterior_theta_variance(Scalar s, Scalar state_var, const HypothesisModel<Scalar>& m, int i) {
  return theta_posterior(s, state_var, m, i).var;
}

/// Variances of the open-neighbourhood state sum and the combined innovation
/// that enter the step from n to n+1 at node k.
struct PredictiveVariances {
  double neighbor_var;
  double innovation_var;
};

PredictiveVariances predictive_component_variances(const StateStats<double>& stats, int k, int n);

struct PredictiveDraw {
  int hypothesis;
  double theta;
  double neighbor;    // combined open-neighbourhood state
  double innovation;  // combined closed-neighbourhood observation
};

/// Posterior-predictive sampler for one (node, time, state). Each draw takes
/// H ~ Bern(P(H_1|s)), theta from its conjugate posterior, then the neighbour
/// term and the innovation given theta. Draw order from the rng is fixed.
class PredictiveSampler {
 public:
  PredictiveSampler(double s, double state_var, double self_weight, PredictiveVariances vars, const Model& m);

  // `normal` may carry a cached variate between calls; reuse one object per stream.
  PredictiveDraw operator()(Rng& rng, std::normal_distribution<double>& normal) const;
  PredictiveDraw operator()(Rng& rng) const {
    std::normal_distribution<double> normal;
    return (*this)(rng, normal);
  }

  double prob_h1() const { return prob_h1_; }
  const GaussianPosterior<double>& posterior(int i) const { return post_[i]; }

 private:
  double prob_h1_;
  std::array<GaussianPosterior<double>, 2> post_;
  double self_weight_;
  double neighbor_sd_;
  double innovation_sd_;
};

std::vector<PredictiveDraw> sample_posterior_predictive(double s, const StateStats<double>& stats, int k, int n,
                                                        const Model& m, int count, Rng& rng);

}  // namespace sjde
