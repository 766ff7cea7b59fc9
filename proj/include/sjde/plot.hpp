#pragma once

#include "sjde/design.hpp"
#include "sjde/policy.hpp"
#include "sjde/simulate.hpp"

#include <string>

namespace sjde {

/// Stopping regions of one node over (n, s): continue, stop deciding H0,
/// stop deciding H1. Vertical extent is clipped to [s_min, s_max].
std::string policy_region_svg(const PolicyTable& p, double s_min = -4, double s_max = 4);

/// Five panels (alpha0, alpha1, mse0, mse1, ASN) with one marker per node,
/// a network-average line and the constraint line (N for the ASN panel).
std::string results_svg(const SimulationSummary& s, const ErrorConstraints& c, int horizon);

}  // namespace sjde
