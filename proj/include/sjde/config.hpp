#pragma once

#include "sjde/design.hpp"
#include "sjde/model.hpp"
#include "sjde/policy.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace sjde {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetworkConfig {
  int nodes = 20;
  double radius = 0.3;
  std::uint64_t seed = 1;
  int max_attempts = 10000;
  std::string edges_file;     // graph file instead of generation
  std::string weights = "equal";  // equal | laplacian
  double laplacian_c = 0.1;
};

struct DesignConfig {
  int horizon = 50;
  StateGrid grid{-9, 9, 1900};
  int samples = 50000;
  std::uint64_t seed = 1;
  std::string solver = "lp";  // lp | dual
  double tolerance = 1e-9;
  int theta_bins = 201;
  StepModel step_model = StepModel::predictive;
  int dual_iterations = 40;
};

struct SimulateConfig {
  std::uint64_t runs = 100000;
  std::uint64_t seed = 1;
  int workers = 1;
};

/// Defaults are the reference experiment: K=20, d_com=0.3, sigma=4,
/// theta_i ~ N(-+2, 0.5^2), p1=0.5, alpha=1e-3, beta=0.1, N=50,
/// grid [-9,9] with 1900 points, n_samp=5e4.
struct RunConfig {
  NetworkConfig network;
  Model model;
  ErrorConstraints constraints;
  DesignConfig design;
  SimulateConfig simulate;
  std::string source = "<defaults>";

  DesignSpec design_spec() const;
};

/// INI-style text: [section] headers, `key = value` lines, '#' or ';'
/// comments. Unknown sections or keys and invalid values are errors that
/// name the file and line.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// The documented schema with defaults, as config text.
std::string default_config_text();

}  // namespace sjde
