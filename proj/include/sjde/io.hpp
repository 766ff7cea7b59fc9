#pragma once

#include "sjde/design.hpp"
#include "sjde/model.hpp"
#include "sjde/network.hpp"
#include "sjde/policy.hpp"
#include "sjde/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace sjde {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Graph text format:
//   nodes K
//   radius r
//   coordinates
//   k x y          (K lines)
//   edges
//   k l            (one undirected edge per line, 0-based)
// Lines starting with '#' and blank lines are ignored.
void write_graph(std::ostream& out, const NetworkGraph& g);
NetworkGraph read_graph(std::istream& in, const std::string& source = "<graph>");
void save_graph(const std::filesystem::path& path, const NetworkGraph& g);
NetworkGraph load_graph(const std::filesystem::path& path);

/// Dense row-major CSV with 17 significant digits.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(std::istream& in, const std::string& source = "<csv>");

/// FNV-1a over the bit patterns of W, the model, the grid and N.
std::uint64_t policy_fingerprint(const Eigen::MatrixXd& weights, const Model& m, const StateGrid& grid, int horizon);
std::string fingerprint_hex(std::uint64_t f);

// Policy file (JSON):
//   format "sjde-policy", version 1, node (1-based), horizon, fingerprint (16 hex digits),
//   grid {lower, upper, points}, coefficients {lambda0, lambda1, mu0, mu1},
//   stages: [{n, value[], stop "0/1 string", decide "0/1 string" (1 = H1),
//             estimate0[], estimate1[]}] for n = 0..N.
// Doubles are written with round-trip precision.
std::string policy_to_json(const PolicyTable& p);
PolicyTable policy_from_json(const std::string& text, const std::string& source = "<policy>");
void save_policy(const std::filesystem::path& path, const PolicyTable& p);
PolicyTable load_policy(const std::filesystem::path& path);

/// Results CSV: node,alpha0,alpha1,mse0,mse1,asn,runs,seed with one row per
/// node (ids from 1) and a final row whose node field is "network".
void write_results_csv(std::ostream& out, const SimulationSummary& s);
/// Same layout with the Monte Carlo standard errors.
void write_stderr_csv(std::ostream& out, const SimulationSummary& s);
/// Raw trials (node ids from 1): trial,hypothesis,theta,selected_node,node,stop_time,decision,estimate,squared_error.
void write_trials_csv(std::ostream& out, const std::vector<TrialRecord>& trials);

struct ResultRow {
  std::string node;
  Metrics metrics;
  std::uint64_t runs = 0;
  std::uint64_t seed = 0;
};
std::vector<ResultRow> read_results_csv(std::istream& in, const std::string& source = "<results>");

}  // namespace sjde
