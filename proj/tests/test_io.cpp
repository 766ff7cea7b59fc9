#include "doctest.h"
#include "fixtures.hpp"

#include "sjde/config.hpp"
#include "sjde/io.hpp"
#include "sjde/plot.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sjde;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "run.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

PolicyTable toy_policy() {
  auto t = fixture::toy_instance(2);
  PolicyTable p = backward_induction(t.costs, t.transitions, t.post);
  p.node = 4;
  p.fingerprint = 0x0123456789abcdefULL;
  p.coefficients.lambda = {1.0 / 3.0, 2e-17};
  return p;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("graph text round trip") {
  const auto g = generate_geometric_network(12, 0.4, 9);
  std::stringstream ss;
  write_graph(ss, g);
  const auto back = read_graph(ss);
  CHECK(back.coordinates == g.coordinates);
  CHECK(back.edges == g.edges);
  CHECK(back.radius == g.radius);
}

TEST_CASE("graph reader reports the offending line") {
  std::istringstream in("nodes 2\nradius 0.5\ncoordinates\n0 0.1 0.2\n1 0.3 0.4\nedges\n0 5\n");
  try {
    read_graph(in, "g.txt");
    FAIL("no error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("g.txt:7") != std::string::npos);
  }
  std::istringstream missing("radius 0.5\n");
  CHECK_THROWS_AS(read_graph(missing), FormatError);
}

TEST_CASE("matrix CSV round trip is exact") {
  Eigen::MatrixXd m(2, 3);
  m << 1.0 / 3.0, 2e-300, -7.25, 0.1, 1e17, 5;
  std::stringstream ss;
  write_matrix_csv(ss, m);
  CHECK(read_matrix_csv(ss) == m);
  std::istringstream ragged("1,2\n3\n");
  CHECK_THROWS_AS(read_matrix_csv(ragged), FormatError);
}

TEST_CASE("policy JSON round trip is exact") {
  const PolicyTable p = toy_policy();
  const PolicyTable q = policy_from_json(policy_to_json(p));
  CHECK(q.node == p.node);
  CHECK(q.horizon == p.horizon);
  CHECK(q.grid == p.grid);
  CHECK(q.fingerprint == p.fingerprint);
  CHECK(q.coefficients.packed() == p.coefficients.packed());
  for (int n = 0; n <= p.horizon; ++n) {
    CHECK((q.value[n] == p.value[n]).all());
    CHECK((q.stop[n] == p.stop[n]).all());
    CHECK((q.decide[n] == p.decide[n]).all());
    for (int i = 0; i < 2; ++i) CHECK((q.estimate[n][i] == p.estimate[n][i]).all());
  }
  CHECK(policy_to_json(q) == policy_to_json(p));
  CHECK_THROWS_AS(policy_from_json("{\"format\": \"other\"}"), FormatError);
  CHECK_THROWS(policy_from_json("not json"));
}

TEST_CASE("fingerprint tracks weights, model, grid and horizon") {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Constant(2, 2, 0.5);
  Model m;
  const StateGrid grid{-9, 9, 1900};
  const auto base = policy_fingerprint(w, m, grid, 50);
  CHECK(base == policy_fingerprint(w, m, grid, 50));
  CHECK(base != policy_fingerprint(w, m, grid, 49));
  CHECK(base != policy_fingerprint(w, m, StateGrid{-9, 9, 1901}, 50));
  Model m2 = m;
  m2.sigma = 4.0000001;
  CHECK(base != policy_fingerprint(w, m2, grid, 50));
  Eigen::MatrixXd w2 = w;
  w2(0, 0) = 0.4;
  w2(0, 1) = 0.6;
  CHECK(base != policy_fingerprint(w2, m, grid, 50));
  CHECK(fingerprint_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("results CSV layout and round trip") {
  SimulationSummary s;
  s.runs = 10;
  s.seed = 3;
  Metrics a;
  a.alpha = {0.1, 0.2};
  a.mse = {1.0 / 3.0, 0.25};
  a.asn = 7.5;
  a.alpha_se = {0.01, 0.02};
  s.nodes = {a, a};
  s.network = a;
  std::stringstream ss;
  write_results_csv(ss, s);
  const std::string text = ss.str();
  CHECK(text.rfind("node,alpha0,alpha1,mse0,mse1,asn,runs,seed\n", 0) == 0);
  CHECK(text.find("\n1,") != std::string::npos);
  CHECK(text.find("\nnetwork,") != std::string::npos);
  const auto rows = read_results_csv(ss);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].node == "1");
  CHECK(rows[2].node == "network");
  CHECK(rows[1].metrics.mse[0] == 1.0 / 3.0);
  CHECK(rows[1].runs == 10);
  std::stringstream se;
  write_stderr_csv(se, s);
  CHECK(read_results_csv(se)[0].metrics.alpha[1] == 0.02);
}

TEST_CASE("trial dump has one line per trial and node") {
  TrialRecord t;
  t.id = 5;
  t.hypothesis = 1;
  t.theta = 2.5;
  t.selected_node = 1;
  t.nodes = {NodeOutcome{3, 1, 2.4, 0.01}, NodeOutcome{4, 0, -1.0, 0.0}};
  std::ostringstream out;
  write_trials_csv(out, {t});
  std::istringstream in(out.str());
  std::string line;
  int count = 0;
  while (std::getline(in, line)) ++count;
  CHECK(count == 3);
  CHECK(out.str().find("\n5,1,2.5,2,2,4,0,") != std::string::npos);
}

TEST_CASE("SVG plots are well formed") {
  const PolicyTable p = toy_policy();
  const std::string svg = policy_region_svg(p, -1, 1);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("Policy of node 5") != std::string::npos);
  SimulationSummary s;
  s.nodes.resize(4);
  for (int k = 0; k < 4; ++k) s.nodes[k].alpha = {1e-3 * (k + 1), 2e-3};
  const std::string r = results_svg(s, ErrorConstraints{}, 50);
  CHECK(r.find("network average") != std::string::npos);
  int circles = 0;
  for (std::size_t at = r.find("<circle"); at != std::string::npos; at = r.find("<circle", at + 1)) ++circles;
  CHECK(circles == 5 * 4 + 1);
}

}

TEST_SUITE("config") {

TEST_CASE("defaults are the reference experiment") {
  const RunConfig c = parse_config("");
  CHECK(c.network.nodes == 20);
  CHECK(c.network.radius == 0.3);
  CHECK(c.model.sigma == 4);
  CHECK(c.model.prior_mean[0] == -2);
  CHECK(c.model.prior_std[1] == 0.5);
  CHECK(c.model.prior_prob[1] == 0.5);
  CHECK(c.constraints.alpha[0] == 1e-3);
  CHECK(c.constraints.beta[1] == 0.1);
  CHECK(c.design.horizon == 50);
  CHECK(c.design.grid == StateGrid{-9, 9, 1900});
  CHECK(c.design.samples == 50000);
  const RunConfig d = parse_config(default_config_text());
  CHECK(d.design.grid == c.design.grid);
  CHECK(d.simulate.runs == c.simulate.runs);
}

TEST_CASE("values are parsed") {
  const RunConfig c = parse_config(
      "# comment\n[network]\nK = 5 ; trailing\nd_com=0.6\n[model]\np1 = 0.25\n[design]\nN = 20\nn_samp = 1e4\n"
      "step_model = network\nsolver = dual\n[simulate]\nruns = 1e5\n");
  CHECK(c.network.nodes == 5);
  CHECK(c.network.radius == 0.6);
  CHECK(c.model.prior_prob[0] == 0.75);
  CHECK(c.design.samples == 10000);
  CHECK(c.design.step_model == StepModel::network);
  CHECK(c.design.solver == "dual");
  CHECK(c.simulate.runs == 100000);
  const DesignSpec spec = c.design_spec();
  CHECK(spec.horizon == 20);
  CHECK(spec.step_model == StepModel::network);
}

TEST_CASE("errors name the file and line") {
  CHECK(config_error("[network]\nd_com = 0\n").find("run.ini:2: network.d_com") == 0);
  CHECK(config_error("[network]\nK = 3\n\n[constraints]\nalpah0 = 0.1\n").find("run.ini:5: constraints.alpah0: unknown key") == 0);
  CHECK(config_error("[nework]\n").find("run.ini:1: unknown section") == 0);
  CHECK(config_error("K = 3\n").find("run.ini:1:") == 0);
  CHECK(config_error("[design]\nN = 2.5\n").find("run.ini:2:") == 0);
  CHECK(config_error("[design]\ngrid_min = 1\n").find("run.ini:2: design.grid_min") == 0);
  CHECK(config_error("[design]\ngrid_min = 3\ngrid_max = 2\n").find("run.ini:3: design.grid_max") == 0);
  CHECK(config_error("[model]\nsigma = 1\nsigma = 2\n").find("run.ini:3: model.sigma: duplicate") == 0);
  CHECK(config_error("[constraints]\nalpha1 = 1.5\n").find("run.ini:2:") == 0);
  CHECK(config_error("[design]\nstep_model = exact\n").find("run.ini:2:") == 0);
  CHECK(config_error("[design]\nN =\n").find("run.ini:2: design.N: missing value") == 0);
}

TEST_CASE("config files are read from disk") {
  const auto path = std::filesystem::temp_directory_path() / "sjde_config_test.ini";
  {
    std::ofstream out(path);
    out << "[simulate]\nworkers = 3\nbogus = 1\n";
  }
  try {
    load_config(path);
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(path.string() + ":3:") == 0);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}

}
