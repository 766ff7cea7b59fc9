#include "sjde/io.hpp"

#include "json.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sjde {

namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string mask_string(const Mask& m) {
  std::string s(static_cast<std::size_t>(m.size()), '0');
  for (Eigen::Index j = 0; j < m.size(); ++j)
    if (m[j]) s[static_cast<std::size_t>(j)] = '1';
  return s;
}

Mask parse_mask(const std::string& s, int points, const std::string& where) {
  if (static_cast<int>(s.size()) != points) throw FormatError(where + ": mask length differs from grid points");
  Mask m(points);
  for (int j = 0; j < points; ++j) {
    if (s[j] != '0' && s[j] != '1') throw FormatError(where + ": mask characters must be 0 or 1");
    m[j] = s[j] == '1';
  }
  return m;
}

json array_json(const Eigen::ArrayXd& a) { return json(std::vector<double>(a.data(), a.data() + a.size())); }

Eigen::ArrayXd parse_array(const json& j, int points, const std::string& where) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != points) throw FormatError(where + ": array length differs from grid points");
  return Eigen::Map<const Eigen::ArrayXd>(v.data(), points);
}

void fnv(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void fnv_double(std::uint64_t& h, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  fnv(h, &bits, sizeof bits);
}

void write_metric_rows(std::ostream& out, const SimulationSummary& s, bool errors) {
  out << "node,alpha0,alpha1,mse0,mse1,asn,runs,seed\n";
  auto row = [&](const std::string& name, const Metrics& m) {
    out << name;
    if (errors) {
      for (double v : {m.alpha_se[0], m.alpha_se[1], m.mse_se[0], m.mse_se[1], m.asn_se}) out << ',' << format_double(v);
    } else {
      for (double v : {m.alpha[0], m.alpha[1], m.mse[0], m.mse[1], m.asn}) out << ',' << format_double(v);
    }
    out << ',' << s.runs << ',' << s.seed << '\n';
  };
  for (std::size_t k = 0; k < s.nodes.size(); ++k) row(std::to_string(k + 1), s.nodes[k]);
  row("network", s.network);
}

}  // namespace

void write_graph(std::ostream& out, const NetworkGraph& g) {
  out << "nodes " << g.size() << '\n';
  out << "radius " << format_double(g.radius) << '\n';
  out << "coordinates\n";
  for (int k = 0; k < g.size(); ++k) {
    const double x = g.coordinates.rows() == g.size() ? g.coordinates(k, 0) : 0.0;
    const double y = g.coordinates.rows() == g.size() ? g.coordinates(k, 1) : 0.0;
    out << k << ' ' << format_double(x) << ' ' << format_double(y) << '\n';
  }
  out << "edges\n";
  for (const auto& [k, l] : g.edges) out << k << ' ' << l << '\n';
}

NetworkGraph read_graph(std::istream& in, const std::string& source) {
  int nodes = -1;
  double radius = 0.0;
  enum class Block { header, coordinates, edges } block = Block::header;
  Eigen::Matrix<double, Eigen::Dynamic, 2> coords;
  std::vector<char> seen;
  std::vector<std::pair<int, int>> edges;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(raw);
    if (text.empty() || text[0] == '#') continue;
    std::istringstream ls(text);
    std::string head;
    ls >> head;
    if (head == "nodes") {
      if (!(ls >> nodes) || nodes < 1) fail(source, line, "expected 'nodes K' with K >= 1");
      coords = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(nodes, 2);
      seen.assign(nodes, 0);
      continue;
    }
    if (head == "radius") {
      if (!(ls >> radius)) fail(source, line, "expected 'radius r'");
      continue;
    }
    if (head == "coordinates" || head == "edges") {
      if (nodes < 1) fail(source, line, "'nodes K' must come before the " + head + " block");
      block = head == "edges" ? Block::edges : Block::coordinates;
      continue;
    }
    std::istringstream fields(text);
    if (block == Block::coordinates) {
      int k;
      double x, y;
      if (!(fields >> k >> x >> y)) fail(source, line, "expected 'k x y'");
      if (k < 0 || k >= nodes) fail(source, line, "node id " + std::to_string(k) + " out of range");
      coords(k, 0) = x;
      coords(k, 1) = y;
      seen[k] = 1;
    } else if (block == Block::edges) {
      int k, l;
      if (!(fields >> k >> l)) fail(source, line, "expected 'k l'");
      if (k < 0 || k >= nodes || l < 0 || l >= nodes)
        fail(source, line, "edge " + std::to_string(k) + " " + std::to_string(l) + " names a node out of range");
      if (k == l) fail(source, line, "self loop on node " + std::to_string(k));
      edges.emplace_back(k, l);
    } else {
      fail(source, line, "unexpected line '" + text + "'");
    }
    std::string extra;
    if (fields >> extra) fail(source, line, "trailing field '" + extra + "'");
  }
  if (nodes < 1) throw FormatError(source + ": missing 'nodes K'");
  for (int k = 0; k < nodes; ++k)
    if (!seen[k] && nodes > 1) throw FormatError(source + ": no coordinates for node " + std::to_string(k));
  try {
    return graph_from_edges(nodes, edges, coords, radius);
  } catch (const std::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void save_graph(const std::filesystem::path& path, const NetworkGraph& g) {
  auto out = open_out(path);
  write_graph(out, g);
}

NetworkGraph load_graph(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_graph(in, path.string());
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (trim(raw).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(raw);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const std::string t = trim(cell);
        row.push_back(std::stod(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        fail(source, line, "not a number: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) fail(source, line, "ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(source + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

std::uint64_t policy_fingerprint(const Eigen::MatrixXd& weights, const Model& m, const StateGrid& grid, int horizon) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto rows = static_cast<std::int64_t>(weights.rows());
  fnv(h, &rows, sizeof rows);
  for (Eigen::Index r = 0; r < weights.rows(); ++r)
    for (Eigen::Index c = 0; c < weights.cols(); ++c) fnv_double(h, weights(r, c));
  fnv_double(h, m.sigma);
  for (int i = 0; i < 2; ++i) {
    fnv_double(h, m.prior_mean[i]);
    fnv_double(h, m.prior_std[i]);
    fnv_double(h, m.prior_prob[i]);
  }
  fnv_double(h, grid.lower);
  fnv_double(h, grid.upper);
  const std::int64_t points = grid.points, n = horizon;
  fnv(h, &points, sizeof points);
  fnv(h, &n, sizeof n);
  return h;
}

std::string fingerprint_hex(std::uint64_t f) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, f);
  return buf;
}

std::string policy_to_json(const PolicyTable& p) {
  json j;
  j["format"] = "sjde-policy";
  j["version"] = 1;
  j["node"] = p.node + 1;
  j["horizon"] = p.horizon;
  j["fingerprint"] = fingerprint_hex(p.fingerprint);
  j["grid"] = {{"lower", p.grid.lower}, {"upper", p.grid.upper}, {"points", p.grid.points}};
  j["coefficients"] = {{"lambda0", p.coefficients.lambda[0]},
                       {"lambda1", p.coefficients.lambda[1]},
                       {"mu0", p.coefficients.mu[0]},
                       {"mu1", p.coefficients.mu[1]}};
  json stages = json::array();
  for (int n = 0; n <= p.horizon; ++n) {
    stages.push_back({{"n", n},
                      {"value", array_json(p.value[n])},
                      {"stop", mask_string(p.stop[n])},
                      {"decide", mask_string(p.decide[n])},
                      {"estimate0", array_json(p.estimate[n][0])},
                      {"estimate1", array_json(p.estimate[n][1])}});
  }
  j["stages"] = std::move(stages);
  return j.dump();
}

PolicyTable policy_from_json(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": " + e.what());
  }
  try {
    if (j.at("format") != "sjde-policy") throw FormatError(source + ": not a policy file");
    if (j.at("version") != 1) throw FormatError(source + ": unsupported policy version");
    PolicyTable p;
    p.node = j.at("node").get<int>() - 1;
    if (p.node < 0) throw FormatError(source + ": node ids start at 1");
    p.horizon = j.at("horizon").get<int>();
    p.fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
    const auto& g = j.at("grid");
    p.grid = {g.at("lower").get<double>(), g.at("upper").get<double>(), g.at("points").get<int>()};
    p.grid.validate();
    const auto& c = j.at("coefficients");
    p.coefficients = {{c.at("lambda0").get<double>(), c.at("lambda1").get<double>()},
                      {c.at("mu0").get<double>(), c.at("mu1").get<double>()}};
    const auto& stages = j.at("stages");
    if (p.horizon < 1 || static_cast<int>(stages.size()) != p.horizon + 1)
      throw FormatError(source + ": expected N+1 stages");
    const int points = p.grid.points;
    for (int n = 0; n <= p.horizon; ++n) {
      const auto& s = stages[n];
      const std::string where = source + ": stage " + std::to_string(n);
      if (s.at("n").get<int>() != n) throw FormatError(where + ": stages out of order");
      p.value.push_back(parse_array(s.at("value"), points, where));
      p.stop.push_back(parse_mask(s.at("stop").get<std::string>(), points, where));
      p.decide.push_back(parse_mask(s.at("decide").get<std::string>(), points, where));
      p.estimate.push_back({parse_array(s.at("estimate0"), points, where), parse_array(s.at("estimate1"), points, where)});
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void save_policy(const std::filesystem::path& path, const PolicyTable& p) {
  auto out = open_out(path);
  out << policy_to_json(p) << '\n';
}

PolicyTable load_policy(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str(), path.string());
}

void write_results_csv(std::ostream& out, const SimulationSummary& s) { write_metric_rows(out, s, false); }

void write_stderr_csv(std::ostream& out, const SimulationSummary& s) { write_metric_rows(out, s, true); }

void write_trials_csv(std::ostream& out, const std::vector<TrialRecord>& trials) {
  out << "trial,hypothesis,theta,selected_node,node,stop_time,decision,estimate,squared_error\n";
  for (const auto& t : trials) {
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      const auto& o = t.nodes[k];
      out << t.id << ',' << t.hypothesis << ',' << format_double(t.theta) << ',' << t.selected_node + 1 << ',' << k + 1 << ','
          << o.stop_time << ',' << o.decision << ',' << format_double(o.estimate) << ','
          << format_double(o.squared_error) << '\n';
    }
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in, const std::string& source) {
  std::vector<ResultRow> rows;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (line == 1 || trim(raw).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(raw);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() != 8) fail(source, line, "expected 8 columns");
    try {
      ResultRow r;
      r.node = cells[0];
      r.metrics.alpha = {std::stod(cells[1]), std::stod(cells[2])};
      r.metrics.mse = {std::stod(cells[3]), std::stod(cells[4])};
      r.metrics.asn = std::stod(cells[5]);
      r.runs = std::stoull(cells[6]);
      r.seed = std::stoull(cells[7]);
      rows.push_back(r);
    } catch (const std::exception&) {
      fail(source, line, "malformed number");
    }
  }
  return rows;
}

}  // namespace sjde
