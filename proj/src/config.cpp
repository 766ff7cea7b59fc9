#include "sjde/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sjde {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Location {
  std::string source;
  int line = 0;
  std::string key;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + key + ": " + what);
  }
};

double to_double(const std::string& v, const Location& at) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) at.fail("expected a finite number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& v, const Location& at) {
  // Accept 5e4 style values as long as they are whole numbers.
  const double d = to_double(v, at);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) at.fail("expected an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

int positive_int(const std::string& v, const Location& at, int min = 1) {
  const long long x = to_integer(v, at);
  if (x < min || x > 2147483647LL) at.fail("must be an integer >= " + std::to_string(min));
  return static_cast<int>(x);
}

std::uint64_t seed_value(const std::string& v, const Location& at) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) at.fail("expected a non-negative integer seed, got '" + v + "'");
  return out;
}

double positive(const std::string& v, const Location& at) {
  const double x = to_double(v, at);
  if (!(x > 0)) at.fail("must be > 0");
  return x;
}

double open_unit(const std::string& v, const Location& at) {
  const double x = to_double(v, at);
  if (!(x > 0 && x < 1)) at.fail("must lie in (0,1)");
  return x;
}

using Setter = std::function<void(RunConfig&, const std::string&, const Location&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s = {
      {"network",
       {{"K", [](RunConfig& c, const std::string& v, const Location& at) { c.network.nodes = positive_int(v, at); }},
        {"d_com", [](RunConfig& c, const std::string& v, const Location& at) { c.network.radius = positive(v, at); }},
        {"seed", [](RunConfig& c, const std::string& v, const Location& at) { c.network.seed = seed_value(v, at); }},
        {"max_attempts",
         [](RunConfig& c, const std::string& v, const Location& at) { c.network.max_attempts = positive_int(v, at); }},
        {"edges", [](RunConfig& c, const std::string& v, const Location&) { c.network.edges_file = v; }},
        {"weights",
         [](RunConfig& c, const std::string& v, const Location& at) {
           if (v != "equal" && v != "laplacian") at.fail("expected 'equal' or 'laplacian'");
           c.network.weights = v;
         }},
        {"laplacian_c",
         [](RunConfig& c, const std::string& v, const Location& at) { c.network.laplacian_c = positive(v, at); }}}},
      {"model",
       {{"sigma", [](RunConfig& c, const std::string& v, const Location& at) { c.model.sigma = positive(v, at); }},
        {"m0", [](RunConfig& c, const std::string& v, const Location& at) { c.model.prior_mean[0] = to_double(v, at); }},
        {"m1", [](RunConfig& c, const std::string& v, const Location& at) { c.model.prior_mean[1] = to_double(v, at); }},
        {"v0", [](RunConfig& c, const std::string& v, const Location& at) { c.model.prior_std[0] = positive(v, at); }},
        {"v1", [](RunConfig& c, const std::string& v, const Location& at) { c.model.prior_std[1] = positive(v, at); }},
        {"p1",
         [](RunConfig& c, const std::string& v, const Location& at) {
           const double p = open_unit(v, at);
           c.model.prior_prob = {1.0 - p, p};
         }}}},
      {"constraints",
       {{"alpha0",
         [](RunConfig& c, const std::string& v, const Location& at) { c.constraints.alpha[0] = open_unit(v, at); }},
        {"alpha1",
         [](RunConfig& c, const std::string& v, const Location& at) { c.constraints.alpha[1] = open_unit(v, at); }},
        {"beta0", [](RunConfig& c, const std::string& v, const Location& at) { c.constraints.beta[0] = positive(v, at); }},
        {"beta1",
         [](RunConfig& c, const std::string& v, const Location& at) { c.constraints.beta[1] = positive(v, at); }}}},
      {"design",
       {{"N", [](RunConfig& c, const std::string& v, const Location& at) { c.design.horizon = positive_int(v, at); }},
        {"grid_min", [](RunConfig& c, const std::string& v, const Location& at) { c.design.grid.lower = to_double(v, at); }},
        {"grid_max", [](RunConfig& c, const std::string& v, const Location& at) { c.design.grid.upper = to_double(v, at); }},
        {"grid_points",
         [](RunConfig& c, const std::string& v, const Location& at) { c.design.grid.points = positive_int(v, at, 3); }},
        {"n_samp", [](RunConfig& c, const std::string& v, const Location& at) { c.design.samples = positive_int(v, at); }},
        {"seed", [](RunConfig& c, const std::string& v, const Location& at) { c.design.seed = seed_value(v, at); }},
        {"solver",
         [](RunConfig& c, const std::string& v, const Location& at) {
           if (v != "lp" && v != "dual") at.fail("expected 'lp' or 'dual'");
           c.design.solver = v;
         }},
        {"tolerance", [](RunConfig& c, const std::string& v, const Location& at) { c.design.tolerance = positive(v, at); }},
        {"theta_bins",
         [](RunConfig& c, const std::string& v, const Location& at) { c.design.theta_bins = positive_int(v, at); }},
        {"step_model",
         [](RunConfig& c, const std::string& v, const Location& at) {
           try {
             c.design.step_model = parse_step_model(v);
           } catch (const std::invalid_argument& e) {
             at.fail(e.what());
           }
         }},
        {"dual_iterations",
         [](RunConfig& c, const std::string& v, const Location& at) { c.design.dual_iterations = positive_int(v, at); }}}},
      {"simulate",
       {{"runs",
         [](RunConfig& c, const std::string& v, const Location& at) {
           const long long r = to_integer(v, at);
           if (r < 1) at.fail("must be >= 1");
           c.simulate.runs = static_cast<std::uint64_t>(r);
         }},
        {"seed", [](RunConfig& c, const std::string& v, const Location& at) { c.simulate.seed = seed_value(v, at); }},
        {"workers",
         [](RunConfig& c, const std::string& v, const Location& at) { c.simulate.workers = positive_int(v, at); }}}},
  };
  return s;
}

}  // namespace

DesignSpec RunConfig::design_spec() const {
  DesignSpec spec;
  spec.constraints = constraints;
  spec.horizon = design.horizon;
  spec.grid = design.grid;
  spec.samples = design.samples;
  spec.seed = design.seed;
  spec.tolerance = design.tolerance;
  spec.theta_bins = design.theta_bins;
  spec.step_model = design.step_model;
  return spec;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  cfg.source = source;
  std::map<std::string, int> lines;  // "section.key" -> line
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string t = raw;
    const auto hash = t.find_first_of("#;");
    if (hash != std::string::npos) t = t.substr(0, hash);
    t = trim(t);
    if (t.empty()) continue;
    const Location at{source, line, section};
    if (t.front() == '[') {
      if (t.back() != ']') at.fail("unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!schema().count(section))
        throw ConfigError(source + ":" + std::to_string(line) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'");
    if (section.empty())
      throw ConfigError(source + ":" + std::to_string(line) + ": key outside of a [section]");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string full = section + "." + key;
    const Location kat{source, line, full};
    const auto& keys = schema().at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) kat.fail("unknown key");
    if (lines.count(full)) kat.fail("duplicate key (first set on line " + std::to_string(lines[full]) + ")");
    if (value.empty()) kat.fail("missing value");
    it->second(cfg, value, kat);
    lines[full] = line;
  }

  auto where = [&](std::initializer_list<const char*> keys) {
    int best = 0;
    std::string name = *keys.begin();
    for (const char* k : keys)
      if (lines.count(k) && lines[k] > best) {
        best = lines[k];
        name = k;
      }
    return Location{source, best, name};
  };
  if (!(cfg.design.grid.lower < cfg.design.grid.upper))
    where({"design.grid_min", "design.grid_max"}).fail("grid_min must be below grid_max");
  if (cfg.design.grid.lower > 0 || cfg.design.grid.upper < 0)
    where({"design.grid_min", "design.grid_max"}).fail("the grid must contain the initial state 0");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string default_config_text() {
  return R"(# sjde run configuration; every key is optional.

[network]
K = 20              # number of sensors
d_com = 0.3         # communication radius in the unit square
seed = 1
max_attempts = 10000
# edges = network.txt   # load a graph file instead of generating one
weights = equal     # equal | laplacian
laplacian_c = 0.1

[model]
sigma = 4
m0 = -2
v0 = 0.5
m1 = 2
v1 = 0.5
p1 = 0.5

[constraints]
alpha0 = 1e-3
alpha1 = 1e-3
beta0 = 0.1
beta1 = 0.1

[design]
N = 50
grid_min = -9
grid_max = 9
grid_points = 1900
n_samp = 50000
seed = 1
solver = lp         # lp | dual
tolerance = 1e-9
theta_bins = 201
step_model = predictive   # predictive | network
dual_iterations = 40

[simulate]
runs = 100000
seed = 1
workers = 1
)";
}

}  // namespace sjde
