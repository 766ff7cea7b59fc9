#include "sjde/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sjde {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

void text(std::ostringstream& o, double x, double y, const std::string& s, const char* anchor = "middle",
          int size = 11) {
  o << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
    << "\">" << s << "</text>\n";
}

void line(std::ostringstream& o, double x1, double y1, double x2, double y2, const char* stroke,
          const char* extra = "") {
  o << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
    << "\" stroke=\"" << stroke << "\"" << extra << "/>\n";
}

}  // namespace

std::string policy_region_svg(const PolicyTable& p, double s_min, double s_max) {
  const double left = 60, top = 30, width = 600, height = 400;
  const int stages = p.horizon;
  const double cell = width / stages;
  auto y_of = [&](double s) { return top + height * (s_max - s) / (s_max - s_min); };
  const char* fill[3] = {"#e8e8e8", "#3b6fb6", "#d9534f"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(left + width + 150) << "\" height=\""
    << num(top + height + 60) << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  text(o, left + width / 2, 18, "Policy of node " + std::to_string(p.node + 1), "middle", 14);

  const double h = p.grid.spacing();
  for (int n = 1; n <= stages; ++n) {
    const double x = left + (n - 1) * cell;
    int j = 0;
    while (j < p.grid.points) {
      const double s = p.grid[j];
      const int cls = !p.stop[n][j] ? 0 : (p.decide[n][j] ? 2 : 1);
      int e = j;
      while (e + 1 < p.grid.points && (!p.stop[n][e + 1] ? 0 : (p.decide[n][e + 1] ? 2 : 1)) == cls) ++e;
      const double lo = std::max(s_min, s - h / 2), hi = std::min(s_max, p.grid[e] + h / 2);
      if (hi > lo) {
        o << "<rect x=\"" << num(x) << "\" y=\"" << num(y_of(hi)) << "\" width=\"" << num(cell) << "\" height=\""
          << num(y_of(lo) - y_of(hi)) << "\" fill=\"" << fill[cls] << "\"/>\n";
      }
      j = e + 1;
    }
  }

  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(width) << "\" height=\""
    << num(height) << "\" fill=\"none\" stroke=\"black\"/>\n";
  const int tick = std::max(1, stages / 10);
  for (int n = tick; n <= stages; n += tick) {
    const double x = left + (n - 0.5) * cell;
    line(o, x, top + height, x, top + height + 4, "black");
    text(o, x, top + height + 16, std::to_string(n));
  }
  for (int t = 0; t <= 8; ++t) {
    const double s = s_min + (s_max - s_min) * t / 8;
    line(o, left - 4, y_of(s), left, y_of(s), "black");
    text(o, left - 6, y_of(s) + 4, label(s), "end");
  }
  text(o, left + width / 2, top + height + 36, "n");
  text(o, 16, top + height / 2, "s", "middle");

  const char* names[3] = {"continue", "stop, decide H0", "stop, decide H1"};
  for (int c = 0; c < 3; ++c) {
    const double y = top + 10 + 22 * c;
    o << "<rect x=\"" << num(left + width + 15) << "\" y=\"" << num(y) << "\" width=\"14\" height=\"14\" fill=\""
      << fill[c] << "\" stroke=\"black\"/>\n";
    text(o, left + width + 35, y + 11, names[c], "start");
  }
  o << "</svg>\n";
  return o.str();
}

std::string results_svg(const SimulationSummary& s, const ErrorConstraints& c, int horizon) {
  struct Panel {
    std::string title;
    bool log;
    double target;
    double (*get)(const Metrics&);
  };
  const Panel panels[5] = {
      {"alpha0", true, c.alpha[0], [](const Metrics& m) { return m.alpha[0]; }},
      {"alpha1", true, c.alpha[1], [](const Metrics& m) { return m.alpha[1]; }},
      {"mse0", false, c.beta[0], [](const Metrics& m) { return m.mse[0]; }},
      {"mse1", false, c.beta[1], [](const Metrics& m) { return m.mse[1]; }},
      {"ASN", false, static_cast<double>(horizon), [](const Metrics& m) { return m.asn; }},
  };
  const double pw = 320, ph = 220, margin = 60, gap = 30;
  const int nodes = static_cast<int>(s.nodes.size());

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(3 * (pw + margin + gap)) << "\" height=\""
    << num(2 * (ph + margin + gap) + 30) << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (int k = 0; k < 5; ++k) {
    const Panel& panel = panels[k];
    const double x0 = margin + (k % 3) * (pw + margin + gap);
    const double y0 = 30 + (k / 3) * (ph + margin + gap);

    std::vector<double> vals;
    for (const auto& m : s.nodes) vals.push_back(panel.get(m));
    const double avg = panel.get(s.network);
    vals.push_back(avg);
    vals.push_back(panel.target);
    double lo, hi;
    if (panel.log) {
      double pos_min = panel.target;
      for (double v : vals)
        if (v > 0) pos_min = std::min(pos_min, v);
      lo = std::pow(10.0, std::floor(std::log10(pos_min)) - 0.2);
      hi = std::pow(10.0, std::ceil(std::log10(*std::max_element(vals.begin(), vals.end()))) + 0.2);
    } else {
      lo = 0;
      hi = 1.15 * *std::max_element(vals.begin(), vals.end());
      if (!(hi > 0)) hi = 1;
    }
    auto y_of = [&](double v) {
      double t;
      if (panel.log) {
        t = (std::log10(std::max(v, lo)) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
      } else {
        t = (v - lo) / (hi - lo);
      }
      return y0 + ph * (1 - t);
    };
    auto x_of = [&](int node) { return x0 + pw * (node + 0.5) / std::max(1, nodes); };

    o << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    text(o, x0 + pw / 2, y0 - 8, panel.title, "middle", 13);
    if (panel.log) {
      for (int e = static_cast<int>(std::ceil(std::log10(lo))); e <= std::floor(std::log10(hi)); ++e) {
        const double y = y_of(std::pow(10.0, e));
        line(o, x0 - 4, y, x0, y, "black");
        text(o, x0 - 6, y + 4, "1e" + std::to_string(e), "end");
      }
    } else {
      for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4;
        line(o, x0 - 4, y_of(v), x0, y_of(v), "black");
        text(o, x0 - 6, y_of(v) + 4, label(v), "end");
      }
    }
    const int tick = std::max(1, nodes / 10);
    for (int n = 0; n < nodes; n += tick) text(o, x_of(n), y0 + ph + 14, std::to_string(n + 1));
    text(o, x0 + pw / 2, y0 + ph + 30, "node");

    line(o, x0, y_of(panel.target), x0 + pw, y_of(panel.target), "#d9534f", " stroke-dasharray=\"6,4\"");
    line(o, x0, y_of(avg), x0 + pw, y_of(avg), "#2a9d3a");
    for (int n = 0; n < nodes; ++n) {
      const double v = panel.get(s.nodes[n]);
      o << "<circle cx=\"" << num(x_of(n)) << "\" cy=\"" << num(y_of(v)) << "\" r=\"4\" fill=\"none\" stroke=\""
        << "#1f4fa0\" stroke-width=\"1.5\"/>\n";
    }
  }

  const double lx = margin + 2 * (pw + margin + gap), ly = 30 + ph + margin + gap + 20;
  o << "<circle cx=\"" << num(lx + 7) << "\" cy=\"" << num(ly) << "\" r=\"4\" fill=\"none\" stroke=\"#1f4fa0\"/>\n";
  text(o, lx + 20, ly + 4, "single node", "start");
  line(o, lx, ly + 22, lx + 14, ly + 22, "#2a9d3a");
  text(o, lx + 20, ly + 26, "network average", "start");
  line(o, lx, ly + 44, lx + 14, ly + 44, "#d9534f", " stroke-dasharray=\"6,4\"");
  text(o, lx + 20, ly + 48, "constraint (N for ASN)", "start");
  text(o, lx, ly + 76, "runs " + std::to_string(s.runs) + ", seed " + std::to_string(s.seed), "start");
  o << "</svg>\n";
  return o.str();
}

}  // namespace sjde
