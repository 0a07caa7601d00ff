#include "trajdiff/plot.hpp"

#include "trajdiff/keyvalue.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace trajdiff {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& anchor = "middle",
                 int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\" font-size=\"" +
         std::to_string(size) + "\">" + escape(s) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& style) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
         "\" " + style + "/>\n";
}

// Axis frame with y ticks over [0, ymax]; returns the y mapping.
struct Frame {
  double left = 60, top = 40, width = 420, height = 260;
  double ymax = 1.0;
  double y(double v) const { return top + height * (1.0 - v / ymax); }
};

std::string axes(const Frame& f, const std::string& y_label) {
  std::string s;
  s += line(f.left, f.top, f.left, f.top + f.height, "stroke=\"black\"");
  s += line(f.left, f.top + f.height, f.left + f.width, f.top + f.height, "stroke=\"black\"");
  for (int k = 0; k <= 5; ++k) {
    const double v = f.ymax * k / 5.0;
    s += line(f.left - 4, f.y(v), f.left, f.y(v), "stroke=\"black\"");
    s += line(f.left, f.y(v), f.left + f.width, f.y(v), "stroke=\"#dddddd\"");
    s += text(f.left - 8, f.y(v) + 4, num(v), "end", 11);
  }
  s += "<text transform=\"translate(16 " + num(f.top + f.height / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(y_label) + "</text>\n";
  return s;
}

}  // namespace

std::string svg_lambda_curve(const std::vector<double>& lambdas, const std::vector<double>& success,
                             const std::vector<double>& se, std::optional<double> baseline) {
  if (lambdas.size() != success.size() || lambdas.size() != se.size())
    throw std::invalid_argument("svg_lambda_curve: series lengths differ");
  Frame f;
  std::ostringstream s;
  s << header(f.left + f.width + 30, f.top + f.height + 60);
  s << text(f.left + f.width / 2, 22, "Success rate against curiosity weight", "middle", 14);
  s << axes(f, "success rate");
  const auto n = lambdas.size();
  auto x = [&](std::size_t i) { return f.left + f.width * (static_cast<double>(i) + 0.5) / static_cast<double>(n); };
  for (std::size_t i = 0; i < n; ++i) s << text(x(i), f.top + f.height + 18, format_double(lambdas[i]));
  s << text(f.left + f.width / 2, f.top + f.height + 40, "lambda");
  if (baseline) {
    s << line(f.left, f.y(*baseline), f.left + f.width, f.y(*baseline),
              "stroke=\"red\" stroke-width=\"1.5\" stroke-dasharray=\"2 4\"");
    s << text(f.left + f.width - 4, f.y(*baseline) - 6, "reward only", "end", 11);
  }
  std::string pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = std::max(0.0, success[i] - se[i]), hi = std::min(1.0, success[i] + se[i]);
    s << line(x(i), f.y(lo), x(i), f.y(hi), "stroke=\"#1f4e9c\"");
    pts += num(x(i)) + "," + num(f.y(success[i])) + " ";
  }
  s << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\"/>\n";
  for (std::size_t i = 0; i < n; ++i)
    s << "<circle cx=\"" << num(x(i)) << "\" cy=\"" << num(f.y(success[i])) << "\" r=\"3.5\" fill=\"#1f4e9c\"/>\n";
  s << "</svg>\n";
  return s.str();
}

std::string svg_trajectories(const MazeSpec& maze, const std::vector<TrajectoryPanel>& panels) {
  const double size = 300, pad = 30, title = 30;
  std::ostringstream s;
  s << header(pad + panels.size() * (size + pad), title + size + pad);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double ox = pad + static_cast<double>(p) * (size + pad), oy = title;
    auto px = [&](double x) { return ox + size * x; };
    auto py = [&](double y) { return oy + size * (1.0 - y); };
    s << text(ox + size / 2, 20, panels[p].title, "middle", 14);
    s << "<rect x=\"" << num(ox) << "\" y=\"" << num(oy) << "\" width=\"" << num(size) << "\" height=\"" << num(size)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    const double cw = maze.cell_width(), ch = maze.cell_height();
    for (int r = 0; r < maze.rows; ++r)
      for (int c = 0; c < maze.cols; ++c) {
        const bool wall = maze.is_wall({c, r});
        const bool start = std::find(maze.start_cells.begin(), maze.start_cells.end(), Cell{c, r}) != maze.start_cells.end();
        if (!wall && !start) continue;
        s << "<rect x=\"" << num(px(c * cw)) << "\" y=\"" << num(py((r + 1) * ch)) << "\" width=\""
          << num(size * cw) << "\" height=\"" << num(size * ch) << "\" fill=\"" << (wall ? "#555555" : "#e8f0ff")
          << "\"/>\n";
      }
    s << "<circle cx=\"" << num(px(maze.goal_center.x())) << "\" cy=\"" << num(py(maze.goal_center.y()))
      << "\" r=\"" << num(size * maze.goal_radius) << "\" fill=\"#ffd54f\" stroke=\"#b28900\"/>\n";
    for (std::size_t k = 0; k < panels[p].paths.size(); ++k) {
      const auto& path = panels[p].paths[k];
      if (path.empty()) continue;
      const bool ok = k < panels[p].success.size() && panels[p].success[k];
      std::string pts;
      for (const auto& v : path) pts += num(px(v.x())) + "," + num(py(v.y())) + " ";
      s << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << (ok ? "#2e7d32" : "#c62828")
        << "\" stroke-opacity=\"0.6\" stroke-width=\"1.2\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_bars(const std::vector<std::string>& labels, const std::vector<double>& values,
                     const std::string& title, const std::string& y_label) {
  if (labels.size() != values.size()) throw std::invalid_argument("svg_bars: series lengths differ");
  Frame f;
  double top = 0.0;
  for (double v : values) top = std::max(top, v);
  f.ymax = top > 0 ? std::ceil(top * 10.0) / 10.0 : 1.0;
  std::ostringstream s;
  s << header(f.left + f.width + 30, f.top + f.height + 60);
  s << text(f.left + f.width / 2, 22, title, "middle", 14);
  s << axes(f, y_label);
  const auto n = labels.size();
  const double slot = f.width / static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = f.left + slot * static_cast<double>(i) + slot * 0.2;
    s << "<rect x=\"" << num(x) << "\" y=\"" << num(f.y(values[i])) << "\" width=\"" << num(slot * 0.6)
      << "\" height=\"" << num(f.top + f.height - f.y(values[i])) << "\" fill=\"#5c85d6\"/>\n";
    s << text(x + slot * 0.3, f.y(values[i]) - 4, num(values[i]), "middle", 11);
    s << text(x + slot * 0.3, f.top + f.height + 18, labels[i]);
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace trajdiff
