#include "advbench/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "advbench/errors.hpp"

namespace advbench {

namespace {

constexpr double kW = 640, kH = 420;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string plot_curves(const std::vector<RobustnessCurve>& curves, PlotMetric metric, const std::string& title) {
  if (curves.empty()) throw InvalidInput("nothing to plot");
  double x0 = curves.front().points.empty() ? 0.0 : curves.front().points.front().x;
  double x1 = x0;
  for (const auto& c : curves) {
    if (c.points.empty()) throw InvalidInput("curve without points");
    for (const auto& p : c.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
    }
  }
  if (x1 == x0) x1 = x0 + 1.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - y) * ph; };

  std::set<std::string> defenses;
  for (const auto& c : curves) defenses.insert(c.defense);
  const bool by_defense = defenses.size() == curves.size();

  const RobustnessCurve& head = curves.front();
  std::string xlabel = head.kind == CurveKind::budget ? "perturbation budget (" + to_string(head.norm) + ")"
                                                      : "attack strength";
  std::string ylabel = metric == PlotMetric::accuracy ? "accuracy" : "attack success rate";
  ylabel += " (" + to_string(head.goal) + ")";

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kW) + "\" height=\"" + fmt(kH) +
       "\" viewBox=\"0 0 " + fmt(kW) + " " + fmt(kH) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(kW) + "\" height=\"" + fmt(kH) + "\" fill=\"white\"/>\n";
  if (!title.empty())
    s += "<text x=\"" + fmt(kLeft) + "\" y=\"24\" font-size=\"14\">" + escape(title) + "</text>\n";

  s += "<g class=\"axes\" stroke=\"#333\" fill=\"none\">\n";
  s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(sy(0)) + "\" x2=\"" + fmt(kLeft + pw) + "\" y2=\"" +
       fmt(sy(0)) + "\"/>\n";
  s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(sy(0)) + "\" x2=\"" + fmt(kLeft) + "\" y2=\"" + fmt(sy(1)) +
       "\"/>\n";
  s += "</g>\n<g class=\"ticks\" fill=\"#333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    s += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(sy(v) + 4) + "\" text-anchor=\"end\">" + tick(v) +
         "</text>\n";
    const double xv = x0 + (x1 - x0) * v;
    s += "<text x=\"" + fmt(sx(xv)) + "\" y=\"" + fmt(sy(0) + 18) + "\" text-anchor=\"middle\">" + tick(xv) +
         "</text>\n";
  }
  s += "</g>\n";
  s += "<text class=\"xlabel\" x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kH - 16) +
       "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text class=\"ylabel\" x=\"18\" y=\"" + fmt(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt(kTop + ph / 2) + ")\">" + escape(ylabel) + "</text>\n";

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (const auto& p : c.points) {
      if (!pts.empty()) pts += ' ';
      pts += fmt(sx(p.x)) + "," + fmt(sy(metric == PlotMetric::accuracy ? p.acc : p.asr));
    }
    s += "<polyline class=\"curve\" fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  }

  s += "<g class=\"legend\">\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const double y = kTop + 10 + 20.0 * static_cast<double>(k);
    const double lx = kLeft + pw + 16;
    const std::string label = by_defense ? c.defense : c.attack + " / " + c.defense;
    s += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(lx + 20) + "\" y2=\"" + fmt(y) +
         "\" stroke=\"" + kPalette[k % std::size(kPalette)] + "\" stroke-width=\"2\"/>\n";
    s += "<text class=\"entry\" x=\"" + fmt(lx + 26) + "\" y=\"" + fmt(y + 4) + "\">" + escape(label) + "</text>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

}  // namespace advbench
