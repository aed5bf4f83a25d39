#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "doerl/experiment.hpp"

namespace doerl {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

}  // namespace

std::string comparison_svg(const std::vector<ComparisonRow>& rows) {
  const double width = 960;
  const double height = 420;
  const double top = 40;
  const double bottom = 360;
  const double left1 = 70;
  const double right1 = 560;
  const double left2 = 640;
  const double right2 = 930;

  long long max_t = 1;
  double max_regret = 1e-12;
  long long max_calls = 1;
  for (const auto& r : rows) {
    max_t = std::max(max_t, r.rounds);
    if (!r.mean_curve.empty()) max_regret = std::max(max_regret, r.mean_curve.back());
    max_calls = std::max({max_calls, r.estimation_calls, r.planning_calls});
  }
  const double lx_max = std::log10(static_cast<double>(max_t));
  auto x_of = [&](double t) { return left1 + (right1 - left1) * (lx_max > 0 ? std::log10(t) / lx_max : 0.0); };
  auto y_of = [&](double v) { return bottom - (bottom - top) * v / max_regret; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left1 << "\" y=\"24\" font-size=\"13\">cumulative regret (mean over seeds)</text>\n";
  svg << "<text x=\"" << left2 << "\" y=\"24\" font-size=\"13\">oracle calls (log scale)</text>\n";
  svg << "<line x1=\"" << left1 << "\" y1=\"" << bottom << "\" x2=\"" << right1 << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left1 << "\" y1=\"" << top << "\" x2=\"" << left1 << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  for (int d = 0; d <= static_cast<int>(std::floor(lx_max)); ++d) {
    const double x = x_of(std::pow(10.0, d));
    svg << "<line x1=\"" << num(x) << "\" y1=\"" << bottom << "\" x2=\"" << num(x) << "\" y2=\"" << bottom + 4
        << "\" stroke=\"black\"/><text x=\"" << num(x) << "\" y=\"" << bottom + 16
        << "\" text-anchor=\"middle\">1e" << d << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = max_regret * k / 4.0;
    svg << "<text x=\"" << left1 - 6 << "\" y=\"" << num(y_of(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
        << "</text>\n";
  }
  svg << "<text x=\"" << (left1 + right1) / 2 << "\" y=\"" << bottom + 34 << "\" text-anchor=\"middle\">round t</text>\n";

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const char* color = kPalette[i % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const auto n = r.mean_curve.size();
    long long last = 0;
    for (int k = 0; k <= 300 && n > 0; ++k) {
      const auto t = static_cast<long long>(std::llround(std::pow(static_cast<double>(n), k / 300.0)));
      if (t <= last) continue;
      last = t;
      svg << num(x_of(static_cast<double>(t))) << ',' << num(y_of(r.mean_curve[t - 1])) << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << left1 + 8 << "\" y=\"" << top + 14 * (i + 1) << "\" fill=\"" << color << "\">"
        << escape(r.agent) << " T=" << r.rounds << "</text>\n";
  }

  const double lc_max = std::log10(static_cast<double>(max_calls)) + 0.5;
  const double slot = (right2 - left2) / std::max<std::size_t>(rows.size(), 1);
  svg << "<line x1=\"" << left2 << "\" y1=\"" << bottom << "\" x2=\"" << right2 << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const char* color = kPalette[i % std::size(kPalette)];
    const double bar = slot * 0.35;
    const double x0 = left2 + slot * i + slot * 0.1;
    const long long calls[2] = {r.estimation_calls, r.planning_calls};
    for (int b = 0; b < 2; ++b) {
      const double h = (bottom - top) * std::log10(std::max<double>(calls[b], 1.0) + 1.0) / lc_max;
      const double x = x0 + b * bar;
      svg << "<rect x=\"" << num(x) << "\" y=\"" << num(bottom - h) << "\" width=\"" << num(bar * 0.9)
          << "\" height=\"" << num(h) << "\" fill=\"" << color << "\" fill-opacity=\"" << (b == 0 ? "0.9" : "0.5")
          << "\"/>\n";
      svg << "<text x=\"" << num(x + bar * 0.45) << "\" y=\"" << num(bottom - h - 4)
          << "\" text-anchor=\"middle\">" << calls[b] << "</text>\n";
    }
    svg << "<text x=\"" << num(x0 + bar) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">"
        << escape(r.agent) << "</text>\n";
  }
  svg << "<text x=\"" << (left2 + right2) / 2 << "\" y=\"" << bottom + 34
      << "\" text-anchor=\"middle\">solid: estimation, light: planning</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace doerl
