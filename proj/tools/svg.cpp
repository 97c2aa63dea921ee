#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "potlab/numfmt.hpp"

namespace potlab::cli {

namespace {
constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  // two decimals is plenty for coordinates
  return fmt_double(std::round(v * 100.0) / 100.0);
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

std::string tick_label(double v, bool log) {
  char buf[32];
  if (log) std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(v)));
  else std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}
}  // namespace

std::string line_chart(const ChartSpec& spec, const std::vector<Series>& series) {
  auto tx = [&](double v) { return spec.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.logy ? std::log10(v) : v; };
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.logx || x > 0) && (!spec.logy || y > 0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (ok(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return T + ph - (v - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(L) << "\" y=\"24\" font-size=\"14\">" << escape(spec.title) << "</text>\n";
  o << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double vx = x0 + (x1 - x0) * k / 4.0, vy = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << num(px(vx)) << "\" y=\"" << num(T + ph + 16) << "\" text-anchor=\"middle\">"
      << tick_label(vx, spec.logx) << "</text>\n";
    o << "<text x=\"" << num(L - 6) << "\" y=\"" << num(py(vy) + 4) << "\" text-anchor=\"end\">"
      << tick_label(vy, spec.logy) << "</text>\n";
  }
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(H - 10) << "\" text-anchor=\"middle\">" << escape(spec.xlabel)
    << "</text>\n";
  o << "<text transform=\"translate(16," << num(T + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(spec.ylabel) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = kColors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (ok(s.x[i], s.y[i])) o << num(px(tx(s.x[i]))) << ',' << num(py(ty(s.y[i]))) << ' ';
    o << "\"/>\n";
    o << "<text x=\"" << num(L + pw + 10) << "\" y=\"" << num(T + 14 + 16.0 * k) << "\" fill=\"" << col << "\">"
      << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace potlab::cli
