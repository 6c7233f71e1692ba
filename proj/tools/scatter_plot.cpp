#include "scatter_plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "neurosteer/dsp.hpp"

namespace neurosteer::plot {

namespace {

// viridis sampled at t = 0, 0.125, ..., 1.
constexpr std::array<std::array<double, 3>, 9> kViridis = {{{68, 1, 84},
                                                             {71, 44, 122},
                                                             {59, 81, 139},
                                                             {44, 113, 142},
                                                             {33, 144, 141},
                                                             {39, 173, 129},
                                                             {92, 200, 99},
                                                             {170, 220, 50},
                                                             {253, 231, 37}}};

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 110, kTop = 30, kBottom = 60;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::vector<PlottedPoint> layout(const std::vector<metrics::ScatterRow>& rows, uint64_t seed) {
  std::mt19937_64 rng = dsp::stream(seed, {0x5CA7});
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  std::vector<PlottedPoint> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.window_s, r.window_s + jitter(rng), r.si_sdri_target, r.aad_prob});
  return out;
}

std::string viridis_hex(double t) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(kViridis.size() - 1);
  const auto i = std::min(static_cast<size_t>(t), kViridis.size() - 2);
  const double f = t - static_cast<double>(i);
  char buf[8];
  int c[3];
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<int>(std::lround(kViridis[i][static_cast<size_t>(k)] * (1 - f) +
                                        kViridis[i + 1][static_cast<size_t>(k)] * f));
  }
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string render_svg(const std::vector<PlottedPoint>& points) {
  double x_lo = 0.5, x_hi = 15.5, y_lo = 0.0, y_hi = 0.0;
  for (const auto& p : points) {
    x_lo = std::min(x_lo, std::floor(p.x));
    x_hi = std::max(x_hi, std::ceil(p.x));
    y_lo = std::min(y_lo, p.si_sdri);
    y_hi = std::max(y_hi, p.si_sdri);
  }
  y_lo = std::floor(y_lo / 5.0) * 5.0;
  y_hi = std::ceil(y_hi / 5.0) * 5.0;
  if (y_hi <= y_lo) y_hi = y_lo + 5.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<defs><linearGradient id=\"viridis\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">\n";
  for (size_t i = 0; i < kViridis.size(); ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(kViridis.size() - 1);
    o << "<stop offset=\"" << num(t) << "\" stop-color=\"" << viridis_hex(t) << "\"/>\n";
  }
  o << "</linearGradient></defs>\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  o << "<g class=\"axes\" stroke=\"black\">\n";
  o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
    << num(kTop + ph) << "\"/>\n";
  o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
    << num(kTop + ph) << "\"/>\n";
  if (y_lo < 0.0 && y_hi > 0.0) {
    o << "<line stroke-dasharray=\"4 3\" stroke=\"gray\" x1=\"" << num(kLeft) << "\" y1=\"" << num(sy(0)) << "\" x2=\""
      << num(kLeft + pw) << "\" y2=\"" << num(sy(0)) << "\"/>\n";
  }
  o << "</g>\n<g class=\"ticks\">\n";
  for (int x = static_cast<int>(std::ceil(x_lo)); x <= static_cast<int>(x_hi); ++x) {
    o << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\">" << x
      << "</text>\n";
  }
  for (double y = y_lo; y <= y_hi + 1e-9; y += 5.0) {
    o << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">" << num(y)
      << "</text>\n";
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 15)
    << "\" text-anchor=\"middle\">signal length (s)</text>\n";
  o << "<text transform=\"translate(18 " << num(kTop + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">SI-SDRi (dB)</text>\n";
  o << "</g>\n<g class=\"marks\">\n";
  for (const auto& p : points) {
    o << "<circle class=\"mark\" cx=\"" << num(sx(p.x)) << "\" cy=\"" << num(sy(p.si_sdri)) << "\" r=\"3\" fill=\""
      << viridis_hex(p.aad_prob) << "\" fill-opacity=\"0.8\"/>\n";
  }
  o << "</g>\n<g class=\"colorbar\">\n";
  const double cb_x = kLeft + pw + 30;
  o << "<rect x=\"" << num(cb_x) << "\" y=\"" << num(kTop) << "\" width=\"16\" height=\"" << num(ph)
    << "\" fill=\"url(#viridis)\" stroke=\"black\"/>\n";
  for (double t : {0.0, 0.5, 1.0}) {
    o << "<text x=\"" << num(cb_x + 22) << "\" y=\"" << num(kTop + (1 - t) * ph + 4) << "\">" << num(t) << "</text>\n";
  }
  o << "<text transform=\"translate(" << num(cb_x + 62) << " " << num(kTop + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">AAD probability</text>\n";
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string render_csv(const std::vector<PlottedPoint>& points) {
  std::ostringstream o;
  o << "window_s,x,si_sdri_target,aad_prob\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.window_s, p.x, p.si_sdri, p.aad_prob);
    o << buf;
  }
  return o.str();
}

}  // namespace neurosteer::plot
