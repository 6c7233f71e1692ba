// Length-vs-quality scatter with AAD-probability colouring.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neurosteer/metrics.hpp"

namespace neurosteer::plot {

struct PlottedPoint {
  double window_s = 0.0;
  double x = 0.0;  // window_s plus jitter
  double si_sdri = 0.0;
  double aad_prob = 0.0;
};

// Jitter is drawn from `seed`, so the same rows give the same plot.
std::vector<PlottedPoint> layout(const std::vector<metrics::ScatterRow>& rows, uint64_t seed);

// Linear interpolation in a sampled viridis table; t is clamped to [0, 1].
std::string viridis_hex(double t);

std::string render_svg(const std::vector<PlottedPoint>& points);
std::string render_csv(const std::vector<PlottedPoint>& points);

}  // namespace neurosteer::plot
