#pragma once

#include "propnet/tensor.hpp"

#include <string>
#include <vector>

namespace propnet {

/// One set of polylines and markers drawn in a single colour.
struct SvgLayer {
  std::vector<std::vector<Vec2>> polylines;
  std::vector<Vec2> points;
  std::string color = "black";
  double opacity = 1.0;
  double stroke_width = 1.5;
  double point_radius = 3.0;
  std::vector<double> circle_radii;  // world-unit circles at `points` when non-empty
};

/// Layers drawn in order into a square canvas that fits every coordinate,
/// y pointing up.
std::string render_svg(const std::vector<SvgLayer>& layers, int size = 480);

/// Per-object polylines from a trajectory stored as time x object.
std::vector<std::vector<Vec2>> object_tracks(const std::vector<std::vector<Vec2>>& frames);

}  // namespace propnet
