#include "propnet/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

namespace propnet {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<SvgLayer>& layers, int size) {
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  auto extend = [&](const Vec2& p, double r) {
    lo_x = std::min(lo_x, p.x() - r);
    hi_x = std::max(hi_x, p.x() + r);
    lo_y = std::min(lo_y, p.y() - r);
    hi_y = std::max(hi_y, p.y() + r);
  };
  for (const auto& layer : layers) {
    for (const auto& line : layer.polylines) {
      for (const auto& p : line) extend(p, 0.0);
    }
    for (std::size_t i = 0; i < layer.points.size(); ++i) {
      extend(layer.points[i], i < layer.circle_radii.size() ? layer.circle_radii[i] : 0.0);
    }
  }
  if (!(lo_x <= hi_x)) lo_x = lo_y = -1.0, hi_x = hi_y = 1.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6});
  const double margin = 0.05 * span;
  const double scale = size / (span + 2.0 * margin);
  auto X = [&](double x) { return num((x - lo_x + margin) * scale); };
  auto Y = [&](double y) { return num((hi_y - y + margin) * scale); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
      << size << ' ' << size << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& layer : layers) {
    out << "<g stroke=\"" << layer.color << "\" fill=\"" << layer.color << "\" opacity=\"" << num(layer.opacity)
        << "\">\n";
    for (const auto& line : layer.polylines) {
      if (line.empty()) continue;
      out << "<polyline fill=\"none\" stroke-width=\"" << num(layer.stroke_width) << "\" points=\"";
      for (std::size_t i = 0; i < line.size(); ++i) out << (i ? " " : "") << X(line[i].x()) << ',' << Y(line[i].y());
      out << "\"/>\n";
    }
    for (std::size_t i = 0; i < layer.points.size(); ++i) {
      const double r = i < layer.circle_radii.size() ? layer.circle_radii[i] * scale : layer.point_radius;
      out << "<circle cx=\"" << X(layer.points[i].x()) << "\" cy=\"" << Y(layer.points[i].y()) << "\" r=\"" << num(r)
          << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<std::vector<Vec2>> object_tracks(const std::vector<std::vector<Vec2>>& frames) {
  std::vector<std::vector<Vec2>> tracks;
  for (const auto& frame : frames) {
    if (tracks.size() < frame.size()) tracks.resize(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) tracks[i].push_back(frame[i]);
  }
  return tracks;
}

}  // namespace propnet
