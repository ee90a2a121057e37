#include "propnet/chamfer.hpp"

#include <limits>
#include <stdexcept>

namespace propnet {

double chamfer(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: point sets must be nonempty");
  auto directed = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double total = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return directed(a, b) + directed(b, a);
}

ad::Var chamfer(ad::Var a, ad::Var b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("chamfer: point sets must be nonempty");
  ad::Var d = ad::pairwise_sq_dist(a, b);
  return ad::add(ad::mean(ad::row_min(d)), ad::mean(ad::column_min(d)));
}

}  // namespace propnet
