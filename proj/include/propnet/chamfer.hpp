#pragma once

#include "propnet/autodiff.hpp"
#include "propnet/tensor.hpp"

#include <vector>

namespace propnet {

/// Symmetric squared Chamfer distance: mean over A of the squared distance
/// to the nearest point of B, plus the same from B to A. Throws
/// std::invalid_argument if either set is empty.
double chamfer(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

/// Same quantity on the tape for point sets stored as rows (n x d, m x d).
ad::Var chamfer(ad::Var a, ad::Var b);

}  // namespace propnet
