#pragma once

#include "propnet/dataset.hpp"
#include "propnet/models.hpp"
#include "propnet/simulators.hpp"

#include <random>

namespace fixtures {

using namespace propnet;

/// Zero means and unit deviations: the model sees raw features.
inline void identity_norm(Model& m) {
  auto& n = m.norm();
  n.object_mean = RowVector::Zero(m.object_width());
  n.object_std = RowVector::Ones(m.object_width());
  n.relation_mean = RowVector::Zero(m.relation_width());
  n.relation_std = RowVector::Ones(m.relation_width());
  n.target_mean = RowVector::Zero(2);
  n.target_std = RowVector::Ones(2);
  n.action_mean = RowVector::Zero(4);
  n.action_std = RowVector::Ones(4);
}

inline Model small_model(ModelKind kind, Scenario scenario, int L = 2, std::uint64_t seed = 1) {
  ModelSpec spec = ModelSpec::defaults(kind).with_widths(24, 16);
  if (kind != ModelKind::IN) spec.L = L;
  if (kind == ModelKind::LatentPropNet) spec.keypoints = 4;
  const int ow = scenario == Scenario::Boxes ? 6 : 9;
  Model m(spec, scenario, ow, kRelationFeatureWidth, seed);
  identity_norm(m);
  return m;
}

inline DynamicsGraph random_cradle(int balls, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-0.6, 0.6), rate(-2.0, 2.0);
  CradleState now, before;
  for (int i = 0; i < balls; ++i) {
    before.theta.push_back(angle(rng));
    before.omega.push_back(0.0);
    now.theta.push_back(before.theta.back() + 0.02 * rate(rng));
    now.omega.push_back(rate(rng));
  }
  return cradle_graph(now, CradleGeometry{}, &before);
}

inline DynamicsGraph random_string(int masses, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> heading(0.0, 6.283185307179586);
  const double h = heading(rng);
  const Vec2 dir(std::cos(h), std::sin(h));
  StringParams p;
  StringState s = straight_string(masses, Vec2::Zero(), dir, p.attributes.rest_length);
  p.obstacles = place_string_obstacles(s, dir, p.attributes.rest_length, rng);
  std::vector<Vec2> forces;
  for (int i = 0; i < masses; ++i) {
    s.positions[static_cast<std::size_t>(i)] += 0.01 * Vec2(n01(rng), n01(rng));
    if (i > 0) s.velocities[static_cast<std::size_t>(i)] = 0.3 * Vec2(n01(rng), n01(rng));
    forces.push_back(i > 0 ? Vec2(0.3 * n01(rng), 0.3 * n01(rng)) : Vec2::Zero());
  }
  return string_graph(s, p, forces);
}

inline DynamicsGraph random_boxes(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  std::vector<Vec2> p;
  for (int i = 0; i < n; ++i) p.emplace_back(0.2 * n01(rng), 0.2 * n01(rng));
  return build_box_graph(p);
}

inline DynamicsGraph random_graph(Scenario s, std::mt19937_64& rng) {
  switch (s) {
    case Scenario::Cradle: return random_cradle(5, rng);
    case Scenario::String: return random_string(8, rng);
    case Scenario::Boxes: return random_boxes(5, rng);
  }
  return {};
}

/// Output of `model` on `g` in normalised units.
inline Tensor forward(const Model& model, const DynamicsGraph& g) {
  Tape tape(&model.store());
  const Topology topo = topology_of(g);
  return model.forward_normalized(tape, record(tape, flatten(g), topo)).value();
}

}  // namespace fixtures
