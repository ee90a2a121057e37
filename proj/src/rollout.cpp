#include "propnet/rollout.hpp"

#include <cmath>
#include <stdexcept>

namespace propnet {

namespace {

Tensor free_column(const Topology& topo) {
  Tensor t(topo.num_objects, 1);
  for (int i = 0; i < topo.num_objects; ++i) t(i, 0) = topo.pinned[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
  return t;
}

void require_finite(const Tensor& t, int step) {
  if (!t.allFinite()) throw NumericError("rollout state is not finite", step);
}

}  // namespace

Var with_forces(Var objects, Var forces) {
  const Eigen::Index d = objects.cols();
  return ad::concat_cols({ad::slice_cols(objects, 0, d - 2), forces});
}

std::vector<Var> rollout(Tape& tape, const DynamicsModel& model, Var objects0, Var relations, const Topology& topology,
                         int T, const ForceSchedule& forces, double dt) {
  if (T < 0) throw std::invalid_argument("rollout: negative horizon");
  std::vector<Var> states{objects0};
  Var free = tape.constant(free_column(topology));
  const Eigen::Index d = objects0.cols();
  for (int t = 0; t < T; ++t) {
    Var obj = states.back();
    if (forces) {
      Var f = forces(t);
      if (f.valid()) obj = with_forces(obj, f);
    }
    Var v = ad::mul_col(model.next_velocity(tape, {obj, relations, &topology}), free);
    require_finite(v.value(), t);
    Var q = ad::add(ad::slice_cols(obj, 0, 2), ad::scale(v, dt));
    states.push_back(ad::concat_cols({q, v, ad::slice_cols(obj, 4, d - 4)}));
  }
  return states;
}

std::vector<DynamicsGraph> rollout(const DynamicsModel& model, const DynamicsGraph& g0, int T,
                                   const std::vector<std::vector<Vec2>>& forces, double dt) {
  if (T < 0) throw std::invalid_argument("rollout: negative horizon");
  if (!forces.empty() && static_cast<int>(forces.size()) < T) {
    throw std::invalid_argument("rollout: need one force set per step");
  }
  std::vector<DynamicsGraph> out{g0};
  const Topology topo = topology_of(g0);
  Tape tape(model.params());
  for (int t = 0; t < T; ++t) {
    DynamicsGraph g = out.back();
    if (!forces.empty()) {
      const auto& f = forces[static_cast<std::size_t>(t)];
      if (static_cast<int>(f.size()) != g.num_objects()) throw std::invalid_argument("rollout: force count mismatch");
      for (int i = 0; i < g.num_objects(); ++i) g.objects[static_cast<std::size_t>(i)].external_force = f[static_cast<std::size_t>(i)];
      out.back() = g;
    }
    tape.clear();
    const FlatGraph flat = flatten(g);
    const Tensor v = model.next_velocity(tape, record(tape, flat, topo)).value();
    require_finite(v, t);
    for (int i = 0; i < g.num_objects(); ++i) {
      auto& o = g.objects[static_cast<std::size_t>(i)];
      if (topo.pinned[static_cast<std::size_t>(i)]) {
        o.velocity = Vec2::Zero();
        continue;
      }
      o.velocity = Vec2(v(i, 0), v(i, 1));
      o.position += dt * o.velocity;
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace propnet
