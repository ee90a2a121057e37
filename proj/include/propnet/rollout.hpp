#pragma once

#include "propnet/models.hpp"

#include <functional>
#include <vector>

namespace propnet {

/// External forces for step t (|O| x 2). Returning an invalid Var keeps the
/// forces already stored in the object features.
using ForceSchedule = std::function<Var(int t)>;

/// Rolls `model` forward T steps on the tape. Returns the object features
/// for t = 0..T; element t+1 carries the integrated positions
/// q + dt * v_hat, the predicted velocities v_hat and the forces applied
/// during step t. Pinned objects keep their state. Throws NumericError
/// naming the step at which the state stops being finite.
std::vector<Var> rollout(Tape& tape, const DynamicsModel& model, Var objects0, Var relations, const Topology& topology,
                         int T, const ForceSchedule& forces = {}, double dt = kDefaultDt);

/// Plain rollout on graphs. `forces[t]`, when present, holds one external
/// force per object for step t; otherwise the forces stored in each graph
/// are carried forward. Returns T + 1 graphs starting with g0.
std::vector<DynamicsGraph> rollout(const DynamicsModel& model, const DynamicsGraph& g0, int T,
                                   const std::vector<std::vector<Vec2>>& forces = {}, double dt = kDefaultDt);

/// Object features with the external-force columns replaced by `forces`.
Var with_forces(Var objects, Var forces);

}  // namespace propnet
