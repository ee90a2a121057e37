#pragma once

#include "propnet/models.hpp"
#include "propnet/simulators.hpp"

namespace propnet {

/// Ground-truth cradle dynamics recorded on a tape. Angles are recovered
/// from ball and pivot positions, angular velocities from the chord
/// velocity; impacts enter as the linear map chosen by resolve_impacts on
/// the forward values. Rod length, ball radius and restitution are read
/// from the graph.
class CradleOracle : public DynamicsModel {
 public:
  explicit CradleOracle(double gravity = 9.81, double dt = kDefaultDt) : gravity_(gravity), dt_(dt) {}
  Scenario scenario() const override { return Scenario::Cradle; }
  std::string name() const override { return "CradleOracle"; }
  Var next_velocity(Tape& tape, const GraphInputs& in) const override;

 private:
  double gravity_;
  double dt_;
};

/// Ground-truth string dynamics recorded on a tape, with every physical
/// attribute (mass, stiffness, rest length, damping, friction, obstacle
/// radius) read from the graph features so gradients reach them.
class StringOracle : public DynamicsModel {
 public:
  explicit StringOracle(double obstacle_stiffness = 1000.0, int substeps = 4, double dt = kDefaultDt)
      : obstacle_stiffness_(obstacle_stiffness), substeps_(substeps), dt_(dt) {}
  Scenario scenario() const override { return Scenario::String; }
  std::string name() const override { return "StringOracle"; }
  Var next_velocity(Tape& tape, const GraphInputs& in) const override;

 private:
  double obstacle_stiffness_;
  int substeps_;
  double dt_;
};

}  // namespace propnet
