#pragma once

#include "propnet/tensor.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace propnet {

enum class Scenario { Cradle, String, Boxes };

enum class RelationType { Rigid = 0, Spring = 1, Collision = 2, FrictionSelf = 3, PairwiseBox = 4 };

inline constexpr int kRelationTypeCount = 5;
inline constexpr int kRelationParamWidth = 3;
inline constexpr int kRelationFeatureWidth = kRelationTypeCount + kRelationParamWidth;

/// Attribute slots shared by the cradle and string scenarios.
namespace attr {
inline constexpr int kMass = 0;
inline constexpr int kFlag = 1;    // pivot (cradle) or fixed end (string)
inline constexpr int kRadius = 2;  // ball radius (cradle) or obstacle radius (string)
inline constexpr int kWidth = 3;
}  // namespace attr

/// Relation parameter slots, per relation type.
namespace rparam {
inline constexpr int kRodLength = 0;       // Rigid
inline constexpr int kRestLength = 0;      // Spring
inline constexpr int kStiffness = 1;       // Spring
inline constexpr int kDamping = 2;         // Spring
inline constexpr int kContactRadius = 0;   // Collision
inline constexpr int kRestitution = 1;     // Collision
inline constexpr int kFriction = 0;        // FrictionSelf
}  // namespace rparam

std::string_view to_string(Scenario s);
Scenario scenario_from_string(std::string_view s);
std::string_view to_string(RelationType t);
RelationType relation_type_from_string(std::string_view s);

struct ObjectState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  std::vector<double> attributes;
  Vec2 external_force = Vec2::Zero();
};

/// Directed relation; effects flow from `sender` to `receiver`.
/// Indices are zero-based.
struct Relation {
  int receiver = 0;
  int sender = 0;
  RelationType type = RelationType::Rigid;
  std::array<double, kRelationParamWidth> params{};
};

struct DynamicsGraph {
  Scenario scenario = Scenario::Cradle;
  std::vector<ObjectState> objects;
  std::vector<Relation> relations;

  int num_objects() const { return static_cast<int>(objects.size()); }
  int num_relations() const { return static_cast<int>(relations.size()); }
  int attribute_width() const;
  int object_feature_width() const { return 6 + attribute_width(); }

  /// Throws std::invalid_argument on out-of-range indices, inconsistent
  /// attribute widths, non-finite values or self-loops on non-friction
  /// relations.
  void validate() const;

  int count(RelationType t) const;
};

/// N_i: the relations whose receiver is object i, plus dense gather maps.
struct Incidence {
  std::vector<std::vector<int>> incoming;
  std::vector<int> receivers;
  std::vector<int> senders;
};

Incidence build_incidence(const DynamicsGraph& g);

/// Fixed-width feature matrices. Object rows are
/// [position, velocity, attributes, external_force]; relation rows are
/// [one-hot type, params].
struct FlatGraph {
  Scenario scenario = Scenario::Cradle;
  Tensor objects;
  Tensor relations;
  Incidence incidence;
};

FlatGraph flatten(const DynamicsGraph& g);
DynamicsGraph unflatten(const FlatGraph& flat);

/// Objects whose state is imposed rather than predicted: cradle pivots,
/// the fixed string end and string obstacles.
bool is_pinned(const DynamicsGraph& g, int object);
std::vector<int> pinned_mask(const DynamicsGraph& g);

// ---------------------------------------------------------------------------
// Scenario constructors

struct CradleGeometry {
  double rod_length = 0.5;
  double ball_radius = 0.05;
  double gravity = 9.81;
  double restitution = 1.0;
  double ball_mass = 0.1;

  double pivot_spacing() const { return 2.0 * ball_radius; }
  Vec2 pivot(int i) const { return {pivot_spacing() * i, 0.0}; }
  void validate() const;
};

/// Objects 0..n-1 are balls hanging at rest, n..2n-1 their pivots.
/// Relations: 2n Rigid (ball<-pivot, pivot<-ball per ball), then
/// 2(n-1) Collision between neighbouring balls.
DynamicsGraph build_cradle_graph(int n, const CradleGeometry& geometry);

struct Obstacle {
  Vec2 center = Vec2::Zero();
  double radius = 0.05;
};

struct StringAttributes {
  double mass = 0.1;
  double stiffness = 50.0;
  double rest_length = 0.05;
  double damping = 0.05;
  double friction = 0.3;
};

/// Objects 0..n-1 are string masses (0 is the fixed end), followed by the
/// two obstacles. Relations: 2(n-1) Spring, 4n Collision, n FrictionSelf.
/// The masses are laid out straight along +x from `fixed_end`.
DynamicsGraph build_string_graph(int n, const std::vector<Obstacle>& obstacles, const Vec2& fixed_end,
                                 const StringAttributes& attributes = {});

/// n(n-1) PairwiseBox relations over the observable boxes.
DynamicsGraph build_box_graph(const std::vector<Vec2>& observable_positions,
                              const std::vector<Vec2>& observable_velocities = {});

// ---------------------------------------------------------------------------
// JSON: {scenario, objects:[{q,v,attr,p}], relations:[{u,v,type,params}]}

nlohmann::json to_json(const DynamicsGraph& g);
DynamicsGraph graph_from_json(const nlohmann::json& j);

}  // namespace propnet
