#include <doctest.h>

#include "propnet/graph.hpp"

#include <algorithm>
#include <random>

using namespace propnet;

namespace {

std::vector<Obstacle> two_obstacles() { return {{Vec2(0.2, 0.1), 0.05}, {Vec2(0.4, -0.1), 0.06}}; }

struct Counts {
  int objects, relations;
};

// Closed-form counts written out independently of the constructors.
Counts cradle_counts(int n) { return {2 * n, 2 * n + 2 * (n - 1)}; }
Counts string_counts(int n) { return {n + 2, 2 * (n - 1) + 4 * n + n}; }
Counts box_counts(int n) { return {n, n * (n - 1)}; }

}  // namespace

TEST_CASE("cradle graph counts") {
  const auto g5 = build_cradle_graph(5, {});
  CHECK(g5.num_objects() == 10);
  CHECK(g5.num_relations() == 18);
  CHECK(g5.count(RelationType::Rigid) == 10);
  CHECK(g5.count(RelationType::Collision) == 8);

  const auto g1 = build_cradle_graph(1, {});
  CHECK(g1.num_objects() == 2);
  CHECK(g1.count(RelationType::Rigid) == 2);
  CHECK(g1.count(RelationType::Collision) == 0);

  const auto g3 = build_cradle_graph(3, {});
  CHECK(g3.num_objects() == 6);
  CHECK(g3.num_relations() == 10);

  CHECK_THROWS_AS(build_cradle_graph(0, {}), std::invalid_argument);
}

TEST_CASE("cradle pivots are flagged, fixed and spaced by one diameter") {
  CradleGeometry geo;
  const auto g = build_cradle_graph(4, geo);
  for (int i = 0; i < 4; ++i) {
    const auto& pivot = g.objects[static_cast<std::size_t>(4 + i)];
    CHECK(pivot.attributes[attr::kFlag] == 1.0);
    CHECK(pivot.velocity.norm() == 0.0);
    CHECK(is_pinned(g, 4 + i));
    CHECK_FALSE(is_pinned(g, i));
    CHECK(pivot.position.x() == doctest::Approx(2.0 * geo.ball_radius * i));
  }
}

TEST_CASE("string graph counts") {
  const auto g15 = build_string_graph(15, two_obstacles(), Vec2::Zero());
  CHECK(g15.num_objects() == 17);
  CHECK(g15.num_relations() == 103);
  CHECK(g15.count(RelationType::Spring) == 28);
  CHECK(g15.count(RelationType::Collision) == 60);
  CHECK(g15.count(RelationType::FrictionSelf) == 15);

  const auto g1 = build_string_graph(1, two_obstacles(), Vec2::Zero());
  CHECK(g1.num_objects() == 3);
  CHECK(g1.num_relations() == 5);

  const auto g10 = build_string_graph(10, two_obstacles(), Vec2::Zero());
  CHECK(g10.num_objects() == 12);
  CHECK(g10.num_relations() == 68);

  CHECK(g15.objects[0].attributes[attr::kFlag] == 1.0);
  CHECK_THROWS_AS(build_string_graph(5, {{Vec2::Zero(), 0.1}}, Vec2::Zero()), std::invalid_argument);
}

TEST_CASE("box graph counts") {
  CHECK(build_box_graph(std::vector<Vec2>(4, Vec2::Zero())).num_relations() == 12);
  CHECK(build_box_graph({Vec2::Zero()}).num_relations() == 0);
  CHECK(build_box_graph(std::vector<Vec2>(6, Vec2::Zero())).num_relations() == 30);
  const auto empty = build_box_graph({});
  CHECK(empty.num_objects() == 0);
  CHECK(empty.num_relations() == 0);
  CHECK(build_box_graph({Vec2::Zero()}).attribute_width() == 0);
}

TEST_CASE("constructor counts match the closed forms for n in 1..30") {
  for (int n = 1; n <= 30; ++n) {
    const auto c = build_cradle_graph(n, {});
    CHECK(c.num_objects() == cradle_counts(n).objects);
    CHECK(c.num_relations() == cradle_counts(n).relations);
    const auto s = build_string_graph(n, two_obstacles(), Vec2::Zero());
    CHECK(s.num_objects() == string_counts(n).objects);
    CHECK(s.num_relations() == string_counts(n).relations);
    const auto b = build_box_graph(std::vector<Vec2>(static_cast<std::size_t>(n), Vec2::Zero()));
    CHECK(b.num_objects() == box_counts(n).objects);
    CHECK(b.num_relations() == box_counts(n).relations);
  }
}

TEST_CASE("relation invariants: only friction relations are self-loops") {
  for (const auto& g : {build_cradle_graph(5, {}), build_string_graph(7, two_obstacles(), Vec2::Zero()),
                        build_box_graph(std::vector<Vec2>(5, Vec2::Zero()))}) {
    for (const auto& r : g.relations) {
      CHECK((r.receiver == r.sender) == (r.type == RelationType::FrictionSelf));
      CHECK(r.receiver >= 0);
      CHECK(r.receiver < g.num_objects());
    }
  }
  auto bad = build_cradle_graph(2, {});
  bad.relations[0].sender = bad.relations[0].receiver;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto out = build_cradle_graph(2, {});
  out.relations[0].receiver = 99;
  CHECK_THROWS_AS(out.validate(), std::invalid_argument);
  auto nan = build_cradle_graph(2, {});
  nan.objects[0].velocity.x() = std::nan("");
  CHECK_THROWS_AS(nan.validate(), std::invalid_argument);
}

TEST_CASE("flatten shapes and row layout") {
  const auto c1 = flatten(build_cradle_graph(1, {}));
  CHECK(c1.objects.rows() == 2);
  CHECK(c1.relations.rows() == 2);
  auto g = build_string_graph(15, two_obstacles(), Vec2::Zero());
  g.objects[3].velocity = Vec2(0.5, -0.25);
  g.objects[3].external_force = Vec2(1.5, 2.5);
  const auto f = flatten(g);
  CHECK(f.objects.rows() == 17);
  CHECK(f.relations.rows() == 103);
  CHECK(f.objects.cols() == 6 + attr::kWidth);
  CHECK(f.relations.cols() == kRelationFeatureWidth);
  CHECK(f.objects(3, 2) == 0.5);
  CHECK(f.objects(3, 3) == -0.25);
  CHECK(f.objects(3, 4 + attr::kMass) == g.objects[3].attributes[attr::kMass]);
  CHECK(f.objects(3, f.objects.cols() - 2) == 1.5);
  CHECK(f.objects(3, f.objects.cols() - 1) == 2.5);
  for (int k = 0; k < g.num_relations(); ++k) {
    CHECK(f.relations.row(k).head(kRelationTypeCount).sum() == 1.0);
    CHECK(f.relations(k, static_cast<int>(g.relations[static_cast<std::size_t>(k)].type)) == 1.0);
  }
}

TEST_CASE("incidence partitions the relations") {
  const auto g = build_string_graph(9, two_obstacles(), Vec2::Zero());
  const auto inc = build_incidence(g);
  std::vector<int> all;
  for (std::size_t i = 0; i < inc.incoming.size(); ++i) {
    for (int k : inc.incoming[i]) {
      CHECK(g.relations[static_cast<std::size_t>(k)].receiver == static_cast<int>(i));
      all.push_back(k);
    }
  }
  std::sort(all.begin(), all.end());
  CHECK(static_cast<int>(all.size()) == g.num_relations());
  for (int k = 0; k < g.num_relations(); ++k) CHECK(all[static_cast<std::size_t>(k)] == k);
}

TEST_CASE("permuting relations permutes matrix rows and incidence identically") {
  auto g = build_cradle_graph(4, {});
  auto h = g;
  std::swap(h.relations[1], h.relations[7]);
  const auto fg = flatten(g), fh = flatten(h);
  CHECK(fg.relations.row(1) == fh.relations.row(7));
  CHECK(fg.relations.row(7) == fh.relations.row(1));
  CHECK(fg.incidence.receivers[1] == fh.incidence.receivers[7]);
  CHECK(fg.incidence.senders[7] == fh.incidence.senders[1]);
}

TEST_CASE("unflatten inverts flatten and JSON round-trips") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  auto g = build_string_graph(6, two_obstacles(), Vec2(0.1, 0.2));
  for (auto& o : g.objects) {
    o.velocity = Vec2(n01(rng), n01(rng));
    o.external_force = Vec2(n01(rng), n01(rng));
  }
  for (const auto& src : {g, build_cradle_graph(3, {}), build_box_graph({Vec2(1, 2), Vec2(3, 4)})}) {
    const auto back = unflatten(flatten(src));
    const auto a = flatten(src), b = flatten(back);
    CHECK(a.objects == b.objects);
    CHECK(a.relations == b.relations);
    CHECK(back.scenario == src.scenario);
    const auto j = graph_from_json(nlohmann::json::parse(to_json(src).dump()));
    CHECK(flatten(j).objects == a.objects);
    CHECK(flatten(j).relations == a.relations);
  }
}
