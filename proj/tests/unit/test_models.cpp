#include <doctest.h>

#include "finite_difference.hpp"
#include "fixtures.hpp"
#include "propnet/checkpoint.hpp"
#include "propnet/latent.hpp"
#include "propnet/oracle_models.hpp"
#include "propnet/rollout.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>

using namespace propnet;
using fixtures::forward;
using fixtures::small_model;

namespace {

const ModelKind kVelocityKinds[] = {ModelKind::IN, ModelKind::VanillaPropNet, ModelKind::PropNet};

// Relabels objects by `perm` (new index i holds old object perm[i]) and
// reverses the relation list.
DynamicsGraph relabel(const DynamicsGraph& g, const std::vector<int>& perm) {
  std::vector<int> where(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) where[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  DynamicsGraph out = g;
  for (std::size_t i = 0; i < perm.size(); ++i) out.objects[i] = g.objects[static_cast<std::size_t>(perm[i])];
  out.relations.assign(g.relations.rbegin(), g.relations.rend());
  for (auto& r : out.relations) {
    r.receiver = where[static_cast<std::size_t>(r.receiver)];
    r.sender = where[static_cast<std::size_t>(r.sender)];
  }
  return out;
}

void zero_mlp(Model& m, const std::string& name) {
  const nn::Mlp mlp = m.mlp(name);
  for (int id : mlp.weights) m.store().view(id).setZero();
  for (int id : mlp.biases) m.store().view(id).setZero();
}

// Single-step velocity loss of `model` on `g` against fixed targets.
double velocity_loss(const Model& model, const DynamicsGraph& g, const Tensor& target, std::uint64_t* branch,
                     Eigen::VectorXd* grad) {
  Tape tape(&model.store());
  const Topology topo = topology_of(g);
  Var out = model.forward_normalized(tape, record(tape, flatten(g), topo));
  Var loss = masked_mse(out, tape.constant(target), Eigen::VectorXd::Ones(g.num_objects()));
  if (branch) *branch = tape.branch_signature();
  if (grad) {
    tape.backward(loss);
    *grad = tape.param_grad();
  }
  return loss.scalar();
}

fd::Result parameter_check(Model& model, const std::function<double(std::uint64_t*, Eigen::VectorXd*)>& loss) {
  Eigen::VectorXd grad;
  loss(nullptr, &grad);
  const Eigen::VectorXd x0 = model.store().flat_vector();
  auto f = [&](const Eigen::VectorXd& x, std::uint64_t* branch) {
    model.store().flat_vector() = x;
    return loss(branch, nullptr);
  };
  const auto r = fd::check(f, x0, grad, fd::sample(static_cast<int>(x0.size()), 200, 17));
  model.store().flat_vector() = x0;
  return r;
}

}  // namespace

TEST_CASE("Vanilla PropNet with L = 1 and mapped weights equals IN bit for bit") {
  std::mt19937_64 rng(11);
  for (Scenario s : {Scenario::Cradle, Scenario::String}) {
    const Model in = small_model(ModelKind::IN, s, 1, 5);
    const Model vanilla = vanilla_from_in(in);
    CHECK(vanilla.spec().kind == ModelKind::VanillaPropNet);
    CHECK(vanilla.spec().L == 1);
    for (int trial = 0; trial < 10; ++trial) {
      const auto g = fixtures::random_graph(s, rng);
      CHECK(forward(in, g) == forward(vanilla, g));
    }
  }
  CHECK_THROWS_AS(vanilla_from_in(small_model(ModelKind::PropNet, Scenario::Cradle)), std::invalid_argument);
}

TEST_CASE("without relations an object's output depends only on its own features") {
  const Model in = small_model(ModelKind::IN, Scenario::Boxes);
  const auto a = build_box_graph({Vec2(0.1, 0.2)});
  auto b = build_box_graph({Vec2(0.1, 0.2), Vec2(-0.3, 0.4)});
  b.relations.clear();
  const Tensor ya = forward(in, a), yb = forward(in, b);
  CHECK(ya.row(0) == yb.row(0));
}

TEST_CASE("every velocity model is permutation equivariant") {
  std::mt19937_64 rng(4);
  for (ModelKind kind : kVelocityKinds) {
    for (Scenario s : {Scenario::Cradle, Scenario::String, Scenario::Boxes}) {
      const Model m = small_model(kind, s, 3);
      const auto g = fixtures::random_graph(s, rng);
      std::vector<int> perm(static_cast<std::size_t>(g.num_objects()));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const Tensor y = forward(m, g), yp = forward(m, relabel(g, perm));
      double worst = 0.0;
      for (std::size_t i = 0; i < perm.size(); ++i) {
        worst = std::max(worst, (yp.row(static_cast<Eigen::Index>(i)) - y.row(perm[i])).cwiseAbs().maxCoeff());
      }
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("information crosses one collision edge per propagation step") {
  // Ball 0 and ball 4 of a 5-ball cradle are four collision edges apart.
  std::mt19937_64 rng(8);
  const auto g = fixtures::random_cradle(5, rng);
  const FlatGraph flat = flatten(g);
  const Topology topo = topology_of(g);
  for (ModelKind kind : {ModelKind::VanillaPropNet, ModelKind::PropNet}) {
    for (int L = 1; L <= 5; ++L) {
      const Model m = small_model(kind, Scenario::Cradle, L, 100 + static_cast<std::uint64_t>(L));
      Tape tape(&m.store());
      GraphInputs in{tape.input(flat.objects), tape.constant(flat.relations), &topo};
      Var out = m.forward_normalized(tape, in);
      tape.backward(ad::sum(ad::slice_rows(out, 4, 1)));
      const double reach = tape.grad(in.objects).row(0).cwiseAbs().maxCoeff();
      CAPTURE(L);
      if (L >= 4) {
        CHECK(reach > 0.0);
      } else {
        CHECK(reach == 0.0);
      }
    }
  }
}

TEST_CASE("model spec validation") {
  ModelSpec s = ModelSpec::defaults(ModelKind::PropNet);
  s.L = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK(ModelSpec::defaults(ModelKind::IN).L == 1);
  CHECK(ModelSpec::defaults(ModelKind::PropNet).share_weights);
  CHECK_FALSE(ModelSpec::defaults(ModelKind::VanillaPropNet).share_weights);
  const auto spec = ModelSpec::defaults(ModelKind::LatentPropNet).with_widths(32, 20);
  const auto back = model_spec_from_json(to_json(spec));
  CHECK(back.latent_dim == 20);
  CHECK(back.kind == ModelKind::LatentPropNet);
  CHECK_THROWS(model_spec_from_json(nlohmann::json{{"kind", "PropNet"}, {"bogus", 1}}));
}

TEST_CASE("a model without normalisation statistics refuses to run") {
  Model m(ModelSpec::defaults(ModelKind::IN).with_widths(8, 8), Scenario::Cradle, 9, kRelationFeatureWidth, 1);
  std::mt19937_64 rng(1);
  const auto g = fixtures::random_cradle(3, rng);
  Tape tape(&m.store());
  const Topology topo = topology_of(g);
  CHECK_THROWS_AS(m.next_velocity(tape, record(tape, flatten(g), topo)), InvalidState);
}

TEST_CASE("parameter gradients of every model kind match central differences") {
  std::mt19937_64 rng(21);
  for (ModelKind kind : kVelocityKinds) {
    for (Scenario s : {Scenario::Cradle, Scenario::String}) {
      Model m = small_model(kind, s, 2, 3);
      const auto g = fixtures::random_graph(s, rng);
      const Tensor target = Tensor::Random(g.num_objects(), 2);
      const auto r = parameter_check(m, [&](std::uint64_t* branch, Eigen::VectorXd* grad) {
        return velocity_loss(m, g, target, branch, grad);
      });
      CAPTURE(to_string(kind));
      CHECK(r.checked > 150);
      CHECK(r.worst < 1e-4);
    }
  }

  Model latent = small_model(ModelKind::LatentPropNet, Scenario::Boxes, 2, 3);
  std::vector<DynamicsGraph> scenes;
  for (int i = 0; i < 3; ++i) scenes.push_back(fixtures::random_boxes(3 + i, rng));
  const std::vector<LatentSample> samples{{&scenes[0], &scenes[1], {0.1, -0.2, 0.3, 0.0}},
                                          {&scenes[1], &scenes[2], {0.0, 0.4, -0.1, 0.2}}};
  const auto r = parameter_check(latent, [&](std::uint64_t* branch, Eigen::VectorXd* grad) {
    Tape tape(&latent.store());
    Var loss = latent_loss(tape, latent, samples).total;
    if (branch) *branch = tape.branch_signature();
    if (grad) {
      tape.backward(loss);
      *grad = tape.param_grad();
    }
    return loss.scalar();
  });
  CHECK(r.checked > 150);
  CHECK(r.worst < 1e-4);
}

TEST_CASE("the scene code is invariant to relabelling objects") {
  const Model m = small_model(ModelKind::LatentPropNet, Scenario::Boxes);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = fixtures::random_boxes(2 + trial % 7, rng);
    std::vector<int> perm(static_cast<std::size_t>(g.num_objects()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape tape(&m.store());
    CHECK(encode(tape, m, g).value() == encode(tape, m, relabel(g, perm)).value());
  }
}

TEST_CASE("scene code pooling") {
  const Model m = small_model(ModelKind::LatentPropNet, Scenario::Boxes);
  Tape tape(&m.store());

  SUBCASE("a single object's code is the scene code") {
    const auto g = build_box_graph({Vec2(0.3, -0.1)});
    const Tensor code = forward(m, g);
    const Tensor z = encode(tape, m, g).value();
    CHECK((z - code).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("duplicating every per-object code leaves the mean unchanged") {
    std::mt19937_64 rng(2);
    const Tensor codes = forward(m, fixtures::random_boxes(5, rng));
    Tensor twice(2 * codes.rows(), codes.cols());
    twice << codes, codes;
    const RowVector a = codes.colwise().mean(), b = twice.colwise().mean();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("an empty scene encodes to the learned constant") {
    const Tensor z = encode(tape, m, build_box_graph({})).value();
    const int id = m.store().find("latent.empty");
    CHECK(z == Tensor(m.store().view(id)));
  }

  SUBCASE("batched and single encodings agree") {
    std::mt19937_64 rng(6);
    const auto a = fixtures::random_boxes(3, rng), b = build_box_graph({}), c = fixtures::random_boxes(4, rng);
    const DynamicsGraph* all[] = {&a, &b, &c};
    const Tensor z = encode_batch(tape, m, all).value();
    int row = 0;
    for (const auto* g : all) {
      const Tensor single = encode(tape, m, *g).value();
      CHECK((z.row(row++) - single.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("transition and decoder") {
  Model m = small_model(ModelKind::LatentPropNet, Scenario::Boxes);
  std::mt19937_64 rng(12);
  const Tensor z0 = Tensor::Random(1, m.spec().latent_dim);

  SUBCASE("action gradient of the transition matches central differences") {
    Eigen::VectorXd a0(4);
    a0 << 0.2, -0.1, 0.3, 0.05;
    auto f = [&](const Eigen::VectorXd& a, std::uint64_t* branch, Eigen::VectorXd* grad) {
      Tape tape(&m.store());
      Var av = tape.input(Tensor(a.transpose()));
      Var loss = ad::sum_squares(m.latent_step(tape, tape.constant(z0), av));
      if (branch) *branch = tape.branch_signature();
      if (grad) {
        tape.backward(loss);
        *grad = tape.grad(av).transpose();
      }
      return loss.scalar();
    };
    Eigen::VectorXd grad;
    f(a0, nullptr, &grad);
    const auto r = fd::check([&](const Eigen::VectorXd& x, std::uint64_t* b) { return f(x, b, nullptr); }, a0, grad,
                             {0, 1, 2, 3});
    CHECK(r.checked == 4);
    CHECK(r.worst < 1e-6);
  }

  SUBCASE("the first action of a composed rollout receives gradient") {
    Tape tape(&m.store());
    Var a1 = tape.input(Tensor::Constant(1, 4, 0.1));
    Var z = m.latent_step(tape, tape.constant(z0), a1);
    for (int t = 0; t < 5; ++t) z = m.latent_step(tape, z, tape.constant(Tensor::Constant(1, 4, -0.05)));
    tape.backward(ad::sum_squares(z));
    CHECK(tape.grad(a1).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("a zeroed transition ignores its inputs") {
    zero_mlp(m, "latent.transition");
    Tape tape(&m.store());
    const Tensor y1 = m.latent_step(tape, tape.constant(z0), tape.constant(Tensor::Ones(1, 4))).value();
    const Tensor y2 = m.latent_step(tape, tape.constant(-z0), tape.constant(Tensor::Zero(1, 4))).value();
    CHECK(y1 == y2);
  }

  SUBCASE("a zeroed residual transition adds its bias to z") {
    ModelSpec spec = m.spec();
    spec.residual_transition = true;
    Model r(spec, Scenario::Boxes, m.object_width(), m.relation_width(), 1);
    r.norm() = m.norm();
    const nn::Mlp phi = r.mlp("latent.transition");
    for (int id : phi.weights) r.store().view(id).setZero();
    for (int id : phi.biases) r.store().view(id).setConstant(0.25);
    Tape tape(&r.store());
    const Tensor y = r.latent_step(tape, tape.constant(z0), tape.constant(Tensor::Ones(1, 4))).value();
    CHECK(((y - z0).array() == 0.25).all());
    CHECK(model_spec_from_json(to_json(spec)).residual_transition);
  }

  SUBCASE("a decoder with zero weights returns its bias as keypoints") {
    const nn::Mlp dec = m.mlp("latent.decoder");
    for (int id : dec.weights) m.store().view(id).setZero();
    const int K = m.spec().keypoints;
    Tape tape(&m.store());
    const Tensor kp = m.decode(tape, tape.constant(z0)).value();
    const auto bias = m.store().view(dec.biases.back());
    REQUIRE(kp.rows() == K);
    for (int k = 0; k < K; ++k) {
      CHECK(kp(k, 0) == bias(0, 2 * k));
      CHECK(kp(k, 1) == bias(0, 2 * k + 1));
    }
  }
}

TEST_CASE("the reconstruction term rules out the collapsed code") {
  ModelSpec spec = ModelSpec::defaults(ModelKind::LatentPropNet).with_widths(16, 8);
  spec.keypoints = 4;
  Model m(spec, Scenario::Boxes, 6, kRelationFeatureWidth, 1);
  fixtures::identity_norm(m);
  m.store().flat_vector().setZero();
  const auto a = build_box_graph({Vec2(0.3, 0.1), Vec2(-0.2, 0.4)});
  const auto b = build_box_graph({Vec2(0.35, 0.1), Vec2(-0.2, 0.45)});
  const LatentSample sample{&a, &b, {0.0, 0.0, 0.1, 0.0}};
  {
    Tape tape(&m.store());
    const auto loss = latent_loss(tape, m, std::span(&sample, 1));
    CHECK(loss.forward.scalar() == 0.0);
    CHECK(loss.reconstruction.scalar() > 0.0);
  }
  spec.reconstruction_weight = 0.0;
  Model blind(spec, Scenario::Boxes, 6, kRelationFeatureWidth, 1);
  fixtures::identity_norm(blind);
  blind.store().flat_vector().setZero();
  Tape tape(&blind.store());
  CHECK(latent_loss(tape, blind, std::span(&sample, 1)).total.scalar() == 0.0);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const auto dir = std::filesystem::temp_directory_path() / "propnet_test_models";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(31);
  for (ModelKind kind : {ModelKind::IN, ModelKind::VanillaPropNet, ModelKind::PropNet, ModelKind::LatentPropNet}) {
    const Scenario s = kind == ModelKind::LatentPropNet ? Scenario::Boxes : Scenario::String;
    Model m = small_model(kind, s, 3, 41);
    m.norm().object_mean = RowVector::Random(m.object_width());
    const std::string path = (dir / (std::string(to_string(kind)) + ".ckpt")).string();
    save_checkpoint(m, path, {{"note", "unit"}});
    nlohmann::json meta;
    const Model back = load_checkpoint(path, &meta);
    CHECK(meta.at("note") == "unit");
    CHECK(back.spec().kind == kind);
    CHECK(back.scenario() == s);
    CHECK(std::equal(m.store().flat().begin(), m.store().flat().end(), back.store().flat().begin(),
                     back.store().flat().end()));
    CHECK(back.norm().object_mean == m.norm().object_mean);
    const auto g = fixtures::random_graph(s, rng);
    CHECK(forward(m, g) == forward(back, g));
  }
  const std::string junk = (dir / "junk.ckpt").string();
  {
    std::ofstream(junk) << "not a checkpoint";
  }
  CHECK_THROWS(load_checkpoint(junk));
  std::filesystem::remove_all(dir);
}

TEST_CASE("rollout") {
  std::mt19937_64 rng(3);

  SUBCASE("zero steps returns the initial graph") {
    const Model m = small_model(ModelKind::PropNet, Scenario::String);
    const auto g = fixtures::random_string(6, rng);
    const auto out = rollout(m, g, 0);
    REQUIRE(out.size() == 1);
    CHECK(flatten(out[0]).objects == flatten(g).objects);
  }

  SUBCASE("a model that predicts zero velocity freezes positions") {
    Model m = small_model(ModelKind::PropNet, Scenario::String);
    m.store().flat_vector().setZero();
    const auto g = fixtures::random_string(6, rng);
    const auto out = rollout(m, g, 5);
    REQUIRE(out.size() == 6);
    for (int i = 0; i < g.num_objects(); ++i) {
      CHECK(out.back().objects[static_cast<std::size_t>(i)].position == g.objects[static_cast<std::size_t>(i)].position);
      CHECK(out.back().objects[static_cast<std::size_t>(i)].velocity.norm() == 0.0);
    }
  }

  SUBCASE("the string oracle as model reproduces the simulator with replayed forces") {
    DataConfig cfg;
    cfg.scenario = Scenario::String;
    cfg.masses = 10;
    cfg.steps = 40;
    cfg.seed = 5;
    const Rollout truth = generate_rollout(cfg, 0);
    std::vector<std::vector<Vec2>> forces;
    for (const auto& g : truth.graphs) {
      std::vector<Vec2> f;
      for (const auto& o : g.objects) f.push_back(o.external_force);
      forces.push_back(f);
    }
    const auto sim = rollout(StringOracle{}, truth.graphs[0], truth.steps() - 1, forces);
    double worst = 0.0;
    for (int t = 0; t < truth.steps(); ++t) {
      for (int i = 0; i < truth.graphs[0].num_objects(); ++i) {
        const auto& a = sim[static_cast<std::size_t>(t)].objects[static_cast<std::size_t>(i)].position;
        const auto& b = truth.graphs[static_cast<std::size_t>(t)].objects[static_cast<std::size_t>(i)].position;
        worst = std::max(worst, (a - b).norm());
      }
    }
    CHECK(worst < 1e-10);
  }

  SUBCASE("the cradle oracle as model reproduces the simulator") {
    DataConfig cfg;
    cfg.scenario = Scenario::Cradle;
    cfg.steps = 100;
    cfg.seed = 8;
    const Rollout truth = generate_rollout(cfg, 0);
    const auto sim = rollout(CradleOracle{}, truth.graphs[0], truth.steps() - 1);
    double worst = 0.0;
    for (int t = 0; t < truth.steps(); ++t) {
      for (int i = 0; i < truth.graphs[0].num_objects(); ++i) {
        const auto& a = sim[static_cast<std::size_t>(t)].objects[static_cast<std::size_t>(i)].position;
        const auto& b = truth.graphs[static_cast<std::size_t>(t)].objects[static_cast<std::size_t>(i)].position;
        worst = std::max(worst, (a - b).norm());
      }
    }
    CHECK(worst < 1e-10);
  }
}
