#include "propnet/oracle_models.hpp"

#include <cstring>
#include <stdexcept>

namespace propnet {

namespace {

constexpr int kQ = 0, kV = 2, kAttr = 4;
constexpr int kParams = kRelationTypeCount;

Tensor column(const std::vector<double>& v) {
  Tensor t(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = v[i];
  return t;
}

std::uint64_t hash_matrix(const Eigen::MatrixXd& m) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    const double x = m.data()[i];
    std::memcpy(&bits, &x, sizeof bits);
    h = (h ^ bits) * 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Var CradleOracle::next_velocity(Tape& tape, const GraphInputs& in) const {
  const Topology& topo = *in.topology;
  const Tensor& obj = in.objects.value();
  const Tensor& rel = in.relations.value();

  std::vector<int> balls, pivots;
  std::vector<double> rod;
  for (int i = 0; i < topo.num_objects; ++i) {
    if (topo.pinned[static_cast<std::size_t>(i)]) continue;
    int pivot = -1;
    for (int k = 0; k < topo.num_relations(); ++k) {
      const auto kk = static_cast<std::size_t>(k);
      if (topo.types[kk] == RelationType::Rigid && topo.receivers[kk] == i) {
        pivot = topo.senders[kk];
        rod.push_back(rel(k, kParams + rparam::kRodLength));
      }
    }
    if (pivot < 0) throw std::invalid_argument("cradle ball " + std::to_string(i) + " has no rigid link");
    balls.push_back(i);
    pivots.push_back(pivot);
  }
  const int n = static_cast<int>(balls.size());
  for (int b = 1; b < n; ++b) {
    if (obj(pivots[static_cast<std::size_t>(b)], kQ) <= obj(pivots[static_cast<std::size_t>(b - 1)], kQ)) {
      throw std::invalid_argument("cradle pivots must be ordered along +x");
    }
  }

  CradleGeometry geom;
  geom.rod_length = rod.empty() ? geom.rod_length : rod[0];
  geom.ball_radius = n > 0 ? obj(balls[0], kAttr + attr::kRadius) : geom.ball_radius;
  geom.gravity = gravity_;
  for (int k = 0; k < topo.num_relations(); ++k) {
    if (topo.types[static_cast<std::size_t>(k)] == RelationType::Collision) {
      geom.restitution = rel(k, kParams + rparam::kRestitution);
      break;
    }
  }

  Var q = ad::slice_cols(in.objects, kQ, 2);
  Var v = ad::slice_cols(in.objects, kV, 2);
  Var qb = ad::gather_rows(q, balls);
  Var vb = ad::gather_rows(v, balls);
  Var pb = ad::gather_rows(q, pivots);

  auto angle = [](Var offset) {
    return ad::atan2(ad::slice_cols(offset, 0, 1), ad::neg(ad::slice_cols(offset, 1, 1)));
  };
  Var offset = ad::sub(qb, pb);
  Var theta = angle(offset);
  Var theta_prev = angle(ad::sub(offset, ad::scale(vb, dt_)));
  Var omega = ad::scale(ad::sub(theta, theta_prev), 1.0 / dt_);

  Eigen::VectorXd rate(n);
  Eigen::VectorXd len(n);
  for (int b = 0; b < n; ++b) {
    len[b] = rod[static_cast<std::size_t>(b)];
    rate[b] = dt_ * gravity_ / len[b];
  }
  omega = ad::sub(omega, ad::scale_rows(ad::sin(theta), rate));

  std::vector<double> th(static_cast<std::size_t>(n)), om(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) {
    th[static_cast<std::size_t>(b)] = theta.value()(b, 0);
    om[static_cast<std::size_t>(b)] = omega.value()(b, 0);
  }
  Eigen::MatrixXd impulse;
  resolve_impacts(th, om, geom, dt_, &impulse);
  tape.note_branch(hash_matrix(impulse));
  omega = ad::matmul_const_left(impulse, omega);

  Var theta_next = ad::add(theta, ad::scale(omega, dt_));
  Var arm = ad::concat_cols({ad::sin(theta_next), ad::neg(ad::cos(theta_next))});
  Var q_next = ad::add(pb, ad::scale_rows(arm, len));
  Var vel = ad::scale(ad::sub(q_next, qb), 1.0 / dt_);
  return ad::scatter_add_rows(vel, balls, topo.num_objects);
}

Var StringOracle::next_velocity(Tape& tape, const GraphInputs& in) const {
  const Topology& topo = *in.topology;
  const int N = topo.num_objects, R = topo.num_relations();
  const double h = dt_ / substeps_;

  std::vector<double> free(static_cast<std::size_t>(N)), pinned(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    pinned[static_cast<std::size_t>(i)] = topo.pinned[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    free[static_cast<std::size_t>(i)] = 1.0 - pinned[static_cast<std::size_t>(i)];
  }
  std::vector<double> spring(static_cast<std::size_t>(R)), contact(static_cast<std::size_t>(R)),
      friction(static_cast<std::size_t>(R)), self(static_cast<std::size_t>(R));
  for (int k = 0; k < R; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    spring[kk] = topo.types[kk] == RelationType::Spring;
    contact[kk] = topo.types[kk] == RelationType::Collision;
    friction[kk] = topo.types[kk] == RelationType::FrictionSelf;
    self[kk] = topo.receivers[kk] == topo.senders[kk];
  }
  Var free_col = tape.constant(column(free));
  Var spring_col = tape.constant(column(spring));
  Var contact_col = tape.constant(column(contact));
  Var friction_col = tape.constant(column(friction));
  Var self_col = tape.constant(column(self));
  Var ones_r = tape.constant(Tensor::Ones(R, 1));

  Var q = ad::slice_cols(in.objects, kQ, 2);
  Var mass = ad::slice_cols(in.objects, kAttr + attr::kMass, 1);
  Var ext = ad::slice_cols(in.objects, in.objects.cols() - 2, 2);
  Var inv_mass = ad::div(free_col, ad::add(mass, tape.constant(column(pinned))));

  Var p0 = ad::slice_cols(in.relations, kParams, 1);  // rest length | contact radius | friction
  Var stiffness = ad::slice_cols(in.relations, kParams + rparam::kStiffness, 1);
  Var damping = ad::slice_cols(in.relations, kParams + rparam::kDamping, 1);

  Var x = q;
  Var u = ad::mul_col(ad::slice_cols(in.objects, kV, 2), free_col);
  for (int s = 0; s < substeps_; ++s) {
    Var d = ad::sub(ad::gather_rows(x, topo.senders), ad::gather_rows(x, topo.receivers));
    Var len = ad::sqrt(ad::add(ad::row_sums(ad::square(d)), self_col));
    Var dir = ad::mul_col(d, ad::div(ones_r, len));
    Var uu = ad::gather_rows(u, topo.receivers);
    Var du = ad::sub(ad::gather_rows(u, topo.senders), uu);

    Var tension = ad::add(ad::mul(stiffness, ad::sub(len, p0)), ad::mul(damping, ad::row_sums(ad::mul(du, dir))));
    Var f = ad::mul_col(dir, ad::mul(spring_col, tension));
    Var penetration = ad::relu(ad::sub(p0, len));
    f = ad::add(f, ad::mul_col(dir, ad::scale(ad::mul(contact_col, penetration), -obstacle_stiffness_)));
    f = ad::sub(f, ad::mul_col(uu, ad::mul(friction_col, p0)));

    Var force = ad::add(ad::scatter_add_rows(f, topo.receivers, N), ext);
    u = ad::add(u, ad::mul_col(force, ad::scale(inv_mass, h)));
    x = ad::add(x, ad::scale(u, h));
  }
  return ad::scale(ad::sub(x, q), 1.0 / dt_);
}

}  // namespace propnet
