#include "propnet/latent.hpp"

#include "propnet/chamfer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace propnet {

namespace {

bool row_less(const Tensor& m, Eigen::Index x, Eigen::Index y) {
  const double* px = m.data() + x * m.cols();
  const double* py = m.data() + y * m.cols();
  return std::lexicographical_compare(px, px + m.cols(), py, py + m.cols());
}

// Objects sorted by feature row and relations by (receiver, sender,
// feature row), so that every relabelling of a scene encodes bit for bit
// the same. Floating-point sums would otherwise depend on the input order.
FlatGraph canonical(const DynamicsGraph& g, Topology& topology) {
  const FlatGraph f = flatten(g);
  const Eigen::Index n = f.objects.rows(), m = f.relations.rows();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return row_less(f.objects, x, y); });
  std::vector<int> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[static_cast<std::size_t>(order[i])] = static_cast<int>(i);

  std::vector<int> rel(static_cast<std::size_t>(m));
  std::iota(rel.begin(), rel.end(), 0);
  auto key = [&](int k) {
    const auto& r = g.relations[static_cast<std::size_t>(k)];
    return std::pair(rank[static_cast<std::size_t>(r.receiver)], rank[static_cast<std::size_t>(r.sender)]);
  };
  std::stable_sort(rel.begin(), rel.end(), [&](int x, int y) {
    if (key(x) != key(y)) return key(x) < key(y);
    return row_less(f.relations, x, y);
  });

  FlatGraph out;
  out.scenario = f.scenario;
  out.objects.resize(n, f.objects.cols());
  out.relations.resize(m, f.relations.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.objects.row(i) = f.objects.row(order[static_cast<std::size_t>(i)]);
  const Topology original = topology_of(g);
  topology = Topology{};
  topology.num_objects = static_cast<int>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    topology.pinned.push_back(original.pinned[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    const int src = rel[static_cast<std::size_t>(k)];
    out.relations.row(k) = f.relations.row(src);
    topology.receivers.push_back(key(src).first);
    topology.senders.push_back(key(src).second);
    topology.types.push_back(original.types[static_cast<std::size_t>(src)]);
  }
  return out;
}

}  // namespace

Var action_row(Tape& tape, const std::array<double, 4>& action) {
  Tensor a(1, 4);
  for (int i = 0; i < 4; ++i) a(0, i) = action[static_cast<std::size_t>(i)];
  return tape.constant(std::move(a));
}

Var encode_batch(Tape& tape, const Model& model, std::span<const DynamicsGraph* const> graphs) {
  const auto B = static_cast<Eigen::Index>(graphs.size());
  if (B == 0) throw std::invalid_argument("encode_batch: no graphs");
  std::vector<Topology> topos;
  std::vector<FlatGraph> flats;
  Eigen::Index n_obj = 0, n_rel = 0;
  topos.reserve(graphs.size());
  for (const DynamicsGraph* g : graphs) {
    topos.emplace_back();
    flats.push_back(canonical(*g, topos.back()));
    n_obj += flats.back().objects.rows();
    n_rel += flats.back().relations.rows();
  }

  Tensor empty_mask = Tensor::Zero(B, 1);
  for (Eigen::Index b = 0; b < B; ++b) empty_mask(b, 0) = topos[static_cast<std::size_t>(b)].num_objects == 0;
  Var z;
  if (n_obj > 0) {
    Tensor objects(n_obj, model.object_width());
    Tensor relations(n_rel, model.relation_width());
    std::vector<int> owner(static_cast<std::size_t>(n_obj));
    Eigen::VectorXd inv_count = Eigen::VectorXd::Zero(B);
    Eigen::Index ro = 0, rr = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& f = flats[static_cast<std::size_t>(b)];
      const Eigen::Index n = f.objects.rows();
      if (n > 0) {
        objects.middleRows(ro, n) = f.objects;
        std::fill_n(owner.begin() + ro, n, static_cast<int>(b));
        inv_count[b] = 1.0 / static_cast<double>(n);
      }
      if (f.relations.rows() > 0) relations.middleRows(rr, f.relations.rows()) = f.relations;
      ro += n;
      rr += f.relations.rows();
    }
    std::vector<const Topology*> parts;
    for (const auto& t : topos) parts.push_back(&t);
    const Topology merged = concat(parts);
    GraphInputs in{tape.constant(std::move(objects)), tape.constant(std::move(relations)), &merged};
    z = ad::scale_rows(ad::scatter_add_rows(model.forward_normalized(tape, in), owner, B), inv_count);
  }
  if (empty_mask.sum() > 0) {
    Topology none;
    GraphInputs in{tape.constant(Tensor(0, model.object_width())), tape.constant(Tensor(0, model.relation_width())),
                   &none};
    Var empty = ad::mul_col(ad::broadcast_rows(model.encode(tape, in), B), tape.constant(empty_mask));
    z = z.valid() ? ad::add(z, empty) : empty;
  }
  return z;
}

Var encode(Tape& tape, const Model& model, const DynamicsGraph& graph) {
  const DynamicsGraph* g = &graph;
  return encode_batch(tape, model, std::span<const DynamicsGraph* const>(&g, 1));
}

Var normalized_positions(Tape& tape, const Model& model, const DynamicsGraph& graph) {
  const FlatGraph f = flatten(graph);
  return ad::slice_cols(model.normalize_objects(tape.constant(f.objects)), 0, 2);
}

LatentLoss latent_loss(Tape& tape, const Model& model, std::span<const LatentSample> samples) {
  if (samples.empty()) throw std::invalid_argument("latent_loss: no samples");
  const auto B = static_cast<Eigen::Index>(samples.size());
  std::vector<const DynamicsGraph*> now, next;
  Tensor actions(B, 4);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& s = samples[static_cast<std::size_t>(b)];
    now.push_back(s.now);
    next.push_back(s.next);
    for (int i = 0; i < 4; ++i) actions(b, i) = s.action[static_cast<std::size_t>(i)];
  }
  Var z = encode_batch(tape, model, now);
  Var z_next = encode_batch(tape, model, next);
  Var predicted = model.latent_step(tape, z, tape.constant(std::move(actions)));
  LatentLoss out;
  out.forward = ad::scale(ad::sum_squares(ad::sub(z_next, predicted)), 1.0 / static_cast<double>(B));

  Var recon;
  for (Eigen::Index b = 0; b < B; ++b) {
    if (now[static_cast<std::size_t>(b)]->num_objects() == 0) continue;
    Var keypoints = model.decode(tape, ad::slice_rows(z, b, 1));
    Var c = chamfer(keypoints, normalized_positions(tape, model, *now[static_cast<std::size_t>(b)]));
    recon = recon.valid() ? ad::add(recon, c) : c;
  }
  out.reconstruction = recon.valid() ? ad::scale(recon, 1.0 / static_cast<double>(B)) : tape.constant_scalar(0.0);
  out.total = ad::add(out.forward, ad::scale(out.reconstruction, model.spec().reconstruction_weight));
  return out;
}

}  // namespace propnet
