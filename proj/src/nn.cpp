#include "propnet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace propnet::nn {

Mlp make_mlp(ParamStore& store, const std::string& name, std::vector<int> widths) {
  if (widths.size() < 2) throw std::invalid_argument("MLP '" + name + "' needs at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("MLP '" + name + "' has a non-positive width");
  }
  Mlp mlp;
  mlp.name = name;
  mlp.widths = std::move(widths);
  for (std::size_t l = 0; l + 1 < mlp.widths.size(); ++l) {
    mlp.weights.push_back(store.add(name + ".W" + std::to_string(l), mlp.widths[l], mlp.widths[l + 1]));
    mlp.biases.push_back(store.add(name + ".b" + std::to_string(l), 1, mlp.widths[l + 1]));
  }
  return mlp;
}

void init_uniform(ParamStore& store, const Mlp& mlp, std::mt19937_64& rng) {
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(mlp.widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int id : {mlp.weights[l], mlp.biases[l]}) {
      auto view = store.view(id);
      for (Eigen::Index i = 0; i < view.size(); ++i) view.data()[i] = dist(rng);
    }
  }
}

Var mlp_forward(Tape& tape, const Mlp& mlp, std::span<const InputBlock> blocks) {
  Eigen::Index width = 0;
  for (const auto& b : blocks) {
    if (b.value.valid() && b.value.cols() != b.width) {
      throw std::invalid_argument("MLP '" + mlp.name + "': block declares width " + std::to_string(b.width) +
                                  " but has " + std::to_string(b.value.cols()) + " columns");
    }
    width += b.width;
  }
  if (width != mlp.input_width()) {
    throw std::invalid_argument("MLP '" + mlp.name + "' expects input width " + std::to_string(mlp.input_width()) +
                                ", got " + std::to_string(width));
  }

  Var h;
  Eigen::Index row0 = 0;
  for (const auto& b : blocks) {
    if (b.value.valid()) {
      Var term = matmul(b.value, tape.param_rows(mlp.weights[0], row0, b.width));
      h = h.valid() ? ad::add(h, term) : term;
    }
    row0 += b.width;
  }
  if (!h.valid()) throw std::invalid_argument("MLP '" + mlp.name + "' needs at least one non-zero input block");
  h = ad::add_row(h, tape.param(mlp.biases[0]));

  for (std::size_t l = 1; l < mlp.weights.size(); ++l) {
    h = ad::relu(h);
    h = ad::add_row(ad::matmul(h, tape.param(mlp.weights[l])), tape.param(mlp.biases[l]));
  }
  return h;
}

Var mlp_forward(Tape& tape, const Mlp& mlp, std::initializer_list<Var> inputs) {
  std::vector<InputBlock> blocks;
  for (const Var& v : inputs) blocks.push_back({v, static_cast<int>(v.cols())});
  return mlp_forward(tape, mlp, blocks);
}

Var mlp_forward(Tape& tape, const Mlp& mlp, Var input) {
  const InputBlock block{input, static_cast<int>(input.cols())};
  return mlp_forward(tape, mlp, std::span<const InputBlock>(&block, 1));
}

Tensor mlp_eval(const ParamStore& store, const Mlp& mlp, const Tensor& input) {
  if (input.cols() != mlp.input_width()) throw std::invalid_argument("MLP '" + mlp.name + "': input width mismatch");
  Tensor h = input;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    if (l > 0) h = h.cwiseMax(0.0);
    Tensor next = h * store.view(mlp.weights[l]);
    next.rowwise() += store.view(mlp.biases[l]).row(0);
    h = std::move(next);
  }
  return h;
}

nlohmann::json mlp_to_json(const Mlp& mlp) { return {{"name", mlp.name}, {"widths", mlp.widths}}; }

void require_finite(const Eigen::VectorXd& v, const std::string& what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericError(what + " is not finite", static_cast<long>(i));
  }
}

void adam_step(std::span<double> params, const Eigen::VectorXd& grads, AdamState& s, double lr) {
  const auto n = static_cast<Eigen::Index>(params.size());
  if (grads.size() != n) throw std::invalid_argument("adam_step: gradient length does not match parameters");
  if (s.m.size() == 0) s = AdamState(params.size());
  if (s.m.size() != n) throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  require_finite(grads, "gradient entry");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (Eigen::Index i = 0; i < n; ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[static_cast<std::size_t>(i)] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

void adam_step(ParamStore& params, const Eigen::VectorXd& grads, AdamState& state, double lr) {
  adam_step(params.flat(), grads, state, lr);
}

void sgd_step(std::span<double> params, const Eigen::VectorXd& grads, double lr) {
  if (grads.size() != static_cast<Eigen::Index>(params.size())) {
    throw std::invalid_argument("sgd_step: gradient length does not match parameters");
  }
  require_finite(grads, "gradient entry");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[static_cast<Eigen::Index>(i)];
}

double clip_global_norm(Eigen::VectorXd& grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm && norm > 0.0) grads *= max_norm / norm;
  return norm;
}

}  // namespace propnet::nn
