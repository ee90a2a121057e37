#pragma once

#include "propnet/autodiff.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace propnet::nn {

using ad::ParamStore;
using ad::Tape;
using ad::Var;

/// Fully connected network: ReLU on hidden layers, linear output.
/// `widths` = [input, hidden..., output].
struct Mlp {
  std::string name;
  std::vector<int> widths;
  std::vector<int> weights;  // ParamStore ids, W_l is widths[l] x widths[l+1]
  std::vector<int> biases;   // ParamStore ids, b_l is 1 x widths[l+1]

  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
};

/// Registers the layer parameters of an MLP in `store`.
Mlp make_mlp(ParamStore& store, const std::string& name, std::vector<int> widths);

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
void init_uniform(ParamStore& store, const Mlp& mlp, std::mt19937_64& rng);

/// One column block of an MLP input. An invalid `value` stands for an
/// all-zero block of `width` columns; its contribution is skipped.
struct InputBlock {
  Var value;
  int width = 0;
};

/// Forward pass over the column-wise concatenation of `blocks`. The first
/// layer is evaluated block by block (each block times its own row block of
/// W_0), so the parts are never copied into one matrix.
Var mlp_forward(Tape& tape, const Mlp& mlp, std::span<const InputBlock> blocks);
Var mlp_forward(Tape& tape, const Mlp& mlp, std::initializer_list<Var> inputs);
Var mlp_forward(Tape& tape, const Mlp& mlp, Var input);

/// Plain-double evaluation of `mlp` on `input` (no tape).
Tensor mlp_eval(const ParamStore& store, const Mlp& mlp, const Tensor& input);

nlohmann::json mlp_to_json(const Mlp& mlp);

// ---------------------------------------------------------------------------
// Optimizers

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))), v(m) {}
};

/// One bias-corrected Adam update of `params` in place. Throws
/// NumericError naming the first non-finite gradient entry.
void adam_step(std::span<double> params, const Eigen::VectorXd& grads, AdamState& state, double lr);
void adam_step(ParamStore& params, const Eigen::VectorXd& grads, AdamState& state, double lr);

void sgd_step(std::span<double> params, const Eigen::VectorXd& grads, double lr);

/// Rescales `grads` so its L2 norm is at most `max_norm`; returns the norm
/// before clipping.
double clip_global_norm(Eigen::VectorXd& grads, double max_norm);

void require_finite(const Eigen::VectorXd& v, const std::string& what);

}  // namespace propnet::nn
