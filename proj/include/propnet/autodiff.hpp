#pragma once

#include "propnet/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace propnet::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape
/// that created it is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Named parameter tensors backed by one contiguous buffer.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  };

  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  int find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Entry& entry(int id) const { return entries_.at(static_cast<std::size_t>(id)); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return data_.size(); }

  Eigen::Map<Tensor> view(int id);
  Eigen::Map<const Tensor> view(int id) const;

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  Eigen::Map<Eigen::VectorXd> flat_vector() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  Eigen::Map<const Eigen::VectorXd> flat_vector() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

 private:
  std::vector<Entry> entries_;
  std::vector<double> data_;
  std::unordered_map<std::string, int> index_;
};

/// Records operations for reverse-mode differentiation. One tape per
/// thread; nodes are appended in topological order by construction.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(const ParamStore* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant_scalar(double v);
  /// A leaf whose gradient is tracked and readable via grad().
  Var input(Tensor value);
  Var param(int id);
  /// Leaf over rows [row0, row0+nrows) of a parameter tensor.
  Var param_rows(int id, Eigen::Index row0, Eigen::Index nrows);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  /// Throws std::invalid_argument if loss is not 1x1.
  void backward(Var loss);

  /// Gradient of the last backward() w.r.t. v (zeros if unreachable).
  Tensor grad(Var v) const;
  /// Flat gradient w.r.t. every parameter in the store.
  const Eigen::VectorXd& param_grad() const { return param_grad_; }

  /// Mixes data-dependent branch decisions (ReLU masks, argmins, contact
  /// events) into a running hash so callers can detect piecewise switches.
  void note_branch(std::uint64_t bits);
  std::uint64_t branch_signature() const { return branch_hash_; }

  void clear();
  std::size_t size() const { return nodes_.size(); }
  const ParamStore* params() const { return params_; }

  // Used by operation implementations.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Tensor value, bool requires_grad, BackwardFn fn);
  const Tensor& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of node `id`, zero-initialised on first use.
  Tensor& grad_buffer(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_param = false;
    std::size_t param_offset = 0;
  };
  std::deque<Node> nodes_;  // stable references across push()
  const ParamStore* params_ = nullptr;
  Eigen::VectorXd param_grad_;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ull;
};

// ---------------------------------------------------------------------------
// Operations. Shapes follow Eigen conventions; broadcasting is explicit.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(Var a, Var row);
/// a (n x c) * col (n x 1) broadcast over columns.
Var mul_col(Var a, Var col);
/// Per-column affine map with constant coefficients: a * scale + shift.
Var affine_cols(Var a, const RowVector& scale, const RowVector& shift);
/// Multiplies each row by a constant per-row factor.
Var scale_rows(Var a, const Eigen::VectorXd& factors);

Var matmul(Var a, Var b);
/// Constant left factor: m * a.
Var matmul_const_left(const Tensor& m, Var a);

Var relu(Var a);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var atan2(Var y, Var x);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n);
Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n);

/// out.row(i) = a.row(index[i]).
Var gather_rows(Var a, std::span<const int> index);
/// out (rows x c), out.row(index[i]) += a.row(i).
Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index rows);
/// Tiles a 1 x c row into n identical rows.
Var broadcast_rows(Var row, Eigen::Index n);

Var sum(Var a);           // 1 x 1
Var mean(Var a);          // 1 x 1
Var row_sums(Var a);      // n x 1
Var column_sums(Var a);   // 1 x c
Var sum_squares(Var a);   // 1 x 1

/// Row-wise minimum (n x 1); the gradient routes to the argmin entry.
Var row_min(Var a);
/// Column-wise minimum (1 x c).
Var column_min(Var a);

/// Squared Euclidean distances between the rows of a (n x d) and b (m x d).
Var pairwise_sq_dist(Var a, Var b);

}  // namespace propnet::ad
