#include "propnet/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace propnet::ad {

namespace {

using ArrayRM = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

// Elementwise unary op with derivative expressed through input/output.
template <class F, class D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = tape_of(a);
  Tensor out = a.value().unaryExpr(f);
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia, dfdx](Tape& tape, int self) {
    const Tensor& x = tape.value_of(ia);
    const Tensor& y = tape.value_of(self);
    const Tensor& g = tape.grad_of(self);
    const ArrayRM d = dfdx(x.array(), y.array());
    tape.grad_buffer(ia).array() += g.array() * d;
  });
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw std::invalid_argument("value() of an empty Var");
  return tape_->value_of(id_);
}

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw std::invalid_argument("scalar() on a non-scalar Var");
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Entry e{name, rows, cols, data_.size()};
  data_.resize(data_.size() + e.size(), 0.0);
  entries_.push_back(e);
  const int id = static_cast<int>(entries_.size()) - 1;
  index_.emplace(name, id);
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
  return it->second;
}

Eigen::Map<Tensor> ParamStore::view(int id) {
  const Entry& e = entry(id);
  return {data_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const Tensor> ParamStore::view(int id) const {
  const Entry& e = entry(id);
  return {data_.data() + e.offset, e.rows, e.cols};
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool rg = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::invalid_argument("mixing Vars from different tapes");
    rg = rg || requires_grad(v.id());
  }
  return push(std::move(value), rg, std::move(fn));
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::constant_scalar(double v) {
  Tensor t(1, 1);
  t(0, 0) = v;
  return constant(std::move(t));
}

Var Tape::input(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::param(int id) {
  if (!params_) throw std::invalid_argument("tape has no parameter store");
  const auto& e = params_->entry(id);
  return param_rows(id, 0, e.rows);
}

Var Tape::param_rows(int id, Eigen::Index row0, Eigen::Index nrows) {
  if (!params_) throw std::invalid_argument("tape has no parameter store");
  const auto& e = params_->entry(id);
  if (row0 < 0 || row0 + nrows > e.rows) throw std::invalid_argument("param_rows out of range for " + e.name);
  Tensor value = params_->view(id).middleRows(row0, nrows);
  Var v = push(std::move(value), true, {});
  Node& n = nodes_.back();
  n.is_param = true;
  n.param_offset = e.offset + static_cast<std::size_t>(row0 * e.cols);
  return v;
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + std::to_string(loss.rows()) + "x" +
                                std::to_string(loss.cols()));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  param_grad_ = Eigen::VectorXd::Zero(params_ ? static_cast<Eigen::Index>(params_->size()) : 0);
  grad_buffer(loss.id())(0, 0) = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.is_param) {
      param_grad_.segment(static_cast<Eigen::Index>(n.param_offset), n.grad.size()) +=
          Eigen::Map<const Eigen::VectorXd>(n.grad.data(), n.grad.size());
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id()));
  if (n.grad.size() == 0) return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::note_branch(std::uint64_t bits) {
  branch_hash_ ^= bits;
  branch_hash_ *= 0x100000001b3ull;
}

void Tape::clear() {
  nodes_.clear();
  param_grad_.resize(0);
  branch_hash_ = 0xcbf29ce484222325ull;
}

// ---------------------------------------------------------------------------
// Arithmetic

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
    if (t.requires_grad(ib)) t.grad_buffer(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
    if (t.requires_grad(ib)) t.grad_buffer(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  Tensor out = a.value().cwiseProduct(b.value());
  return tape_of(a).push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g.cwiseProduct(t.value_of(ib));
    if (t.requires_grad(ib)) t.grad_buffer(ib) += g.cwiseProduct(t.value_of(ia));
  });
}

Var div(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "div");
  const int ia = a.id(), ib = b.id();
  Tensor out = a.value().cwiseQuotient(b.value());
  return tape_of(a).push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& bv = t.value_of(ib);
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g.cwiseQuotient(bv);
    if (t.requires_grad(ib)) {
      t.grad_buffer(ib).array() -= g.array() * t.value_of(self).array() / bv.array();
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  const int ia = a.id();
  return tape_of(a).push(a.value() * s, {a}, [ia, s](Tape& t, int self) { t.grad_buffer(ia) += t.grad_of(self) * s; });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id();
  Tensor out = a.value().array() + s;
  return tape_of(a).push(std::move(out), {a}, [ia](Tape& t, int self) { t.grad_buffer(ia) += t.grad_of(self); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row must be 1 x cols(a)");
  const int ia = a.id(), ir = row.id();
  Tensor out = a.value();
  out.rowwise() += row.value().row(0);
  return tape_of(a).push(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
    if (t.requires_grad(ir)) t.grad_buffer(ir) += g.colwise().sum();
  });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: col must be rows(a) x 1");
  const int ia = a.id(), ic = col.id();
  Tensor out = a.value().array().colwise() * col.value().col(0).array();
  return tape_of(a).push(std::move(out), {a, col}, [ia, ic](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia).array() += g.array().colwise() * t.value_of(ic).col(0).array();
    if (t.requires_grad(ic)) t.grad_buffer(ic).col(0) += g.cwiseProduct(t.value_of(ia)).rowwise().sum();
  });
}

Var affine_cols(Var a, const RowVector& scale_row, const RowVector& shift) {
  if (scale_row.size() != a.cols() || shift.size() != a.cols()) {
    throw std::invalid_argument("affine_cols: coefficient width mismatch");
  }
  const int ia = a.id();
  Tensor out = (a.value().array().rowwise() * scale_row.array()).rowwise() + shift.array();
  return tape_of(a).push(std::move(out), {a}, [ia, scale_row](Tape& t, int self) {
    t.grad_buffer(ia).array() += t.grad_of(self).array().rowwise() * scale_row.array();
  });
}

Var scale_rows(Var a, const Eigen::VectorXd& factors) {
  if (factors.size() != a.rows()) throw std::invalid_argument("scale_rows: factor count mismatch");
  const int ia = a.id();
  Tensor out = a.value().array().colwise() * factors.array();
  return tape_of(a).push(std::move(out), {a}, [ia, factors](Tape& t, int self) {
    t.grad_buffer(ia).array() += t.grad_of(self).array().colwise() * factors.array();
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  const int ia = a.id(), ib = b.id();
  Tensor out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return tape_of(a).push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.grad_buffer(ia).noalias() += g * t.value_of(ib).transpose();
    if (t.requires_grad(ib)) t.grad_buffer(ib).noalias() += t.value_of(ia).transpose() * g;
  });
}

Var matmul_const_left(const Tensor& m, Var a) {
  if (m.cols() != a.rows()) throw std::invalid_argument("matmul_const_left: inner dimension mismatch");
  const int ia = a.id();
  Tensor out(m.rows(), a.cols());
  out.noalias() = m * a.value();
  return tape_of(a).push(std::move(out), {a}, [ia, m](Tape& t, int self) {
    t.grad_buffer(ia).noalias() += m.transpose() * t.grad_of(self);
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

Var relu(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value().cwiseMax(0.0);
  std::uint64_t h = 0;
  const double* p = out.data();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    h = (h << 1 | (h >> 63)) ^ static_cast<std::uint64_t>(p[i] > 0.0) * static_cast<std::uint64_t>(i + 1);
  }
  t.note_branch(h);
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tape, int self) {
    const Tensor& y = tape.value_of(self);
    tape.grad_buffer(ia).array() += (y.array() > 0.0).select(tape.grad_of(self).array(), 0.0);
  });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](const auto& x, const auto&) -> ArrayRM { return x.cos(); });
}

Var cos(Var a) {
  return unary(a, [](double x) { return std::cos(x); }, [](const auto& x, const auto&) -> ArrayRM { return -x.sin(); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](const auto&, const auto& y) -> ArrayRM { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](const auto& x, const auto&) -> ArrayRM { return x.inverse(); });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](const auto&, const auto& y) -> ArrayRM { return 0.5 * y.inverse(); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](const auto& x, const auto&) -> ArrayRM { return 2.0 * x; });
}

Var atan2(Var y, Var x) {
  require_same_shape(y.value(), x.value(), "atan2");
  Tensor out = y.value().binaryExpr(x.value(), [](double a, double b) { return std::atan2(a, b); });
  const int iy = y.id(), ix = x.id();
  return tape_of(y).push(std::move(out), {y, x}, [iy, ix](Tape& t, int self) {
    const auto yv = t.value_of(iy).array();
    const auto xv = t.value_of(ix).array();
    const auto g = t.grad_of(self).array();
    const ArrayRM r2 = xv * xv + yv * yv;
    if (t.requires_grad(iy)) t.grad_buffer(iy).array() += g * xv / r2;
    if (t.requires_grad(ix)) t.grad_buffer(ix).array() -= g * yv / r2;
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: mixing tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || t.requires_grad(p.id());
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), rg, [ids, widths](Tape& tape, int self) {
    const Tensor& g = tape.grad_of(self);
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (tape.requires_grad(ids[i])) tape.grad_buffer(ids[i]) += g.middleCols(col, widths[i]);
      col += widths[i];
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.rows();
    rg = rg || t.requires_grad(p.id());
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Tensor out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(out), rg, [ids, heights](Tape& tape, int self) {
    const Tensor& g = tape.grad_of(self);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (tape.requires_grad(ids[i])) tape.grad_buffer(ids[i]) += g.middleRows(row, heights[i]);
      row += heights[i];
    }
  });
}

Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
  if (c0 < 0 || c0 + n > a.cols()) throw std::invalid_argument("slice_cols out of range");
  const int ia = a.id();
  return tape_of(a).push(a.value().middleCols(c0, n), {a}, [ia, c0, n](Tape& t, int self) {
    t.grad_buffer(ia).middleCols(c0, n) += t.grad_of(self);
  });
}

Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  if (r0 < 0 || r0 + n > a.rows()) throw std::invalid_argument("slice_rows out of range");
  const int ia = a.id();
  return tape_of(a).push(a.value().middleRows(r0, n), {a}, [ia, r0, n](Tape& t, int self) {
    t.grad_buffer(ia).middleRows(r0, n) += t.grad_of(self);
  });
}

Var gather_rows(Var a, std::span<const int> index) {
  const Tensor& av = a.value();
  Tensor out(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= av.rows()) throw std::invalid_argument("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(index[i]);
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return tape_of(a).push(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index rows) {
  const Tensor& av = a.value();
  if (static_cast<Eigen::Index>(index.size()) != av.rows()) {
    throw std::invalid_argument("scatter_add_rows: index length must equal rows(a)");
  }
  Tensor out = Tensor::Zero(rows, av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= rows) throw std::invalid_argument("scatter_add_rows: index out of range");
    out.row(index[i]) += av.row(static_cast<Eigen::Index>(i));
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return tape_of(a).push(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(static_cast<Eigen::Index>(i)) += g.row(idx[i]);
  });
}

Var broadcast_rows(Var row, Eigen::Index n) {
  if (row.rows() != 1) throw std::invalid_argument("broadcast_rows: input must be a single row");
  const int ir = row.id();
  Tensor out = row.value().replicate(n, 1);
  return tape_of(row).push(std::move(out), {row}, [ir](Tape& t, int self) {
    t.grad_buffer(ir) += t.grad_of(self).colwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  return tape_of(a).push(std::move(out), {a}, [ia](Tape& t, int self) {
    t.grad_buffer(ia).array() += t.grad_of(self)(0, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_sums(Var a) {
  Tensor out = a.value().rowwise().sum();
  const int ia = a.id();
  return tape_of(a).push(std::move(out), {a}, [ia](Tape& t, int self) {
    t.grad_buffer(ia).colwise() += t.grad_of(self).col(0);
  });
}

Var column_sums(Var a) {
  Tensor out = a.value().colwise().sum();
  const int ia = a.id();
  return tape_of(a).push(std::move(out), {a}, [ia](Tape& t, int self) {
    t.grad_buffer(ia).rowwise() += t.grad_of(self).row(0);
  });
}

Var sum_squares(Var a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  const int ia = a.id();
  return tape_of(a).push(std::move(out), {a}, [ia](Tape& t, int self) {
    t.grad_buffer(ia) += (2.0 * t.grad_of(self)(0, 0)) * t.value_of(ia);
  });
}

Var row_min(Var a) {
  const Tensor& av = a.value();
  if (av.cols() == 0) throw std::invalid_argument("row_min of a matrix without columns");
  Tensor out(av.rows(), 1);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(av.rows()));
  std::uint64_t h = 0;
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    out(r, 0) = av.row(r).minCoeff(&arg[static_cast<std::size_t>(r)]);
    h = h * 31 + static_cast<std::uint64_t>(arg[static_cast<std::size_t>(r)]);
  }
  Tape& t = tape_of(a);
  t.note_branch(h);
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia, arg = std::move(arg)](Tape& tape, int self) {
    const Tensor& g = tape.grad_of(self);
    Tensor& ga = tape.grad_buffer(ia);
    for (std::size_t r = 0; r < arg.size(); ++r) ga(static_cast<Eigen::Index>(r), arg[r]) += g(static_cast<Eigen::Index>(r), 0);
  });
}

Var column_min(Var a) {
  const Tensor& av = a.value();
  if (av.rows() == 0) throw std::invalid_argument("column_min of a matrix without rows");
  Tensor out(1, av.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(av.cols()));
  std::uint64_t h = 0;
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    out(0, c) = av.col(c).minCoeff(&arg[static_cast<std::size_t>(c)]);
    h = h * 31 + static_cast<std::uint64_t>(arg[static_cast<std::size_t>(c)]);
  }
  Tape& t = tape_of(a);
  t.note_branch(h);
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia, arg = std::move(arg)](Tape& tape, int self) {
    const Tensor& g = tape.grad_of(self);
    Tensor& ga = tape.grad_buffer(ia);
    for (std::size_t c = 0; c < arg.size(); ++c) ga(arg[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
  });
}

Var pairwise_sq_dist(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("pairwise_sq_dist: dimension mismatch");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), bv.rows());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    for (Eigen::Index j = 0; j < bv.rows(); ++j) out(i, j) = (av.row(i) - bv.row(j)).squaredNorm();
  }
  const int ia = a.id(), ib = b.id();
  return tape_of(a).push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& x = t.value_of(ia);
    const Tensor& y = t.value_of(ib);
    const bool ga = t.requires_grad(ia), gb = t.requires_grad(ib);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.rows(); ++j) {
        const double w = 2.0 * g(i, j);
        if (w == 0.0) continue;
        if (ga) t.grad_buffer(ia).row(i) += w * (x.row(i) - y.row(j));
        if (gb) t.grad_buffer(ib).row(j) -= w * (x.row(i) - y.row(j));
      }
    }
  });
}

}  // namespace propnet::ad
