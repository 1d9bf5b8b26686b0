#include "fcm/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "fcm/errors.hpp"
#include "fcm/kernels.hpp"

namespace fcm::ad {
namespace {

std::atomic<debug::Fault> g_fault{debug::Fault::kNone};

Shape mat(std::size_t r, std::size_t c) { return Shape{r, c}; }

void require_same_shape(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.value().shape()) + " vs " +
                         to_string(b.value().shape()));
  }
}

Tape& tape_of(Var a) { return *a.tape; }

template <typename F, typename D>
Var unary_map(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(mat(x.rows(), x.cols()));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const NodeId ia = a.id;
  return tape_of(a).record(std::move(y), {a}, [ia, dfdx](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ia)) return;
    const Tensor& xv = t.value(ia);
    Tensor& gx = t.grad_slot(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx(xv[i]);
  });
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor t) {
  Node n;
  n.value = std::move(t);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::logic_error("tape: input recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(NodeId id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(NodeId id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grad_slot(id);
  kernels::active().axpy(1.0, g.data(), slot.data(), slot.size());
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape != this) throw std::logic_error("backward: loss is not on this tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward: loss must be scalar, got shape " + to_string(loss.value().shape()));
  }
  grad_slot(loss.id)[0] = 1.0;
  for (NodeId id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  GradientMap out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.is_leaf) continue;
    out.emplace(id, n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
  }
  return out;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? &n.grad : nullptr;
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(av.shape()) + " x " + to_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor c(mat(m, n));
  kernels::active().gemm(false, false, m, n, k, av.data(), bv.data(), c.data(), false);
  const NodeId ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(c), {a, b}, [ia, ib, m, n, k](Tape& t, const Tensor& gc) {
    const auto& kt = kernels::active();
    if (t.requires_grad(ia)) {
      kt.gemm(false, true, m, k, n, gc.data(), t.value(ib).data(), t.grad_slot(ia).data(), true);
    }
    if (t.requires_grad(ib)) {
      kt.gemm(true, false, k, n, m, t.value(ia).data(), gc.data(), t.grad_slot(ib).data(), true);
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(mat(n, m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y(j, i) = x(i, j);
  const NodeId ia = a.id;
  return tape_of(a).record(std::move(y), {a}, [ia, m, n](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ia)) return;
    Tensor& gx = t.grad_slot(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[j * m + i];
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor y(mat(a.rows(), a.cols()));
  kernels::active().add(a.value().data(), b.value().data(), y.data(), y.size());
  const NodeId ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& gy) {
    t.accumulate(ia, gy);
    t.accumulate(ib, gy);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor y(mat(a.rows(), a.cols()));
  kernels::active().sub(a.value().data(), b.value().data(), y.data(), y.size());
  const NodeId ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& gy) {
    t.accumulate(ia, gy);
    if (t.requires_grad(ib)) kernels::active().axpy(-1.0, gy.data(), t.grad_slot(ib).data(), gy.size());
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor y(mat(a.rows(), a.cols()));
  kernels::active().mul(a.value().data(), b.value().data(), y.data(), y.size());
  const NodeId ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& gy) {
    const auto& kt = kernels::active();
    Tensor tmp(gy.shape());
    if (t.requires_grad(ia)) {
      kt.mul(gy.data(), t.value(ib).data(), tmp.data(), tmp.size());
      t.accumulate(ia, tmp);
    }
    if (t.requires_grad(ib)) {
      kt.mul(gy.data(), t.value(ia).data(), tmp.data(), tmp.size());
      t.accumulate(ib, tmp);
    }
  });
}

Var tanh(Var a) {
  return unary_map(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var sigmoid(Var a) {
  return unary_map(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        if (debug::active_fault() == debug::Fault::kSigmoidBackward) return s;
        return s * (1.0 - s);
      });
}

Var relu(Var a) {
  return unary_map(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var elementwise(ElementwiseOp op, Var a) {
  switch (op) {
    case ElementwiseOp::kTanh: return tanh(a);
    case ElementwiseOp::kSigmoid: return sigmoid(a);
    case ElementwiseOp::kRelu: return relu(a);
    default: throw std::invalid_argument("elementwise: binary op called with one operand");
  }
}

Var elementwise(ElementwiseOp op, Var a, Var b) {
  switch (op) {
    case ElementwiseOp::kMul: return mul(a, b);
    case ElementwiseOp::kSub: return sub(a, b);
    case ElementwiseOp::kAdd: return add(a, b);
    default: throw std::invalid_argument("elementwise: unary op called with two operands");
  }
}

Var affine(Var a, double scale, double shift) {
  const Tensor& x = a.value();
  Tensor y(mat(x.rows(), x.cols()));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift;
  const NodeId ia = a.id;
  return tape_of(a).record(std::move(y), {a}, [ia, scale](Tape& t, const Tensor& gy) {
    if (t.requires_grad(ia)) kernels::active().axpy(scale, gy.data(), t.grad_slot(ia).data(), gy.size());
  });
}

Var add_row_broadcast(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("add_row_broadcast: " + to_string(xv.shape()) + " with row " + to_string(rv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor y(mat(m, n));
  for (std::size_t i = 0; i < m; ++i) kernels::active().add(xv.data() + i * n, rv.data(), y.data() + i * n, n);
  const NodeId ix = x.id, ir = row.id;
  return tape_of(x).record(std::move(y), {x, row}, [ix, ir, m, n](Tape& t, const Tensor& gy) {
    t.accumulate(ix, gy);
    if (t.requires_grad(ir)) {
      Tensor& gr = t.grad_slot(ir);
      for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(1.0, gy.data() + i * n, gr.data(), n);
    }
  });
}

Var mul_row_broadcast(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("mul_row_broadcast: " + to_string(xv.shape()) + " with row " + to_string(rv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor y(mat(m, n));
  for (std::size_t i = 0; i < m; ++i) kernels::active().mul(xv.data() + i * n, rv.data(), y.data() + i * n, n);
  const NodeId ix = x.id, ir = row.id;
  return tape_of(x).record(std::move(y), {x, row}, [ix, ir, m, n](Tape& t, const Tensor& gy) {
    const Tensor& xv2 = t.value(ix);
    const Tensor& rv2 = t.value(ir);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad_slot(ix);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i * n + j] * rv2[j];
    }
    if (t.requires_grad(ir)) {
      Tensor& gr = t.grad_slot(ir);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += gy[i * n + j] * xv2[i * n + j];
    }
  });
}

Var add_col_broadcast(Var x, Var col) {
  const Tensor& xv = x.value();
  const Tensor& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows()) {
    throw DimensionError("add_col_broadcast: " + to_string(xv.shape()) + " with column " + to_string(cv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor y(mat(m, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = xv[i * n + j] + cv[i];
  const NodeId ix = x.id, ic = col.id;
  return tape_of(x).record(std::move(y), {x, col}, [ix, ic, m, n](Tape& t, const Tensor& gy) {
    t.accumulate(ix, gy);
    if (t.requires_grad(ic)) {
      Tensor& gc = t.grad_slot(ic);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gc[i] += gy[i * n + j];
    }
  });
}

Var mul_col_broadcast(Var x, Var col) {
  const Tensor& xv = x.value();
  const Tensor& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows()) {
    throw DimensionError("mul_col_broadcast: " + to_string(xv.shape()) + " with column " + to_string(cv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor y(mat(m, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = xv[i * n + j] * cv[i];
  const NodeId ix = x.id, ic = col.id;
  return tape_of(x).record(std::move(y), {x, col}, [ix, ic, m, n](Tape& t, const Tensor& gy) {
    const Tensor& xv2 = t.value(ix);
    const Tensor& cv2 = t.value(ic);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad_slot(ix);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i * n + j] * cv2[i];
    }
    if (t.requires_grad(ic)) {
      Tensor& gc = t.grad_slot(ic);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gc[i] += gy[i * n + j] * xv2[i * n + j];
    }
  });
}

Var masked_softmax_rows(Var x, const Mask& mask) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (mask.rows() != m || mask.cols() != n) {
    throw DimensionError("masked_softmax_rows: mask " + to_string(Shape{mask.rows(), mask.cols()}) +
                         " does not match input " + to_string(xv.shape()));
  }
  Tensor y(mat(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      any = true;
      mx = std::max(mx, xv(i, j));
    }
    if (!any) throw InvalidMaskError("masked_softmax_rows: row " + std::to_string(i) + " has no valid entry");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const double e = std::exp(xv(i, j) - mx);
      y(i, j) = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) y(i, j) *= inv;
  }
  const NodeId ix = x.id;
  const NodeId iy = tape_of(x).size();
  return tape_of(x).record(std::move(y), {x}, [ix, iy, m, n](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    const Tensor& yv = t.value(iy);
    Tensor& gx = t.grad_slot(ix);
    for (std::size_t i = 0; i < m; ++i) {
      const double s = kernels::active().dot(yv.data() + i * n, gy.data() + i * n, n);
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += yv[i * n + j] * (gy[i * n + j] - s);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  std::vector<NodeId> ids;
  for (const Var& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts[0].value().shape()) + " vs " +
                           to_string(p.value().shape()));
    }
    widths.push_back(p.cols());
    ids.push_back(p.id);
    total += p.cols();
  }
  Tensor y(mat(m, total));
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t w = pv.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(pv.data() + i * w, w, y.data() + i * total + off);
    off += w;
  }
  return tape_of(parts[0]).record(std::move(y), parts, [ids, widths, m, total](Tape& t, const Tensor& gy) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t w = widths[p];
      if (t.requires_grad(ids[p])) {
        Tensor& g = t.grad_slot(ids[p]);
        for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(1.0, gy.data() + i * total + off, g.data() + i * w, w);
      }
      off += w;
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (begin > end || end > xv.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " +
                         to_string(xv.shape()));
  }
  const std::size_t n = xv.cols();
  Tensor y(mat(end - begin, n));
  std::copy_n(xv.data() + begin * n, (end - begin) * n, y.data());
  const NodeId ix = x.id;
  return tape_of(x).record(std::move(y), {x}, [ix, begin, n](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    kernels::active().axpy(1.0, gy.data(), t.grad_slot(ix).data() + begin * n, gy.size());
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (begin > end || end > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " +
                         to_string(xv.shape()));
  }
  const std::size_t m = xv.rows(), n = xv.cols(), w = end - begin;
  Tensor y(mat(m, w));
  for (std::size_t i = 0; i < m; ++i) std::copy_n(xv.data() + i * n + begin, w, y.data() + i * w);
  const NodeId ix = x.id;
  return tape_of(x).record(std::move(y), {x}, [ix, begin, m, n, w](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    Tensor& gx = t.grad_slot(ix);
    for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(1.0, gy.data() + i * w, gx.data() + i * n + begin, w);
  });
}

Var masked_row_max_pool(Var x, std::span<const std::uint8_t> row_mask) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (row_mask.size() != m) {
    throw DimensionError("masked_row_max_pool: mask of " + std::to_string(row_mask.size()) + " rows for input " +
                         to_string(xv.shape()));
  }
  std::vector<std::size_t> argmax(n, m);
  Tensor y(mat(1, n));
  for (std::size_t i = 0; i < m; ++i) {
    if (!row_mask[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (argmax[j] == m || xv(i, j) > y[j]) {
        y[j] = xv(i, j);
        argmax[j] = i;
      }
    }
  }
  if (n > 0 && argmax[0] == m) throw InvalidMaskError("masked_row_max_pool: no valid rows");
  const NodeId ix = x.id;
  return tape_of(x).record(std::move(y), {x}, [ix, argmax = std::move(argmax), n](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    Tensor& gx = t.grad_slot(ix);
    for (std::size_t j = 0; j < n; ++j) gx[argmax[j] * n + j] += gy[j];
  });
}

Var layer_norm_rows(Var x, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor y(mat(m, n));
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y(i, j) = (row[j] - mean) * inv_std[i];
  }
  const NodeId ix = x.id;
  const NodeId iy = tape_of(x).size();
  return tape_of(x).record(std::move(y), {x}, [ix, iy, m, n, inv_std = std::move(inv_std)](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    const Tensor& yv = t.value(iy);
    Tensor& gx = t.grad_slot(ix);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        mean_g += gy[i * n + j];
        mean_gy += gy[i * n + j] * yv[i * n + j];
      }
      mean_g *= inv_n;
      mean_gy *= inv_n;
      for (std::size_t j = 0; j < n; ++j) {
        gx[i * n + j] += inv_std[i] * (gy[i * n + j] - mean_g - yv[i * n + j] * mean_gy);
      }
    }
  });
}

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  const std::size_t n = tv.cols();
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  Tensor y(mat(idx.size(), n));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= tv.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(idx[i]) + " outside table " + to_string(tv.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * n, n, y.data() + i * n);
  }
  const NodeId it = table.id;
  return tape_of(table).record(std::move(y), {table}, [it, n, idx = std::move(idx)](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(it)) return;
    Tensor& gt = t.grad_slot(it);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      kernels::active().axpy(1.0, gy.data() + i * n, gt.data() + static_cast<std::size_t>(idx[i]) * n, n);
    }
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const NodeId ix = x.id;
  return tape_of(x).record(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    Tensor& gx = t.grad_slot(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[0];
  });
}

Var sum_squares(Var x) {
  const Tensor& xv = x.value();
  const double s = kernels::active().dot(xv.data(), xv.data(), xv.size());
  const NodeId ix = x.id;
  return tape_of(x).record(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    kernels::active().axpy(2.0 * gy[0], t.value(ix).data(), t.grad_slot(ix).data(), t.value(ix).size());
  });
}

Var element(Var x, std::size_t r, std::size_t c) {
  const Tensor& xv = x.value();
  if (r >= xv.rows() || c >= xv.cols()) {
    throw DimensionError("element: (" + std::to_string(r) + ", " + std::to_string(c) + ") out of " +
                         to_string(xv.shape()));
  }
  const std::size_t n = xv.cols();
  const NodeId ix = x.id;
  return tape_of(x).record(Tensor::scalar(xv(r, c)), {x}, [ix, r, c, n](Tape& t, const Tensor& gy) {
    if (t.requires_grad(ix)) t.grad_slot(ix)[r * n + c] += gy[0];
  });
}

Var log_clamped(Var x, double floor, std::size_t* clamp_count) {
  const Tensor& xv = x.value();
  Tensor y(mat(xv.rows(), xv.cols()));
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (xv[i] <= floor) {
      y[i] = std::log(floor);
      if (clamp_count) ++*clamp_count;
    } else {
      y[i] = std::log(xv[i]);
    }
  }
  const NodeId ix = x.id;
  return tape_of(x).record(std::move(y), {x}, [ix, floor](Tape& t, const Tensor& gy) {
    if (!t.requires_grad(ix)) return;
    const Tensor& xv2 = t.value(ix);
    Tensor& gx = t.grad_slot(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv2[i] > floor) gx[i] += gy[i] / xv2[i];
    }
  });
}

namespace debug {
void inject_fault(Fault f) { g_fault.store(f); }
Fault active_fault() { return g_fault.load(std::memory_order_relaxed); }
}  // namespace debug

}  // namespace fcm::ad
