#include "gridmp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridmp/attention.hpp"
#include "gridmp/errors.hpp"

namespace gridmp::nn {

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

void accumulate(Tape& t, int id, const Matrix& g) {
  if (t.requires_grad(id)) t.grad_mut(id) += g;
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Matrix& external, bool requires_grad) {
  Node n;
  n.ref = &external;
  n.requires_grad = requires_grad && record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return push_n(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::push_n(Matrix value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& in : inputs)
      if (requires_grad(in.id)) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_mut(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = n.ref ? *n.ref : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw ShapeError("backward: tape was built without recording");
  const Matrix& v = value(loss.id);
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("backward: loss must be 1x1");
  if (!requires_grad(loss.id)) return;
  grad_mut(loss.id)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && n.grad.size() > 0) n.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(av.cols()) + " vs " + std::to_string(bv.rows()));
  Matrix out;
  out.noalias() = av * bv;
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) t.grad_mut(a).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad_mut(b).noalias() += t.value(a).transpose() * g;
  });
}

Var add(Var a, Var b) {
  same_shape(a.value(), b.value(), "add");
  return a.tape->push(a.value() + b.value(), {a, b}, [a = a.id, b = b.id](Tape& t, int self) {
    accumulate(t, a, t.grad(self));
    accumulate(t, b, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_shape(a.value(), b.value(), "sub");
  return a.tape->push(a.value() - b.value(), {a, b}, [a = a.id, b = b.id](Tape& t, int self) {
    accumulate(t, a, t.grad(self));
    if (t.requires_grad(b)) t.grad_mut(b) -= t.grad(self);
  });
}

Var add_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw ShapeError("add_row: bias must be 1 x cols");
  Matrix out = av;
  out.rowwise() += rv.row(0);
  return a.tape->push(std::move(out), {a, row}, [a = a.id, r = row.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    accumulate(t, a, g);
    if (t.requires_grad(r)) t.grad_mut(r).row(0) += g.colwise().sum();
  });
}

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, {a}, [a = a.id, s](Tape& t, int self) {
    if (t.requires_grad(a)) t.grad_mut(a) += s * t.grad(self);
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->push(std::move(out), {a}, [a = a.id](Tape& t, int self) {
    if (!t.requires_grad(a)) return;
    t.grad_mut(a) += (t.value(a).array() > 0.0).select(t.grad(self), 0.0);
  });
}

Var identity(Var a) {
  return a.tape->push(a.value(), {a}, [a = a.id](Tape& t, int self) { accumulate(t, a, t.grad(self)); });
}

Var bounded_sigmoid(Var z, const Vector& lo, const Vector& hi) {
  const Matrix& zv = z.value();
  if (zv.cols() != 1 || lo.size() != zv.rows() || hi.size() != zv.rows())
    throw ShapeError("bounded_sigmoid: expected a column with matching bounds");
  Matrix out(zv.rows(), 1);
  Matrix slope(zv.rows(), 1);
  for (Eigen::Index i = 0; i < zv.rows(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-zv(i, 0)));
    const double width = hi[i] - lo[i];
    out(i, 0) = std::clamp(lo[i] + s * width, lo[i], hi[i]);
    slope(i, 0) = s * (1.0 - s) * width;
  }
  return z.tape->push(std::move(out), {z}, [z = z.id, slope = std::move(slope)](Tape& t, int self) {
    if (t.requires_grad(z)) t.grad_mut(z) += t.grad(self).cwiseProduct(slope);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> starts;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id);
    starts.push_back(c);
    c += p.cols();
  }
  return parts[0].tape->push_n(std::move(out), parts,
                               [ids = std::move(ids), starts = std::move(starts)](Tape& t, int self) {
                                 const Matrix& g = t.grad(self);
                                 for (std::size_t k = 0; k < ids.size(); ++k)
                                   if (t.requires_grad(ids[k])) {
                                     Matrix& dst = t.grad_mut(ids[k]);
                                     dst += g.middleCols(starts[k], dst.cols());
                                   }
                               });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> starts;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    if (p.rows() > 0) out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id);
    starts.push_back(r);
    r += p.rows();
  }
  return parts[0].tape->push_n(std::move(out), parts,
                               [ids = std::move(ids), starts = std::move(starts)](Tape& t, int self) {
                                 const Matrix& g = t.grad(self);
                                 for (std::size_t k = 0; k < ids.size(); ++k)
                                   if (t.requires_grad(ids[k])) {
                                     Matrix& dst = t.grad_mut(ids[k]);
                                     if (dst.rows() > 0) dst += g.middleRows(starts[k], dst.rows());
                                   }
                               });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) throw ShapeError("slice_rows: out of range");
  return a.tape->push(av.middleRows(start, count), {a}, [a = a.id, start, count](Tape& t, int self) {
    if (t.requires_grad(a) && count > 0) t.grad_mut(a).middleRows(start, count) += t.grad(self);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) throw ShapeError("slice_cols: out of range");
  return a.tape->push(av.middleCols(start, count), {a}, [a = a.id, start, count](Tape& t, int self) {
    if (t.requires_grad(a) && count > 0) t.grad_mut(a).middleCols(start, count) += t.grad(self);
  });
}

Var gather_rows(Var a, std::span<const int> index) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = av.row(index[r]);
  }
  return a.tape->push(std::move(out), {a},
                      [a = a.id, index = std::vector<int>(index.begin(), index.end())](Tape& t, int self) {
                        if (!t.requires_grad(a)) return;
                        const Matrix& g = t.grad(self);
                        Matrix& dst = t.grad_mut(a);
                        for (std::size_t r = 0; r < index.size(); ++r)
                          dst.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
                      });
}

Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index rows) {
  const Matrix& av = a.value();
  if (static_cast<Eigen::Index>(index.size()) != av.rows()) throw ShapeError("scatter_add_rows: index length");
  Matrix out = Matrix::Zero(rows, av.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= rows) throw ShapeError("scatter_add_rows: index out of range");
    out.row(index[r]) += av.row(static_cast<Eigen::Index>(r));
  }
  return a.tape->push(std::move(out), {a},
                      [a = a.id, index = std::vector<int>(index.begin(), index.end())](Tape& t, int self) {
                        if (!t.requires_grad(a)) return;
                        const Matrix& g = t.grad(self);
                        Matrix& dst = t.grad_mut(a);
                        for (std::size_t r = 0; r < index.size(); ++r)
                          dst.row(static_cast<Eigen::Index>(r)) += g.row(index[r]);
                      });
}

Var weighted_sse(Var a, const Matrix& target, const Matrix& weights) {
  same_shape(a.value(), target, "weighted_sse");
  same_shape(a.value(), weights, "weighted_sse");
  Matrix diff = a.value() - target;
  Matrix out(1, 1);
  out(0, 0) = (weights.array() * diff.array().square()).sum();
  Matrix slope = 2.0 * weights.cwiseProduct(diff);
  return a.tape->push(std::move(out), {a}, [a = a.id, slope = std::move(slope)](Tape& t, int self) {
    if (t.requires_grad(a)) t.grad_mut(a) += t.grad(self)(0, 0) * slope;
  });
}

Var sum_scalars(std::span<const Var> parts) {
  Var acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return acc;
}

Var multihead_attention(Var q, Var k, Var v, std::span<const int> offsets, int heads, AttentionKind kind,
                        const Matrix* features) {
  const Matrix& qv = q.value();
  same_shape(qv, k.value(), "multihead_attention");
  same_shape(qv, v.value(), "multihead_attention");
  if (heads < 1 || qv.cols() % heads != 0) throw ShapeError("multihead_attention: width not divisible by heads");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != qv.rows())
    throw ShapeError("multihead_attention: segment offsets must span all rows");
  const Eigen::Index dh = qv.cols() / heads;
  if (kind == AttentionKind::Performer && (!features || features->cols() != dh))
    throw ShapeError("multihead_attention: random features must be m x head_dim");

  auto block = [&](const Matrix& m, std::size_t s, int h) {
    return Matrix(m.block(offsets[s], h * dh, offsets[s + 1] - offsets[s], dh));
  };

  Matrix out(qv.rows(), qv.cols());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] == offsets[s]) continue;
    for (int h = 0; h < heads; ++h) {
      const Matrix qb = block(qv, s, h), kb = block(k.value(), s, h), vb = block(v.value(), s, h);
      out.block(offsets[s], h * dh, offsets[s + 1] - offsets[s], dh) =
          kind == AttentionKind::Softmax ? softmax_attention(qb, kb, vb) : performer_attention(qb, kb, vb, *features);
    }
  }
  return q.tape->push(
      std::move(out), {q, k, v},
      [q = q.id, k = k.id, v = v.id, offs = std::vector<int>(offsets.begin(), offsets.end()), heads, dh, kind,
       features](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& qv = t.value(q);
        const Matrix& kv = t.value(k);
        const Matrix& vv = t.value(v);
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols()), dk = dq, dvm = dq;
        for (std::size_t s = 0; s + 1 < offs.size(); ++s) {
          const Eigen::Index r0 = offs[s], n = offs[s + 1] - offs[s];
          if (n == 0) continue;
          for (int h = 0; h < heads; ++h) {
            const Matrix qb = qv.block(r0, h * dh, n, dh), kb = kv.block(r0, h * dh, n, dh),
                         vb = vv.block(r0, h * dh, n, dh), gb = g.block(r0, h * dh, n, dh);
            AttentionGrads ag = kind == AttentionKind::Softmax
                                    ? softmax_attention_backward(qb, kb, vb, gb)
                                    : performer_attention_backward(qb, kb, vb, *features, gb);
            dq.block(r0, h * dh, n, dh) = ag.dq;
            dk.block(r0, h * dh, n, dh) = ag.dk;
            dvm.block(r0, h * dh, n, dh) = ag.dv;
          }
        }
        accumulate(t, q, dq);
        accumulate(t, k, dk);
        accumulate(t, v, dvm);
      });
}

}  // namespace gridmp::nn
