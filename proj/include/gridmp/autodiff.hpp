#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gridmp/tensor.hpp"

namespace gridmp::nn {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Matrix-valued reverse-mode tape. Nodes are appended in evaluation order, so
/// backward() is a single reverse sweep. A tape built with record = false keeps
/// values only (inference).
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf referencing external storage (not copied); must outlive the tape.
  Var leaf(const Matrix& external, bool requires_grad = true);

  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var push_n(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ref ? *n.ref : n.value;
  }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() > 0; }
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  /// Zero-initialized on first access.
  Matrix& grad_mut(int id);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and sweeps backwards.
  void backward(Var loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// Elementwise and linear-algebra primitives.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // a + 1 * row (row is 1 x cols)
Var scale(Var a, double s);
Var relu(Var a);
Var identity(Var a);

/// lo + sigmoid(z) * (hi - lo), clamped into [lo, hi]; lo/hi are constant column vectors.
Var bounded_sigmoid(Var z, const Vector& lo, const Vector& hi);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> index);
/// out[index[r]] += a[r]; out has `rows` rows.
Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index rows);

/// sum(weights .* (a - target)^2) as a 1x1 node.
Var weighted_sse(Var a, const Matrix& target, const Matrix& weights);
Var sum_scalars(std::span<const Var> parts);

enum class AttentionKind { Softmax, Performer };

/// Multi-head self-attention core on pre-projected q, k, v (n x d). Attention
/// is restricted to contiguous row segments [offsets[s], offsets[s+1]).
/// Performer mode uses `features` (m x d/heads) shared across heads.
Var multihead_attention(Var q, Var k, Var v, std::span<const int> offsets, int heads, AttentionKind kind,
                        const Matrix* features);

}  // namespace gridmp::nn
