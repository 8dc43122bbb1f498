// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal tape-based reverse-mode differentiation over dense double matrices.
//
// A Graph records every operation applied to its Vars in creation order, so
// the reverse sweep is a plain backwards walk over the node list. Trainable
// tensors live in Param objects owned by the model; a Graph only borrows
// them and accumulates into Param::grad during backward().

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kgc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A named trainable (or frozen) tensor with its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  /// Gradient accumulator; written by Graph::backward through const leaves.
  mutable Matrix grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Whether backward closures are recorded. Eval-mode graphs skip them.
  bool recording() const { return record_; }

  Var constant(Matrix value);
  /// Leaf bound to a parameter. The value is borrowed, not copied; when the
  /// graph records and p is trainable, backward() accumulates into p.grad.
  Var param(const Param& p);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;

  /// Seeds d(out)/d(out) = 1 (out must be 1x1) and sweeps the tape backwards,
  /// accumulating into every trainable Param reached.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

  // Implementation interface used by the op library.
  struct Node {
    Matrix value;
    const Matrix* borrowed = nullptr;
    Matrix grad;
    const Param* param = nullptr;
    std::function<void(Node&)> backward;

    const Matrix& val() const { return borrowed ? *borrowed : value; }
    Matrix& grad_ref() {
      if (grad.size() == 0) grad = Matrix::Zero(val().rows(), val().cols());
      return grad;
    }
  };
  Var push(Matrix value, std::function<void(Node&)> backward);
  Node& node(Var v) { return *nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return *nodes_[static_cast<std::size_t>(v.id)]; }

 private:
  bool record_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

namespace ag {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// Adds a 1 x cols row vector to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var tanh(Var a);
/// Tanh-approximated GELU.
Var gelu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
/// Multiplies by a fixed 0/1 (already rescaled) mask of the same shape.
Var mask_mul(Var a, Matrix mask);

/// Row-wise softmax restricted to columns with keep[c] != 0. Masked columns
/// get exactly zero; a row with no kept column is all zeros.
Var masked_softmax(Var scores, std::span<const std::uint8_t> keep);

/// Per-row layer normalisation with affine (1 x cols) gamma/beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Rows of an embedding table. Backward scatters straight into p.grad.
Var embedding(Graph& g, const Param& table, std::span<const int> ids);

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Means over consecutive groups of `group` rows: (R*group, c) -> (R, c).
Var mean_row_groups(Var a, Eigen::Index group);
/// Mean across columns: (r, c) -> (r, 1).
Var mean_cols(Var a);
Var sum(std::span<const Var> parts);

/// Same-padded 1-D convolution applied independently to every row.
/// x is (R, in_ch * length) with channel c in columns [c*length, (c+1)*length).
/// weight is (out_ch, in_ch * kernel) with entry (o, c*kernel + j); bias is
/// (out_ch, 1). Output is (R, out_ch * length).
Var conv1d_same(Var x, Var weight, Var bias, Eigen::Index length);

/// Mean binary cross-entropy of probabilities p (n x 1) against targets,
/// with p clamped to [eps, 1 - eps]. Returns 1 x 1.
Var bce_mean(Var p, std::span<const double> targets, double eps = 1e-7);

}  // namespace ag
}  // namespace kgc
