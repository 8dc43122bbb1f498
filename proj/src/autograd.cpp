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

#include "kgc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kgc/error.hpp"

namespace kgc {

using Node = Graph::Node;

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::push(Matrix value, std::function<void(Node&)> backward) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  if (record_) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Graph::param(const Param& p) {
  auto n = std::make_unique<Node>();
  n->borrowed = &p.value;
  n->param = &p;
  if (record_ && p.trainable) {
    n->backward = [&p](Node& self) {
      if (p.grad.size() == 0) p.zero_grad();
      p.grad += self.grad;
    };
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Graph::value(Var v) const { return node(v).val(); }

const Matrix& Graph::grad(Var v) const { return node(v).grad; }

void Graph::backward(Var out) {
  if (!record_) throw Error("backward() on a graph that does not record");
  Node& root = node(out);
  if (root.val().size() != 1) throw Error("backward() needs a scalar output");
  root.grad_ref().setOnes();
  for (int i = out.id; i >= 0; --i) {
    Node& n = *nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(n);
  }
}

namespace ag {
namespace {

Node& N(Var v) { return v.graph->node(v); }

void check_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw Error("operands belong to different graphs");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_graph(a, b);
  Node* na = &N(a);
  Node* nb = &N(b);
  if (na->val().cols() != nb->val().rows()) throw Error("matmul: shape mismatch");
  return a.graph->push(na->val() * nb->val(), [na, nb](Node& self) {
    na->grad_ref().noalias() += self.grad * nb->val().transpose();
    nb->grad_ref().noalias() += na->val().transpose() * self.grad;
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_graph(a, b);
  Node* na = &N(a);
  Node* nb = &N(b);
  if (na->val().cols() != nb->val().cols()) throw Error("matmul_nt: shape mismatch");
  return a.graph->push(na->val() * nb->val().transpose(), [na, nb](Node& self) {
    na->grad_ref().noalias() += self.grad * nb->val();
    nb->grad_ref().noalias() += self.grad.transpose() * na->val();
  });
}

Var transpose(Var a) {
  Node* na = &N(a);
  return a.graph->push(na->val().transpose(),
                       [na](Node& self) { na->grad_ref() += self.grad.transpose(); });
}

Var add(Var a, Var b) {
  check_same_graph(a, b);
  Node* na = &N(a);
  Node* nb = &N(b);
  if (na->val().rows() != nb->val().rows() || na->val().cols() != nb->val().cols())
    throw Error("add: shape mismatch");
  return a.graph->push(na->val() + nb->val(), [na, nb](Node& self) {
    na->grad_ref() += self.grad;
    nb->grad_ref() += self.grad;
  });
}

Var add_row(Var a, Var row) {
  check_same_graph(a, row);
  Node* na = &N(a);
  Node* nr = &N(row);
  if (nr->val().rows() != 1 || nr->val().cols() != na->val().cols())
    throw Error("add_row: bias must be 1 x cols");
  Matrix out = na->val().rowwise() + nr->val().row(0);
  return a.graph->push(std::move(out), [na, nr](Node& self) {
    na->grad_ref() += self.grad;
    nr->grad_ref() += self.grad.colwise().sum();
  });
}

Var scale(Var a, double s) {
  Node* na = &N(a);
  return a.graph->push(na->val() * s, [na, s](Node& self) { na->grad_ref() += self.grad * s; });
}

Var tanh(Var a) {
  Node* na = &N(a);
  Matrix out = na->val().array().tanh().matrix();
  return a.graph->push(std::move(out), [na](Node& self) {
    na->grad_ref().array() += self.grad.array() * (1.0 - self.value.array().square());
  });
}

Var gelu(Var a) {
  Node* na = &N(a);
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  const auto& x = na->val().array();
  Eigen::ArrayXXd t = (kC * (x + kA * x.cube())).tanh();
  Matrix out = (0.5 * x * (1.0 + t)).matrix();
  return a.graph->push(std::move(out), [na, t](Node& self) {
    const auto& x = na->val().array();
    Eigen::ArrayXXd dt = (1.0 - t.square()) * kC * (1.0 + 3.0 * kA * x.square());
    na->grad_ref().array() += self.grad.array() * (0.5 * (1.0 + t) + 0.5 * x * dt);
  });
}

Var leaky_relu(Var a, double slope) {
  Node* na = &N(a);
  Matrix out = na->val().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return a.graph->push(std::move(out), [na, slope](Node& self) {
    Matrix d = na->val().unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    na->grad_ref().array() += self.grad.array() * d.array();
  });
}

Var sigmoid(Var a) {
  Node* na = &N(a);
  Matrix out = na->val().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return a.graph->push(std::move(out), [na](Node& self) {
    na->grad_ref().array() += self.grad.array() * self.value.array() * (1.0 - self.value.array());
  });
}

Var mask_mul(Var a, Matrix mask) {
  Node* na = &N(a);
  if (mask.rows() != na->val().rows() || mask.cols() != na->val().cols())
    throw Error("mask_mul: shape mismatch");
  Matrix out = na->val().cwiseProduct(mask);
  return a.graph->push(std::move(out), [na, mask = std::move(mask)](Node& self) {
    na->grad_ref() += self.grad.cwiseProduct(mask);
  });
}

Var masked_softmax(Var scores, std::span<const std::uint8_t> keep) {
  Node* ns = &N(scores);
  const Matrix& s = ns->val();
  if (static_cast<Eigen::Index>(keep.size()) != s.cols())
    throw Error("masked_softmax: mask length differs from column count");
  Matrix out = Matrix::Zero(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < s.cols(); ++c)
      if (keep[static_cast<std::size_t>(c)]) mx = std::max(mx, s(r, c));
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      if (!keep[static_cast<std::size_t>(c)]) continue;
      const double e = std::exp(s(r, c) - mx);
      out(r, c) = e;
      z += e;
    }
    out.row(r) /= z;
  }
  return scores.graph->push(std::move(out), [ns](Node& self) {
    // dS = P * (dP - rowsum(dP * P)); masked entries have P == 0.
    const Matrix& p = self.value;
    Vector dot = (self.grad.cwiseProduct(p)).rowwise().sum();
    Matrix ds = p.cwiseProduct(self.grad.colwise() - dot);
    ns->grad_ref() += ds;
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Node* nx = &N(x);
  Node* ng = &N(gamma);
  Node* nb = &N(beta);
  const Matrix& v = nx->val();
  const Eigen::Index n = v.cols();
  if (ng->val().cols() != n || nb->val().cols() != n) throw Error("layer_norm: shape mismatch");
  Vector mean = v.rowwise().mean();
  Matrix centered = v.colwise() - mean;
  Vector inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps)
                       .rsqrt()
                       .matrix();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * ng->val().row(0).array()).rowwise() +
               nb->val().row(0).array();
  return x.graph->push(std::move(out), [nx, ng, nb, xhat, inv_std](Node& self) {
    const Matrix& go = self.grad;
    ng->grad_ref() += (go.cwiseProduct(xhat)).colwise().sum();
    nb->grad_ref() += go.colwise().sum();
    Matrix gx = go.array().rowwise() * ng->val().row(0).array();
    Vector m1 = gx.rowwise().mean();
    Vector m2 = (gx.cwiseProduct(xhat)).rowwise().mean();
    Matrix dx = gx.colwise() - m1;
    dx -= (xhat.array().colwise() * m2.array()).matrix();
    nx->grad_ref() += (dx.array().colwise() * inv_std.array()).matrix();
  });
}

Var embedding(Graph& g, const Param& table, std::span<const int> ids) {
  const Eigen::Index d = table.value.cols();
  Matrix out(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows())
      throw Error("embedding: id " + std::to_string(ids[i]) + " out of range for " + table.name);
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
  }
  std::function<void(Node&)> bw;
  if (g.recording() && table.trainable) {
    std::vector<int> idv(ids.begin(), ids.end());
    bw = [&table, idv = std::move(idv)](Node& self) {
      if (table.grad.size() == 0) table.zero_grad();
      for (std::size_t i = 0; i < idv.size(); ++i)
        table.grad.row(idv[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    };
  }
  return g.push(std::move(out), std::move(bw));
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Node* na = &N(a);
  if (start < 0 || start + count > na->val().cols()) throw Error("slice_cols: out of range");
  return a.graph->push(na->val().middleCols(start, count), [na, start, count](Node& self) {
    na->grad_ref().middleCols(start, count) += self.grad;
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Node* na = &N(a);
  if (start < 0 || start + count > na->val().rows()) throw Error("slice_rows: out of range");
  return a.graph->push(na->val().middleRows(start, count), [na, start, count](Node& self) {
    na->grad_ref().middleRows(start, count) += self.grad;
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  Graph* g = parts.front().graph;
  std::vector<Node*> ns;
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row mismatch");
    ns.push_back(&N(p));
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Node* n : ns) {
    out.middleCols(at, n->val().cols()) = n->val();
    at += n->val().cols();
  }
  return g->push(std::move(out), [ns](Node& self) {
    Eigen::Index at = 0;
    for (Node* n : ns) {
      n->grad_ref() += self.grad.middleCols(at, n->val().cols());
      at += n->val().cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  Graph* g = parts.front().graph;
  std::vector<Node*> ns;
  Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    if (p.cols() != cols) throw Error("concat_rows: column mismatch");
    ns.push_back(&N(p));
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Node* n : ns) {
    out.middleRows(at, n->val().rows()) = n->val();
    at += n->val().rows();
  }
  return g->push(std::move(out), [ns](Node& self) {
    Eigen::Index at = 0;
    for (Node* n : ns) {
      n->grad_ref() += self.grad.middleRows(at, n->val().rows());
      at += n->val().rows();
    }
  });
}

Var mean_row_groups(Var a, Eigen::Index group) {
  Node* na = &N(a);
  const Matrix& v = na->val();
  if (group <= 0 || v.rows() % group != 0) throw Error("mean_row_groups: bad group size");
  const Eigen::Index out_rows = v.rows() / group;
  Matrix out = Matrix::Zero(out_rows, v.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r)
    out.row(r) = v.middleRows(r * group, group).colwise().mean();
  return a.graph->push(std::move(out), [na, group, out_rows](Node& self) {
    Matrix& g = na->grad_ref();
    const double inv = 1.0 / static_cast<double>(group);
    for (Eigen::Index r = 0; r < out_rows; ++r)
      g.middleRows(r * group, group).rowwise() += self.grad.row(r) * inv;
  });
}

Var mean_cols(Var a) {
  Node* na = &N(a);
  return a.graph->push(na->val().rowwise().mean(), [na](Node& self) {
    const double inv = 1.0 / static_cast<double>(na->val().cols());
    na->grad_ref().colwise() += self.grad.col(0) * inv;
  });
}

Var sum(std::span<const Var> parts) {
  if (parts.empty()) throw Error("sum: no inputs");
  Var acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return acc;
}

Var conv1d_same(Var x, Var weight, Var bias, Eigen::Index length) {
  check_same_graph(x, weight);
  check_same_graph(x, bias);
  Node* nx = &N(x);
  Node* nw = &N(weight);
  Node* nb = &N(bias);
  const Matrix& xv = nx->val();
  const Matrix& w = nw->val();
  if (length <= 0 || xv.cols() % length != 0) throw Error("conv1d: bad length");
  const Eigen::Index in_ch = xv.cols() / length;
  const Eigen::Index out_ch = w.rows();
  if (w.cols() % in_ch != 0) throw Error("conv1d: weight/in-channel mismatch");
  const Eigen::Index kernel = w.cols() / in_ch;
  if (kernel % 2 == 0) throw Error("conv1d: kernel must be odd");
  if (nb->val().rows() != out_ch || nb->val().cols() != 1) throw Error("conv1d: bias shape");
  const Eigen::Index half = kernel / 2;
  const Eigen::Index rows = xv.rows();

  Matrix out(rows, out_ch * length);
  for (Eigen::Index o = 0; o < out_ch; ++o) {
    auto blk = out.middleCols(o * length, length);
    blk.setConstant(nb->val()(o, 0));
    for (Eigen::Index c = 0; c < in_ch; ++c) {
      auto in = xv.middleCols(c * length, length);
      for (Eigen::Index j = 0; j < kernel; ++j) {
        const double wj = w(o, c * kernel + j);
        const Eigen::Index shift = j - half;  // out[t] += w * in[t + shift]
        const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index t1 = std::min<Eigen::Index>(length, length - shift);
        if (t1 > t0) blk.middleCols(t0, t1 - t0) += wj * in.middleCols(t0 + shift, t1 - t0);
      }
    }
  }
  return x.graph->push(std::move(out), [nx, nw, nb, in_ch, out_ch, kernel, half,
                                        length](Node& self) {
    const Matrix& xv = nx->val();
    const Matrix& w = nw->val();
    Matrix& gx = nx->grad_ref();
    Matrix& gw = nw->grad_ref();
    Matrix& gb = nb->grad_ref();
    for (Eigen::Index o = 0; o < out_ch; ++o) {
      auto go = self.grad.middleCols(o * length, length);
      gb(o, 0) += go.sum();
      for (Eigen::Index c = 0; c < in_ch; ++c) {
        for (Eigen::Index j = 0; j < kernel; ++j) {
          const Eigen::Index shift = j - half;
          const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
          const Eigen::Index t1 = std::min<Eigen::Index>(length, length - shift);
          if (t1 <= t0) continue;
          auto in = xv.middleCols(c * length + t0 + shift, t1 - t0);
          auto g = go.middleCols(t0, t1 - t0);
          gw(o, c * kernel + j) += g.cwiseProduct(in).sum();
          gx.middleCols(c * length + t0 + shift, t1 - t0) += w(o, c * kernel + j) * g;
        }
      }
    }
  });
}

Var bce_mean(Var p, std::span<const double> targets, double eps) {
  Node* np = &N(p);
  const Matrix& pv = np->val();
  if (pv.cols() != 1 || pv.rows() != static_cast<Eigen::Index>(targets.size()))
    throw ShapeError("bce: prediction/target length mismatch (" + std::to_string(pv.rows()) +
                     " vs " + std::to_string(targets.size()) + ")");
  const auto n = static_cast<double>(targets.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < pv.rows(); ++i) {
    const double q = std::clamp(pv(i, 0), eps, 1.0 - eps);
    const double y = targets[static_cast<std::size_t>(i)];
    loss -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  std::vector<double> y(targets.begin(), targets.end());
  return p.graph->push(std::move(out), [np, y = std::move(y), eps, n](Node& self) {
    const Matrix& pv = np->val();
    Matrix& g = np->grad_ref();
    const double go = self.grad(0, 0);
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
      const double raw = pv(i, 0);
      if (raw < eps || raw > 1.0 - eps) continue;  // clamp is flat here
      const double yi = y[static_cast<std::size_t>(i)];
      g(i, 0) += go * (-(yi / raw) + (1.0 - yi) / (1.0 - raw)) / n;
    }
  });
}

}  // namespace ag
}  // namespace kgc
