#include "ntk/tape.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "ntk/kernels.hpp"

namespace ntk {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::Node& Tape::node(NodeId id) {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    throw StateError("tape node id out of range");
  return nodes_[static_cast<size_t>(id)];
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    throw StateError("tape node id out of range");
  return nodes_[static_cast<size_t>(id)];
}

void Tape::check_backward_unused() const {
  if (backward_done_) throw StateError("tape already differentiated; reset() first");
}

Tape::NodeId Tape::leaf(const Tensor& value, bool needs_grad) {
  check_backward_unused();
  require(value.rows > 0 && value.cols > 0, "leaf tensor must be non-empty");
  Node n;
  n.op = Op::leaf;
  n.needs_grad = needs_grad;
  n.val = value;
  return push(std::move(n));
}

Tape::NodeId Tape::gather_rows(NodeId src, std::vector<int32_t> rows) {
  check_backward_unused();
  const Node& s = node(src);
  require(!rows.empty(), "gather_rows needs at least one row");
  for (int32_t r : rows)
    require(r >= 0 && r < s.val.rows, "gather_rows index out of range");
  Node n;
  n.op = Op::gather_rows;
  n.needs_grad = s.needs_grad;
  n.a = src;
  n.idx = std::move(rows);
  n.val = Tensor(static_cast<int>(n.idx.size()), s.val.cols);
  const size_t w = static_cast<size_t>(s.val.cols);
  for (size_t i = 0; i < n.idx.size(); ++i)
    std::memcpy(n.val.row(static_cast<int>(i)), s.val.row(n.idx[i]), w * sizeof(double));
  return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  check_backward_unused();
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.val.cols == nb.val.rows, "matmul inner dimensions differ");
  Node n;
  n.op = Op::matmul;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.a = a;
  n.b = b;
  n.val = Tensor(na.val.rows, nb.val.cols);
  kern::ops().gemm_nn(na.val.v.data(), nb.val.v.data(), n.val.v.data(), na.val.rows, na.val.cols,
                      nb.val.cols);
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  check_backward_unused();
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.val.rows == nb.val.rows && na.val.cols == nb.val.cols, "add shapes differ");
  Node n;
  n.op = Op::add;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.a = a;
  n.b = b;
  n.val = Tensor(na.val.rows, na.val.cols);
  kern::ops().vadd(na.val.v.data(), nb.val.v.data(), n.val.v.data(),
                   static_cast<int>(n.val.size()));
  return push(std::move(n));
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
  check_backward_unused();
  const Node& na = node(a);
  const Node& nb = node(bias);
  require(nb.val.rows == 1 && nb.val.cols == na.val.cols, "add_rowvec bias must be 1 x cols");
  Node n;
  n.op = Op::add_rowvec;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.a = a;
  n.b = bias;
  n.val = Tensor(na.val.rows, na.val.cols);
  for (int r = 0; r < na.val.rows; ++r)
    kern::ops().vadd(na.val.row(r), nb.val.v.data(), n.val.row(r), na.val.cols);
  return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  check_backward_unused();
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.val.rows == nb.val.rows && na.val.cols == nb.val.cols, "mul shapes differ");
  Node n;
  n.op = Op::mul;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.a = a;
  n.b = b;
  n.val = Tensor(na.val.rows, na.val.cols);
  kern::ops().vmul(na.val.v.data(), nb.val.v.data(), n.val.v.data(),
                   static_cast<int>(n.val.size()));
  return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  check_backward_unused();
  const Node& na = node(a);
  Node n;
  n.op = Op::sigmoid;
  n.needs_grad = na.needs_grad;
  n.a = a;
  n.val = Tensor(na.val.rows, na.val.cols);
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = 1.0 / (1.0 + std::exp(-na.val.v[i]));
  return push(std::move(n));
}

Tape::NodeId Tape::tanh(NodeId a) {
  check_backward_unused();
  const Node& na = node(a);
  Node n;
  n.op = Op::tanh;
  n.needs_grad = na.needs_grad;
  n.a = a;
  n.val = Tensor(na.val.rows, na.val.cols);
  for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = std::tanh(na.val.v[i]);
  return push(std::move(n));
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  check_backward_unused();
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.val.rows == nb.val.rows, "concat_cols row counts differ");
  Node n;
  n.op = Op::concat_cols;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.a = a;
  n.b = b;
  n.val = Tensor(na.val.rows, na.val.cols + nb.val.cols);
  for (int r = 0; r < na.val.rows; ++r) {
    std::memcpy(n.val.row(r), na.val.row(r), static_cast<size_t>(na.val.cols) * sizeof(double));
    std::memcpy(n.val.row(r) + na.val.cols, nb.val.row(r),
                static_cast<size_t>(nb.val.cols) * sizeof(double));
  }
  return push(std::move(n));
}

Tape::NodeId Tape::slice_cols(NodeId a, int c0, int c1) {
  check_backward_unused();
  const Node& na = node(a);
  require(0 <= c0 && c0 < c1 && c1 <= na.val.cols, "slice_cols range invalid");
  Node n;
  n.op = Op::slice_cols;
  n.needs_grad = na.needs_grad;
  n.a = a;
  n.c0 = c0;
  n.val = Tensor(na.val.rows, c1 - c0);
  for (int r = 0; r < na.val.rows; ++r)
    std::memcpy(n.val.row(r), na.val.row(r) + c0,
                static_cast<size_t>(c1 - c0) * sizeof(double));
  return push(std::move(n));
}

Tape::NodeId Tape::slice_rows(NodeId a, int r0, int r1) {
  check_backward_unused();
  const Node& na = node(a);
  require(0 <= r0 && r0 < r1 && r1 <= na.val.rows, "slice_rows range invalid");
  Node n;
  n.op = Op::slice_rows;
  n.needs_grad = na.needs_grad;
  n.a = a;
  n.c0 = r0;
  n.val = Tensor(r1 - r0, na.val.cols);
  std::memcpy(n.val.v.data(), na.val.row(r0), n.val.size() * sizeof(double));
  return push(std::move(n));
}

Tape::NodeId Tape::stack_rows(const std::vector<NodeId>& parts) {
  check_backward_unused();
  require(!parts.empty(), "stack_rows needs at least one part");
  int rows = 0;
  const int cols = node(parts[0]).val.cols;
  bool needs = false;
  for (NodeId p : parts) {
    const Node& np = node(p);
    require(np.val.cols == cols, "stack_rows column counts differ");
    rows += np.val.rows;
    needs = needs || np.needs_grad;
  }
  Node n;
  n.op = Op::stack_rows;
  n.needs_grad = needs;
  n.parts = parts;
  n.val = Tensor(rows, cols);
  int r = 0;
  for (NodeId p : parts) {
    const Node& np = node(p);
    std::memcpy(n.val.row(r), np.val.v.data(), np.val.size() * sizeof(double));
    r += np.val.rows;
  }
  return push(std::move(n));
}

Tape::NodeId Tape::maxpool_rows(NodeId src, std::vector<Span> spans) {
  check_backward_unused();
  const Node& s = node(src);
  require(!spans.empty(), "maxpool_rows needs at least one span");
  for (const Span& sp : spans)
    require(0 <= sp.begin && sp.begin < sp.end && sp.end <= s.val.rows,
            "maxpool_rows span invalid");
  Node n;
  n.op = Op::maxpool_rows;
  n.needs_grad = s.needs_grad;
  n.a = src;
  n.spans = std::move(spans);
  n.val = Tensor(static_cast<int>(n.spans.size()), s.val.cols);
  n.argmax.assign(n.val.size(), 0);
  for (size_t i = 0; i < n.spans.size(); ++i) {
    const Span& sp = n.spans[i];
    for (int c = 0; c < s.val.cols; ++c) {
      double best = s.val.at(sp.begin, c);
      int32_t arg = sp.begin;
      for (int r = sp.begin + 1; r < sp.end; ++r) {
        const double x = s.val.at(r, c);
        if (x > best) {
          best = x;
          arg = r;
        }
      }
      n.val.at(static_cast<int>(i), c) = best;
      n.argmax[static_cast<size_t>(i) * s.val.cols + static_cast<size_t>(c)] = arg;
    }
  }
  return push(std::move(n));
}

Tape::NodeId Tape::softmax_nll(NodeId logits, std::vector<int32_t> targets, double scale) {
  check_backward_unused();
  const Node& l = node(logits);
  require(static_cast<int>(targets.size()) == l.val.rows, "one target per logits row");
  for (int32_t t : targets)
    require(t >= 0 && t < l.val.cols, "target class out of range");
  Node n;
  n.op = Op::softmax_nll;
  n.needs_grad = l.needs_grad;
  n.a = logits;
  n.idx = std::move(targets);
  n.scale = scale;
  n.val = Tensor(1, 1);
  double total = 0.0;
  for (int r = 0; r < l.val.rows; ++r) {
    const double* row = l.val.row(r);
    double mx = row[0];
    for (int c = 1; c < l.val.cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < l.val.cols; ++c) z += std::exp(row[c] - mx);
    total += std::log(z) - (row[n.idx[static_cast<size_t>(r)]] - mx);
  }
  n.val.v[0] = scale * total;
  return push(std::move(n));
}

const Tensor& Tape::value(NodeId id) const { return node(id).val; }

Tensor& Tape::ensure_grad(NodeId id) {
  Node& n = node(id);
  if (n.grd.size() == 0) n.grd = Tensor(n.val.rows, n.val.cols);
  return n.grd;
}

const Tensor& Tape::grad(NodeId id) { return ensure_grad(id); }

void Tape::backward(NodeId loss) {
  check_backward_unused();
  const Node& ln = node(loss);
  if (ln.val.rows != 1 || ln.val.cols != 1)
    throw ShapeError("backward seed must be a 1x1 node");
  if (!ln.needs_grad) throw StateError("loss does not depend on any differentiable leaf");
  backward_done_ = true;
  ensure_grad(loss).v[0] = 1.0;
  const kern::Ops& k = kern::ops();
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (!n.needs_grad || n.grd.size() == 0) continue;
    const Tensor& g = n.grd;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::gather_rows: {
        if (!node(n.a).needs_grad) break;
        Tensor& ga = ensure_grad(n.a);
        for (size_t i = 0; i < n.idx.size(); ++i)
          k.vadd(ga.row(n.idx[i]), g.row(static_cast<int>(i)), ga.row(n.idx[i]), g.cols);
        break;
      }
      case Op::matmul: {
        const Node& na = node(n.a);
        const Node& nb = node(n.b);
        if (na.needs_grad) {
          Tensor& ga = ensure_grad(n.a);
          k.gemm_nt(g.v.data(), nb.val.v.data(), ga.v.data(), g.rows, g.cols, na.val.cols);
        }
        if (nb.needs_grad) {
          Tensor& gb = ensure_grad(n.b);
          k.gemm_tn(na.val.v.data(), g.v.data(), gb.v.data(), na.val.cols, na.val.rows, g.cols);
        }
        break;
      }
      case Op::add: {
        if (node(n.a).needs_grad) {
          Tensor& ga = ensure_grad(n.a);
          k.vadd(ga.v.data(), g.v.data(), ga.v.data(), static_cast<int>(g.size()));
        }
        if (node(n.b).needs_grad) {
          Tensor& gb = ensure_grad(n.b);
          k.vadd(gb.v.data(), g.v.data(), gb.v.data(), static_cast<int>(g.size()));
        }
        break;
      }
      case Op::add_rowvec: {
        if (node(n.a).needs_grad) {
          Tensor& ga = ensure_grad(n.a);
          k.vadd(ga.v.data(), g.v.data(), ga.v.data(), static_cast<int>(g.size()));
        }
        if (node(n.b).needs_grad) {
          Tensor& gb = ensure_grad(n.b);
          for (int r = 0; r < g.rows; ++r) k.vadd(gb.v.data(), g.row(r), gb.v.data(), g.cols);
        }
        break;
      }
      case Op::mul: {
        const Node& na = node(n.a);
        const Node& nb = node(n.b);
        if (na.needs_grad) {
          Tensor& ga = ensure_grad(n.a);
          for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * nb.val.v[i];
        }
        if (nb.needs_grad) {
          Tensor& gb = ensure_grad(n.b);
          for (size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * na.val.v[i];
        }
        break;
      }
      case Op::sigmoid: {
        if (!node(n.a).needs_grad) break;
        Tensor& ga = ensure_grad(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          const double y = n.val.v[i];
          ga.v[i] += g.v[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::tanh: {
        if (!node(n.a).needs_grad) break;
        Tensor& ga = ensure_grad(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          const double y = n.val.v[i];
          ga.v[i] += g.v[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::concat_cols: {
        const Node& na = node(n.a);
        const Node& nb = node(n.b);
        if (na.needs_grad) {
          Tensor& ga = ensure_grad(n.a);
          for (int r = 0; r < g.rows; ++r) k.vadd(ga.row(r), g.row(r), ga.row(r), na.val.cols);
        }
        if (nb.needs_grad) {
          Tensor& gb = ensure_grad(n.b);
          for (int r = 0; r < g.rows; ++r)
            k.vadd(gb.row(r), g.row(r) + na.val.cols, gb.row(r), nb.val.cols);
        }
        break;
      }
      case Op::slice_cols: {
        if (!node(n.a).needs_grad) break;
        Tensor& ga = ensure_grad(n.a);
        for (int r = 0; r < g.rows; ++r)
          k.vadd(ga.row(r) + n.c0, g.row(r), ga.row(r) + n.c0, g.cols);
        break;
      }
      case Op::slice_rows: {
        if (!node(n.a).needs_grad) break;
        Tensor& ga = ensure_grad(n.a);
        k.vadd(ga.row(n.c0), g.v.data(), ga.row(n.c0), static_cast<int>(g.size()));
        break;
      }
      case Op::stack_rows: {
        int r = 0;
        for (NodeId p : n.parts) {
          const Node& np = node(p);
          if (np.needs_grad) {
            Tensor& gp = ensure_grad(p);
            k.vadd(gp.v.data(), g.row(r), gp.v.data(), static_cast<int>(np.val.size()));
          }
          r += np.val.rows;
        }
        break;
      }
      case Op::maxpool_rows: {
        if (!node(n.a).needs_grad) break;
        Tensor& ga = ensure_grad(n.a);
        for (int i = 0; i < g.rows; ++i)
          for (int c = 0; c < g.cols; ++c)
            ga.at(n.argmax[static_cast<size_t>(i) * g.cols + static_cast<size_t>(c)], c) +=
                g.at(i, c);
        break;
      }
      case Op::softmax_nll: {
        if (!node(n.a).needs_grad) break;
        const Node& na = node(n.a);
        Tensor& ga = ensure_grad(n.a);
        const double seed = g.v[0] * n.scale;
        for (int r = 0; r < na.val.rows; ++r) {
          const double* row = na.val.row(r);
          double mx = row[0];
          for (int c = 1; c < na.val.cols; ++c) mx = std::max(mx, row[c]);
          double z = 0.0;
          for (int c = 0; c < na.val.cols; ++c) z += std::exp(row[c] - mx);
          for (int c = 0; c < na.val.cols; ++c) {
            const double p = std::exp(row[c] - mx) / z;
            ga.at(r, c) +=
                seed * (p - (c == n.idx[static_cast<size_t>(r)] ? 1.0 : 0.0));
          }
        }
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace ntk
