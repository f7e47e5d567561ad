#pragma once

#include <cstdint>
#include <vector>

#include "ntk/common.hpp"
#include "ntk/tensor.hpp"

namespace ntk {

// Reverse-mode tape over a small fixed operator set. Nodes are created by the
// builder methods below and evaluated eagerly; backward() then fills per-node
// gradient buffers in reverse creation order. The operator set is exactly what
// the tagger and the task head need, so one finite-difference harness covers
// every composite model.
class Tape {
 public:
  using NodeId = int;

  // Copies the tensor in as a differentiable leaf (parameters) or a plain
  // input (needs_grad = false).
  NodeId leaf(const Tensor& value, bool needs_grad);

  // out[i, :] = src[rows[i], :]. Backward scatter-adds, so repeated rows
  // accumulate (embedding lookups).
  NodeId gather_rows(NodeId src, std::vector<int32_t> rows);

  NodeId matmul(NodeId a, NodeId b);             // (m x k) . (k x n)
  NodeId add(NodeId a, NodeId b);                // same shape
  NodeId add_rowvec(NodeId a, NodeId bias);      // bias is 1 x n, added per row
  NodeId mul(NodeId a, NodeId b);                // elementwise
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId concat_cols(NodeId a, NodeId b);        // same row count
  NodeId slice_cols(NodeId a, int c0, int c1);
  NodeId slice_rows(NodeId a, int r0, int r1);
  NodeId stack_rows(const std::vector<NodeId>& parts);  // same col count

  // out[i, :] = elementwise max over rows spans[i] of src. Ties route the
  // gradient to the earliest row.
  NodeId maxpool_rows(NodeId src, std::vector<Span> spans);

  // Scalar node: scale * sum_i -log softmax(logits[i, :])[targets[i]].
  NodeId softmax_nll(NodeId logits, std::vector<int32_t> targets, double scale);

  const Tensor& value(NodeId id) const;

  // Seeds d(loss)/d(loss) = 1 at a 1x1 node and propagates to every leaf that
  // needs gradients. May be called once per recording.
  void backward(NodeId loss);

  // Gradient of the last backward() w.r.t. a node. Zero-valued if the node
  // was not reached.
  const Tensor& grad(NodeId id);

  size_t node_count() const { return nodes_.size(); }

  // Drops all nodes but keeps buffer capacity for the next recording.
  void reset();

 private:
  enum class Op : uint8_t {
    leaf,
    gather_rows,
    matmul,
    add,
    add_rowvec,
    mul,
    sigmoid,
    tanh,
    concat_cols,
    slice_cols,
    slice_rows,
    stack_rows,
    maxpool_rows,
    softmax_nll,
  };

  struct Node {
    Op op = Op::leaf;
    bool needs_grad = false;
    NodeId a = -1;
    NodeId b = -1;
    Tensor val;
    Tensor grd;                    // allocated only when needed
    std::vector<int32_t> idx;      // gather rows / nll targets
    std::vector<Span> spans;       // maxpool input row ranges
    std::vector<int32_t> argmax;   // maxpool winner rows, one per output cell
    std::vector<NodeId> parts;     // stack_rows inputs
    int c0 = 0;                    // slice start (rows or cols)
    double scale = 1.0;            // nll batch scale
  };

  NodeId push(Node n);
  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  Tensor& ensure_grad(NodeId id);
  void check_backward_unused() const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace ntk
