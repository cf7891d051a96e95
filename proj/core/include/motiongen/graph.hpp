#pragma once

#include <string>
#include <vector>

#include "motiongen/tensor.hpp"

namespace motiongen {

using NodeId = int;

// Reverse-mode tape over dense double tensors. Nodes are appended in
// evaluation order, so reverse id order is a valid topological order for the
// backward sweep. All reductions run in fixed index order; two identical
// forward+backward passes produce bit-identical gradients.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  // Leaves. `input` never receives gradient; `leaf` does (model parameters).
  NodeId input(Tensor t);
  NodeId leaf(Tensor t);

  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
  // b must match a's shape or be a (1, cols) row vector broadcast over rows.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // elementwise; b may be (1, cols)
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  // Row-wise (x - mean) / sqrt(var + eps), before any affine.
  NodeId layer_norm(NodeId a, double eps = 1e-5);
  NodeId softmax(NodeId a);  // row-wise, max-subtracted
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId gelu(NodeId a);  // exact erf form
  // Gathers rows of `table` by index; gradients scatter-add back.
  NodeId embedding_lookup(NodeId table, const std::vector<int>& ids);
  // Picks data[r, col_ids[r]] for every row -> (n, 1).
  NodeId gather_cols(NodeId a, const std::vector<int>& col_ids);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId slice_rows(NodeId a, int start, int len);
  NodeId slice_cols(NodeId a, int start, int len);
  NodeId reduce_mean_all(NodeId a);  // (1, 1)
  NodeId reduce_sum_all(NodeId a);   // (1, 1)
  // Max over each row -> (n, 1); gradient routes to the first argmax.
  NodeId row_max(NodeId a);
  // Max over each column -> (1, c); gradient routes to the first argmax.
  NodeId col_max(NodeId a);
  // Rotates consecutive column pairs of `a` (n, d) by `angles` (n, d/2).
  NodeId rotary_apply(NodeId a, Tensor angles);

  // Backward from a scalar loss. Callable once per graph.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const;
  // True once backward() has run and some gradient flowed into this node.
  bool reached(NodeId id) const {
    return backward_done_ && nodes_[id].grad.size() != 0;
  }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kInput, kLeaf, kMatmul, kMatmulT, kAdd, kAddBroadcast, kSub, kMul,
    kMulBroadcast, kScale, kAddConst, kLayerNorm, kSoftmax, kLog, kExp,
    kGelu, kLookup, kGatherCols, kConcatRows, kConcatCols, kSliceRows,
    kSliceCols, kMeanAll, kSumAll, kRowMax, kColMax, kRotary,
  };

  struct Node {
    Op op = Op::kInput;
    int a = -1, b = -1;
    std::vector<int> parents;  // concat only
    std::vector<int> idx;      // lookup / gather
    double c0 = 0.0;
    int i0 = 0, i1 = 0;
    Tensor aux;  // rotary angles, layer_norm row stats
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
  };

  NodeId push(Node n);
  void ensure_grad(NodeId id);
  void backward_node(NodeId id);
  bool needs(NodeId id) const { return id >= 0 && nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

}  // namespace motiongen
