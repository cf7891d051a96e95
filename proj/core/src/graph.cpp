#include "motiongen/graph.hpp"

#include <cmath>

#include "motiongen/common.hpp"

namespace motiongen {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

NodeId Graph::push(Node n) {
  if (backward_done_) throw Error("graph reused after backward");
  nodes_.push_back(std::move(n));
  return (NodeId)nodes_.size() - 1;
}

NodeId Graph::input(Tensor t) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(t);
  n.requires_grad = false;
  return push(std::move(n));
}

NodeId Graph::leaf(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(t);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  const int k = A.cols;
  const int m = transpose_b ? B.rows : B.cols;
  if ((transpose_b ? B.cols : B.rows) != k) {
    throw InvalidArgument("matmul: inner dimensions do not match");
  }
  Node n;
  n.op = transpose_b ? Op::kMatmulT : Op::kMatmul;
  n.a = a;
  n.b = b;
  n.requires_grad = needs(a) || needs(b);
  n.value = Tensor(A.rows, m);
  const double* pa = A.data.data();
  const double* pb = B.data.data();
  double* pc = n.value.data.data();
  if (!transpose_b) {
    for (int i = 0; i < A.rows; ++i) {
      const double* ai = pa + (std::size_t)i * k;
      double* ci = pc + (std::size_t)i * m;
      for (int kk = 0; kk < k; ++kk) {
        const double av = ai[kk];
        if (av == 0.0) continue;
        const double* bk = pb + (std::size_t)kk * m;
        for (int j = 0; j < m; ++j) ci[j] += av * bk[j];
      }
    }
  } else {
    for (int i = 0; i < A.rows; ++i) {
      const double* ai = pa + (std::size_t)i * k;
      double* ci = pc + (std::size_t)i * m;
      for (int j = 0; j < m; ++j) {
        const double* bj = pb + (std::size_t)j * k;
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
        ci[j] = acc;
      }
    }
  }
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  Node n;
  n.a = a;
  n.b = b;
  n.requires_grad = needs(a) || needs(b);
  if (A.same_shape(B)) {
    n.op = Op::kAdd;
    n.value = A;
    for (int i = 0; i < A.size(); ++i) n.value.data[i] += B.data[i];
  } else if (B.rows == 1 && B.cols == A.cols) {
    n.op = Op::kAddBroadcast;
    n.value = A;
    for (int r = 0; r < A.rows; ++r) {
      for (int c = 0; c < A.cols; ++c) n.value.at(r, c) += B.at(0, c);
    }
  } else {
    throw InvalidArgument("add: incompatible shapes");
  }
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (!A.same_shape(B)) throw InvalidArgument("sub: incompatible shapes");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.requires_grad = needs(a) || needs(b);
  n.value = A;
  for (int i = 0; i < A.size(); ++i) n.value.data[i] -= B.data[i];
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  Node n;
  n.a = a;
  n.b = b;
  n.requires_grad = needs(a) || needs(b);
  if (A.same_shape(B)) {
    n.op = Op::kMul;
    n.value = A;
    for (int i = 0; i < A.size(); ++i) n.value.data[i] *= B.data[i];
  } else if (B.rows == 1 && B.cols == A.cols) {
    n.op = Op::kMulBroadcast;
    n.value = A;
    for (int r = 0; r < A.rows; ++r) {
      for (int c = 0; c < A.cols; ++c) n.value.at(r, c) *= B.at(0, c);
    }
  } else {
    throw InvalidArgument("mul: incompatible shapes");
  }
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c0 = c;
  n.requires_grad = needs(a);
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

NodeId Graph::add_const(NodeId a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a;
  n.c0 = c;
  n.requires_grad = needs(a);
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v += c;
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId a, double eps) {
  const Tensor& A = nodes_[a].value;
  if (A.cols < 1) throw InvalidArgument("layer_norm on empty rows");
  Node n;
  n.op = Op::kLayerNorm;
  n.a = a;
  n.c0 = eps;
  n.requires_grad = needs(a);
  n.value = Tensor(A.rows, A.cols);
  n.aux = Tensor(A.rows, 1);  // 1 / sqrt(var + eps) per row
  for (int r = 0; r < A.rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < A.cols; ++c) mu += A.at(r, c);
    mu /= A.cols;
    double var = 0.0;
    for (int c = 0; c < A.cols; ++c) {
      const double d = A.at(r, c) - mu;
      var += d * d;
    }
    var /= A.cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    n.aux.at(r, 0) = inv;
    for (int c = 0; c < A.cols; ++c) n.value.at(r, c) = (A.at(r, c) - mu) * inv;
  }
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
  const Tensor& A = nodes_[a].value;
  Node n;
  n.op = Op::kSoftmax;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = Tensor(A.rows, A.cols);
  for (int r = 0; r < A.rows; ++r) {
    double mx = A.at(r, 0);
    for (int c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
    double sum = 0.0;
    for (int c = 0; c < A.cols; ++c) {
      const double e = std::exp(A.at(r, c) - mx);
      n.value.at(r, c) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < A.cols; ++c) n.value.at(r, c) *= inv;
  }
  return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
  Node n;
  n.op = Op::kLog;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v = std::log(v);
  return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
  Node n;
  n.op = Op::kExp;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = nodes_[a].value;
  for (double& v : n.value.data) v = std::exp(v);
  return push(std::move(n));
}

NodeId Graph::gelu(NodeId a) {
  Node n;
  n.op = Op::kGelu;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = nodes_[a].value;
  for (double& v : n.value.data) {
    v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return push(std::move(n));
}

NodeId Graph::embedding_lookup(NodeId table, const std::vector<int>& ids) {
  const Tensor& T = nodes_[table].value;
  Node n;
  n.op = Op::kLookup;
  n.a = table;
  n.idx = ids;
  n.requires_grad = needs(table);
  n.value = Tensor((int)ids.size(), T.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= T.rows) {
      throw InvalidArgument("embedding_lookup: id out of range");
    }
    for (int c = 0; c < T.cols; ++c) n.value.at((int)i, c) = T.at(ids[i], c);
  }
  return push(std::move(n));
}

NodeId Graph::gather_cols(NodeId a, const std::vector<int>& col_ids) {
  const Tensor& A = nodes_[a].value;
  if ((int)col_ids.size() != A.rows) {
    throw InvalidArgument("gather_cols: one index per row required");
  }
  Node n;
  n.op = Op::kGatherCols;
  n.a = a;
  n.idx = col_ids;
  n.requires_grad = needs(a);
  n.value = Tensor(A.rows, 1);
  for (int r = 0; r < A.rows; ++r) {
    if (col_ids[r] < 0 || col_ids[r] >= A.cols) {
      throw InvalidArgument("gather_cols: column out of range");
    }
    n.value.at(r, 0) = A.at(r, col_ids[r]);
  }
  return push(std::move(n));
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no parts");
  int rows = 0;
  const int cols = nodes_[parts[0]].value.cols;
  bool rg = false;
  for (NodeId p : parts) {
    if (nodes_[p].value.cols != cols) {
      throw InvalidArgument("concat_rows: column mismatch");
    }
    rows += nodes_[p].value.rows;
    rg = rg || needs(p);
  }
  Node n;
  n.op = Op::kConcatRows;
  n.parents = parts;
  n.requires_grad = rg;
  n.value = Tensor(rows, cols);
  int r0 = 0;
  for (NodeId p : parts) {
    const Tensor& P = nodes_[p].value;
    for (int r = 0; r < P.rows; ++r) {
      for (int c = 0; c < cols; ++c) n.value.at(r0 + r, c) = P.at(r, c);
    }
    r0 += P.rows;
  }
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no parts");
  int cols = 0;
  const int rows = nodes_[parts[0]].value.rows;
  bool rg = false;
  for (NodeId p : parts) {
    if (nodes_[p].value.rows != rows) {
      throw InvalidArgument("concat_cols: row mismatch");
    }
    cols += nodes_[p].value.cols;
    rg = rg || needs(p);
  }
  Node n;
  n.op = Op::kConcatCols;
  n.parents = parts;
  n.requires_grad = rg;
  n.value = Tensor(rows, cols);
  int c0 = 0;
  for (NodeId p : parts) {
    const Tensor& P = nodes_[p].value;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < P.cols; ++c) n.value.at(r, c0 + c) = P.at(r, c);
    }
    c0 += P.cols;
  }
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId a, int start, int len) {
  const Tensor& A = nodes_[a].value;
  if (start < 0 || len < 0 || start + len > A.rows) {
    throw InvalidArgument("slice_rows: out of range");
  }
  Node n;
  n.op = Op::kSliceRows;
  n.a = a;
  n.i0 = start;
  n.i1 = len;
  n.requires_grad = needs(a);
  n.value = Tensor(len, A.cols);
  for (int r = 0; r < len; ++r) {
    for (int c = 0; c < A.cols; ++c) n.value.at(r, c) = A.at(start + r, c);
  }
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId a, int start, int len) {
  const Tensor& A = nodes_[a].value;
  if (start < 0 || len < 0 || start + len > A.cols) {
    throw InvalidArgument("slice_cols: out of range");
  }
  Node n;
  n.op = Op::kSliceCols;
  n.a = a;
  n.i0 = start;
  n.i1 = len;
  n.requires_grad = needs(a);
  n.value = Tensor(A.rows, len);
  for (int r = 0; r < A.rows; ++r) {
    for (int c = 0; c < len; ++c) n.value.at(r, c) = A.at(r, start + c);
  }
  return push(std::move(n));
}

NodeId Graph::reduce_mean_all(NodeId a) {
  const Tensor& A = nodes_[a].value;
  if (A.size() == 0) throw InvalidArgument("reduce_mean_all on empty tensor");
  Node n;
  n.op = Op::kMeanAll;
  n.a = a;
  n.requires_grad = needs(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  n.value = Tensor::scalar(s / A.size());
  return push(std::move(n));
}

NodeId Graph::reduce_sum_all(NodeId a) {
  const Tensor& A = nodes_[a].value;
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  n.requires_grad = needs(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Graph::row_max(NodeId a) {
  const Tensor& A = nodes_[a].value;
  if (A.cols == 0) throw InvalidArgument("row_max on empty rows");
  Node n;
  n.op = Op::kRowMax;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = Tensor(A.rows, 1);
  n.idx.resize(A.rows);
  for (int r = 0; r < A.rows; ++r) {
    int arg = 0;
    double best = A.at(r, 0);
    for (int c = 1; c < A.cols; ++c) {
      if (A.at(r, c) > best) {
        best = A.at(r, c);
        arg = c;
      }
    }
    n.value.at(r, 0) = best;
    n.idx[r] = arg;
  }
  return push(std::move(n));
}

NodeId Graph::col_max(NodeId a) {
  const Tensor& A = nodes_[a].value;
  if (A.rows == 0) throw InvalidArgument("col_max on empty tensor");
  Node n;
  n.op = Op::kColMax;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = Tensor(1, A.cols);
  n.idx.resize(A.cols);
  for (int c = 0; c < A.cols; ++c) {
    int arg = 0;
    double best = A.at(0, c);
    for (int r = 1; r < A.rows; ++r) {
      if (A.at(r, c) > best) {
        best = A.at(r, c);
        arg = r;
      }
    }
    n.value.at(0, c) = best;
    n.idx[c] = arg;
  }
  return push(std::move(n));
}

NodeId Graph::rotary_apply(NodeId a, Tensor angles) {
  const Tensor& A = nodes_[a].value;
  if (A.cols % 2 != 0) throw InvalidArgument("rotary_apply: odd feature dim");
  if (angles.rows != A.rows || angles.cols != A.cols / 2) {
    throw InvalidArgument("rotary_apply: angles must be (rows, cols/2)");
  }
  Node n;
  n.op = Op::kRotary;
  n.a = a;
  n.requires_grad = needs(a);
  n.value = Tensor(A.rows, A.cols);
  for (int r = 0; r < A.rows; ++r) {
    for (int p = 0; p < A.cols / 2; ++p) {
      const double c = std::cos(angles.at(r, p));
      const double s = std::sin(angles.at(r, p));
      const double x0 = A.at(r, 2 * p), x1 = A.at(r, 2 * p + 1);
      n.value.at(r, 2 * p) = c * x0 - s * x1;
      n.value.at(r, 2 * p + 1) = s * x0 + c * x1;
    }
  }
  n.aux = std::move(angles);
  return push(std::move(n));
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_[id];
  if (!backward_done_) throw Error("grad() before backward()");
  if (n.grad.size() == 0) {
    throw Error("no gradient recorded for this node");
  }
  return n.grad;
}

void Graph::ensure_grad(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.value.rows, n.value.cols);
}

void Graph::backward(NodeId loss) {
  if (!grad_enabled_) throw Error("backward() on a no-grad graph");
  if (backward_done_) throw Error("backward() called twice on one graph");
  if (nodes_[loss].value.size() != 1) {
    throw InvalidArgument("backward() requires a scalar loss");
  }
  backward_done_ = true;
  if (!nodes_[loss].requires_grad) return;  // loss independent of leaves
  ensure_grad(loss);
  nodes_[loss].grad.data[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    if (!nodes_[id].requires_grad || nodes_[id].grad.size() == 0) continue;
    backward_node(id);
  }
}

void Graph::backward_node(NodeId id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto pg = [&](NodeId p) -> Tensor& {
    ensure_grad(p);
    return nodes_[p].grad;
  };
  switch (n.op) {
    case Op::kInput:
    case Op::kLeaf:
      break;
    case Op::kMatmul: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      if (needs(n.a)) {
        Tensor& da = pg(n.a);  // dA += g . B^T
        for (int i = 0; i < A.rows; ++i) {
          for (int kk = 0; kk < A.cols; ++kk) {
            double acc = 0.0;
            for (int j = 0; j < B.cols; ++j) acc += g.at(i, j) * B.at(kk, j);
            da.at(i, kk) += acc;
          }
        }
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);  // dB += A^T . g
        for (int i = 0; i < A.rows; ++i) {
          for (int kk = 0; kk < A.cols; ++kk) {
            const double av = A.at(i, kk);
            if (av == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) db.at(kk, j) += av * g.at(i, j);
          }
        }
      }
      break;
    }
    case Op::kMatmulT: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;  // (m, k), value = A . B^T
      if (needs(n.a)) {
        Tensor& da = pg(n.a);  // dA += g . B
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < B.rows; ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (int kk = 0; kk < A.cols; ++kk) da.at(i, kk) += gv * B.at(j, kk);
          }
        }
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);  // dB += g^T . A
        for (int i = 0; i < A.rows; ++i) {
          for (int j = 0; j < B.rows; ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (int kk = 0; kk < A.cols; ++kk) db.at(j, kk) += gv * A.at(i, kk);
          }
        }
      }
      break;
    }
    case Op::kAdd:
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);
        for (int i = 0; i < g.size(); ++i) db.data[i] += g.data[i];
      }
      break;
    case Op::kAddBroadcast:
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);
        for (int r = 0; r < g.rows; ++r) {
          for (int c = 0; c < g.cols; ++c) db.at(0, c) += g.at(r, c);
        }
      }
      break;
    case Op::kSub:
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);
        for (int i = 0; i < g.size(); ++i) db.data[i] -= g.data[i];
      }
      break;
    case Op::kMul: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * B.data[i];
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);
        for (int i = 0; i < g.size(); ++i) db.data[i] += g.data[i] * A.data[i];
      }
      break;
    }
    case Op::kMulBroadcast: {
      const Tensor& A = nodes_[n.a].value;
      const Tensor& B = nodes_[n.b].value;
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int r = 0; r < g.rows; ++r) {
          for (int c = 0; c < g.cols; ++c) da.at(r, c) += g.at(r, c) * B.at(0, c);
        }
      }
      if (needs(n.b)) {
        Tensor& db = pg(n.b);
        for (int r = 0; r < g.rows; ++r) {
          for (int c = 0; c < g.cols; ++c) db.at(0, c) += g.at(r, c) * A.at(r, c);
        }
      }
      break;
    }
    case Op::kScale:
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * n.c0;
      }
      break;
    case Op::kAddConst:
      if (needs(n.a)) {
        Tensor& da = pg(n.a);
        for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
      }
      break;
    case Op::kLayerNorm: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      const Tensor& y = n.value;
      for (int r = 0; r < y.rows; ++r) {
        const double inv = n.aux.at(r, 0);
        double gsum = 0.0, gysum = 0.0;
        for (int c = 0; c < y.cols; ++c) {
          gsum += g.at(r, c);
          gysum += g.at(r, c) * y.at(r, c);
        }
        const double gmean = gsum / y.cols;
        const double gymean = gysum / y.cols;
        for (int c = 0; c < y.cols; ++c) {
          da.at(r, c) += inv * (g.at(r, c) - gmean - y.at(r, c) * gymean);
        }
      }
      break;
    }
    case Op::kSoftmax: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      const Tensor& y = n.value;
      for (int r = 0; r < y.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
        for (int c = 0; c < y.cols; ++c) {
          da.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
      }
      break;
    }
    case Op::kLog: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      const Tensor& A = nodes_[n.a].value;
      for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i] / A.data[i];
      break;
    }
    case Op::kExp: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int i = 0; i < g.size(); ++i) da.data[i] += g.data[i] * n.value.data[i];
      break;
    }
    case Op::kGelu: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      const Tensor& A = nodes_[n.a].value;
      for (int i = 0; i < g.size(); ++i) {
        const double x = A.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        da.data[i] += g.data[i] * (cdf + x * pdf);
      }
      break;
    }
    case Op::kLookup: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (std::size_t i = 0; i < n.idx.size(); ++i) {
        for (int c = 0; c < g.cols; ++c) da.at(n.idx[i], c) += g.at((int)i, c);
      }
      break;
    }
    case Op::kGatherCols: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int r = 0; r < g.rows; ++r) da.at(r, n.idx[r]) += g.at(r, 0);
      break;
    }
    case Op::kConcatRows: {
      int r0 = 0;
      for (NodeId p : n.parents) {
        const int pr = nodes_[p].value.rows;
        if (needs(p)) {
          Tensor& dp = pg(p);
          for (int r = 0; r < pr; ++r) {
            for (int c = 0; c < g.cols; ++c) dp.at(r, c) += g.at(r0 + r, c);
          }
        }
        r0 += pr;
      }
      break;
    }
    case Op::kConcatCols: {
      int c0 = 0;
      for (NodeId p : n.parents) {
        const int pc = nodes_[p].value.cols;
        if (needs(p)) {
          Tensor& dp = pg(p);
          for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < pc; ++c) dp.at(r, c) += g.at(r, c0 + c);
          }
        }
        c0 += pc;
      }
      break;
    }
    case Op::kSliceRows: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) da.at(n.i0 + r, c) += g.at(r, c);
      }
      break;
    }
    case Op::kSliceCols: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) da.at(r, n.i0 + c) += g.at(r, c);
      }
      break;
    }
    case Op::kMeanAll: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      const double gv = g.data[0] / da.size();
      for (double& v : da.data) v += gv;
      break;
    }
    case Op::kSumAll: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      const double gv = g.data[0];
      for (double& v : da.data) v += gv;
      break;
    }
    case Op::kRowMax: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int r = 0; r < g.rows; ++r) da.at(r, n.idx[r]) += g.at(r, 0);
      break;
    }
    case Op::kColMax: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int c = 0; c < g.cols; ++c) da.at(n.idx[c], c) += g.at(0, c);
      break;
    }
    case Op::kRotary: {
      if (!needs(n.a)) break;
      Tensor& da = pg(n.a);
      for (int r = 0; r < g.rows; ++r) {
        for (int p = 0; p < g.cols / 2; ++p) {
          const double c = std::cos(n.aux.at(r, p));
          const double s = std::sin(n.aux.at(r, p));
          const double g0 = g.at(r, 2 * p), g1 = g.at(r, 2 * p + 1);
          da.at(r, 2 * p) += c * g0 + s * g1;
          da.at(r, 2 * p + 1) += -s * g0 + c * g1;
        }
      }
      break;
    }
  }
}

}  // namespace motiongen
