#pragma once

#include <string>
#include <vector>

#include "pudm/mat.h"
#include "pudm/params.h"

namespace pudm {

// Handle into a Graph's node list.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Mat. Ops evaluate eagerly at build time
// (define-by-run); backward() walks the tape once in reverse and
// accumulates parameter gradients into the bound ParameterStore.
//
// Geometry (neighbor indices, interpolation weights, farthest-point
// selections) enters as constants: gradients flow through features and
// parameters only.
class Graph {
 public:
  // Constant leaf. Its gradient is still computed and retrievable.
  Value leaf(Mat m);

  // Leaf bound to a named parameter: value is snapshotted at build time,
  // backward() adds into the tensor's grad buffer.
  Value param(ParameterStore& store, const std::string& name);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value scale(Value a, double s);
  Value matmul(Value a, Value b);     // [m,k]x[k,n]
  Value matmul_nt(Value a, Value b);  // A * B^T, [m,k]x[n,k] -> [m,n]
  Value add_rowvec(Value a, Value v); // v is [1,C], broadcast over rows
  Value repeat_row(Value v, int rows);
  Value silu(Value a);
  Value softmax_rows(Value a);
  Value gather_rows(Value a, std::vector<int> idx);
  Value concat_cols(Value a, Value b);
  Value slice_cols(Value a, int c0, int c1);  // [c0, c1)

  // Attention pooling over fixed-size groups: feats [G*k, C], logits
  // [G*k, H] -> [G, C]. Softmax over each group's k logits per head;
  // channel block h (C/H wide) is pooled with head h's weights.
  Value group_attn_pool(Value feats, Value logits, int groups, int k, int heads);

  // Weighted neighbor interpolation with constant indices/weights:
  // coarse [Mc, C], idx flat [Mf*neigh], w [Mf, neigh] -> [Mf, C].
  Value interp_rows(Value coarse, std::vector<int> idx, Mat w, int neigh);

  // Column-wise max over rows -> [1, C]; subgradient to first argmax.
  Value colmax(Value a);

  // sum of squares / rows -> [1,1]: mean over points of squared row norm.
  Value mean_sq_rows(Value a);

  const Mat& val(Value v) const;
  const Mat& grad(Value v) const;

  // root must be 1x1. Zeroes node grads, seeds root with 1, sweeps the
  // tape, then accumulates into bound parameter grad buffers.
  void backward(Value root);

  size_t node_count() const { return nodes_.size(); }

  // linear layer helper: x [M,in] * W [in,out] + b [1,out]
  Value linear(Value x, ParameterStore& s, const std::string& w, const std::string& b);

 private:
  enum class Op {
    Leaf, Add, Sub, Scale, MatMul, MatMulNT, AddRowVec, RepeatRow,
    Silu, SoftmaxRows, GatherRows, ConcatCols, SliceCols,
    GroupAttnPool, InterpRows, ColMax, MeanSqRows,
  };

  struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1;
    Mat val;
    Mat grad;
    double s = 0.0;            // Scale factor
    std::vector<int> idx;      // gather / interp / argmax bookkeeping
    Mat w;                     // saved softmax or interpolation weights
    int groups = 0, k = 0, heads = 0;
    int c0 = 0, c1 = 0;
  };

  Value push(Node n);
  Node& node(Value v);
  const Node& node(Value v) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<int, ParamTensor*>> bindings_;
};

}  // namespace pudm
