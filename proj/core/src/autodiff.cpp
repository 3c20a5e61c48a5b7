#include "pudm/autodiff.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "pudm/errors.h"

namespace pudm {

namespace {

using ERow = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<ERow>;
using CEMap = Eigen::Map<const ERow>;

EMap emap(Mat& m) { return EMap(m.d.data(), m.rows, m.cols); }
CEMap emap(const Mat& m) { return CEMap(m.d.data(), m.rows, m.cols); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Value Graph::push(Node n) {
  n.grad = Mat(n.val.rows, n.val.cols);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(Value v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ValidationError("invalid graph value handle");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Value v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ValidationError("invalid graph value handle");
  return nodes_[v.id];
}

const Mat& Graph::val(Value v) const { return node(v).val; }
const Mat& Graph::grad(Value v) const { return node(v).grad; }

Value Graph::leaf(Mat m) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(m);
  return push(std::move(n));
}

Value Graph::param(ParameterStore& store, const std::string& name) {
  ParamTensor& t = store.get(name);
  Value v = leaf(t.value);
  bindings_.emplace_back(v.id, &t);
  return v;
}

Value Graph::add(Value a, Value b) {
  const Node &na = node(a), &nb = node(b);
  if (!na.val.same_shape(nb.val)) throw ValidationError("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.val = na.val;
  emap(n.val) += emap(nb.val);
  return push(std::move(n));
}

Value Graph::sub(Value a, Value b) {
  const Node &na = node(a), &nb = node(b);
  if (!na.val.same_shape(nb.val)) throw ValidationError("sub: shape mismatch");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.val = na.val;
  emap(n.val) -= emap(nb.val);
  return push(std::move(n));
}

Value Graph::scale(Value a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.s = s;
  n.val = node(a).val;
  emap(n.val) *= s;
  return push(std::move(n));
}

Value Graph::matmul(Value a, Value b) {
  const Node &na = node(a), &nb = node(b);
  if (na.val.cols != nb.val.rows) throw ValidationError("matmul: inner dimension mismatch");
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.val = Mat(na.val.rows, nb.val.cols);
  emap(n.val).noalias() = emap(na.val) * emap(nb.val);
  return push(std::move(n));
}

Value Graph::matmul_nt(Value a, Value b) {
  const Node &na = node(a), &nb = node(b);
  if (na.val.cols != nb.val.cols) throw ValidationError("matmul_nt: inner dimension mismatch");
  Node n;
  n.op = Op::MatMulNT;
  n.a = a.id;
  n.b = b.id;
  n.val = Mat(na.val.rows, nb.val.rows);
  emap(n.val).noalias() = emap(na.val) * emap(nb.val).transpose();
  return push(std::move(n));
}

Value Graph::add_rowvec(Value a, Value v) {
  const Node &na = node(a), &nv = node(v);
  if (nv.val.rows != 1 || nv.val.cols != na.val.cols)
    throw ValidationError("add_rowvec: vector must be [1, cols]");
  Node n;
  n.op = Op::AddRowVec;
  n.a = a.id;
  n.b = v.id;
  n.val = na.val;
  emap(n.val).rowwise() += emap(nv.val).row(0);
  return push(std::move(n));
}

Value Graph::repeat_row(Value v, int rows) {
  const Node& nv = node(v);
  if (nv.val.rows != 1) throw ValidationError("repeat_row: input must be [1, cols]");
  if (rows < 1) throw ValidationError("repeat_row: rows must be positive");
  Node n;
  n.op = Op::RepeatRow;
  n.a = v.id;
  n.val = Mat(rows, nv.val.cols);
  for (int r = 0; r < rows; ++r)
    std::copy(nv.val.row(0), nv.val.row(0) + nv.val.cols, n.val.row(r));
  return push(std::move(n));
}

Value Graph::silu(Value a) {
  Node n;
  n.op = Op::Silu;
  n.a = a.id;
  n.val = node(a).val;
  for (double& x : n.val.d) x = x * sigmoid(x);
  return push(std::move(n));
}

Value Graph::softmax_rows(Value a) {
  Node n;
  n.op = Op::SoftmaxRows;
  n.a = a.id;
  n.val = node(a).val;
  for (int r = 0; r < n.val.rows; ++r) {
    double* row = n.val.row(r);
    double mx = row[0];
    for (int c = 1; c < n.val.cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < n.val.cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (int c = 0; c < n.val.cols; ++c) row[c] /= z;
  }
  return push(std::move(n));
}

Value Graph::gather_rows(Value a, std::vector<int> idx) {
  const Node& na = node(a);
  for (int i : idx)
    if (i < 0 || i >= na.val.rows) throw ValidationError("gather_rows: index out of range");
  Node n;
  n.op = Op::GatherRows;
  n.a = a.id;
  n.val = Mat(static_cast<int>(idx.size()), na.val.cols);
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(na.val.row(idx[r]), na.val.row(idx[r]) + na.val.cols, n.val.row(static_cast<int>(r)));
  n.idx = std::move(idx);
  return push(std::move(n));
}

Value Graph::concat_cols(Value a, Value b) {
  const Node &na = node(a), &nb = node(b);
  if (na.val.rows != nb.val.rows) throw ValidationError("concat_cols: row count mismatch");
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.c0 = na.val.cols;
  n.val = Mat(na.val.rows, na.val.cols + nb.val.cols);
  for (int r = 0; r < n.val.rows; ++r) {
    std::copy(na.val.row(r), na.val.row(r) + na.val.cols, n.val.row(r));
    std::copy(nb.val.row(r), nb.val.row(r) + nb.val.cols, n.val.row(r) + na.val.cols);
  }
  return push(std::move(n));
}

Value Graph::slice_cols(Value a, int c0, int c1) {
  const Node& na = node(a);
  if (c0 < 0 || c1 > na.val.cols || c0 >= c1) throw ValidationError("slice_cols: bad range");
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.c0 = c0;
  n.c1 = c1;
  n.val = Mat(na.val.rows, c1 - c0);
  for (int r = 0; r < n.val.rows; ++r)
    std::copy(na.val.row(r) + c0, na.val.row(r) + c1, n.val.row(r));
  return push(std::move(n));
}

Value Graph::group_attn_pool(Value feats, Value logits, int groups, int k, int heads) {
  const Node &nf = node(feats), &nl = node(logits);
  if (nf.val.rows != groups * k) throw ValidationError("group_attn_pool: feats rows != groups*k");
  if (nl.val.rows != groups * k || nl.val.cols != heads)
    throw ValidationError("group_attn_pool: logits must be [groups*k, heads]");
  if (nf.val.cols % heads != 0)
    throw ValidationError("group_attn_pool: channels not divisible by heads");
  Node n;
  n.op = Op::GroupAttnPool;
  n.a = feats.id;
  n.b = logits.id;
  n.groups = groups;
  n.k = k;
  n.heads = heads;
  n.val = Mat(groups, nf.val.cols);
  n.w = Mat(groups * k, heads);  // softmaxed weights, saved for backward
  const int ch = nf.val.cols / heads;
  for (int g = 0; g < groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      double mx = nl.val.at(g * k, h);
      for (int j = 1; j < k; ++j) mx = std::max(mx, nl.val.at(g * k + j, h));
      double z = 0.0;
      for (int j = 0; j < k; ++j) {
        double e = std::exp(nl.val.at(g * k + j, h) - mx);
        n.w.at(g * k + j, h) = e;
        z += e;
      }
      for (int j = 0; j < k; ++j) n.w.at(g * k + j, h) /= z;
      for (int c = h * ch; c < (h + 1) * ch; ++c) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += n.w.at(g * k + j, h) * nf.val.at(g * k + j, c);
        n.val.at(g, c) = acc;
      }
    }
  }
  return push(std::move(n));
}

Value Graph::interp_rows(Value coarse, std::vector<int> idx, Mat w, int neigh) {
  const Node& nc = node(coarse);
  const int mf = w.rows;
  if (w.cols != neigh || static_cast<int>(idx.size()) != mf * neigh)
    throw ValidationError("interp_rows: index/weight shape mismatch");
  for (int i : idx)
    if (i < 0 || i >= nc.val.rows) throw ValidationError("interp_rows: index out of range");
  Node n;
  n.op = Op::InterpRows;
  n.a = coarse.id;
  n.k = neigh;
  n.val = Mat(mf, nc.val.cols);
  for (int m = 0; m < mf; ++m) {
    for (int j = 0; j < neigh; ++j) {
      const double wj = w.at(m, j);
      const double* src = nc.val.row(idx[m * neigh + j]);
      double* dst = n.val.row(m);
      for (int c = 0; c < nc.val.cols; ++c) dst[c] += wj * src[c];
    }
  }
  n.idx = std::move(idx);
  n.w = std::move(w);
  return push(std::move(n));
}

Value Graph::colmax(Value a) {
  const Node& na = node(a);
  if (na.val.rows < 1) throw ValidationError("colmax: empty input");
  Node n;
  n.op = Op::ColMax;
  n.a = a.id;
  n.val = Mat(1, na.val.cols);
  n.idx.assign(na.val.cols, 0);
  for (int c = 0; c < na.val.cols; ++c) {
    double best = na.val.at(0, c);
    int arg = 0;
    for (int r = 1; r < na.val.rows; ++r) {
      if (na.val.at(r, c) > best) {
        best = na.val.at(r, c);
        arg = r;
      }
    }
    n.val.at(0, c) = best;
    n.idx[c] = arg;
  }
  return push(std::move(n));
}

Value Graph::mean_sq_rows(Value a) {
  const Node& na = node(a);
  if (na.val.rows < 1) throw ValidationError("mean_sq_rows: empty input");
  Node n;
  n.op = Op::MeanSqRows;
  n.a = a.id;
  n.val = Mat(1, 1);
  double acc = 0.0;
  for (double v : na.val.d) acc += v * v;
  n.val.at(0, 0) = acc / na.val.rows;
  return push(std::move(n));
}

Value Graph::linear(Value x, ParameterStore& s, const std::string& w, const std::string& b) {
  return add_rowvec(matmul(x, param(s, w)), param(s, b));
}

void Graph::backward(Value root) {
  Node& r = node(root);
  if (r.val.rows != 1 || r.val.cols != 1) throw ValidationError("backward: root must be scalar");
  for (Node& n : nodes_) n.grad.fill(0.0);
  r.grad.at(0, 0) = 1.0;

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    Mat& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        emap(nodes_[n.a].grad) += emap(g);
        emap(nodes_[n.b].grad) += emap(g);
        break;
      case Op::Sub:
        emap(nodes_[n.a].grad) += emap(g);
        emap(nodes_[n.b].grad) -= emap(g);
        break;
      case Op::Scale:
        emap(nodes_[n.a].grad) += n.s * emap(g);
        break;
      case Op::MatMul:
        emap(nodes_[n.a].grad).noalias() += emap(g) * emap(nodes_[n.b].val).transpose();
        emap(nodes_[n.b].grad).noalias() += emap(nodes_[n.a].val).transpose() * emap(g);
        break;
      case Op::MatMulNT:
        emap(nodes_[n.a].grad).noalias() += emap(g) * emap(nodes_[n.b].val);
        emap(nodes_[n.b].grad).noalias() += emap(g).transpose() * emap(nodes_[n.a].val);
        break;
      case Op::AddRowVec:
        emap(nodes_[n.a].grad) += emap(g);
        emap(nodes_[n.b].grad).row(0) += emap(g).colwise().sum();
        break;
      case Op::RepeatRow:
        emap(nodes_[n.a].grad).row(0) += emap(g).colwise().sum();
        break;
      case Op::Silu: {
        const Mat& x = nodes_[n.a].val;
        Mat& gx = nodes_[n.a].grad;
        for (size_t i = 0; i < x.size(); ++i) {
          const double s = sigmoid(x.d[i]);
          gx.d[i] += g.d[i] * s * (1.0 + x.d[i] * (1.0 - s));
        }
        break;
      }
      case Op::SoftmaxRows: {
        Mat& gx = nodes_[n.a].grad;
        for (int r = 0; r < n.val.rows; ++r) {
          const double* y = n.val.row(r);
          const double* gy = g.row(r);
          double dot = 0.0;
          for (int c = 0; c < n.val.cols; ++c) dot += gy[c] * y[c];
          double* dst = gx.row(r);
          for (int c = 0; c < n.val.cols; ++c) dst[c] += y[c] * (gy[c] - dot);
        }
        break;
      }
      case Op::GatherRows: {
        Mat& gx = nodes_[n.a].grad;
        for (size_t r = 0; r < n.idx.size(); ++r) {
          double* dst = gx.row(n.idx[r]);
          const double* src = g.row(static_cast<int>(r));
          for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::ConcatCols: {
        Mat& ga = nodes_[n.a].grad;
        Mat& gb = nodes_[n.b].grad;
        for (int r = 0; r < g.rows; ++r) {
          const double* src = g.row(r);
          double* da = ga.row(r);
          double* db = gb.row(r);
          for (int c = 0; c < n.c0; ++c) da[c] += src[c];
          for (int c = n.c0; c < g.cols; ++c) db[c - n.c0] += src[c];
        }
        break;
      }
      case Op::SliceCols: {
        Mat& gx = nodes_[n.a].grad;
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < g.cols; ++c) gx.at(r, n.c0 + c) += g.at(r, c);
        break;
      }
      case Op::GroupAttnPool: {
        const Mat& feats = nodes_[n.a].val;
        Mat& gf = nodes_[n.a].grad;
        Mat& gl = nodes_[n.b].grad;
        const int ch = feats.cols / n.heads;
        for (int gr = 0; gr < n.groups; ++gr) {
          for (int h = 0; h < n.heads; ++h) {
            // s_j = sum over head-h channels of dout * feats_j
            double sbar = 0.0;
            std::vector<double> sj(n.k, 0.0);
            for (int j = 0; j < n.k; ++j) {
              double acc = 0.0;
              for (int c = h * ch; c < (h + 1) * ch; ++c)
                acc += g.at(gr, c) * feats.at(gr * n.k + j, c);
              sj[j] = acc;
              sbar += n.w.at(gr * n.k + j, h) * acc;
            }
            for (int j = 0; j < n.k; ++j) {
              const double wj = n.w.at(gr * n.k + j, h);
              gl.at(gr * n.k + j, h) += wj * (sj[j] - sbar);
              for (int c = h * ch; c < (h + 1) * ch; ++c)
                gf.at(gr * n.k + j, c) += wj * g.at(gr, c);
            }
          }
        }
        break;
      }
      case Op::InterpRows: {
        Mat& gx = nodes_[n.a].grad;
        for (int m = 0; m < g.rows; ++m) {
          for (int j = 0; j < n.k; ++j) {
            const double wj = n.w.at(m, j);
            double* dst = gx.row(n.idx[m * n.k + j]);
            const double* src = g.row(m);
            for (int c = 0; c < g.cols; ++c) dst[c] += wj * src[c];
          }
        }
        break;
      }
      case Op::ColMax: {
        Mat& gx = nodes_[n.a].grad;
        for (int c = 0; c < g.cols; ++c) gx.at(n.idx[c], c) += g.at(0, c);
        break;
      }
      case Op::MeanSqRows: {
        const Mat& x = nodes_[n.a].val;
        Mat& gx = nodes_[n.a].grad;
        const double s = 2.0 * g.at(0, 0) / x.rows;
        for (size_t i = 0; i < x.size(); ++i) gx.d[i] += s * x.d[i];
        break;
      }
    }
  }

  for (auto& [id, tensor] : bindings_) emap(tensor->grad) += emap(nodes_[id].grad);
}

}  // namespace pudm
