#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "pudm/errors.h"
#include "pudm/rng.h"
#include "pudm/transfer.h"
#include "test_util.h"

using namespace pudm;

namespace {

double silu1(double x) { return x / (1.0 + std::exp(-x)); }

// Naive row-major X*W + b with explicit loops (independent of the tape's
// Eigen-backed matmul).
Mat affine_ref(const Mat& x, const Mat& w, const Mat& b) {
  Mat out(x.rows, w.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < w.cols; ++c) {
      double s = b.at(0, c);
      for (int k = 0; k < x.cols; ++k) s += x.at(r, k) * w.at(k, c);
      out.at(r, c) = s;
    }
  return out;
}

Mat silu_ref(const Mat& x) {
  Mat out = x;
  for (double& v : out.d) v = silu1(v);
  return out;
}

// Plain-loop replica of one cross-attention direction.
Mat cross_attend_ref(const Mat& query, const Mat& kv, ParameterStore& ps, const std::string& p,
                     const TransferConfig& tc) {
  auto P = [&](const std::string& n) -> const Mat& { return ps.get(p + n).value; };
  Mat q = affine_ref(query, P(".wq"), P(".bq"));
  Mat k = affine_ref(kv, P(".wk"), P(".bk"));
  Mat v = affine_ref(kv, P(".wv"), P(".bv"));

  const int dh = tc.latent / tc.heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(tc.latent));
  Mat merged(q.rows, tc.latent);
  for (int h = 0; h < tc.heads; ++h) {
    for (int r = 0; r < q.rows; ++r) {
      // Scores against every kv row, softmax with max-shift.
      std::vector<double> s(k.rows);
      double mx = -1e300;
      for (int j = 0; j < k.rows; ++j) {
        double dot = 0.0;
        for (int e = 0; e < dh; ++e) dot += q.at(r, h * dh + e) * k.at(j, h * dh + e);
        s[j] = dot * inv;
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (int j = 0; j < k.rows; ++j) {
        s[j] = std::exp(s[j] - mx);
        z += s[j];
      }
      for (int e = 0; e < dh; ++e) {
        double acc = 0.0;
        for (int j = 0; j < k.rows; ++j) acc += (s[j] / z) * v.at(j, h * dh + e);
        merged.at(r, h * dh + e) = acc;
      }
    }
  }

  Mat m = affine_ref(silu_ref(affine_ref(merged, P(".mlp1_w"), P(".mlp1_b"))), P(".mlp2_w"),
                     P(".mlp2_b"));
  Mat fused(query.rows, query.cols);
  for (size_t i = 0; i < fused.d.size(); ++i) fused.d[i] = m.d[i] + query.d[i];
  Mat f = affine_ref(silu_ref(affine_ref(fused, P(".ffn1_w"), P(".ffn1_b"))), P(".ffn2_w"),
                     P(".ffn2_b"));
  Mat out = fused;
  for (size_t i = 0; i < out.d.size(); ++i) out.d[i] += f.d[i];
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("transfer");

TEST_CASE("zeroed exchange MLP passes query features through untouched") {
  TransferConfig tc{2, 8, 10};
  ParameterStore ps;
  Rng rng(123);
  register_transfer_params(ps, rng, "tm.fc", 6, 4, tc, /*zero_out_mlp=*/true);

  Mat qfeats = testutil::random_mat(5, 6, 1);
  Mat kfeats = testutil::random_mat(7, 4, 2);
  Graph g;
  FeatureMap q{testutil::random_mat(5, 3, 3), g.leaf(qfeats)};
  FeatureMap kv{testutil::random_mat(7, 3, 4), g.leaf(kfeats)};
  Mat out = g.val(cross_attend(g, q, kv, ps, "tm.fc", tc).feats);

  // With the exchange MLP at zero the attention contribution vanishes,
  // leaving query + FFN(query).
  Mat ffn = affine_ref(silu_ref(affine_ref(qfeats, ps.get("tm.fc.ffn1_w").value,
                                           ps.get("tm.fc.ffn1_b").value)),
                       ps.get("tm.fc.ffn2_w").value, ps.get("tm.fc.ffn2_b").value);
  Mat expect = qfeats;
  for (size_t i = 0; i < expect.d.size(); ++i) expect.d[i] += ffn.d[i];
  CHECK(testutil::max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("cross attention matches a plain-loop reimplementation") {
  TransferConfig tc{2, 8, 10};
  ParameterStore ps;
  Rng rng(77);
  register_transfer_params(ps, rng, "tm.fc", 6, 4, tc, /*zero_out_mlp=*/false);

  Mat qfeats = testutil::random_mat(5, 6, 11);
  Mat kfeats = testutil::random_mat(7, 4, 12);
  Graph g;
  FeatureMap q{testutil::random_mat(5, 3, 13), g.leaf(qfeats)};
  FeatureMap kv{testutil::random_mat(7, 3, 14), g.leaf(kfeats)};
  FeatureMap out = cross_attend(g, q, kv, ps, "tm.fc", tc);

  CHECK(testutil::max_abs_diff(out.coords, q.coords) == 0.0);
  Mat expect = cross_attend_ref(qfeats, kfeats, ps, "tm.fc", tc);
  CHECK(testutil::max_abs_diff(g.val(out.feats), expect) < 1e-10);
}

TEST_CASE("attention weights are a convex combination over kv rows") {
  TransferConfig tc{2, 8, 10};
  ParameterStore ps;
  Rng rng(55);
  register_transfer_params(ps, rng, "tm.fc", 6, 4, tc, false);

  Mat qfeats = testutil::random_mat(4, 6, 20);
  Mat one_kv = testutil::random_mat(1, 4, 21);
  Mat many_kv(5, 4);  // the same kv row five times
  for (int r = 0; r < 5; ++r) std::copy(one_kv.row(0), one_kv.row(0) + 4, many_kv.row(r));

  Graph g;
  FeatureMap q{testutil::random_mat(4, 3, 22), g.leaf(qfeats)};
  Mat a = g.val(cross_attend(g, q, {testutil::random_mat(1, 3, 23), g.leaf(one_kv)}, ps, "tm.fc",
                             tc)
                    .feats);
  Mat b = g.val(cross_attend(g, q, {testutil::random_mat(5, 3, 24), g.leaf(many_kv)}, ps, "tm.fc",
                             tc)
                    .feats);
  // Normalized weights over identical rows reproduce the single-row case.
  CHECK(testutil::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("bidirectional exchange runs both directions from the original inputs") {
  TransferConfig tc{2, 8, 10};
  ParameterStore ps;
  Rng rng(99);
  register_transfer_params(ps, rng, "tm.fc", 6, 4, tc, false);
  register_transfer_params(ps, rng, "tm.fn", 4, 6, tc, false);

  Mat cf = testutil::random_mat(5, 6, 30);
  Mat nf = testutil::random_mat(7, 4, 31);
  Mat cc = testutil::random_mat(5, 3, 32);
  Mat nc = testutil::random_mat(7, 3, 33);

  Graph g;
  FeatureMap Fc{cc, g.leaf(cf)};
  FeatureMap Fn{nc, g.leaf(nf)};
  auto [fc_out, fn_out] = transfer_bidirectional(g, Fc, Fn, ps, tc);
  CHECK(g.val(fc_out.feats).rows == 5);
  CHECK(g.val(fc_out.feats).cols == 6);
  CHECK(g.val(fn_out.feats).rows == 7);
  CHECK(g.val(fn_out.feats).cols == 4);

  // Each direction separately, on fresh graphs, from the originals.
  Graph g2;
  Mat solo_fc = g2.val(cross_attend(g2, {cc, g2.leaf(cf)}, {nc, g2.leaf(nf)}, ps, "tm.fc", tc).feats);
  Graph g3;
  Mat solo_fn = g3.val(cross_attend(g3, {nc, g3.leaf(nf)}, {cc, g3.leaf(cf)}, ps, "tm.fn", tc).feats);
  CHECK(testutil::max_abs_diff(g.val(fc_out.feats), solo_fc) == 0.0);
  CHECK(testutil::max_abs_diff(g.val(fn_out.feats), solo_fn) == 0.0);
}

TEST_CASE("tied weights make the exchange symmetric under argument swap") {
  TransferConfig tc{2, 8, 10};
  const int width = 6;  // both sides share a width so tensors can be tied
  ParameterStore ps;
  Rng rng(42);
  register_transfer_params(ps, rng, "tm.fc", width, width, tc, false);
  register_transfer_params(ps, rng, "tm.fn", width, width, tc, false);
  const char* suffixes[] = {".wq", ".bq", ".wk", ".bk", ".wv", ".bv", ".mlp1_w", ".mlp1_b",
                            ".mlp2_w", ".mlp2_b", ".ffn1_w", ".ffn1_b", ".ffn2_w", ".ffn2_b"};
  for (const char* s : suffixes)
    ps.get(std::string("tm.fn") + s).value = ps.get(std::string("tm.fc") + s).value;

  Mat cf = testutil::random_mat(5, width, 40);
  Mat nf = testutil::random_mat(7, width, 41);
  Mat cc = testutil::random_mat(5, 3, 42);
  Mat nc = testutil::random_mat(7, 3, 43);

  Graph g1;
  auto fwd = transfer_bidirectional(g1, {cc, g1.leaf(cf)}, {nc, g1.leaf(nf)}, ps, tc);
  Graph g2;
  auto rev = transfer_bidirectional(g2, {nc, g2.leaf(nf)}, {cc, g2.leaf(cf)}, ps, tc);
  CHECK(testutil::max_abs_diff(g1.val(fwd.first.feats), g2.val(rev.second.feats)) == 0.0);
  CHECK(testutil::max_abs_diff(g1.val(fwd.second.feats), g2.val(rev.first.feats)) == 0.0);
}

TEST_CASE("width mismatches against registered tensors are rejected") {
  TransferConfig tc{2, 8, 10};
  ParameterStore ps;
  Rng rng(7);
  register_transfer_params(ps, rng, "tm.fc", 6, 4, tc, false);

  Graph g;
  FeatureMap q{testutil::random_mat(5, 3, 50), g.leaf(testutil::random_mat(5, 6, 51))};
  FeatureMap q_bad{testutil::random_mat(5, 3, 52), g.leaf(testutil::random_mat(5, 7, 53))};
  FeatureMap kv{testutil::random_mat(4, 3, 54), g.leaf(testutil::random_mat(4, 4, 55))};
  FeatureMap kv_bad{testutil::random_mat(4, 3, 56), g.leaf(testutil::random_mat(4, 5, 57))};
  CHECK_THROWS_AS(cross_attend(g, q_bad, kv, ps, "tm.fc", tc), ValidationError);
  CHECK_THROWS_AS(cross_attend(g, q, kv_bad, ps, "tm.fc", tc), ValidationError);
  CHECK_NOTHROW(cross_attend(g, q, kv, ps, "tm.fc", tc));

  TransferConfig bad{3, 8, 10};  // 8 not divisible by 3 heads
  ParameterStore ps2;
  CHECK_THROWS_AS(register_transfer_params(ps2, rng, "tm.fc", 6, 4, bad, false),
                  ValidationError);
}

TEST_CASE("gradients through the exchange match finite differences") {
  TransferConfig tc{2, 8, 10};
  ParameterStore ps;
  Rng rng(314);
  register_transfer_params(ps, rng, "tm.fc", 6, 4, tc, false);

  Mat qfeats = testutil::random_mat(3, 6, 60);
  Mat kfeats = testutil::random_mat(4, 4, 61);
  Mat qc = testutil::random_mat(3, 3, 62);
  Mat kc = testutil::random_mat(4, 3, 63);
  const Mat offset = testutil::random_mat(3, 6, 64);

  auto eval = [&]() {
    Graph g;
    FeatureMap out =
        cross_attend(g, {qc, g.leaf(qfeats)}, {kc, g.leaf(kfeats)}, ps, "tm.fc", tc);
    return g.val(g.mean_sq_rows(g.sub(out.feats, g.leaf(offset)))).at(0, 0);
  };

  ps.zero_grads();
  Mat grad_q, grad_k;
  {
    Graph g;
    Value qv = g.leaf(qfeats);
    Value kv = g.leaf(kfeats);
    FeatureMap out = cross_attend(g, {qc, qv}, {kc, kv}, ps, "tm.fc", tc);
    g.backward(g.mean_sq_rows(g.sub(out.feats, g.leaf(offset))));
    grad_q = g.grad(qv);
    grad_k = g.grad(kv);
  }

  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](Mat& target, const Mat& analytic, size_t i) {
    const double orig = target.d[i];
    target.d[i] = orig + h;
    const double fp = eval();
    target.d[i] = orig - h;
    const double fm = eval();
    target.d[i] = orig;
    worst = std::max(worst, testutil::rel_err((fp - fm) / (2.0 * h), analytic.d[i]));
  };
  for (size_t i = 0; i < qfeats.d.size(); ++i) probe(qfeats, grad_q, i);
  for (size_t i = 0; i < kfeats.d.size(); ++i) probe(kfeats, grad_k, i);
  for (auto& t : ps.tensors())
    for (size_t i : {size_t{0}, t.value.d.size() / 2, t.value.d.size() - 1})
      probe(t.value, t.grad, i);
  CHECK(worst < 1e-3);
}

TEST_SUITE_END();
