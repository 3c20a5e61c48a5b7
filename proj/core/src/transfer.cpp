#include "pudm/transfer.h"

#include <cmath>

#include "pudm/errors.h"

namespace pudm {

namespace {

void reg_linear(ParameterStore& ps, Rng& rng, const std::string& w, const std::string& b, int in,
                int out, bool zero = false) {
  ParamTensor& W = ps.create(w, in, out);
  ParamTensor& B = ps.create(b, 1, out);
  if (!zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    fill_uniform(W.value, rng, -bound, bound);
    fill_uniform(B.value, rng, -bound, bound);
  }
}

}  // namespace

void register_transfer_params(ParameterStore& ps, Rng& rng, const std::string& prefix,
                              int query_width, int kv_width, const TransferConfig& tc,
                              bool zero_out_mlp) {
  if (tc.latent % tc.heads != 0)
    throw ValidationError("transfer: latent width must be divisible by heads");
  reg_linear(ps, rng, prefix + ".wq", prefix + ".bq", query_width, tc.latent);
  reg_linear(ps, rng, prefix + ".wk", prefix + ".bk", kv_width, tc.latent);
  reg_linear(ps, rng, prefix + ".wv", prefix + ".bv", kv_width, tc.latent);
  reg_linear(ps, rng, prefix + ".mlp1_w", prefix + ".mlp1_b", tc.latent, tc.latent);
  reg_linear(ps, rng, prefix + ".mlp2_w", prefix + ".mlp2_b", tc.latent, query_width, zero_out_mlp);
  reg_linear(ps, rng, prefix + ".ffn1_w", prefix + ".ffn1_b", query_width, tc.ffn_width);
  reg_linear(ps, rng, prefix + ".ffn2_w", prefix + ".ffn2_b", tc.ffn_width, query_width);
}

FeatureMap cross_attend(Graph& g, const FeatureMap& query_side, const FeatureMap& kv_side,
                        ParameterStore& ps, const std::string& prefix, const TransferConfig& tc) {
  const Mat& qv = g.val(query_side.feats);
  const Mat& kv = g.val(kv_side.feats);
  if (qv.rows < 1 || kv.rows < 1) throw ValidationError("cross_attend: empty feature map");
  if (ps.get(prefix + ".wq").value.rows != qv.cols)
    throw ValidationError("cross_attend: query width mismatch with params");
  if (ps.get(prefix + ".wk").value.rows != kv.cols)
    throw ValidationError("cross_attend: kv width mismatch with params");

  Value q = g.linear(query_side.feats, ps, prefix + ".wq", prefix + ".bq");
  Value k = g.linear(kv_side.feats, ps, prefix + ".wk", prefix + ".bk");
  Value v = g.linear(kv_side.feats, ps, prefix + ".wv", prefix + ".bv");

  const int dh = tc.latent / tc.heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(tc.latent));
  Value merged;
  for (int h = 0; h < tc.heads; ++h) {
    Value qh = g.slice_cols(q, h * dh, (h + 1) * dh);
    Value kh = g.slice_cols(k, h * dh, (h + 1) * dh);
    Value vh = g.slice_cols(v, h * dh, (h + 1) * dh);
    Value att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv));
    Value oh = g.matmul(att, vh);
    merged = h == 0 ? oh : g.concat_cols(merged, oh);
  }

  Value m = g.linear(g.silu(g.linear(merged, ps, prefix + ".mlp1_w", prefix + ".mlp1_b")), ps,
                     prefix + ".mlp2_w", prefix + ".mlp2_b");
  Value fused = g.add(m, query_side.feats);
  Value ffn = g.linear(g.silu(g.linear(fused, ps, prefix + ".ffn1_w", prefix + ".ffn1_b")), ps,
                       prefix + ".ffn2_w", prefix + ".ffn2_b");
  return FeatureMap{query_side.coords, g.add(fused, ffn)};
}

std::pair<FeatureMap, FeatureMap> transfer_bidirectional(Graph& g, const FeatureMap& Fc,
                                                         const FeatureMap& Fn, ParameterStore& ps,
                                                         const TransferConfig& tc) {
  // Both directions read the original inputs; neither sees the other's update.
  FeatureMap fc_out = cross_attend(g, Fc, Fn, ps, "tm.fc", tc);
  FeatureMap fn_out = cross_attend(g, Fn, Fc, ps, "tm.fn", tc);
  return {fc_out, fn_out};
}

}  // namespace pudm
