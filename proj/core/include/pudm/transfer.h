#pragma once

#include <string>
#include <utility>

#include "pudm/autodiff.h"
#include "pudm/mat.h"
#include "pudm/rng.h"

namespace pudm {

// Paired (coordinates, tape-bound features) flowing through network levels.
// Coordinates are constant geometry; gradients flow through feats only.
struct FeatureMap {
  Mat coords;   // M x 3
  Value feats;  // [M, C]
};

struct TransferConfig {
  int heads = 2;
  int latent = 16;  // attention width C_i; divisible by heads
  int ffn_width = 64;
};

// One cross-attention direction: Q from the query side, K/V from the kv
// side, per-head scaled-dot scores with divisor sqrt(latent) (the full
// attention width, not the per-head slice), softmax over the kv axis,
// heads concatenated, a two-layer MLP back to the query width, residual
// add of the query features, then a post-residual FFN.
// Parameters under `prefix`: wq/bq wk/bk wv/bv mlp1_w/b mlp2_w/b ffn1_w/b ffn2_w/b.
FeatureMap cross_attend(Graph& g, const FeatureMap& query_side, const FeatureMap& kv_side,
                        ParameterStore& ps, const std::string& prefix, const TransferConfig& tc);

// Both directions computed from the ORIGINAL inputs (parallel, order
// independent): first = cross_attend(Fc, Fn) under "tm.fc", second =
// cross_attend(Fn, Fc) under "tm.fn".
std::pair<FeatureMap, FeatureMap> transfer_bidirectional(Graph& g, const FeatureMap& Fc,
                                                         const FeatureMap& Fn, ParameterStore& ps,
                                                         const TransferConfig& tc);

// Registers one direction's parameter tensors (query width -> latent,
// kv width -> latent, MLP latent -> query width, FFN around query width).
void register_transfer_params(ParameterStore& ps, Rng& rng, const std::string& prefix,
                              int query_width, int kv_width, const TransferConfig& tc,
                              bool zero_out_mlp);

}  // namespace pudm
