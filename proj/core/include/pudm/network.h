#pragma once

#include <array>
#include <string>

#include "pudm/autodiff.h"
#include "pudm/mat.h"
#include "pudm/rng.h"
#include "pudm/transfer.h"

namespace pudm {

// Architecture hyperparameters shared by both branches. level_points is
// the configured per-level sampling ladder; at runtime each level is
// additionally capped at the incoming point count so small clouds run
// under any preset.
struct NetworkConfig {
  std::array<int, 4> level_points{64, 32, 16, 8};
  std::array<int, 4> cnet_channels{16, 32, 32, 64};
  std::array<int, 4> nnet_channels{32, 64, 64, 64};
  int knn_k = 8;
  int heads = 2;
  int tm_latent = 16;
  int tm_ffn = 64;
  int global_dim = 128;
  int time_dim = 64;
  int rate_rows = 256;  // hard ceiling on the upsampling ratio
  int rate_dim = 32;

  TransferConfig transfer() const { return TransferConfig{heads, tm_latent, tm_ffn}; }
};

NetworkConfig desk_config();
NetworkConfig full_config();
NetworkConfig tiny_config();  // test-only: small enough for exhaustive FD sweeps
NetworkConfig config_for_preset(const std::string& preset);
void validate_config(const NetworkConfig& cfg);

// Creates every tensor of both branches, the bottleneck transfer, the
// embeddings, and the per-stage conditioning projections, in a fixed
// order, initialized from `seed` (uniform fan-in scaling). With
// zero_heads the two coordinate/noise output layers and the transfer
// output MLPs start at zero (stable early training); gradcheck uses
// all-random init so every path carries signal.
void register_model_params(ParameterStore& ps, const NetworkConfig& cfg, uint64_t seed,
                           bool zero_heads = true);

// Downsample-group-pool: farthest-point selection to out_points (input
// order kept when out_points == M), k-neighbor grouping of
// [neighbor_feats | neighbor - center], shared two-layer MLP plus a
// linear lift of the grouped input (residual), then per-head softmax
// attention pooling over the k axis.
FeatureMap set_abstraction(Graph& g, const FeatureMap& in, int out_points, int out_channels, int k,
                           int heads, ParameterStore& ps, const std::string& prefix);

// Upsample-refine: inverse-squared-distance 3-neighbor interpolation of
// coarse features onto fine_coords, multi-head self-attention with a
// residual, skip concatenation, two-layer MLP to out_channels.
FeatureMap feature_propagation(Graph& g, const FeatureMap& coarse, const Mat& fine_coords,
                               const FeatureMap& skip, int out_channels, int heads,
                               ParameterStore& ps, const std::string& prefix);

// Sinusoidal encoding of t followed by a two-layer MLP -> [1, time_dim].
Value embed_time(Graph& g, int t, int T, ParameterStore& ps, const NetworkConfig& cfg);

// Row lookup at index rate-1 -> [1, rate_dim]. rate beyond the table
// (or beyond 256) is an error.
Value embed_rate(Graph& g, int rate, ParameterStore& ps, const NetworkConfig& cfg);

// Two stacked shared-MLP + channel-max stages -> [1, global_dim];
// exactly permutation invariant.
Value global_features(Graph& g, const PointCloud& cloud, ParameterStore& ps,
                      const NetworkConfig& cfg);

struct CnetLevels {
  std::array<FeatureMap, 4> enc;  // post-abstraction encoder levels
};

struct CnetResult {
  CnetLevels levels;
  Value y_c;  // |c| x 3 coordinate reconstruction, input order
};

// Condition branch: encoder, decoder back to |c| points, coordinate
// head. Touches only "cnet." parameters.
CnetResult cnet_forward(Graph& g, const PointCloud& c, ParameterStore& ps,
                        const NetworkConfig& cfg);

// Plain-value snapshot of the condition branch for reuse across
// sampling steps (cnet is a function of c only).
struct CnetCache {
  std::array<Mat, 4> coords;
  std::array<Mat, 4> feats;
  PointCloud y_c;
};
CnetCache cnet_forward_cached(const PointCloud& c, ParameterStore& ps, const NetworkConfig& cfg);
CnetLevels bind_cnet_cache(Graph& g, const CnetCache& cache);

// Noise branch: input features [x_t | interp] (6 channels) on x_t
// geometry; (global(interp) | time | rate) projected and broadcast-added
// at every encoder/decoder stage; bidirectional bottleneck exchange with
// the condition levels; output |x_t| x 3 in input order.
Value nnet_forward(Graph& g, const PointCloud& x_t, const PointCloud& interp, int t, int T,
                   int rate, const CnetLevels& cnet, ParameterStore& ps, const NetworkConfig& cfg);

}  // namespace pudm
