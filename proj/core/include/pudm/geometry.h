#pragma once

#include <vector>

#include "pudm/mat.h"
#include "pudm/rng.h"

namespace pudm {

struct NormalizationRecord {
  double centroid[3] = {0.0, 0.0, 0.0};
  double scale = 1.0;  // > 0; 1 when all points coincide
};

// Center at the centroid and scale so the max point norm is 1.
// Inverse within 1e-9: denormalize(normalize(c)) == c.
std::pair<PointCloud, NormalizationRecord> normalize(const PointCloud& cloud);
PointCloud denormalize(const PointCloud& cloud, const NormalizationRecord& rec);
PointCloud apply_normalization(const PointCloud& cloud, const NormalizationRecord& rec);

// Greedy farthest-first subset selection. First index is seed; each
// subsequent index maximizes the min distance to the already-selected
// set, ties broken by lowest index. Deterministic.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int seed = 0);

// Brute-force k nearest neighbors: row q lists the k reference indices
// nearest to query q, ascending distance, ties broken by lower index.
// A query that is also a reference point finds itself first.
std::vector<std::vector<int>> knn(const PointCloud& reference, const PointCloud& queries, int k);

// Densify to exactly rate*n points: repeatedly add k-NN midpoints
// (self excluded, dedup within 1e-9) until >= rate*n candidates, then
// farthest-point-sample down (seed 0). rate=1 returns the input as-is.
PointCloud midpoint_interpolate(const PointCloud& cloud, int rate, int k);

enum class NoiseKind { Gaussian, Uniform };

// out = in + tau * eps with eps ~ N(0,1) per coordinate (gaussian) or
// eps ~ U(-1,1) per coordinate (uniform). tau=0 is the identity.
PointCloud perturb(const PointCloud& cloud, double tau, NoiseKind kind, Rng& rng);

PointCloud select_rows(const PointCloud& cloud, const std::vector<int>& idx);

}  // namespace pudm
