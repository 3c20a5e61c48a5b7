#include "pudm/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pudm/errors.h"

namespace pudm {

namespace {

void check_cloud(const PointCloud& c, const char* who) {
  if (c.rows < 1 || c.cols != 3) throw ValidationError(std::string(who) + ": cloud must be n x 3, n >= 1");
  if (!c.all_finite()) throw ValidationError(std::string(who) + ": cloud has non-finite coordinates");
}

}  // namespace

std::pair<PointCloud, NormalizationRecord> normalize(const PointCloud& cloud) {
  check_cloud(cloud, "normalize");
  NormalizationRecord rec;
  for (int r = 0; r < cloud.rows; ++r)
    for (int c = 0; c < 3; ++c) rec.centroid[c] += cloud.at(r, c);
  for (int c = 0; c < 3; ++c) rec.centroid[c] /= cloud.rows;

  double max_norm = 0.0;
  for (int r = 0; r < cloud.rows; ++r) {
    double n2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double v = cloud.at(r, c) - rec.centroid[c];
      n2 += v * v;
    }
    max_norm = std::max(max_norm, std::sqrt(n2));
  }
  rec.scale = max_norm > 0.0 ? max_norm : 1.0;

  PointCloud out(cloud.rows, 3);
  for (int r = 0; r < cloud.rows; ++r)
    for (int c = 0; c < 3; ++c) out.at(r, c) = (cloud.at(r, c) - rec.centroid[c]) / rec.scale;
  return {std::move(out), rec};
}

PointCloud denormalize(const PointCloud& cloud, const NormalizationRecord& rec) {
  check_cloud(cloud, "denormalize");
  PointCloud out(cloud.rows, 3);
  for (int r = 0; r < cloud.rows; ++r)
    for (int c = 0; c < 3; ++c) out.at(r, c) = cloud.at(r, c) * rec.scale + rec.centroid[c];
  return out;
}

PointCloud apply_normalization(const PointCloud& cloud, const NormalizationRecord& rec) {
  check_cloud(cloud, "apply_normalization");
  PointCloud out(cloud.rows, 3);
  for (int r = 0; r < cloud.rows; ++r)
    for (int c = 0; c < 3; ++c) out.at(r, c) = (cloud.at(r, c) - rec.centroid[c]) / rec.scale;
  return out;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int seed) {
  check_cloud(cloud, "farthest_point_sample");
  const int n = cloud.rows;
  if (m < 1 || m > n) throw ValidationError("farthest_point_sample: need 1 <= m <= n");
  if (seed < 0 || seed >= n) throw ValidationError("farthest_point_sample: seed index out of range");

  std::vector<int> picked;
  picked.reserve(m);
  picked.push_back(seed);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  for (int step = 1; step < m; ++step) {
    const double* last = cloud.row(picked.back());
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], sq_dist3(cloud.row(i), last));
      if (min_d2[i] > best_d2) {  // strict: ties keep the lower index
        best_d2 = min_d2[i];
        best = i;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

std::vector<std::vector<int>> knn(const PointCloud& reference, const PointCloud& queries, int k) {
  check_cloud(reference, "knn");
  check_cloud(queries, "knn");
  if (k < 1 || k > reference.rows) throw ValidationError("knn: need 1 <= k <= |reference|");

  std::vector<std::vector<int>> out(queries.rows);
  std::vector<std::pair<double, int>> dist(reference.rows);
  for (int q = 0; q < queries.rows; ++q) {
    for (int i = 0; i < reference.rows; ++i)
      dist[i] = {sq_dist3(queries.row(q), reference.row(i)), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());  // pair order = (distance, index)
    out[q].resize(k);
    for (int j = 0; j < k; ++j) out[q][j] = dist[j].second;
  }
  return out;
}

PointCloud midpoint_interpolate(const PointCloud& cloud, int rate, int k) {
  check_cloud(cloud, "midpoint_interpolate");
  if (rate < 1) throw ValidationError("midpoint_interpolate: rate must be >= 1");
  if (k < 1) throw ValidationError("midpoint_interpolate: k must be >= 1");
  if (rate == 1) return cloud;

  const double dedup_tol2 = 1e-9 * 1e-9;
  const int target = rate * cloud.rows;

  PointCloud cand = cloud;
  while (cand.rows < target) {
    const int kk = std::min(k + 1, cand.rows);  // +1 so the self match can be dropped
    auto nbr = knn(cand, cand, kk);
    PointCloud grown = cand;
    for (int p = 0; p < cand.rows; ++p) {
      int taken = 0;
      for (int j = 0; j < kk && taken < k; ++j) {
        const int q = nbr[p][j];
        if (q == p) continue;
        ++taken;
        double mid[3];
        for (int c = 0; c < 3; ++c) mid[c] = 0.5 * (cand.at(p, c) + cand.at(q, c));
        bool dup = false;
        for (int r = 0; r < grown.rows; ++r)
          if (sq_dist3(grown.row(r), mid) < dedup_tol2) {
            dup = true;
            break;
          }
        if (!dup) {
          grown.d.insert(grown.d.end(), mid, mid + 3);
          grown.rows += 1;
        }
      }
    }
    if (grown.rows == cand.rows)
      throw ValidationError("midpoint_interpolate: degenerate input, no new midpoints");
    cand = std::move(grown);
  }

  if (cand.rows == target) return cand;
  return select_rows(cand, farthest_point_sample(cand, target, 0));
}

PointCloud perturb(const PointCloud& cloud, double tau, NoiseKind kind, Rng& rng) {
  check_cloud(cloud, "perturb");
  if (tau < 0.0) throw ValidationError("perturb: tau must be >= 0");
  if (tau == 0.0) return cloud;
  PointCloud out = cloud;
  if (kind == NoiseKind::Gaussian) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : out.d) v += tau * n(rng);
  } else {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : out.d) v += tau * u(rng);
  }
  return out;
}

PointCloud select_rows(const PointCloud& cloud, const std::vector<int>& idx) {
  PointCloud out(static_cast<int>(idx.size()), cloud.cols);
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= cloud.rows) throw ValidationError("select_rows: index out of range");
    std::copy(cloud.row(idx[r]), cloud.row(idx[r]) + cloud.cols, out.row(static_cast<int>(r)));
  }
  return out;
}

}  // namespace pudm
