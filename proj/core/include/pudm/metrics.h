#pragma once

#include <string>
#include <vector>

#include "pudm/mat.h"

namespace pudm {

// CD = 0.5 * [ mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2 ]  (squared)
double chamfer(const PointCloud& a, const PointCloud& b);

// HD = max( max_a min_b |a-b|, max_b min_a |a-b| )  (unsquared)
double hausdorff(const PointCloud& a, const PointCloud& b);

// Mean over pred points of unsquared distance to the nearest reference
// point. The reference stands in for the true surface; callers must
// supply one dense enough for the trend they are reading.
double p2f_proxy(const PointCloud& pred, const PointCloud& dense_reference);

struct MetricRow {
  double cd = 0.0;
  double hd = 0.0;
  double p2f = 0.0;
};

// Per-sample rows plus their arithmetic mean. Raw values are stored
// unscaled; serialization applies the x1e3 table convention.
struct MetricReport {
  std::vector<MetricRow> rows;

  MetricRow mean() const;
  // header `sample,cd,hd,p2f`, one row per sample, then a `mean` row;
  // values x1e3 at 6 significant digits.
  std::string to_csv() const;
};

}  // namespace pudm
