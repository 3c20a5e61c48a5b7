#include "pudm/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pudm/errors.h"

namespace pudm {

namespace {

void check(const PointCloud& c, const char* who) {
  if (c.rows < 1 || c.cols != 3) throw ValidationError(std::string(who) + ": cloud must be n x 3, n >= 1");
}

double min_sq_dist(const double* p, const PointCloud& ref) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < ref.rows; ++r) best = std::min(best, sq_dist3(p, ref.row(r)));
  return best;
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  check(a, "chamfer");
  check(b, "chamfer");
  double fwd = 0.0, bwd = 0.0;
  for (int r = 0; r < a.rows; ++r) fwd += min_sq_dist(a.row(r), b);
  for (int r = 0; r < b.rows; ++r) bwd += min_sq_dist(b.row(r), a);
  return 0.5 * (fwd / a.rows + bwd / b.rows);
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
  check(a, "hausdorff");
  check(b, "hausdorff");
  double fwd = 0.0, bwd = 0.0;
  for (int r = 0; r < a.rows; ++r) fwd = std::max(fwd, min_sq_dist(a.row(r), b));
  for (int r = 0; r < b.rows; ++r) bwd = std::max(bwd, min_sq_dist(b.row(r), a));
  return std::sqrt(std::max(fwd, bwd));
}

double p2f_proxy(const PointCloud& pred, const PointCloud& dense_reference) {
  check(pred, "p2f_proxy");
  check(dense_reference, "p2f_proxy");
  double acc = 0.0;
  for (int r = 0; r < pred.rows; ++r) acc += std::sqrt(min_sq_dist(pred.row(r), dense_reference));
  return acc / pred.rows;
}

MetricRow MetricReport::mean() const {
  if (rows.empty()) throw ValidationError("MetricReport: no rows");
  MetricRow m;
  for (const auto& r : rows) {
    m.cd += r.cd;
    m.hd += r.hd;
    m.p2f += r.p2f;
  }
  m.cd /= rows.size();
  m.hd /= rows.size();
  m.p2f /= rows.size();
  return m;
}

std::string MetricReport::to_csv() const {
  std::string out = "sample,cd,hd,p2f\n";
  char buf[128];
  auto emit = [&](const std::string& label, const MetricRow& r) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g\n", label.c_str(), r.cd * 1e3, r.hd * 1e3,
                  r.p2f * 1e3);
    out += buf;
  };
  for (size_t i = 0; i < rows.size(); ++i) emit(std::to_string(i), rows[i]);
  emit("mean", mean());
  return out;
}

}  // namespace pudm
