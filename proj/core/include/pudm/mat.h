#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace pudm {

// Dense row-major matrix of doubles: the one value type shared by point
// clouds (n x 3), feature maps (n x C), parameters, and autodiff nodes.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  double& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return d.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(d.begin(), d.end(), v); }

  bool all_finite() const {
    for (double v : d) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

// A point cloud is an ordered n x 3 matrix; row order is semantically
// meaningful and preserved by every order-preserving operation.
using PointCloud = Mat;

inline double sq_dist3(const double* a, const double* b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace pudm
