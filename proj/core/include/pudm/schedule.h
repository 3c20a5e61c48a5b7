#pragma once

#include <vector>

#include "pudm/mat.h"

namespace pudm {

// Precomputed diffusion tables, 1-indexed over t in [1, T]; index 0 of
// alpha_bar holds the convention value alpha_bar[0] = 1 so the t=1
// posterior variance is exactly 0.
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> beta;           // [T+1], beta[0] unused
  std::vector<double> alpha;          // 1 - beta
  std::vector<double> alpha_bar;      // cumulative product, alpha_bar[0] = 1
  std::vector<double> posterior_var;  // (1-abar_{t-1})/(1-abar_t)*(1-alpha_t)
};

// Linear beta spacing from beta_min to beta_max inclusive.
DiffusionSchedule build_schedule(int T, double beta_min, double beta_max);

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps, elementwise.
PointCloud forward_sample(const PointCloud& x0, int t, const PointCloud& eps,
                          const DiffusionSchedule& s);

// mean = [sqrt(alpha_t)(1-abar_{t-1})/(1-abar_t)] xt
//      + [sqrt(abar_{t-1})(1-alpha_t)/(1-abar_t)] x0; variance = posterior_var[t].
std::pair<PointCloud, double> posterior_mean_variance(const PointCloud& x0, const PointCloud& xt,
                                                      int t, const DiffusionSchedule& s);

// score = -eps_hat / sqrt(1 - abar_t), elementwise.
Mat score_from_eps(const Mat& eps_hat, int t, const DiffusionSchedule& s);
Mat eps_from_score(const Mat& score, int t, const DiffusionSchedule& s);

// Strided reverse plan: T-1, T-1-s, ... down to the smallest retained
// step >= 1. terminal_distance is that last retained step (the gap
// between the final network call and x0): ((T-1) mod s), or s when the
// residue is 0.
struct StridePlan {
  std::vector<int> timesteps;
  int interval = 1;
  int terminal_distance = 0;
};

StridePlan make_stride_plan(int T, int interval);

}  // namespace pudm
