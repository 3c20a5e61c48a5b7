#include "pudm/schedule.h"

#include <cmath>

#include "pudm/errors.h"

namespace pudm {

namespace {

void check_t(int t, const DiffusionSchedule& s, const char* who) {
  if (t < 1 || t > s.T) throw ValidationError(std::string(who) + ": t out of range [1, T]");
}

}  // namespace

DiffusionSchedule build_schedule(int T, double beta_min, double beta_max) {
  if (T < 2) throw ValidationError("build_schedule: T must be >= 2");
  if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
    throw ValidationError("build_schedule: need 0 < beta_min < beta_max < 1");

  DiffusionSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 0.0);
  s.posterior_var.assign(T + 1, 0.0);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = beta_min + (beta_max - beta_min) * (t - 1) / static_cast<double>(T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.posterior_var[t] = (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * (1.0 - s.alpha[t]);
  }
  return s;
}

PointCloud forward_sample(const PointCloud& x0, int t, const PointCloud& eps,
                          const DiffusionSchedule& s) {
  check_t(t, s, "forward_sample");
  if (!x0.same_shape(eps)) throw ValidationError("forward_sample: eps shape must match x0");
  const double a = std::sqrt(s.alpha_bar[t]);
  const double b = std::sqrt(1.0 - s.alpha_bar[t]);
  PointCloud out(x0.rows, x0.cols);
  for (size_t i = 0; i < x0.size(); ++i) out.d[i] = a * x0.d[i] + b * eps.d[i];
  return out;
}

std::pair<PointCloud, double> posterior_mean_variance(const PointCloud& x0, const PointCloud& xt,
                                                      int t, const DiffusionSchedule& s) {
  check_t(t, s, "posterior_mean_variance");
  if (!x0.same_shape(xt)) throw ValidationError("posterior_mean_variance: shape mismatch");
  const double cxt = std::sqrt(s.alpha[t]) * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
  const double cx0 = std::sqrt(s.alpha_bar[t - 1]) * (1.0 - s.alpha[t]) / (1.0 - s.alpha_bar[t]);
  PointCloud mean(x0.rows, x0.cols);
  for (size_t i = 0; i < x0.size(); ++i) mean.d[i] = cxt * xt.d[i] + cx0 * x0.d[i];
  return {std::move(mean), s.posterior_var[t]};
}

Mat score_from_eps(const Mat& eps_hat, int t, const DiffusionSchedule& s) {
  check_t(t, s, "score_from_eps");
  const double inv = -1.0 / std::sqrt(1.0 - s.alpha_bar[t]);
  Mat out = eps_hat;
  for (double& v : out.d) v *= inv;
  return out;
}

Mat eps_from_score(const Mat& score, int t, const DiffusionSchedule& s) {
  check_t(t, s, "eps_from_score");
  const double inv = -std::sqrt(1.0 - s.alpha_bar[t]);
  Mat out = score;
  for (double& v : out.d) v *= inv;
  return out;
}

StridePlan make_stride_plan(int T, int interval) {
  if (T < 2) throw ValidationError("make_stride_plan: T must be >= 2");
  if (interval < 1 || interval > T - 1)
    throw ValidationError("make_stride_plan: need 1 <= interval <= T-1");
  StridePlan plan;
  plan.interval = interval;
  for (int t = T - 1; t >= 1; t -= interval) plan.timesteps.push_back(t);
  plan.terminal_distance = plan.timesteps.back();
  return plan;
}

}  // namespace pudm
