#include "pudm/sampling.h"

#include <cmath>

#include "pudm/autodiff.h"
#include "pudm/errors.h"
#include "pudm/geometry.h"
#include "pudm/rng.h"
#include "pudm/training.h"

namespace pudm {

PointCloud reverse_step(const PointCloud& x_t, int t, const PointCloud& eps_hat,
                        const PointCloud& interp, const PointCloud& eps,
                        const DiffusionSchedule& sched, double gamma, SigmaMode sigma_mode,
                        GammaScope gamma_scope) {
  if (t < 1 || t > sched.T) throw ValidationError("reverse_step: t out of range [1, T]");
  if (gamma <= 0.0) throw ValidationError("reverse_step: gamma must be positive");
  if (!x_t.same_shape(eps_hat) || !x_t.same_shape(interp) || !x_t.same_shape(eps))
    throw ValidationError("reverse_step: all clouds must share one shape");

  const double a = sched.alpha[t];
  const double abar = sched.alpha_bar[t];
  const double inv_sqrt_a = 1.0 / std::sqrt(a);
  const double eps_coef = (1.0 - a) / std::sqrt(1.0 - abar);
  const double sigma = sigma_mode == SigmaMode::PosteriorSqrt ? std::sqrt(sched.posterior_var[t])
                                                              : std::sqrt(sched.beta[t]);

  PointCloud out(x_t.rows, x_t.cols);
  for (size_t j = 0; j < out.d.size(); ++j) {
    const double denoised = inv_sqrt_a * (x_t.d[j] - eps_coef * eps_hat.d[j]);
    out.d[j] = gamma_scope == GammaScope::FullBracket
                   ? gamma * (denoised + sigma * eps.d[j] + interp.d[j])
                   : gamma * denoised + sigma * eps.d[j] + interp.d[j];
  }
  return out;
}

PointCloud upsample(const PointCloud& c, int rate, ParameterStore& ps, const NetworkConfig& cfg,
                    const DiffusionSchedule& sched, const SamplerConfig& sc) {
  if (c.rows < 1 || c.cols != 3) throw ValidationError("upsample: input must be n x 3, n >= 1");
  if (!c.all_finite()) throw ValidationError("upsample: non-finite input coordinates");
  if (rate < 1 || rate > cfg.rate_rows)
    throw ValidationError("upsample: rate out of range for this model");
  if (sc.interval < 1 || sc.interval > sched.T - 1)
    throw ValidationError("upsample: interval must be in [1, T-1]");
  if (sc.gamma <= 0.0) throw ValidationError("upsample: gamma must be positive");

  auto [cn, rec] = normalize(c);
  const Mat interp = guidance_interpolation(cn, rate);
  const CnetCache cache = cnet_forward_cached(cn, ps, cfg);

  Rng rng(derive_seed(sc.seed, 0x5A3D));
  PointCloud x = gaussian_mat(rate * c.rows, 3, rng);

  const StridePlan plan = make_stride_plan(sched.T, sc.interval);
  PointCloud eps(x.rows, 3);
  for (size_t si = 0; si < plan.timesteps.size(); ++si) {
    const int t = plan.timesteps[si];
    Graph g;
    CnetLevels levels = bind_cnet_cache(g, cache);
    Value eps_hat = nnet_forward(g, x, interp, t, sched.T, rate, levels, ps, cfg);
    const bool last = si + 1 == plan.timesteps.size();
    if (last) {
      eps.fill(0.0);
    } else {
      fill_gaussian(eps, rng);
    }
    x = reverse_step(x, t, g.val(eps_hat), interp, eps, sched, sc.gamma, sc.sigma_mode,
                     sc.gamma_scope);
  }
  return sc.denormalize ? denormalize(x, rec) : x;
}

PointCloud upsample_strided(const PointCloud& c, int rate, ParameterStore& ps,
                            const NetworkConfig& cfg, const DiffusionSchedule& sched,
                            SamplerConfig sc, int interval) {
  sc.interval = interval;
  return upsample(c, rate, ps, cfg, sched, sc);
}

}  // namespace pudm
