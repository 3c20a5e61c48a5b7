#include "pudm/training.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pudm/errors.h"
#include "pudm/geometry.h"
#include "pudm/io_util.h"

namespace pudm {

PointCloud guidance_interpolation(const PointCloud& c, int rate) {
  if (rate == 1) return c;
  const int k = std::min(4, c.rows - 1);
  return midpoint_interpolate(c, rate, k);
}

static void validate_pair(const SamplePair& pair) {
  if (pair.rate < 1) throw ValidationError("sample pair: rate must be >= 1");
  if (pair.c.rows < 1 || pair.c.cols != 3 || pair.x0.cols != 3)
    throw ValidationError("sample pair: clouds must be n x 3");
  if (pair.x0.rows != pair.rate * pair.c.rows)
    throw ValidationError("sample pair: dense count must equal rate * sparse count");
}

LossValues build_losses(Graph& g, const SamplePair& pair, const Mat& interp, int t, const Mat& eps,
                        const DiffusionSchedule& sched, double alpha_weight, ParameterStore& ps,
                        const NetworkConfig& cfg) {
  validate_pair(pair);
  if (alpha_weight < 0.0) throw ValidationError("alpha_weight must be >= 0");
  if (!eps.same_shape(pair.x0)) throw ValidationError("noise shape must match the dense cloud");
  if (!interp.same_shape(pair.x0))
    throw ValidationError("interpolated cloud shape must match the dense cloud");

  CnetResult cr = cnet_forward(g, pair.c, ps, cfg);
  Value psi = g.mean_sq_rows(g.sub(g.leaf(pair.c), cr.y_c));

  PointCloud x_t = forward_sample(pair.x0, t, eps, sched);
  Value eps_hat = nnet_forward(g, x_t, interp, t, sched.T, pair.rate, cr.levels, ps, cfg);
  Value theta = g.mean_sq_rows(g.sub(g.leaf(eps), eps_hat));

  Value total = g.add(theta, g.scale(psi, alpha_weight));
  return LossValues{total, theta, psi};
}

double loss_theta(const SamplePair& pair, int t, const Mat& eps, const DiffusionSchedule& sched,
                  ParameterStore& ps, const NetworkConfig& cfg) {
  Graph g;
  const Mat interp = guidance_interpolation(pair.c, pair.rate);
  LossValues lv = build_losses(g, pair, interp, t, eps, sched, 0.0, ps, cfg);
  return g.val(lv.theta).at(0, 0);
}

double loss_psi(const SamplePair& pair, ParameterStore& ps, const NetworkConfig& cfg) {
  validate_pair(pair);
  Graph g;
  CnetResult cr = cnet_forward(g, pair.c, ps, cfg);
  Value psi = g.mean_sq_rows(g.sub(g.leaf(pair.c), cr.y_c));
  return g.val(psi).at(0, 0);
}

LossParts total_loss(const SamplePair& pair, int t, const Mat& eps, const DiffusionSchedule& sched,
                     double alpha_weight, ParameterStore& ps, const NetworkConfig& cfg) {
  Graph g;
  const Mat interp = guidance_interpolation(pair.c, pair.rate);
  LossValues lv = build_losses(g, pair, interp, t, eps, sched, alpha_weight, ps, cfg);
  return LossParts{g.val(lv.total).at(0, 0), g.val(lv.theta).at(0, 0), g.val(lv.psi).at(0, 0)};
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw ValidationError("optimizer: learning rate must be positive");
}

void Adam::step(ParameterStore& ps) {
  auto& tensors = ps.tensors();
  if (m_.empty()) {
    m_.reserve(tensors.size());
    v_.reserve(tensors.size());
    for (const ParamTensor& p : tensors) {
      m_.emplace_back(p.value.rows, p.value.cols);
      v_.emplace_back(p.value.rows, p.value.cols);
    }
  }
  if (m_.size() != tensors.size())
    throw ValidationError("optimizer: parameter store changed size between steps");

  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  size_t i = 0;
  for (ParamTensor& p : tensors) {
    Mat& m = m_[i];
    Mat& v = v_[i];
    ++i;
    for (size_t j = 0; j < p.value.d.size(); ++j) {
      const double gr = p.grad.d[j];
      m.d[j] = b1_ * m.d[j] + (1.0 - b1_) * gr;
      v.d[j] = b2_ * v.d[j] + (1.0 - b2_) * gr * gr;
      const double mhat = m.d[j] / bc1;
      const double vhat = v.d[j] / bc2;
      p.value.d[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,total,l_theta,l_psi\n";
  char buf[160];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.step, r.total, r.theta, r.psi);
    out += buf;
  }
  return out;
}

std::vector<TraceRow> train(const std::vector<SamplePair>& dataset, const TrainingConfig& tc,
                            ParameterStore& ps, const NetworkConfig& cfg,
                            const std::string& trace_path) {
  if (dataset.empty()) throw ValidationError("train: dataset must be nonempty");
  if (tc.steps < 1) throw ValidationError("train: steps must be >= 1");
  if (tc.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (tc.alpha_weight < 0.0) throw ValidationError("train: alpha_weight must be >= 0");
  for (const SamplePair& p : dataset) validate_pair(p);

  const DiffusionSchedule sched = build_schedule(tc.T, tc.beta_min, tc.beta_max);

  // The guidance cloud is a pure function of (c, rate); compute once.
  std::vector<Mat> interp;
  interp.reserve(dataset.size());
  for (const SamplePair& p : dataset) interp.push_back(guidance_interpolation(p.c, p.rate));

  Rng rng(derive_seed(tc.seed, 0x7E41));
  std::uniform_int_distribution<size_t> pick_pair(0, dataset.size() - 1);
  std::uniform_int_distribution<int> pick_t(1, tc.T);

  Adam opt(tc.learning_rate);
  std::vector<TraceRow> trace;
  trace.reserve(tc.steps);

  for (int step = 1; step <= tc.steps; ++step) {
    ps.zero_grads();
    double sum_total = 0.0, sum_theta = 0.0, sum_psi = 0.0;
    for (int b = 0; b < tc.batch_size; ++b) {
      const size_t pi = pick_pair(rng);
      const int t = pick_t(rng);
      const SamplePair& pair = dataset[pi];
      Mat eps = gaussian_mat(pair.x0.rows, 3, rng);
      Graph g;
      LossValues lv =
          build_losses(g, pair, interp[pi], t, eps, sched, tc.alpha_weight, ps, cfg);
      g.backward(lv.total);
      sum_total += g.val(lv.total).at(0, 0);
      sum_theta += g.val(lv.theta).at(0, 0);
      sum_psi += g.val(lv.psi).at(0, 0);
    }
    const double inv = 1.0 / tc.batch_size;
    for (ParamTensor& p : ps.tensors())
      for (double& gr : p.grad.d) gr *= inv;

    const TraceRow row{step, sum_total * inv, sum_theta * inv, sum_psi * inv};
    if (!std::isfinite(row.total))
      throw std::runtime_error("train: loss diverged (non-finite) at step " +
                               std::to_string(step));
    trace.push_back(row);
    opt.step(ps);
  }

  if (!trace_path.empty()) write_text_atomic(trace_path, trace_to_csv(trace));
  return trace;
}

}  // namespace pudm
