#pragma once

#include <string>
#include <vector>

#include "pudm/autodiff.h"
#include "pudm/mat.h"
#include "pudm/network.h"
#include "pudm/schedule.h"

namespace pudm {

// One supervised example: sparse condition cloud plus the dense cloud it
// should upsample to, |x0| = rate * |c|, both in a shared normalized frame.
struct SamplePair {
  PointCloud c;
  PointCloud x0;
  int rate = 1;
};

struct TrainingConfig {
  int steps = 2000;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double alpha_weight = 1.0;  // weight on the condition-reconstruction term
  uint64_t seed = 0;
  int T = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::string preset = "desk";
};

struct LossValues {
  Value total;
  Value theta;  // noise-prediction term
  Value psi;    // condition-reconstruction term
};

// Builds both loss terms in ONE graph so a single backward pass trains
// both partitions: the bottleneck exchange feeds condition features into
// the noise branch, so the noise term also reaches "cnet." parameters.
// x_t is formed internally as forward_sample(x0, t, eps).
LossValues build_losses(Graph& g, const SamplePair& pair, const Mat& interp, int t, const Mat& eps,
                        const DiffusionSchedule& sched, double alpha_weight, ParameterStore& ps,
                        const NetworkConfig& cfg);

// Scalar conveniences (fresh graph per call, interpolation recomputed
// from the pair). Gradients are discarded.
double loss_theta(const SamplePair& pair, int t, const Mat& eps, const DiffusionSchedule& sched,
                  ParameterStore& ps, const NetworkConfig& cfg);
double loss_psi(const SamplePair& pair, ParameterStore& ps, const NetworkConfig& cfg);

struct LossParts {
  double total = 0.0;
  double theta = 0.0;
  double psi = 0.0;
};
LossParts total_loss(const SamplePair& pair, int t, const Mat& eps, const DiffusionSchedule& sched,
                     double alpha_weight, ParameterStore& ps, const NetworkConfig& cfg);

// Adaptive-moment first-order optimizer over a ParameterStore. Moment
// buffers are allocated on first step and keyed by store order, so the
// store must not grow between steps.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterStore& ps);

 private:
  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<Mat> m_, v_;
};

struct TraceRow {
  int step = 0;
  double total = 0.0;
  double theta = 0.0;
  double psi = 0.0;
};

// Optimizes ps in place. Per step: draw batch_size (pair, t, eps)
// triples, average gradients of the combined loss, one optimizer step.
// Deterministic given (dataset order, config). Emits one trace row per
// step; when trace_path is nonempty the trace is also written there as
// CSV `step,total,l_theta,l_psi` (atomic write). Aborts with an error if
// the loss turns non-finite.
std::vector<TraceRow> train(const std::vector<SamplePair>& dataset, const TrainingConfig& tc,
                            ParameterStore& ps, const NetworkConfig& cfg,
                            const std::string& trace_path = "");

std::string trace_to_csv(const std::vector<TraceRow>& trace);

// The deterministic guidance cloud used by both training and sampling:
// midpoint interpolation of c to rate*|c| points with min(4, |c|-1)
// neighbors (identity at rate 1).
PointCloud guidance_interpolation(const PointCloud& c, int rate);

}  // namespace pudm
