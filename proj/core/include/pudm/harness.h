#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pudm/geometry.h"
#include "pudm/mat.h"
#include "pudm/metrics.h"
#include "pudm/network.h"
#include "pudm/params.h"
#include "pudm/sampling.h"
#include "pudm/schedule.h"
#include "pudm/training.h"

namespace pudm {

enum class ShapeKind { Sphere, Torus, Box, GaussianBlob, PlaneWithHole };

ShapeKind shape_kind_from_name(const std::string& name);
std::string shape_kind_name(ShapeKind kind);

// Parametric surface to sample. Unused per-kind fields are ignored.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  int n = 1024;
  uint64_t seed = 0;
  double radius = 1.0;                    // sphere
  double torus_major = 1.0;               // torus ring radius
  double torus_minor = 0.3;               // torus tube radius
  double box_half[3] = {1.0, 0.8, 0.6};   // box half-extents
  double blob_sigma = 0.5;                // gaussian blob spread
  double plane_half = 1.0;                // plane half-side
  double hole_radius = 0.4;               // plane hole
};

// Deterministic uniform-area sampling of the ideal surface (the blob is
// a volumetric cloud, not a surface). Same spec -> identical cloud.
PointCloud generate_shape(const ShapeSpec& spec);

// Dense ground truth = farthest-point subsample of the shape cloud to
// rate*sparse_n; sparse condition = farthest-point subsample of the
// dense cloud (so c is a subset of x0); both mapped into the dense
// cloud's normalized frame. Each of the `count` pairs redraws the shape
// with a seed derived from (seed, pair index).
std::vector<SamplePair> make_pairs(const ShapeSpec& shape, int sparse_n, int rate, int count,
                                   uint64_t seed);

// Upsample every pair's condition cloud and score it against the dense
// ground truth. Per-pair sampler seeds derive from sampler.seed and the
// pair index, so reruns are bit-identical.
MetricReport evaluate_model(const std::vector<SamplePair>& pairs, ParameterStore& ps,
                            const NetworkConfig& cfg, const DiffusionSchedule& sched,
                            const SamplerConfig& sampler);

// evaluate_model after perturbing each condition cloud at each tau; one
// report per tau, in order. The sampler seed for a pair is the same at
// every tau so rows differ only through the perturbation.
std::vector<MetricReport> noise_sweep(const std::vector<SamplePair>& pairs,
                                      const std::vector<double>& taus, NoiseKind kind,
                                      uint64_t perturb_seed, ParameterStore& ps,
                                      const NetworkConfig& cfg, const DiffusionSchedule& sched,
                                      const SamplerConfig& sampler);

// No-learning reference: score the deterministic guidance interpolation
// of c against x0.
MetricReport baseline_midpoint_eval(const std::vector<SamplePair>& pairs);

// Floor reference: score a standard-normal cloud of the right
// cardinality against x0.
MetricReport baseline_whitenoise_eval(const std::vector<SamplePair>& pairs, uint64_t seed);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Sidecar provenance record: key=value lines for
// {preset, seed, checkpoint_sha256, tau_grid, rate}.
std::string make_manifest(const std::string& preset, uint64_t seed,
                          const std::string& checkpoint_sha256, const std::vector<double>& taus,
                          int rate);

struct Curve {
  std::string label;
  std::vector<double> ys;
};

// Static line plot of one or more named curves over shared x values.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<double>& xs,
                          const std::vector<Curve>& curves);

}  // namespace pudm
