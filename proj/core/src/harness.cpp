#include "pudm/harness.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "pudm/errors.h"
#include "pudm/io_util.h"

namespace pudm {

ShapeKind shape_kind_from_name(const std::string& name) {
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "torus") return ShapeKind::Torus;
  if (name == "box") return ShapeKind::Box;
  if (name == "gaussian-blob") return ShapeKind::GaussianBlob;
  if (name == "plane-with-hole") return ShapeKind::PlaneWithHole;
  throw ValidationError("unknown shape kind: " + name);
}

std::string shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Box: return "box";
    case ShapeKind::GaussianBlob: return "gaussian-blob";
    case ShapeKind::PlaneWithHole: return "plane-with-hole";
  }
  throw ValidationError("unknown shape kind");
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

void sample_sphere(PointCloud& out, const ShapeSpec& s, Rng& rng) {
  std::uniform_real_distribution<double> uz(-1.0, 1.0), uphi(0.0, kTau);
  for (int i = 0; i < out.rows; ++i) {
    const double z = uz(rng);
    const double phi = uphi(rng);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.at(i, 0) = s.radius * rho * std::cos(phi);
    out.at(i, 1) = s.radius * rho * std::sin(phi);
    out.at(i, 2) = s.radius * z;
  }
}

void sample_torus(PointCloud& out, const ShapeSpec& s, Rng& rng) {
  const double R = s.torus_major, r = s.torus_minor;
  std::uniform_real_distribution<double> u01(0.0, 1.0), uang(0.0, kTau);
  for (int i = 0; i < out.rows; ++i) {
    // Tube angle is area-weighted by (R + r cos theta); rejection keeps
    // the sampling uniform over the surface.
    double theta;
    do {
      theta = uang(rng);
    } while (u01(rng) > (R + r * std::cos(theta)) / (R + r));
    const double phi = uang(rng);
    const double ring = R + r * std::cos(theta);
    out.at(i, 0) = ring * std::cos(phi);
    out.at(i, 1) = ring * std::sin(phi);
    out.at(i, 2) = r * std::sin(theta);
  }
}

void sample_box(PointCloud& out, const ShapeSpec& s, Rng& rng) {
  const double a = s.box_half[0], b = s.box_half[1], c = s.box_half[2];
  // Face pairs perpendicular to x, y, z with areas 4bc, 4ac, 4ab.
  const double areas[3] = {b * c, a * c, a * b};
  std::discrete_distribution<int> pick_axis({areas[0], areas[1], areas[2]});
  std::uniform_int_distribution<int> pick_side(0, 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double half[3] = {a, b, c};
  for (int i = 0; i < out.rows; ++i) {
    const int axis = pick_axis(rng);
    const int side = pick_side(rng);
    for (int d = 0; d < 3; ++d) out.at(i, d) = half[d] * u(rng);
    out.at(i, axis) = side ? half[axis] : -half[axis];
  }
}

void sample_blob(PointCloud& out, const ShapeSpec& s, Rng& rng) {
  std::normal_distribution<double> g(0.0, s.blob_sigma);
  for (double& v : out.d) v = g(rng);
}

void sample_plane_with_hole(PointCloud& out, const ShapeSpec& s, Rng& rng) {
  if (s.hole_radius >= s.plane_half)
    throw ValidationError("plane-with-hole: hole must be smaller than the plane");
  std::uniform_real_distribution<double> u(-s.plane_half, s.plane_half);
  const double h2 = s.hole_radius * s.hole_radius;
  for (int i = 0; i < out.rows; ++i) {
    double x, y;
    do {
      x = u(rng);
      y = u(rng);
    } while (x * x + y * y < h2);
    out.at(i, 0) = x;
    out.at(i, 1) = y;
    out.at(i, 2) = 0.0;
  }
}

}  // namespace

PointCloud generate_shape(const ShapeSpec& spec) {
  if (spec.n < 8) throw ValidationError("shape: n must be >= 8");
  PointCloud out(spec.n, 3);
  Rng rng(derive_seed(spec.seed, 0x5AFE));
  switch (spec.kind) {
    case ShapeKind::Sphere: sample_sphere(out, spec, rng); break;
    case ShapeKind::Torus: sample_torus(out, spec, rng); break;
    case ShapeKind::Box: sample_box(out, spec, rng); break;
    case ShapeKind::GaussianBlob: sample_blob(out, spec, rng); break;
    case ShapeKind::PlaneWithHole: sample_plane_with_hole(out, spec, rng); break;
  }
  return out;
}

std::vector<SamplePair> make_pairs(const ShapeSpec& shape, int sparse_n, int rate, int count,
                                   uint64_t seed) {
  if (sparse_n < 1 || rate < 1 || count < 1)
    throw ValidationError("make_pairs: sparse_n, rate, count must be >= 1");
  const int dense_n = rate * sparse_n;
  if (shape.n < dense_n)
    throw ValidationError("make_pairs: shape cloud too sparse for rate * sparse_n points");

  std::vector<SamplePair> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    ShapeSpec spec = shape;
    spec.seed = derive_seed(seed, static_cast<uint64_t>(i));
    const PointCloud cloud = generate_shape(spec);
    const PointCloud dense = select_rows(cloud, farthest_point_sample(cloud, dense_n, 0));
    const PointCloud sparse = select_rows(dense, farthest_point_sample(dense, sparse_n, 0));
    auto [x0, rec] = normalize(dense);
    pairs.push_back(SamplePair{apply_normalization(sparse, rec), std::move(x0), rate});
  }
  return pairs;
}

MetricReport evaluate_model(const std::vector<SamplePair>& pairs, ParameterStore& ps,
                            const NetworkConfig& cfg, const DiffusionSchedule& sched,
                            const SamplerConfig& sampler) {
  MetricReport report;
  for (size_t i = 0; i < pairs.size(); ++i) {
    SamplerConfig sc = sampler;
    sc.seed = derive_seed(sampler.seed, static_cast<uint64_t>(i));
    const PointCloud out = upsample(pairs[i].c, pairs[i].rate, ps, cfg, sched, sc);
    report.rows.push_back(
        MetricRow{chamfer(out, pairs[i].x0), hausdorff(out, pairs[i].x0), p2f_proxy(out, pairs[i].x0)});
  }
  return report;
}

std::vector<MetricReport> noise_sweep(const std::vector<SamplePair>& pairs,
                                      const std::vector<double>& taus, NoiseKind kind,
                                      uint64_t perturb_seed, ParameterStore& ps,
                                      const NetworkConfig& cfg, const DiffusionSchedule& sched,
                                      const SamplerConfig& sampler) {
  std::vector<MetricReport> reports;
  reports.reserve(taus.size());
  for (size_t ti = 0; ti < taus.size(); ++ti) {
    MetricReport report;
    for (size_t i = 0; i < pairs.size(); ++i) {
      Rng prng(derive_seed(perturb_seed, ti * 7919 + i));
      const PointCloud noisy = perturb(pairs[i].c, taus[ti], kind, prng);
      SamplerConfig sc = sampler;
      sc.seed = derive_seed(sampler.seed, static_cast<uint64_t>(i));  // shared across taus
      const PointCloud out = upsample(noisy, pairs[i].rate, ps, cfg, sched, sc);
      report.rows.push_back(MetricRow{chamfer(out, pairs[i].x0), hausdorff(out, pairs[i].x0),
                                      p2f_proxy(out, pairs[i].x0)});
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

MetricReport baseline_midpoint_eval(const std::vector<SamplePair>& pairs) {
  MetricReport report;
  for (const SamplePair& p : pairs) {
    const PointCloud guess = guidance_interpolation(p.c, p.rate);
    report.rows.push_back(
        MetricRow{chamfer(guess, p.x0), hausdorff(guess, p.x0), p2f_proxy(guess, p.x0)});
  }
  return report;
}

MetricReport baseline_whitenoise_eval(const std::vector<SamplePair>& pairs, uint64_t seed) {
  MetricReport report;
  for (size_t i = 0; i < pairs.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const PointCloud guess = gaussian_mat(pairs[i].rate * pairs[i].c.rows, 3, rng);
    report.rows.push_back(MetricRow{chamfer(guess, pairs[i].x0), hausdorff(guess, pairs[i].x0),
                                    p2f_proxy(guess, pairs[i].x0)});
  }
  return report;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    char b[3];
    std::snprintf(b, sizeof b, "%02x", digest[i]);
    hex += b;
  }
  return hex;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_text(path)); }

std::string make_manifest(const std::string& preset, uint64_t seed,
                          const std::string& checkpoint_sha256, const std::vector<double>& taus,
                          int rate) {
  std::ostringstream ss;
  ss << "preset=" << preset << '\n';
  ss << "seed=" << seed << '\n';
  ss << "checkpoint_sha256=" << checkpoint_sha256 << '\n';
  ss << "tau_grid=";
  char buf[48];
  for (size_t i = 0; i < taus.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%g", taus[i]);
    ss << (i ? "," : "") << buf;
  }
  ss << '\n';
  ss << "rate=" << rate << '\n';
  return ss.str();
}

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<double>& xs,
                          const std::vector<Curve>& curves) {
  if (xs.empty() || curves.empty()) throw ValidationError("plot: need at least one point/curve");
  for (const Curve& c : curves)
    if (c.ys.size() != xs.size()) throw ValidationError("plot: curve length mismatch");

  const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = xs[0], xmax = xs[0];
  for (double x : xs) { xmin = std::min(xmin, x); xmax = std::max(xmax, x); }
  double ymin = curves[0].ys[0], ymax = ymin;
  for (const Curve& c : curves)
    for (double y : c.ys) { ymin = std::min(ymin, y); ymax = std::max(ymax, y); }
  if (xmax - xmin < 1e-12) { xmax += 1.0; xmin -= 1.0; }
  if (ymax - ymin < 1e-12) { ymax += 1.0; ymin -= 1.0; }
  const double xpad = 0.02 * (xmax - xmin), ypad = 0.06 * (ymax - ymin);
  xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  char buf[256];
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  ss << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.0f\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
                "font-family=\"sans-serif\">%s</text>\n",
                W / 2, title.c_str());
  ss << buf;
  // axes
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                H - mb, W - mr, H - mb);
  ss << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                mt, ml, H - mb);
  ss << buf;
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"11\" "
                  "font-family=\"sans-serif\">%.4g</text>\n",
                  px(fx), H - mb + 18, fx);
    ss << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\" "
                  "font-family=\"sans-serif\">%.4g</text>\n",
                  ml - 6, py(fy) + 4, fy);
    ss << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"middle\" font-size=\"13\" "
                "font-family=\"sans-serif\">%s</text>\n",
                W / 2, H - 12, x_label.c_str());
  ss << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.0f\" text-anchor=\"middle\" font-size=\"13\" "
                "font-family=\"sans-serif\" transform=\"rotate(-90 16 %.0f)\">%s</text>\n",
                H / 2, H / 2, y_label.c_str());
  ss << buf;

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = palette[ci % 5];
    std::string pts;
    for (size_t i = 0; i < xs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(xs[i]), py(curves[ci].ys[i]));
      pts += buf;
    }
    ss << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts
       << "\"/>\n";
    for (size_t i = 0; i < xs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                    px(xs[i]), py(curves[ci].ys[i]), color);
      ss << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" font-family=\"sans-serif\" "
                  "fill=\"%s\">%s</text>\n",
                  W - mr - 150.0, mt + 16.0 * (ci + 1), color, curves[ci].label.c_str());
    ss << buf;
  }
  ss << "</svg>\n";
  return ss.str();
}

}  // namespace pudm
