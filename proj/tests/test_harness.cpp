#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "pudm/errors.h"
#include "pudm/harness.h"
#include "pudm/io_util.h"
#include "test_util.h"

using namespace pudm;

namespace {

ShapeSpec spec_of(ShapeKind kind, int n, uint64_t seed) {
  ShapeSpec s;
  s.kind = kind;
  s.n = n;
  s.seed = seed;
  return s;
}

double norm3(const double* p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("sphere samples sit exactly on the sphere") {
  ShapeSpec s = spec_of(ShapeKind::Sphere, 300, 5);
  s.radius = 2.5;
  PointCloud cloud = generate_shape(s);
  REQUIRE(cloud.rows == 300);
  for (int i = 0; i < cloud.rows; ++i)
    CHECK(norm3(cloud.row(i)) == doctest::Approx(2.5).epsilon(1e-9));

  // Both hemispheres are populated (area-uniform z).
  int above = 0;
  for (int i = 0; i < cloud.rows; ++i) above += cloud.at(i, 2) > 0.0;
  CHECK(above > 60);
  CHECK(above < 240);
}

TEST_CASE("torus samples satisfy the implicit surface equation") {
  ShapeSpec s = spec_of(ShapeKind::Torus, 256, 6);
  s.torus_major = 1.4;
  s.torus_minor = 0.35;
  PointCloud cloud = generate_shape(s);
  for (int i = 0; i < cloud.rows; ++i) {
    const double* p = cloud.row(i);
    const double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - s.torus_major;
    CHECK(ring * ring + p[2] * p[2] == doctest::Approx(s.torus_minor * s.torus_minor).epsilon(1e-9));
  }
}

TEST_CASE("box samples lie on the box surface within the extents") {
  ShapeSpec s = spec_of(ShapeKind::Box, 256, 7);
  PointCloud cloud = generate_shape(s);
  for (int i = 0; i < cloud.rows; ++i) {
    const double* p = cloud.row(i);
    double face = 0.0;
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(p[a]) <= s.box_half[a] + 1e-9);
      face = std::max(face, std::abs(p[a]) / s.box_half[a]);
    }
    CHECK(face == doctest::Approx(1.0).epsilon(1e-9));  // on some face
  }
}

TEST_CASE("plane-with-hole samples avoid the hole and stay in plane") {
  ShapeSpec s = spec_of(ShapeKind::PlaneWithHole, 256, 8);
  s.plane_half = 1.2;
  s.hole_radius = 0.5;
  PointCloud cloud = generate_shape(s);
  for (int i = 0; i < cloud.rows; ++i) {
    const double* p = cloud.row(i);
    CHECK(p[2] == 0.0);
    CHECK(std::abs(p[0]) <= s.plane_half + 1e-12);
    CHECK(std::abs(p[1]) <= s.plane_half + 1e-12);
    CHECK(p[0] * p[0] + p[1] * p[1] >= s.hole_radius * s.hole_radius - 1e-12);
  }

  ShapeSpec bad = s;
  bad.hole_radius = 1.2;  // hole swallows the plane
  CHECK_THROWS_AS(generate_shape(bad), ValidationError);
}

TEST_CASE("gaussian blob matches its nominal moments loosely") {
  ShapeSpec s = spec_of(ShapeKind::GaussianBlob, 4000, 9);
  s.blob_sigma = 0.5;
  PointCloud cloud = generate_shape(s);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < cloud.rows; ++i) mean += cloud.at(i, c);
    mean /= cloud.rows;
    for (int i = 0; i < cloud.rows; ++i) {
      const double d = cloud.at(i, c) - mean;
      var += d * d;
    }
    var /= cloud.rows - 1;
    CHECK(std::abs(mean) < 0.04);                            // ~5 sigma at n=4000
    CHECK(var == doctest::Approx(0.25).epsilon(0.10));
  }
}

TEST_CASE("shape generation is deterministic per spec and validates n") {
  for (ShapeKind kind : {ShapeKind::Sphere, ShapeKind::Torus, ShapeKind::Box,
                         ShapeKind::GaussianBlob, ShapeKind::PlaneWithHole}) {
    PointCloud a = generate_shape(spec_of(kind, 64, 11));
    PointCloud b = generate_shape(spec_of(kind, 64, 11));
    PointCloud c = generate_shape(spec_of(kind, 64, 12));
    CHECK(testutil::max_abs_diff(a, b) == 0.0);
    CHECK(testutil::max_abs_diff(a, c) > 0.0);
  }
  CHECK_THROWS_AS(generate_shape(spec_of(ShapeKind::Sphere, 7, 1)), ValidationError);
}

TEST_CASE("shape names round-trip and unknown names are rejected") {
  for (const char* name : {"sphere", "torus", "box", "gaussian-blob", "plane-with-hole"}) {
    const ShapeKind kind = shape_kind_from_name(name);
    CHECK(shape_kind_name(kind) == name);
  }
  CHECK_THROWS_AS(shape_kind_from_name("teapot"), ValidationError);
}

TEST_CASE("pair construction subsets, normalizes, and reproduces") {
  ShapeSpec shape = spec_of(ShapeKind::Sphere, 256, 20);
  auto pairs = make_pairs(shape, 16, 4, 3, 99);
  REQUIRE(pairs.size() == 3);
  for (const SamplePair& p : pairs) {
    CHECK(p.rate == 4);
    CHECK(p.c.rows == 16);
    CHECK(p.x0.rows == 64);

    // Dense cloud lives in its normalized frame: centroid at the origin,
    // max norm exactly 1 (up to fp).
    double ctr[3] = {0, 0, 0};
    double max_norm = 0.0;
    for (int i = 0; i < p.x0.rows; ++i) {
      for (int a = 0; a < 3; ++a) ctr[a] += p.x0.at(i, a);
      max_norm = std::max(max_norm, norm3(p.x0.row(i)));
    }
    for (int a = 0; a < 3; ++a) CHECK(std::abs(ctr[a] / p.x0.rows) < 1e-9);
    CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-12));

    // The condition cloud is a bitwise row subset of the dense cloud.
    for (int i = 0; i < p.c.rows; ++i)
      CHECK(testutil::contains_point(p.x0, p.c.at(i, 0), p.c.at(i, 1), p.c.at(i, 2), 0.0));
  }

  // Pairs redraw the shape, so they differ from each other.
  CHECK(testutil::max_abs_diff(pairs[0].x0, pairs[1].x0) > 0.0);

  auto again = make_pairs(shape, 16, 4, 3, 99);
  for (int i = 0; i < 3; ++i) {
    CHECK(testutil::max_abs_diff(pairs[i].c, again[i].c) == 0.0);
    CHECK(testutil::max_abs_diff(pairs[i].x0, again[i].x0) == 0.0);
  }

  CHECK_THROWS_AS(make_pairs(shape, 100, 4, 1, 99), ValidationError);  // 400 > 256
  CHECK_THROWS_AS(make_pairs(shape, 0, 4, 1, 99), ValidationError);
  CHECK_THROWS_AS(make_pairs(shape, 16, 0, 1, 99), ValidationError);
  CHECK_THROWS_AS(make_pairs(shape, 16, 4, 0, 99), ValidationError);
}

TEST_CASE("model evaluation scores every pair deterministically") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 30, true);
  const DiffusionSchedule sched = build_schedule(8, 1e-4, 0.02);
  SamplerConfig sampler;
  sampler.seed = 4;

  ShapeSpec shape = spec_of(ShapeKind::Sphere, 64, 21);
  auto pairs = make_pairs(shape, 8, 2, 3, 77);

  MetricReport rep = evaluate_model(pairs, ps, cfg, sched, sampler);
  REQUIRE(rep.rows.size() == 3);
  for (const MetricRow& r : rep.rows) {
    CHECK(r.cd > 0.0);
    CHECK(r.hd > 0.0);
    CHECK(r.p2f > 0.0);
    CHECK(std::isfinite(r.cd));
  }

  MetricReport rep2 = evaluate_model(pairs, ps, cfg, sched, sampler);
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(rep.rows[i].cd == rep2.rows[i].cd);
    CHECK(rep.rows[i].hd == rep2.rows[i].hd);
    CHECK(rep.rows[i].p2f == rep2.rows[i].p2f);
  }
}

TEST_CASE("noise sweep at tau zero reproduces the clean evaluation bitwise") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 31, true);
  const DiffusionSchedule sched = build_schedule(8, 1e-4, 0.02);
  SamplerConfig sampler;
  sampler.seed = 9;

  ShapeSpec shape = spec_of(ShapeKind::Torus, 64, 22);
  auto pairs = make_pairs(shape, 8, 2, 2, 78);

  MetricReport clean = evaluate_model(pairs, ps, cfg, sched, sampler);
  auto sweep = noise_sweep(pairs, {0.0, 0.05}, NoiseKind::Gaussian, 123, ps, cfg, sched, sampler);
  REQUIRE(sweep.size() == 2);
  REQUIRE(sweep[0].rows.size() == clean.rows.size());
  for (size_t i = 0; i < clean.rows.size(); ++i) {
    CHECK(sweep[0].rows[i].cd == clean.rows[i].cd);
    CHECK(sweep[0].rows[i].hd == clean.rows[i].hd);
    CHECK(sweep[0].rows[i].p2f == clean.rows[i].p2f);
  }
  // The perturbed grid actually moved the inputs.
  bool moved = false;
  for (size_t i = 0; i < clean.rows.size(); ++i)
    moved = moved || sweep[1].rows[i].cd != clean.rows[i].cd;
  CHECK(moved);
}

TEST_CASE("midpoint baseline nearly fills a uniform line; white noise does not") {
  // Hand-built pair on a line segment: c is 6 points at spacing 1, the
  // dense target is 12 points evenly spread over the same segment, so
  // midpoint densification tracks the target closely.
  SamplePair pair;
  pair.rate = 2;
  pair.c = PointCloud(6, 3);
  for (int i = 0; i < 6; ++i) pair.c.at(i, 0) = static_cast<double>(i);
  pair.x0 = PointCloud(12, 3);
  for (int i = 0; i < 12; ++i) pair.x0.at(i, 0) = 5.0 * i / 11.0;

  MetricReport mid = baseline_midpoint_eval({pair});
  MetricReport white = baseline_whitenoise_eval({pair}, 50);
  REQUIRE(mid.rows.size() == 1);
  REQUIRE(white.rows.size() == 1);
  CHECK(mid.rows[0].cd < 0.05);
  CHECK(white.rows[0].cd > 10.0 * mid.rows[0].cd);

  // White-noise scoring is deterministic per seed.
  MetricReport white2 = baseline_whitenoise_eval({pair}, 50);
  CHECK(white.rows[0].cd == white2.rows[0].cd);
  MetricReport white3 = baseline_whitenoise_eval({pair}, 51);
  CHECK(white.rows[0].cd != white3.rows[0].cd);
}

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

  const std::string path = "sha_test_tmp.bin";
  const std::string content = "point clouds\n";
  write_text_atomic(path, content);
  CHECK(sha256_file(path) == sha256_hex(content));
  std::remove(path.c_str());
  CHECK_THROWS_AS(sha256_file("definitely_missing.bin"), IoError);
}

TEST_CASE("manifest records the provenance keys") {
  const std::string m = make_manifest("desk", 123, "deadbeef", {0.0, 0.01, 0.02}, 4);
  CHECK(m.find("preset=desk\n") != std::string::npos);
  CHECK(m.find("seed=123\n") != std::string::npos);
  CHECK(m.find("checkpoint_sha256=deadbeef\n") != std::string::npos);
  CHECK(m.find("tau_grid=0,0.01,0.02\n") != std::string::npos);
  CHECK(m.find("rate=4\n") != std::string::npos);
}

TEST_CASE("svg plot embeds the title, labels, and curves") {
  std::vector<double> xs{0.0, 0.01, 0.02};
  std::vector<Curve> curves{{"cd", {1.0, 1.5, 2.5}}, {"hd", {2.0, 2.5, 4.0}}};
  const std::string svg = svg_line_plot("robustness", "tau", "metric", xs, curves);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("robustness") != std::string::npos);
  CHECK(svg.find("tau") != std::string::npos);
  CHECK(svg.find("metric") != std::string::npos);
  CHECK(svg.find("cd") != std::string::npos);
  CHECK(svg.find("hd") != std::string::npos);

  CHECK_THROWS_AS(svg_line_plot("t", "x", "y", {}, curves), ValidationError);
  CHECK_THROWS_AS(svg_line_plot("t", "x", "y", xs, {{"bad", {1.0}}}), ValidationError);
}

TEST_SUITE_END();
