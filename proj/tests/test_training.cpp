#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pudm/errors.h"
#include "pudm/training.h"
#include "test_util.h"

using namespace pudm;

namespace {

SamplePair make_pair_random(int sparse_n, int rate, uint64_t seed) {
  SamplePair p;
  p.c = testutil::random_mat(sparse_n, 3, seed);
  p.x0 = testutil::random_mat(sparse_n * rate, 3, seed + 1);
  p.rate = rate;
  return p;
}

Mat gaussian(int rows, uint64_t seed) {
  Rng rng(seed);
  return gaussian_mat(rows, 3, rng);
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("combined loss is the noise term plus alpha times the condition term") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 21, false);
  const DiffusionSchedule sched = build_schedule(50, 1e-4, 0.02);
  SamplePair pair = make_pair_random(6, 2, 100);
  Mat eps = gaussian(12, 101);

  LossParts zero = total_loss(pair, 17, eps, sched, 0.0, ps, cfg);
  CHECK(zero.total == zero.theta);
  CHECK(zero.psi > 0.0);

  LossParts one = total_loss(pair, 17, eps, sched, 1.0, ps, cfg);
  CHECK(one.total == one.theta + one.psi);

  LossParts half = total_loss(pair, 17, eps, sched, 0.5, ps, cfg);
  CHECK(half.total == half.theta + 0.5 * half.psi);

  // The standalone scalar helpers agree with the combined graph.
  CHECK(loss_theta(pair, 17, eps, sched, ps, cfg) == one.theta);
  CHECK(loss_psi(pair, ps, cfg) == one.psi);
  CHECK(one.theta >= 0.0);
  CHECK(one.psi >= 0.0);
}

TEST_CASE("zero-initialized output head reduces the noise loss to the noise moment") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 22, true);  // heads start at zero
  const DiffusionSchedule sched = build_schedule(50, 1e-4, 0.02);
  SamplePair pair = make_pair_random(8, 3, 110);
  Mat eps = gaussian(24, 111);

  // eps_hat is identically zero, so the loss equals the mean squared
  // row norm of the drawn noise.
  double expect = 0.0;
  for (double v : eps.d) expect += v * v;
  expect /= eps.rows;
  const double got = loss_theta(pair, 9, eps, sched, ps, cfg);
  CHECK(got == doctest::Approx(expect).epsilon(1e-14));

  // And that moment sits near 3 for standard-normal noise once enough
  // points are averaged (variance of a 3-dof squared norm is 6).
  SamplePair big = make_pair_random(600, 4, 112);
  Mat big_eps = gaussian(2400, 113);
  const double moment = loss_theta(big, 9, big_eps, sched, ps, cfg);
  // sd of the mean over 2400 points is sqrt(6/2400) ~ 0.05, so an 11%
  // band is ~6.6 sigma wide.
  CHECK(moment == doctest::Approx(3.0).epsilon(0.11));
}

TEST_CASE("condition-reconstruction loss is permutation covariant") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 23, false);
  SamplePair pair = make_pair_random(10, 2, 120);

  const double base = loss_psi(pair, ps, cfg);
  CHECK(base > 0.0);
  SamplePair shuffled = pair;
  shuffled.c = testutil::permute_rows(pair.c, testutil::random_permutation(10, 121));
  CHECK(loss_psi(shuffled, ps, cfg) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loss partition: each term reaches exactly its own branch plus the shared encoder") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 24, false);
  const DiffusionSchedule sched = build_schedule(50, 1e-4, 0.02);
  SamplePair pair = make_pair_random(6, 2, 130);
  Mat eps = gaussian(12, 131);
  Mat interp = guidance_interpolation(pair.c, pair.rate);

  auto grad_norm = [&](const std::string& name) {
    double s = 0.0;
    for (double v : ps.get(name).grad.d) s += std::abs(v);
    return s;
  };

  // Condition term alone: every non-condition tensor stays untouched.
  ps.zero_grads();
  {
    Graph g;
    LossValues lv = build_losses(g, pair, interp, 17, eps, sched, 1.0, ps, cfg);
    g.backward(lv.psi);
  }
  for (const auto& t : ps.tensors()) {
    double s = 0.0;
    for (double v : t.grad.d) s += std::abs(v);
    if (!ParameterStore::is_psi(t.name))
      CHECK_MESSAGE(s == 0.0, "condition loss leaked into: " << t.name);
  }
  CHECK(grad_norm("cnet.sa0.w1") > 0.0);
  CHECK(grad_norm("cnet.head.w1") > 0.0);

  // Noise term alone: flows through the noise branch AND, via the
  // bottleneck exchange, into the condition encoder — but not into the
  // condition decoder or head.
  ps.zero_grads();
  {
    Graph g;
    LossValues lv = build_losses(g, pair, interp, 17, eps, sched, 1.0, ps, cfg);
    g.backward(lv.theta);
  }
  CHECK(grad_norm("nnet.head.w1") > 0.0);
  CHECK(grad_norm("nnet.sa0.w1") > 0.0);
  CHECK(grad_norm("cnet.sa0.w1") > 0.0);
  CHECK(grad_norm("cnet.sa3.w2") > 0.0);
  CHECK(grad_norm("cnet.head.w1") == 0.0);
  CHECK(grad_norm("cnet.fp0.mlp1_w") == 0.0);

  // One backward on the combined loss trains both partitions at once.
  ps.zero_grads();
  {
    Graph g;
    LossValues lv = build_losses(g, pair, interp, 17, eps, sched, 1.0, ps, cfg);
    g.backward(lv.total);
  }
  CHECK(grad_norm("cnet.head.w1") > 0.0);
  CHECK(grad_norm("nnet.head.w1") > 0.0);
  CHECK(grad_norm("embed.time.w1") > 0.0);
  CHECK(grad_norm("embed.global.s1_w1") > 0.0);
}

TEST_CASE("combined-loss gradients match finite differences on sampled entries") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 25, false);
  const DiffusionSchedule sched = build_schedule(50, 1e-4, 0.02);
  SamplePair pair = make_pair_random(6, 2, 140);
  Mat eps = gaussian(12, 141);
  Mat interp = guidance_interpolation(pair.c, pair.rate);
  const int t = 23;

  auto eval = [&]() {
    Graph g;
    LossValues lv = build_losses(g, pair, interp, t, eps, sched, 1.0, ps, cfg);
    return g.val(lv.total).at(0, 0);
  };
  ps.zero_grads();
  {
    Graph g;
    LossValues lv = build_losses(g, pair, interp, t, eps, sched, 1.0, ps, cfg);
    g.backward(lv.total);
  }

  const double h = 1e-5;
  double worst = 0.0;
  int probed = 0;
  Rng rng(142);
  size_t idx = 0;
  for (auto& tensor : ps.tensors()) {
    // Sample roughly every eighth tensor, plus both output heads.
    const bool forced = tensor.name == "cnet.head.w2" || tensor.name == "nnet.head.w2" ||
                        tensor.name == "embed.rate.table";
    if (!forced && idx++ % 8 != 0) continue;
    const size_t i = std::uniform_int_distribution<size_t>(0, tensor.value.d.size() - 1)(rng);
    const double orig = tensor.value.d[i];
    tensor.value.d[i] = orig + h;
    const double fp = eval();
    tensor.value.d[i] = orig - h;
    const double fm = eval();
    tensor.value.d[i] = orig;
    worst = std::max(worst, testutil::rel_err((fp - fm) / (2.0 * h), tensor.grad.d[i]));
    ++probed;
  }
  CHECK(probed >= 20);
  CHECK(worst < 1e-3);
}

TEST_CASE("optimizer drives a quadratic to its minimum and guards the store") {
  ParameterStore ps;
  ps.create("a", 2, 2).value.d = {5.0, -3.0, 2.0, 8.0};
  ps.create("b", 1, 3).value.d = {-1.0, 4.0, 0.5};
  Mat ta(2, 2);
  ta.d = {1.0, 2.0, -1.0, 0.0};
  Mat tb(1, 3);
  tb.d = {0.0, -2.0, 3.0};

  Adam opt(0.05);
  for (int i = 0; i < 1500; ++i) {
    ps.zero_grads();
    Graph g;
    Value la = g.mean_sq_rows(g.sub(g.param(ps, "a"), g.leaf(ta)));
    Value lb = g.mean_sq_rows(g.sub(g.param(ps, "b"), g.leaf(tb)));
    g.backward(g.add(la, lb));
    opt.step(ps);
  }
  CHECK(testutil::max_abs_diff(ps.get("a").value, ta) < 1e-3);
  CHECK(testutil::max_abs_diff(ps.get("b").value, tb) < 1e-3);

  // Growing the store between steps is an error (moment buffers are
  // keyed by store order).
  ps.create("c", 1, 1);
  CHECK_THROWS_AS(opt.step(ps), ValidationError);

  CHECK_THROWS_AS(Adam(0.0), ValidationError);
  CHECK_THROWS_AS(Adam(-1.0), ValidationError);
}

TEST_CASE("training is deterministic and emits one trace row per step") {
  const NetworkConfig cfg = tiny_config();
  std::vector<SamplePair> data{make_pair_random(6, 2, 150), make_pair_random(8, 2, 151)};
  TrainingConfig tc;
  tc.steps = 6;
  tc.batch_size = 2;
  tc.learning_rate = 1e-3;
  tc.alpha_weight = 1.0;
  tc.seed = 99;
  tc.T = 20;

  auto run = [&](uint64_t seed) {
    TrainingConfig c2 = tc;
    c2.seed = seed;
    ParameterStore ps;
    register_model_params(ps, cfg, 31, true);
    auto trace = train(data, c2, ps, cfg);
    return std::make_pair(std::move(trace), std::move(ps));
  };

  auto [trace_a, ps_a] = run(99);
  auto [trace_b, ps_b] = run(99);
  auto [trace_c, ps_c] = run(98);

  REQUIRE(trace_a.size() == 6);
  REQUIRE(trace_b.size() == 6);
  bool c_differs = false;
  for (size_t i = 0; i < trace_a.size(); ++i) {
    CHECK(trace_a[i].step == static_cast<int>(i) + 1);
    CHECK(trace_a[i].total == trace_b[i].total);
    CHECK(trace_a[i].theta == trace_b[i].theta);
    CHECK(trace_a[i].psi == trace_b[i].psi);
    CHECK(trace_a[i].total ==
          doctest::Approx(trace_a[i].theta + trace_a[i].psi).epsilon(1e-12));
    c_differs = c_differs || trace_a[i].total != trace_c[i].total;
  }
  CHECK(c_differs);

  auto ita = ps_a.tensors().begin();
  auto itb = ps_b.tensors().begin();
  double diff = 0.0;
  for (; ita != ps_a.tensors().end(); ++ita, ++itb)
    diff = std::max(diff, testutil::max_abs_diff(ita->value, itb->value));
  CHECK(diff == 0.0);
}

TEST_CASE("trace serializes as CSV and optionally lands on disk") {
  std::vector<TraceRow> trace{{1, 0.5, 0.25, 0.25}, {2, 0.375, 0.25, 0.125}};
  const std::string csv = trace_to_csv(trace);
  CHECK(csv.rfind("step,total,l_theta,l_psi\n", 0) == 0);
  CHECK(csv.find("\n1,0.5,0.25,0.25\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const NetworkConfig cfg = tiny_config();
  std::vector<SamplePair> data{make_pair_random(6, 2, 160)};
  TrainingConfig tc;
  tc.steps = 2;
  tc.batch_size = 1;
  tc.T = 10;
  tc.seed = 5;
  ParameterStore ps;
  register_model_params(ps, cfg, 32, true);
  const std::string path = "trace_test_tmp.csv";
  auto trace2 = train(data, tc, ps, cfg, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == trace_to_csv(trace2));
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("training aborts with a step-stamped error when the loss diverges") {
  const NetworkConfig cfg = tiny_config();
  std::vector<SamplePair> data{make_pair_random(6, 2, 170)};
  TrainingConfig tc;
  tc.steps = 60;
  tc.batch_size = 1;
  tc.learning_rate = 1e10;  // guarantees numeric blow-up
  tc.T = 10;
  tc.seed = 7;
  ParameterStore ps;
  register_model_params(ps, cfg, 33, false);
  try {
    train(data, tc, ps, cfg);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("guidance interpolation is the identity at rate 1 and scales counts") {
  PointCloud c = testutil::random_mat(9, 3, 180);
  PointCloud same = guidance_interpolation(c, 1);
  CHECK(testutil::max_abs_diff(same, c) == 0.0);

  for (int rate : {2, 3, 4, 7}) {
    PointCloud up = guidance_interpolation(c, rate);
    CHECK(up.rows == 9 * rate);
    CHECK(up.cols == 3);
    CHECK(up.all_finite());
  }
  // Deterministic: same input, same cloud.
  CHECK(testutil::max_abs_diff(guidance_interpolation(c, 4), guidance_interpolation(c, 4)) == 0.0);

  // Small clouds cap the neighbor count instead of failing.
  PointCloud three = testutil::random_mat(3, 3, 181);
  CHECK(guidance_interpolation(three, 4).rows == 12);
}

TEST_CASE("malformed sample pairs are rejected") {
  const NetworkConfig cfg = tiny_config();
  ParameterStore ps;
  register_model_params(ps, cfg, 34, true);
  const DiffusionSchedule sched = build_schedule(20, 1e-4, 0.02);

  SamplePair bad_count = make_pair_random(6, 2, 190);
  bad_count.x0 = testutil::random_mat(11, 3, 191);  // not rate * |c|
  Mat eps11 = gaussian(11, 192);
  CHECK_THROWS_AS(total_loss(bad_count, 3, eps11, sched, 1.0, ps, cfg), ValidationError);

  SamplePair bad_rate = make_pair_random(6, 2, 193);
  bad_rate.rate = 0;
  CHECK_THROWS_AS(total_loss(bad_rate, 3, gaussian(12, 194), sched, 1.0, ps, cfg),
                  ValidationError);

  SamplePair ok = make_pair_random(6, 2, 195);
  Mat wrong_eps = gaussian(11, 196);
  CHECK_THROWS_AS(total_loss(ok, 3, wrong_eps, sched, 1.0, ps, cfg), ValidationError);

  Mat eps = gaussian(12, 197);
  CHECK_THROWS_AS(total_loss(ok, 3, eps, sched, -0.5, ps, cfg), ValidationError);
  CHECK_THROWS_AS(total_loss(ok, 0, eps, sched, 1.0, ps, cfg), ValidationError);
  CHECK_THROWS_AS(total_loss(ok, 21, eps, sched, 1.0, ps, cfg), ValidationError);

  std::vector<SamplePair> empty;
  TrainingConfig tc;
  CHECK_THROWS_AS(train(empty, tc, ps, cfg), ValidationError);
}

TEST_SUITE_END();
