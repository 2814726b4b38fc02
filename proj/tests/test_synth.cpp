#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lrp/synth.hpp"

using namespace lrp;

namespace {

Matrix stack_frames(const std::vector<SyntheticFrame>& fs) {
  Matrix M(static_cast<Eigen::Index>(fs.size()), fs.front().frame.dim());
  for (size_t k = 0; k < fs.size(); ++k) M.row(k) = fs[k].frame.x;
  return M;
}

// Two-sided Kolmogorov-Smirnov statistic against Uniform(-delta, delta).
double ks_uniform(std::vector<double> s, double delta) {
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double cdf = (s[i] + delta) / (2.0 * delta);
    d = std::max(d, std::abs((i + 1) / n - cdf));
    d = std::max(d, std::abs(cdf - i / n));
  }
  return d;
}

}  // namespace

TEST_CASE("noiseless static stream is exactly rank r") {
  SyntheticSpec spec;
  spec.T = 35;
  spec.N = 100;
  spec.r = 3;
  spec.delta = 0.0;
  spec.rng_seed = 5;
  const auto frames = generate_stream(spec, 50);
  const Matrix M = stack_frames(frames);
  Eigen::BDCSVD<Matrix> svd(M);
  const auto& sv = svd.singularValues();
  REQUIRE(sv.size() > 3);
  CHECK(sv(0) > 1.0);
  for (int i = 3; i < sv.size(); ++i) CHECK(sv(i) <= 1e-10 * sv(0));
}

TEST_CASE("measurement noise is bounded and uniform") {
  SyntheticSpec spec;
  spec.N = 1000;
  spec.r = 2;
  spec.delta = 5.0;
  spec.rng_seed = 11;
  StreamGenerator gen(spec);
  std::vector<double> noise;
  noise.reserve(100000);
  for (int k = 0; k < 100; ++k) {
    const SyntheticFrame f = gen.next();
    const RowVector clean = f.true_coeffs * gen.subspace();
    for (int j = 0; j < f.frame.dim(); ++j) {
      const double e = f.frame.x(j) - clean(j);
      CHECK(std::abs(e) <= spec.delta);
      noise.push_back(e);
    }
  }
  REQUIRE(noise.size() == 100000);
  // Critical value at alpha = 0.01: 1.628 / sqrt(n).
  const double d = ks_uniform(noise, spec.delta);
  CHECK(d < 1.628 / std::sqrt(100000.0));
}

TEST_CASE("sparse corruption density lands near the requested fraction") {
  for (const SparsePattern p : {SparsePattern::Blob, SparsePattern::Scattered}) {
    SyntheticSpec spec;
    spec.N = 900;
    spec.r = 2;
    spec.delta = 5.0;
    spec.sparse_fraction = 0.02;
    spec.sparse_magnitude = 50.0;
    spec.pattern = p;
    spec.rng_seed = 21;
    const auto frames = generate_stream(spec, 20);
    for (const auto& f : frames) {
      const double density =
          static_cast<double>(f.truth.event_count()) / spec.N;
      CHECK(density >= 0.015);
      CHECK(density <= 0.025);
    }
  }
}

TEST_CASE("corrupted sensors are shifted by the configured magnitude") {
  SyntheticSpec spec;
  spec.N = 400;
  spec.r = 2;
  spec.delta = 0.0;  // no noise: the shift is exact
  spec.sparse_fraction = 0.05;
  spec.sparse_magnitude = 80.0;
  spec.rng_seed = 31;
  StreamGenerator gen(spec);
  const SyntheticFrame f = gen.next();
  const RowVector clean = f.true_coeffs * gen.subspace();
  REQUIRE(f.truth.event_count() > 0);
  for (int i = 0; i < spec.N; ++i) {
    const double diff = std::abs(f.frame.x(i) - clean(i));
    if (f.truth.y(i))
      CHECK(diff == 0.0);
    else
      CHECK_THAT(diff, Catch::Matchers::WithinAbs(80.0, 1e-9));
  }
}

TEST_CASE("drift rotates the subspace without changing row norms") {
  SyntheticSpec spec;
  spec.N = 200;
  spec.r = 3;
  spec.delta = 0.0;
  spec.drift_rate = 1e-2;
  spec.rng_seed = 41;
  StreamGenerator gen(spec);
  const Matrix R0 = gen.subspace();
  gen.next();
  gen.next();  // first rotation applies from the second frame on
  const Matrix R1 = gen.subspace();
  CHECK((R1 - R0).norm() > 1e-6);
  for (int q = 0; q < spec.r; ++q)
    CHECK_THAT(R1.row(q).norm(),
               Catch::Matchers::WithinRel(R0.row(q).norm(), 1e-9));
}

TEST_CASE("zero drift keeps the subspace fixed") {
  SyntheticSpec spec;
  spec.N = 50;
  spec.r = 2;
  spec.rng_seed = 43;
  StreamGenerator gen(spec);
  const Matrix R0 = gen.subspace();
  for (int k = 0; k < 5; ++k) gen.next();
  CHECK(gen.subspace() == R0);
}

TEST_CASE("spec validation rejects bad parameters") {
  SyntheticSpec spec;
  spec.sparse_fraction = 0.6;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.sparse_fraction = 0.1;
  spec.sparse_magnitude = 5.0;  // <= 2*delta = 10
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.sparse_magnitude = 20.0;
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("brute force on a zero window returns zero") {
  ObservationWindow w(4, 4, 1.0, -1.0, 1.0);
  for (int i = 0; i < 4; ++i) w.set_row(i, RowVector::Zero(4));
  const FactorPair f = brute_force_complete(w, 2, 0.1);
  CHECK(objective_value(f, w, 0.1) == 0.0);
}

TEST_CASE("brute force solves the 1x1 instance to the analytic optimum") {
  ObservationWindow w(1, 1, 0.0, 0.0, 255.0);
  w.set_row(0, RowVector::Constant(1, 10.0));
  const FactorPair f = brute_force_complete(w, 1, 0.1);
  // Stationarity: l = r = sqrt(9.9), f* = 0.5*(0.1)^2 + 0.05*2*9.9.
  const double fstar = 0.005 + 0.99;
  CHECK_THAT(objective_value(f, w, 0.1),
             Catch::Matchers::WithinAbs(fstar, 1e-8));

  // The analytic stationary point satisfies the first-order conditions
  // of the objective to 1e-10.
  const double l = std::sqrt(9.9);
  FactorPair exact(Matrix::Constant(1, 1, l), Matrix::Constant(1, 1, l));
  auto [gL, gR] = objective_gradient(exact, w, 0.1);
  CHECK(std::abs(gL(0, 0)) <= 1e-10);
  CHECK(std::abs(gR(0, 0)) <= 1e-10);
}

TEST_CASE("coordinate descent approaches the brute-force optimum") {
  Rng rng(47);
  ObservationWindow w(2, 3, 1.0, -100.0, 100.0);
  RowVector r0(3), r1(3);
  r0 << 4.0, -2.0, 1.0;
  r1 << 8.0, -4.0, 2.0;  // exactly rank 1
  w.set_row(0, r0);
  w.set_row(1, r1);
  const double nu = 0.1;
  const FactorPair ref = brute_force_complete(w, 1, nu);
  const double fstar = objective_value(ref, w, nu);

  FactorPair f = als_init(w, 1, nu, rng);
  f = complete(f, w, nu, 3000, rng);
  CHECK(objective_value(f, w, nu) <= fstar + 1e-6);
}

TEST_CASE("brute force rejects oversized instances") {
  ObservationWindow w(9, 8, 1.0, 0.0, 1.0);
  CHECK_THROWS_AS(brute_force_complete(w, 2, 0.1), std::invalid_argument);
}

TEST_CASE("score_masks trivial cases") {
  EventMask truth;
  truth.y = BoolRow::Constant(6, true);
  truth.y(2) = false;
  truth.y(4) = false;

  // Perfect prediction.
  MaskMetrics m = score_masks({truth}, {truth});
  CHECK(m.recall == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.fpr == 0.0);
  CHECK(m.fnr == 0.0);

  // All-negative prediction misses everything.
  EventMask none;
  none.y = BoolRow::Constant(6, true);
  m = score_masks({none}, {truth});
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.specificity == 1.0);
}

TEST_CASE("score_masks matches hand-computed confusion counts") {
  // truth events at {1,2}; predicted events at {2,3}.
  EventMask truth, pred;
  truth.y = BoolRow::Constant(5, true);
  truth.y(1) = false;
  truth.y(2) = false;
  pred.y = BoolRow::Constant(5, true);
  pred.y(2) = false;
  pred.y(3) = false;
  const MaskMetrics m = score_masks({pred}, {truth});
  CHECK(m.tp == 1);
  CHECK(m.fp == 1);
  CHECK(m.fn == 1);
  CHECK(m.tn == 2);
  CHECK_THAT(m.precision, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(m.recall, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(m.f1, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(m.fpr, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("score_masks is permutation-invariant over frames") {
  Rng rng(53);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<EventMask> pred(8), truth(8);
  for (int k = 0; k < 8; ++k) {
    pred[k].y = BoolRow::Constant(10, true);
    truth[k].y = BoolRow::Constant(10, true);
    for (int i = 0; i < 10; ++i) {
      pred[k].y(i) = coin(rng) == 0;
      truth[k].y(i) = coin(rng) == 0;
    }
  }
  const MaskMetrics a = score_masks(pred, truth);
  std::vector<int> perm{5, 2, 7, 0, 3, 6, 1, 4};
  std::vector<EventMask> pred2, truth2;
  for (int k : perm) {
    pred2.push_back(pred[k]);
    truth2.push_back(truth[k]);
  }
  const MaskMetrics b = score_masks(pred2, truth2);
  CHECK(a.tp == b.tp);
  CHECK(a.fp == b.fp);
  CHECK(a.tn == b.tn);
  CHECK(a.fn == b.fn);
  CHECK(a.f1 == b.f1);
}

TEST_CASE("score_masks rejects mismatched input") {
  EventMask m;
  m.y = BoolRow::Constant(3, true);
  CHECK_THROWS_AS(score_masks({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(score_masks({m}, {m, m}), std::invalid_argument);
}
