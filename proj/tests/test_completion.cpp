#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "lrp/completion.hpp"

using namespace lrp;

namespace {

ObservationWindow random_window(int T, int m, double delta, Rng& rng,
                                double absent_fraction = 0.0) {
  std::uniform_real_distribution<double> val(0.0, 255.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ObservationWindow w(T, m, delta, 0.0, 255.0);
  for (int i = 0; i < T; ++i) {
    RowVector row(m);
    BoolRow present(m);
    for (int j = 0; j < m; ++j) {
      row(j) = val(rng);
      present(j) = unif(rng) >= absent_fraction;
    }
    w.set_row(i, row, present);
  }
  return w;
}

// Low-rank window: values near a rank-r product, delta margin.
ObservationWindow lowrank_window(int T, int r, int m, double delta, Rng& rng) {
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  Matrix L(T, r), R(r, m);
  for (int i = 0; i < L.size(); ++i) L.data()[i] = c(rng);
  for (int i = 0; i < R.size(); ++i) R.data()[i] = 20.0 * c(rng);
  const Matrix M = L * R;
  ObservationWindow w(T, m, delta, M.minCoeff() - 1.0, M.maxCoeff() + 1.0);
  for (int i = 0; i < T; ++i) w.set_row(i, M.row(i));
  return w;
}

FactorPair random_factors(int T, int r, int m, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix L(T, r), R(r, m);
  for (int i = 0; i < L.size(); ++i) L.data()[i] = g(rng);
  for (int i = 0; i < R.size(); ++i) R.data()[i] = g(rng);
  return FactorPair(L, R);
}

// Scalar oracle: the objective restricted to one coordinate of L,
// evaluated the long way from scratch.
double restricted_full_L(int i, int rhat, double delta, const FactorPair& f,
                         const ObservationWindow& w, double nu) {
  FactorPair g = f;
  g.L(i, rhat) += delta;
  g.resync_cache();
  return objective_value(g, w, nu);
}

}  // namespace

TEST_CASE("stationary coordinate yields zero step") {
  ObservationWindow w(2, 3, 5.0, -5.0, 5.0);
  for (int i = 0; i < 2; ++i) w.set_row(i, RowVector::Zero(3));
  FactorPair f(2, 2, 3);
  CHECK(step_L(0, 0, f, w, 0.1) == 0.0);
  CHECK(step_R(0, 0, f, w, 0.1) == 0.0);
}

TEST_CASE("hand-evaluated 1x1 step") {
  ObservationWindow w(1, 1, 0.0, 0.0, 255.0);
  w.set_row(0, RowVector::Constant(1, 10.0));
  FactorPair f(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0));
  // g = -8.9, W = 0.1 + 1 = 1.1
  CHECK_THAT(step_L(0, 0, f, w, 0.1),
             Catch::Matchers::WithinAbs(8.9 / 1.1, 1e-12));
  CHECK_THAT(curvature_L(0, 0, f, w, 0.1),
             Catch::Matchers::WithinAbs(1.1, 1e-12));
  // Mirror image for R.
  CHECK_THAT(step_R(0, 0, f, w, 0.1),
             Catch::Matchers::WithinAbs(8.9 / 1.1, 1e-12));
  CHECK_THAT(curvature_R(0, 0, f, w, 0.1),
             Catch::Matchers::WithinAbs(1.1, 1e-12));
}

TEST_CASE("backtracked steps never increase the restricted objective") {
  Rng rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    ObservationWindow w = random_window(5, 5, 2.0, rng);
    FactorPair f = random_factors(5, 2, 5, rng, 2.0);
    std::uniform_int_distribution<int> row(0, 4), rk(0, 1);
    for (int s = 0; s < 50; ++s) {
      const int i = row(rng), rhat = rk(rng);
      const double before = restricted_full_L(i, rhat, 0.0, f, w, 0.1);
      const double delta = apply_step_L(i, rhat, f, w, 0.1, true);
      const double after = objective_value(f, w, 0.1);
      CHECK(after <= before + 1e-9 * (1.0 + before));
      (void)delta;
    }
  }
}

TEST_CASE("empty plan is the identity") {
  Rng rng(1);
  ObservationWindow w = random_window(4, 6, 2.0, rng);
  FactorPair f = random_factors(4, 2, 6, rng);
  FactorPair before = f;
  SweepPlan plan = SweepPlan::epoch(4, 6, 2);
  plan.inner_limit = 0;
  sweep(f, w, 0.1, plan, rng);
  CHECK(f.L == before.L);
  CHECK(f.R == before.R);
}

TEST_CASE("objective is non-increasing per sweep with backtracking") {
  Rng rng(97);
  ObservationWindow w = random_window(20, 25, 2.0, rng, 0.1);
  FactorPair f(20, 4, 25);
  const SweepPlan plan = SweepPlan::epoch(20, 25, 4);
  double prev = objective_value(f, w, 0.1);
  for (int s = 0; s < 100; ++s) {
    const SweepStats st = sweep(f, w, 0.1, plan, rng, true);
    CHECK(st.objective_after <= prev + 1e-9 * (1.0 + prev));
    prev = st.objective_after;
  }
}

TEST_CASE("cache stays coherent through sweeps") {
  Rng rng(13);
  ObservationWindow w = random_window(8, 10, 2.0, rng);
  FactorPair f = random_factors(8, 3, 10, rng);
  const SweepPlan plan = SweepPlan::epoch(8, 10, 3);
  for (int s = 0; s < 20; ++s) sweep(f, w, 0.1, plan, rng);
  const double amax = f.A.cwiseAbs().maxCoeff();
  CHECK(f.cache_error() <= 1e-8 * (1.0 + amax));
}

TEST_CASE("complete with zero budget returns the input") {
  Rng rng(2);
  ObservationWindow w = random_window(4, 5, 2.0, rng);
  FactorPair f = random_factors(4, 2, 5, rng);
  FactorPair out = complete(f, w, 0.1, 0, rng);
  CHECK(out.L == f.L);
  CHECK(out.R == f.R);
}

TEST_CASE("zero data keeps zero factors optimal") {
  Rng rng(3);
  ObservationWindow w(6, 8, 1.0, -1.0, 1.0);
  for (int i = 0; i < 6; ++i) w.set_row(i, RowVector::Zero(8));
  FactorPair f(6, 2, 8);
  FactorPair out = complete(f, w, 0.1, 10, rng);
  CHECK(objective_value(out, w, 0.1) == 0.0);
  CHECK(out.L.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rank-1 instance reaches high interval feasibility") {
  Rng rng(55);
  ObservationWindow w = lowrank_window(8, 1, 8, 2.0, rng);
  // Weak regularisation: any nu > 0 rests a few entries O(nu) outside
  // their bounds at the optimum, so the count allows a tolerance far
  // below the interval half-width.
  const double nu = 1e-8;
  FactorPair f = als_init(w, 1, nu, rng);
  FactorPair out = complete(f, w, nu, 500, rng);
  CHECK(feasibility_fraction(out, w, 1e-3 * w.delta()) >= 0.99);
}

TEST_CASE("als_init breaks the all-zero fixed point") {
  Rng rng(66);
  ObservationWindow w = lowrank_window(6, 2, 9, 2.0, rng);
  FactorPair f = als_init(w, 2, 0.1, rng);
  CHECK(f.L.norm() > 0.0);
  CHECK(f.R.norm() > 0.0);
  // Balanced norms keep the regulariser from favouring one side.
  CHECK_THAT(f.L.norm(), Catch::Matchers::WithinRel(f.R.norm(), 1e-9));
  // The fit lands inside the intervals on the noiseless instance.
  CHECK(feasibility_fraction(f, w, 1e-6) >= 0.99);
}

TEST_CASE("als_init on an all-zero window returns zero factors") {
  Rng rng(67);
  ObservationWindow w(5, 6, 1.0, -1.0, 1.0);
  for (int i = 0; i < 5; ++i) w.set_row(i, RowVector::Zero(6));
  FactorPair f = als_init(w, 2, 0.1, rng);
  CHECK(f.L.cwiseAbs().maxCoeff() == 0.0);
  CHECK(objective_value(f, w, 0.1) == 0.0);
}

TEST_CASE("identical seed gives identical trajectories") {
  ObservationWindow w = [] {
    Rng r(9);
    return random_window(6, 7, 2.0, r);
  }();
  FactorPair f0(6, 2, 7);
  Rng a(1234), b(1234);
  FactorPair fa = complete(f0, w, 0.1, 25, a);
  FactorPair fb = complete(f0, w, 0.1, 25, b);
  CHECK(fa.L == fb.L);
  CHECK(fa.R == fb.R);
}

TEST_CASE("blocks have disjoint per-index write sets") {
  Rng rng(77);
  std::uniform_int_distribution<int> dim(2, 12);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = dim(rng), m = dim(rng), r = 2;
    SweepPlan plan = SweepPlan::epoch(T, m, r);
    std::shuffle(plan.row_block.begin(), plan.row_block.end(), rng);
    plan.row_block.resize(1 + rng() % T);
    std::shuffle(plan.col_block.begin(), plan.col_block.end(), rng);
    plan.col_block.resize(1 + rng() % m);

    // Row i writes L(i,*) and A(i,*): disjoint iff row indices are unique.
    std::set<int> rows(plan.row_block.begin(), plan.row_block.end());
    CHECK(rows.size() == plan.row_block.size());
    std::set<int> cols(plan.col_block.begin(), plan.col_block.end());
    CHECK(cols.size() == plan.col_block.size());
  }
}

TEST_CASE("long runs approach stationarity") {
  Rng rng(21);
  ObservationWindow w = lowrank_window(6, 1, 6, 2.0, rng);
  FactorPair f(6, 1, 6);
  const SweepPlan plan = SweepPlan::epoch(6, 6, 1);
  for (int s = 0; s < 3000; ++s) sweep(f, w, 0.1, plan, rng);
  auto [gL, gR] = objective_gradient(f, w, 0.1);
  CHECK(gL.cwiseAbs().maxCoeff() <= 1e-4);
  CHECK(gR.cwiseAbs().maxCoeff() <= 1e-4);
}
