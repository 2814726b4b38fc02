#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "lrp/model.hpp"

namespace lrp {

using Rng = std::mt19937_64;

// One randomized pass: inner_limit iterations over the row block (each
// row updates one randomly chosen column of L), then the same for the
// column block of R.
struct SweepPlan {
  std::vector<int> row_block;
  std::vector<int> col_block;
  int inner_limit = 1;

  // Every coordinate of L and R expected to be touched once per sweep.
  static SweepPlan epoch(int rows, int cols, int rank) {
    SweepPlan p;
    p.row_block.resize(rows);
    std::iota(p.row_block.begin(), p.row_block.end(), 0);
    p.col_block.resize(cols);
    std::iota(p.col_block.begin(), p.col_block.end(), 0);
    p.inner_limit = rank;
    return p;
  }
};

struct SweepStats {
  double objective_before = 0.0;
  double objective_after = 0.0;
  long steps = 0;
  long backtracks = 0;
};

// Curvature of the objective restricted to L(i,rhat) at the current
// point: nu plus R(rhat,j)^2 over the violated entries of row i.
inline double curvature_L(int i, int rhat, const FactorPair& f,
                          const ObservationWindow& w, double nu) {
  double acc = nu;
  for (int j = 0; j < w.cols(); ++j) {
    const double a = f.A(i, j);
    if (a < w.lower(i, j) || a > w.upper(i, j)) {
      const double rj = f.R(rhat, j);
      acc += rj * rj;
    }
  }
  return acc;
}

inline double curvature_R(int rhat, int j, const FactorPair& f,
                          const ObservationWindow& w, double nu) {
  double acc = nu;
  for (int i = 0; i < w.rows(); ++i) {
    const double a = f.A(i, j);
    if (a < w.lower(i, j) || a > w.upper(i, j)) {
      const double li = f.L(i, rhat);
      acc += li * li;
    }
  }
  return acc;
}

// Raw coordinate step delta = -g / W for L(i,rhat); the caller applies
// L(i,rhat) += delta and A(i,j) += delta * R(rhat,j) for all j.
inline double step_L(int i, int rhat, const FactorPair& f,
                     const ObservationWindow& w, double nu) {
  double g = nu * f.L(i, rhat);
  double curv = nu;
  for (int j = 0; j < w.cols(); ++j) {
    const double a = f.A(i, j);
    const double lo = w.lower(i, j);
    const double hi = w.upper(i, j);
    double v;
    if (a < lo)
      v = a - lo;
    else if (a > hi)
      v = a - hi;
    else
      continue;
    const double rj = f.R(rhat, j);
    g += v * rj;
    curv += rj * rj;
  }
  return -g / curv;
}

inline double step_R(int rhat, int j, const FactorPair& f,
                     const ObservationWindow& w, double nu) {
  double g = nu * f.R(rhat, j);
  double curv = nu;
  for (int i = 0; i < w.rows(); ++i) {
    const double a = f.A(i, j);
    const double lo = w.lower(i, j);
    const double hi = w.upper(i, j);
    double v;
    if (a < lo)
      v = a - lo;
    else if (a > hi)
      v = a - hi;
    else
      continue;
    const double li = f.L(i, rhat);
    g += v * li;
    curv += li * li;
  }
  return -g / curv;
}

namespace detail {

// Objective restricted to the coordinate L(i,rhat), up to terms that do
// not change with delta: hinge sums of row i plus the one regulariser.
inline double restricted_obj_L(int i, int rhat, double delta,
                               const FactorPair& f,
                               const ObservationWindow& w, double nu) {
  double acc = 0.0;
  for (int j = 0; j < w.cols(); ++j) {
    const double a = f.A(i, j) + delta * f.R(rhat, j);
    acc += hinge_sq(w.lower(i, j) - a) + hinge_sq(a - w.upper(i, j));
  }
  const double l = f.L(i, rhat) + delta;
  return 0.5 * acc + 0.5 * nu * l * l;
}

inline double restricted_obj_R(int rhat, int j, double delta,
                               const FactorPair& f,
                               const ObservationWindow& w, double nu) {
  double acc = 0.0;
  for (int i = 0; i < w.rows(); ++i) {
    const double a = f.A(i, j) + delta * f.L(i, rhat);
    acc += hinge_sq(w.lower(i, j) - a) + hinge_sq(a - w.upper(i, j));
  }
  const double r = f.R(rhat, j) + delta;
  return 0.5 * acc + 0.5 * nu * r * r;
}

constexpr int kMaxHalvings = 20;

}  // namespace detail

// Take the step at L(i,rhat) and update the cache. With backtracking the
// step is halved until the restricted objective does not increase; the
// pure rule can overshoot when the move crosses a hinge kink.
inline double apply_step_L(int i, int rhat, FactorPair& f,
                           const ObservationWindow& w, double nu,
                           bool backtracking, long* backtracks = nullptr) {
  // Single fused scan: gradient, curvature and the baseline restricted
  // objective for the backtracking test.
  const double l0 = f.L(i, rhat);
  double g = nu * l0;
  double curv = nu;
  double base_acc = 0.0;
  for (int j = 0; j < w.cols(); ++j) {
    const double a = f.A(i, j);
    const double lo = w.lower(i, j);
    const double hi = w.upper(i, j);
    double v;
    if (a < lo)
      v = a - lo;
    else if (a > hi)
      v = a - hi;
    else
      continue;
    const double rj = f.R(rhat, j);
    g += v * rj;
    curv += rj * rj;
    base_acc += v * v;
  }
  double delta = -g / curv;
  if (delta == 0.0) return 0.0;
  if (backtracking) {
    const double base = 0.5 * base_acc + 0.5 * nu * l0 * l0;
    int h = 0;
    while (detail::restricted_obj_L(i, rhat, delta, f, w, nu) > base) {
      delta *= 0.5;
      if (++h > detail::kMaxHalvings) {
        delta = 0.0;
        break;
      }
    }
    if (backtracks && h > 0) *backtracks += h;
  }
  if (delta != 0.0) {
    f.L(i, rhat) += delta;
    f.A.row(i) += delta * f.R.row(rhat);
  }
  return delta;
}

inline double apply_step_R(int rhat, int j, FactorPair& f,
                           const ObservationWindow& w, double nu,
                           bool backtracking, long* backtracks = nullptr) {
  const double r0 = f.R(rhat, j);
  double g = nu * r0;
  double curv = nu;
  double base_acc = 0.0;
  for (int i = 0; i < w.rows(); ++i) {
    const double a = f.A(i, j);
    const double lo = w.lower(i, j);
    const double hi = w.upper(i, j);
    double v;
    if (a < lo)
      v = a - lo;
    else if (a > hi)
      v = a - hi;
    else
      continue;
    const double li = f.L(i, rhat);
    g += v * li;
    curv += li * li;
    base_acc += v * v;
  }
  double delta = -g / curv;
  if (delta == 0.0) return 0.0;
  if (backtracking) {
    const double base = 0.5 * base_acc + 0.5 * nu * r0 * r0;
    int h = 0;
    while (detail::restricted_obj_R(rhat, j, delta, f, w, nu) > base) {
      delta *= 0.5;
      if (++h > detail::kMaxHalvings) {
        delta = 0.0;
        break;
      }
    }
    if (backtracks && h > 0) *backtracks += h;
  }
  if (delta != 0.0) {
    f.R(rhat, j) += delta;
    f.A.col(j) += delta * f.L.col(rhat);
  }
  return delta;
}

namespace detail {

// One pass over the row block, evaluated column-blocked. Rows are
// mutually independent within a pass (each touches only its own row of
// L and A while R is fixed), so this computes exactly what sequential
// apply_step_L calls would, with cache-friendly access to the
// column-major matrices.
inline void batch_row_pass(FactorPair& f, const ObservationWindow& w,
                           double nu, const std::vector<int>& rows,
                           const std::vector<int>& rhats, bool backtracking,
                           long* backtracks) {
  const int T = f.rows(), m = f.cols();
  std::vector<double> g(T), curv(T, nu), base(T, 0.0), delta(T);
  for (int i = 0; i < T; ++i) g[i] = nu * f.L(i, rhats[size_t(i)]);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < T; ++i) {
      const double a = f.A(i, j);
      const double lo = w.lower(i, j);
      const double hi = w.upper(i, j);
      double v;
      if (a < lo)
        v = a - lo;
      else if (a > hi)
        v = a - hi;
      else
        continue;
      const double rj = f.R(rhats[size_t(i)], j);
      g[size_t(i)] += v * rj;
      curv[size_t(i)] += rj * rj;
      base[size_t(i)] += v * v;
    }
  std::vector<char> active(T, 0);
  int n_active = 0;
  for (int i = 0; i < T; ++i) {
    delta[size_t(i)] = -g[size_t(i)] / curv[size_t(i)];
    if (delta[size_t(i)] != 0.0 && backtracking) {
      active[size_t(i)] = 1;
      ++n_active;
    }
  }
  // Backtracking: halve until the restricted objective does not
  // increase, at most kMaxHalvings times per row.
  std::vector<int> halvings(T, 0);
  while (n_active > 0) {
    std::vector<double> trial(T, 0.0);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < T; ++i) {
        if (!active[size_t(i)]) continue;
        const double a =
            f.A(i, j) + delta[size_t(i)] * f.R(rhats[size_t(i)], j);
        trial[size_t(i)] +=
            hinge_sq(w.lower(i, j) - a) + hinge_sq(a - w.upper(i, j));
      }
    for (int i = 0; i < T; ++i) {
      if (!active[size_t(i)]) continue;
      const double l = f.L(i, rhats[size_t(i)]) + delta[size_t(i)];
      const double obj = 0.5 * trial[size_t(i)] + 0.5 * nu * l * l;
      const double l0 = f.L(i, rhats[size_t(i)]);
      const double b = 0.5 * base[size_t(i)] + 0.5 * nu * l0 * l0;
      if (obj > b) {
        delta[size_t(i)] *= 0.5;
        if (++halvings[size_t(i)] > kMaxHalvings) {
          delta[size_t(i)] = 0.0;
          active[size_t(i)] = 0;
          --n_active;
        }
      } else {
        active[size_t(i)] = 0;
        --n_active;
      }
    }
  }
  if (backtracks)
    for (int i = 0; i < T; ++i) *backtracks += halvings[size_t(i)];
  for (int i = 0; i < T; ++i)
    if (delta[size_t(i)] != 0.0)
      f.L(i, rhats[size_t(i)]) += delta[size_t(i)];
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < T; ++i)
      if (delta[size_t(i)] != 0.0)
        f.A(i, j) += delta[size_t(i)] * f.R(rhats[size_t(i)], j);
  (void)rows;
}

}  // namespace detail

// One sweep of the alternating randomized coordinate descent: the row
// block first (L fixed-R), then the column block (R fixed-L). Index
// order is shuffled and one rank index is drawn per coordinate visit.
inline SweepStats sweep(FactorPair& f, const ObservationWindow& w, double nu,
                        const SweepPlan& plan, Rng& rng,
                        bool backtracking = true) {
  check_dims(f, w);
  SweepStats st;
  st.objective_before = objective_value(f, w, nu);
  std::uniform_int_distribution<int> pick_rank(0, f.rank() - 1);
  std::vector<int> order;

  const bool full_rows =
      static_cast<int>(plan.row_block.size()) == f.rows();
  for (int t = 0; t < plan.inner_limit; ++t) {
    order = plan.row_block;
    std::shuffle(order.begin(), order.end(), rng);
    if (full_rows) {
      // Draw the rank indices in visit order (same rng stream as the
      // sequential path), then evaluate the whole pass blocked.
      std::vector<int> rhats(f.rows());
      for (int i : order) rhats[size_t(i)] = pick_rank(rng);
      detail::batch_row_pass(f, w, nu, order, rhats, backtracking,
                             &st.backtracks);
      st.steps += f.rows();
    } else {
      for (int i : order) {
        apply_step_L(i, pick_rank(rng), f, w, nu, backtracking,
                     &st.backtracks);
        ++st.steps;
      }
    }
  }
  for (int t = 0; t < plan.inner_limit; ++t) {
    order = plan.col_block;
    std::shuffle(order.begin(), order.end(), rng);
    for (int j : order) {
      apply_step_R(pick_rank(rng), j, f, w, nu, backtracking,
                   &st.backtracks);
      ++st.steps;
    }
  }
  st.objective_after = objective_value(f, w, nu);
  return st;
}

// Symmetry-breaking warm start. The all-zero factor pair is a fixed
// point of the coordinate rule (every step has g = 0 when both factors
// vanish), so sessions seed from a ridge ALS fit of the raw window
// instead: absent entries are replaced by their interval midpoint, and
// the factors are norm-balanced so neither side dominates the
// regulariser.
inline FactorPair als_init(const ObservationWindow& w, int rank, double nu,
                           Rng& rng, int iters = 25) {
  if (rank < 1) throw std::invalid_argument("als_init: rank < 1");
  const int T = w.rows(), m = w.cols();
  Matrix M(T, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < T; ++i)
      M(i, j) = w.present()(i, j)
                    ? w.data()(i, j)
                    : 0.5 * (w.global_lo() + w.global_hi());
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix L = Matrix::NullaryExpr(T, rank, [&] { return g(rng); });
  Matrix R(rank, m);
  const Matrix I = Matrix::Identity(rank, rank);
  for (int it = 0; it < iters; ++it) {
    R = (L.transpose() * L + nu * I).ldlt().solve(L.transpose() * M);
    L = ((R * R.transpose() + nu * I).ldlt().solve(R * M.transpose()))
            .transpose();
  }
  const double ln = L.norm(), rn = R.norm();
  if (ln > 0.0 && rn > 0.0) {
    const double s = std::sqrt(rn / ln);
    L *= s;
    R /= s;
  }
  return FactorPair(std::move(L), std::move(R));
}

// Warm-started completion: a fixed budget of sweeps from the previous
// factors, standing in for the while-loop of the streaming update.
inline FactorPair complete(const FactorPair& f_prev,
                           const ObservationWindow& w, double nu, int budget,
                           Rng& rng, bool backtracking = true) {
  FactorPair f = f_prev;
  check_dims(f, w);
  const SweepPlan plan = SweepPlan::epoch(w.rows(), w.cols(), f.rank());
  for (int b = 0; b < budget; ++b) sweep(f, w, nu, plan, rng, backtracking);
  return f;
}

}  // namespace lrp
