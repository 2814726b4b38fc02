#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "lrp/completion.hpp"
#include "lrp/model.hpp"

namespace lrp {

struct ProjectionResult {
  RowVector v;                 // 1 x r coefficients
  double loss = 0.0;           // final objective on the sampled problem
  int iterations = 0;
  std::vector<int> subsample;  // chosen sensor indices
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (m + lo);
  }
  return m;
}

// Weighted least squares vR ~ x; weights per column.
inline RowVector weighted_ls(const Matrix& R, const RowVector& x,
                             const Eigen::VectorXd& wts) {
  const int r = static_cast<int>(R.rows());
  Matrix G = Matrix::Zero(r, r);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(r);
  for (int j = 0; j < R.cols(); ++j) {
    const auto col = R.col(j);
    G.noalias() += wts(j) * col * col.transpose();
    b.noalias() += wts(j) * x(j) * col;
  }
  return G.ldlt().solve(b).transpose();
}

inline double l1_obj(const Matrix& R, const RowVector& x, const RowVector& v) {
  return (v * R - x).cwiseAbs().sum();
}

}  // namespace detail

// Exact least-squares fit; throws on a rank-deficient sampled subspace.
inline RowVector project_l2(const Matrix& R, const RowVector& x) {
  Eigen::ColPivHouseholderQR<Matrix> qr(R.transpose());
  if (qr.rank() < R.rows())
    throw std::runtime_error("degenerate subspace: sampled R is rank-deficient");
  return qr.solve(x.transpose()).transpose();
}

// L1 fit by iteratively reweighted least squares with eps-smoothing,
// followed by a vertex polish: the L1 optimum interpolates r columns,
// so the exact fit through the r smallest residuals is tried as well.
inline RowVector project_l1(const Matrix& R, const RowVector& x,
                            int* iterations = nullptr) {
  constexpr double kEps = 1e-6;
  constexpr int kMaxIter = 100;
  RowVector v = project_l2(R, x);
  const int m = static_cast<int>(R.cols());
  const int r = static_cast<int>(R.rows());
  Eigen::VectorXd wts(m);
  double prev = detail::l1_obj(R, x, v);
  int it = 0;
  for (; it < kMaxIter; ++it) {
    const RowVector res = v * R - x;
    for (int j = 0; j < m; ++j)
      wts(j) = 1.0 / std::max(std::abs(res(j)), kEps);
    const RowVector vn = detail::weighted_ls(R, x, wts);
    const double obj = detail::l1_obj(R, x, vn);
    const double change = (vn - v).cwiseAbs().maxCoeff();
    if (obj <= prev) v = vn;
    if (obj <= prev) prev = obj;
    if (change < 1e-12) break;
  }
  if (iterations) *iterations = it;

  if (m >= r) {
    // Interpolate the r best-fit columns exactly.
    const RowVector res = (v * R - x).cwiseAbs();
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + r, idx.end(),
                      [&](int a, int b) { return res(a) < res(b); });
    Matrix Rs(r, r);
    RowVector xs(r);
    for (int c = 0; c < r; ++c) {
      Rs.col(c) = R.col(idx[c]);
      xs(c) = x(idx[c]);
    }
    Eigen::FullPivLU<Matrix> lu(Rs.transpose());
    if (lu.isInvertible()) {
      const RowVector cand = lu.solve(xs.transpose()).transpose();
      if (detail::l1_obj(R, x, cand) < detail::l1_obj(R, x, v)) v = cand;
    }
  }
  return v;
}

// Geman-McLure fit: IRLS on rho(u) = u^2/(u^2+sigma^2), sigma refreshed
// from the residual MAD each outer iteration.
inline RowVector project_gm(const Matrix& R, const RowVector& x,
                            int* iterations = nullptr) {
  constexpr double kSigmaFloor = 1e-6;
  constexpr int kMaxIter = 30;
  const int m = static_cast<int>(R.cols());
  RowVector v = project_l2(R, x);
  Eigen::VectorXd wts(m);
  int it = 0;
  for (; it < kMaxIter; ++it) {
    const RowVector res = v * R - x;
    std::vector<double> absr(m);
    for (int j = 0; j < m; ++j) absr[j] = std::abs(res(j));
    const double sigma =
        std::max(1.4826 * detail::median_of(absr), kSigmaFloor);
    const double s2 = sigma * sigma;
    for (int j = 0; j < m; ++j) {
      const double d = res(j) * res(j) + s2;
      wts(j) = s2 / (d * d);
    }
    const RowVector vn = detail::weighted_ls(R, x, wts);
    const double change = (vn - v).cwiseAbs().maxCoeff();
    v = vn;
    if (change < 1e-10) break;
  }
  if (iterations) *iterations = it;
  return v;
}

// Project a frame onto the row space of R, optionally on a uniform
// random subsample of sensors. The period is clamped so the sample
// keeps at least max(10*r, r+1) sensors.
inline ProjectionResult project(const FrameVector& x, const Matrix& R,
                                ProjectionNorm p, int period, Rng& rng) {
  if (x.dim() != R.cols())
    throw std::invalid_argument("frame/subspace width mismatch");
  if (period < 1) throw std::invalid_argument("subsample period must be >= 1");
  if (x.N < 1) throw std::invalid_argument("empty frame");
  const int r = static_cast<int>(R.rows());
  const int n = x.n;
  const int N = x.N;

  const int min_sensors = std::min(N, std::max(10 * r, r + 1));
  int keep = std::max((N + period - 1) / period, min_sensors);
  keep = std::min(keep, N);

  ProjectionResult out;
  if (keep == N) {
    out.subsample.resize(N);
    std::iota(out.subsample.begin(), out.subsample.end(), 0);
  } else {
    std::vector<int> all(N);
    std::iota(all.begin(), all.end(), 0);
    std::sample(all.begin(), all.end(), std::back_inserter(out.subsample),
                keep, rng);
  }

  Matrix Rs(r, static_cast<Eigen::Index>(keep) * n);
  RowVector xs(static_cast<Eigen::Index>(keep) * n);
  for (int s = 0; s < keep; ++s) {
    const int src = out.subsample[s] * n;
    Rs.middleCols(static_cast<Eigen::Index>(s) * n, n) =
        R.middleCols(src, n);
    xs.segment(static_cast<Eigen::Index>(s) * n, n) = x.x.segment(src, n);
  }

  switch (p) {
    case ProjectionNorm::L2:
      out.v = project_l2(Rs, xs);
      out.iterations = 1;
      out.loss = (out.v * Rs - xs).squaredNorm();
      break;
    case ProjectionNorm::L1:
      out.v = project_l1(Rs, xs, &out.iterations);
      out.loss = detail::l1_obj(Rs, xs, out.v);
      break;
    case ProjectionNorm::GemanMcLure: {
      out.v = project_gm(Rs, xs, &out.iterations);
      const RowVector res = out.v * Rs - xs;
      std::vector<double> absr(res.size());
      for (int j = 0; j < res.size(); ++j) absr[j] = std::abs(res(j));
      const double sigma = std::max(1.4826 * detail::median_of(absr), 1e-6);
      double acc = 0.0;
      for (int j = 0; j < res.size(); ++j) {
        const double u2 = res(j) * res(j);
        acc += u2 / (u2 + sigma * sigma);
      }
      out.loss = acc;
      break;
    }
  }
  return out;
}

// Per-sensor residual: L1 aggregation of the n entries of each sensor
// against the projected frame (sum of absolute channel differences).
inline RowVector residuals(const FrameVector& x, const RowVector& v,
                           const Matrix& R) {
  if (x.dim() != R.cols() || v.size() != R.rows())
    throw std::invalid_argument("residuals: dimension mismatch");
  const RowVector recon = v * R;
  RowVector out(x.N);
  for (int i = 0; i < x.N; ++i) {
    double acc = 0.0;
    for (int e = 0; e < x.n; ++e)
      acc += std::abs(x.x(i * x.n + e) - recon(i * x.n + e));
    out(i) = acc;
  }
  return out;
}

}  // namespace lrp
