#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "lrp/config.hpp"

namespace lrp {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using BoolRow = Eigen::Array<bool, 1, Eigen::Dynamic>;

// One-sided penalty: only interval violations cost anything.
inline double hinge_sq(double u) {
  const double h = u > 0.0 ? u : 0.0;
  return h * h;
}

// A single flattened observation: N sensors with n entries each.
struct FrameVector {
  RowVector x;
  int n = 1;  // entries per sensor
  int N = 0;  // sensor count

  FrameVector() = default;
  FrameVector(RowVector values, int entries_per_sensor, int sensors)
      : x(std::move(values)), n(entries_per_sensor), N(sensors) {
    if (x.size() != static_cast<Eigen::Index>(n) * N)
      throw std::invalid_argument("frame length != n*N");
  }

  int dim() const { return static_cast<int>(x.size()); }
};

// Per-sensor verdict of the detector; true = consistent with the model.
struct EventMask {
  BoolRow y;

  int size() const { return static_cast<int>(y.size()); }
  int event_count() const { return static_cast<int>((!y).count()); }
};

// Sliding window of the last T accepted frames with per-entry presence
// and the interval bounds [M - delta, M + delta]. Absent entries fall
// back to the natural data range, so every entry has finite bounds.
class ObservationWindow {
 public:
  ObservationWindow(int rows, int cols, double delta, double lo, double hi)
      : data_(Matrix::Zero(rows, cols)),
        present_(BoolArray::Constant(rows, cols, false)),
        lower_(Matrix::Constant(rows, cols, lo)),
        upper_(Matrix::Constant(rows, cols, hi)),
        delta_(delta),
        lo_(lo),
        hi_(hi) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("empty window");
    if (hi < lo) throw std::invalid_argument("bad global bounds");
  }

  int rows() const { return static_cast<int>(data_.rows()); }
  int cols() const { return static_cast<int>(data_.cols()); }
  double delta() const { return delta_; }
  double global_lo() const { return lo_; }
  double global_hi() const { return hi_; }
  const Matrix& data() const { return data_; }
  const BoolArray& present() const { return present_; }

  // Cached per-entry bounds, kept in sync by set_row/roll so the hot
  // solver loops read plain matrices.
  double lower(int i, int j) const { return lower_(i, j); }
  double upper(int i, int j) const { return upper_(i, j); }
  const Matrix& lower_bounds() const { return lower_; }
  const Matrix& upper_bounds() const { return upper_; }

  void set_row(int i, const RowVector& values, const BoolRow& present) {
    if (values.size() != data_.cols() || present.size() != data_.cols())
      throw std::invalid_argument("row width mismatch");
    data_.row(i) = values;
    present_.row(i) = present;
    for (int j = 0; j < data_.cols(); ++j) {
      lower_(i, j) = present(j) ? values(j) - delta_ : lo_;
      upper_(i, j) = present(j) ? values(j) + delta_ : hi_;
    }
  }

  void set_row(int i, const RowVector& values) {
    set_row(i, values, BoolRow::Constant(data_.cols(), true));
  }

  // Drop the oldest row, append the new one at the bottom.
  void roll(const RowVector& values, const BoolRow& present) {
    const int T = rows();
    for (int i = 0; i + 1 < T; ++i) {
      data_.row(i) = data_.row(i + 1);
      present_.row(i) = present_.row(i + 1);
      lower_.row(i) = lower_.row(i + 1);
      upper_.row(i) = upper_.row(i + 1);
    }
    set_row(T - 1, values, present);
  }

 private:
  Matrix data_;
  BoolArray present_;
  Matrix lower_;
  Matrix upper_;
  double delta_;
  double lo_, hi_;
};

// Factors L (T x r) and R (r x nN) with the cached product A = L*R that
// the coordinate-descent steps maintain incrementally.
struct FactorPair {
  Matrix L;
  Matrix R;
  Matrix A;

  FactorPair() = default;
  FactorPair(int rows, int rank, int cols)
      : L(Matrix::Zero(rows, rank)),
        R(Matrix::Zero(rank, cols)),
        A(Matrix::Zero(rows, cols)) {}
  FactorPair(Matrix l, Matrix r) : L(std::move(l)), R(std::move(r)) {
    if (L.cols() != R.rows()) throw std::invalid_argument("rank mismatch");
    A = L * R;
  }

  int rows() const { return static_cast<int>(L.rows()); }
  int rank() const { return static_cast<int>(L.cols()); }
  int cols() const { return static_cast<int>(R.cols()); }

  void resync_cache() { A = L * R; }

  double cache_error() const {
    return (A - L * R).cwiseAbs().maxCoeff();
  }
};

inline void check_dims(const FactorPair& f, const ObservationWindow& w) {
  if (f.rows() != w.rows() || f.cols() != w.cols() ||
      f.A.rows() != f.L.rows() || f.A.cols() != f.R.cols())
    throw std::invalid_argument("factor/window dimension mismatch");
}

// f(L,R;M) = 1/2 sum l(lower - A) + 1/2 sum l(A - upper)
//          + nu/2 (|L|_F^2 + |R|_F^2), with l(u) = max(u,0)^2.
inline double objective_value(const FactorPair& f, const ObservationWindow& w,
                              double nu) {
  check_dims(f, w);
  double acc = 0.0;
  for (int j = 0; j < w.cols(); ++j)
    for (int i = 0; i < w.rows(); ++i) {
      const double a = f.A(i, j);
      acc += hinge_sq(w.lower(i, j) - a) + hinge_sq(a - w.upper(i, j));
    }
  return 0.5 * acc +
         0.5 * nu * (f.L.squaredNorm() + f.R.squaredNorm());
}

// Partial gradients of the objective; only entries with a strict
// interval violation contribute to the hinge sums.
inline std::pair<Matrix, Matrix> objective_gradient(
    const FactorPair& f, const ObservationWindow& w, double nu) {
  check_dims(f, w);
  Matrix gL = nu * f.L;
  Matrix gR = nu * f.R;
  for (int j = 0; j < w.cols(); ++j)
    for (int i = 0; i < w.rows(); ++i) {
      const double a = f.A(i, j);
      const double lo = w.lower(i, j);
      const double hi = w.upper(i, j);
      double v = 0.0;
      if (a < lo)
        v = a - lo;
      else if (a > hi)
        v = a - hi;
      else
        continue;
      gL.row(i) += v * f.R.col(j).transpose();
      gR.col(j) += v * f.L.row(i).transpose();
    }
  return {std::move(gL), std::move(gR)};
}

// Fraction of entries whose reconstruction lies inside its interval.
// With nu > 0 the optimum rests a handful of entries a hair outside
// their bounds (the regulariser pulls until the hinge pushes back), so
// callers measuring solver quality pass a small tolerance.
inline double feasibility_fraction(const FactorPair& f,
                                   const ObservationWindow& w,
                                   double tol = 0.0) {
  check_dims(f, w);
  long ok = 0;
  const long total = static_cast<long>(w.rows()) * w.cols();
  for (int j = 0; j < w.cols(); ++j)
    for (int i = 0; i < w.rows(); ++i) {
      const double a = f.A(i, j);
      if (a >= w.lower(i, j) - tol && a <= w.upper(i, j) + tol) ++ok;
    }
  return total == 0 ? 1.0 : static_cast<double>(ok) / total;
}

}  // namespace lrp
