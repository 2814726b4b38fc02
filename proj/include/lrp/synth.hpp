#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "lrp/completion.hpp"
#include "lrp/model.hpp"

namespace lrp {

enum class SparsePattern { Blob, Scattered };

// Generative model: frames are c * R(k) plus uniform noise, with a
// sparse fraction of sensors shifted by a gross magnitude; R(k) rotates
// by drift_rate radians per frame within a fixed planar pair of
// directions.
struct SyntheticSpec {
  int T = 35;
  int n = 1;
  int N = 1024;
  int r = 4;
  double delta = 5.0;
  double sparse_fraction = 0.0;   // rho_s in [0, 0.5)
  double sparse_magnitude = 0.0;  // > 2*delta for identifiable events
  double drift_rate = 0.0;        // radians per frame
  std::uint64_t rng_seed = 0;
  SparsePattern pattern = SparsePattern::Blob;
  int grid_height = 0;  // blob placement grid; 0 = square-ish default
  int grid_width = 0;

  void validate() const {
    if (T < 1 || n < 1 || N < 1 || r < 1)
      throw std::invalid_argument("bad synthetic dimensions");
    if (sparse_fraction < 0.0 || sparse_fraction >= 0.5)
      throw std::invalid_argument("sparse_fraction must be in [0, 0.5)");
    if (sparse_fraction > 0.0 && sparse_magnitude <= 2.0 * delta)
      throw std::invalid_argument(
          "sparse_magnitude must exceed 2*delta for identifiable events");
    if (drift_rate < 0.0) throw std::invalid_argument("negative drift");
  }
};

struct SyntheticFrame {
  FrameVector frame;
  EventMask truth;     // true = clean, false = corrupted sensor
  RowVector true_coeffs;
};

// Streaming generator; subspace() exposes the current true R(k).
class StreamGenerator {
 public:
  explicit StreamGenerator(const SyntheticSpec& spec)
      : spec_(spec), rng_(spec.rng_seed) {
    spec_.validate();
    const int d = spec_.n * spec_.N;
    R_ = Matrix::Zero(spec_.r, d);
    // Row 0 carries a smooth mid-range background, the rest are
    // small-amplitude smooth variation patterns.
    R_.row(0) = smooth_row(d, 60.0, 190.0);
    for (int q = 1; q < spec_.r; ++q)
      R_.row(q) = smooth_row(d, -15.0, 15.0);
    // Fixed rotation plane for the drift.
    if (spec_.drift_rate > 0.0) {
      u_ = random_unit(d);
      w_ = random_unit(d);
      w_ -= w_.dot(u_) * u_;
      w_.normalize();
    }
    if (spec_.grid_height > 0 && spec_.grid_width > 0 &&
        spec_.grid_height * spec_.grid_width == spec_.N) {
      gh_ = spec_.grid_height;
      gw_ = spec_.grid_width;
    } else {
      gh_ = static_cast<int>(std::floor(std::sqrt(double(spec_.N))));
      while (gh_ > 1 && spec_.N % gh_ != 0) --gh_;
      gw_ = spec_.N / gh_;
    }
  }

  const Matrix& subspace() const { return R_; }
  const SyntheticSpec& spec() const { return spec_; }

  SyntheticFrame next() {
    const int d = spec_.n * spec_.N;
    if (spec_.drift_rate > 0.0 && k_ > 0) rotate_subspace();

    std::uniform_real_distribution<double> coeff(-1.0, 1.0);
    std::uniform_real_distribution<double> noise(-spec_.delta, spec_.delta);
    RowVector c(spec_.r);
    c(0) = 1.0;
    for (int q = 1; q < spec_.r; ++q) c(q) = coeff(rng_);

    SyntheticFrame out;
    out.true_coeffs = c;
    out.frame.n = spec_.n;
    out.frame.N = spec_.N;
    out.frame.x = c * R_;
    if (spec_.delta > 0.0)
      for (int j = 0; j < d; ++j) out.frame.x(j) += noise(rng_);

    out.truth.y = BoolRow::Constant(spec_.N, true);
    if (spec_.sparse_fraction > 0.0) corrupt(out);
    ++k_;
    return out;
  }

 private:
  void corrupt(SyntheticFrame& out) {
    const long want =
        std::lround(spec_.sparse_fraction * static_cast<double>(spec_.N));
    if (want < 1) return;
    std::vector<int> sensors;
    if (spec_.pattern == SparsePattern::Scattered) {
      std::vector<int> all(spec_.N);
      std::iota(all.begin(), all.end(), 0);
      std::sample(all.begin(), all.end(), std::back_inserter(sensors), want,
                  rng_);
    } else {
      // Contiguous rectangle of about want sensors on the grid.
      int bh = std::max(1, static_cast<int>(std::floor(std::sqrt(double(want)))));
      bh = std::min(bh, gh_);
      int bw = std::min<int>(gw_, static_cast<int>((want + bh - 1) / bh));
      std::uniform_int_distribution<int> row(0, gh_ - bh);
      std::uniform_int_distribution<int> col(0, gw_ - bw);
      const int r0 = row(rng_), c0 = col(rng_);
      for (int i = 0; i < bh; ++i)
        for (int j = 0; j < bw; ++j)
          sensors.push_back((r0 + i) * gw_ + (c0 + j));
    }
    std::uniform_int_distribution<int> sign(0, 1);
    const double shift =
        (sign(rng_) == 0 ? 1.0 : -1.0) * spec_.sparse_magnitude;
    for (int s : sensors) {
      out.truth.y(s) = false;
      for (int e = 0; e < spec_.n; ++e)
        out.frame.x(s * spec_.n + e) += shift;
    }
  }

  void rotate_subspace() {
    const double th = spec_.drift_rate;
    const double cm1 = std::cos(th) - 1.0, s = std::sin(th);
    for (int q = 0; q < spec_.r; ++q) {
      const double pu = R_.row(q).dot(u_);
      const double pw = R_.row(q).dot(w_);
      R_.row(q) += cm1 * (pu * u_.transpose() + pw * w_.transpose()) +
                   s * (pu * w_.transpose() - pw * u_.transpose());
    }
  }

  RowVector smooth_row(int d, double lo, double hi) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    RowVector raw(d);
    for (int j = 0; j < d; ++j) raw(j) = unif(rng_);
    // Three box-smoothing passes for spatial coherence.
    for (int pass = 0; pass < 3; ++pass) {
      RowVector sm = raw;
      for (int j = 1; j + 1 < d; ++j)
        sm(j) = (raw(j - 1) + raw(j) + raw(j + 1)) / 3.0;
      raw = sm;
    }
    const double mn = raw.minCoeff(), mx = raw.maxCoeff();
    const double span = mx > mn ? mx - mn : 1.0;
    return RowVector(lo + (raw.array() - mn) / span * (hi - lo));
  }

  Eigen::VectorXd random_unit(int d) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd v(d);
    for (int j = 0; j < d; ++j) v(j) = g(rng_);
    v.normalize();
    return v;
  }

  SyntheticSpec spec_;
  Rng rng_;
  Matrix R_;
  Eigen::VectorXd u_, w_;
  int gh_ = 1, gw_ = 1;
  long k_ = 0;
};

inline std::vector<SyntheticFrame> generate_stream(const SyntheticSpec& spec,
                                                   int count) {
  StreamGenerator gen(spec);
  std::vector<SyntheticFrame> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) out.push_back(gen.next());
  return out;
}

// Reference optimum for tiny instances: full-gradient descent with
// backtracking line search from 32 restarts. Independent of the
// coordinate-descent path; used as f* in convergence tests.
inline FactorPair brute_force_complete(const ObservationWindow& w, int rank,
                                       double nu,
                                       std::uint64_t seed = 12345) {
  if (static_cast<long>(w.rows()) * w.cols() > 64)
    throw std::invalid_argument("brute_force_complete: instance too large");
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);

  FactorPair best;
  double best_f = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < 32; ++restart) {
    FactorPair f(w.rows(), rank, w.cols());
    if (restart > 0) {
      for (int i = 0; i < f.L.size(); ++i) f.L.data()[i] = g(rng);
      for (int i = 0; i < f.R.size(); ++i) f.R.data()[i] = g(rng);
      f.resync_cache();
    }
    double fv = objective_value(f, w, nu);
    for (int iter = 0; iter < 20000; ++iter) {
      auto [gL, gR] = objective_gradient(f, w, nu);
      const double gnorm =
          std::max(gL.cwiseAbs().maxCoeff(), gR.cwiseAbs().maxCoeff());
      if (gnorm <= 1e-12) break;
      double t = 1.0;
      bool moved = false;
      for (int h = 0; h < 60; ++h, t *= 0.5) {
        FactorPair trial(f.L - t * gL, f.R - t * gR);
        const double tv = objective_value(trial, w, nu);
        if (tv < fv) {
          f = std::move(trial);
          fv = tv;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (fv < best_f) {
      best_f = fv;
      best = f;
    }
  }
  return best;
}

struct MaskMetrics {
  double recall = 0.0;
  double specificity = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

// Confusion-matrix rates aggregated over frames. Positive = event;
// masks store true-for-consistent, so polarity is flipped here.
inline MaskMetrics score_masks(const std::vector<EventMask>& predicted,
                               const std::vector<EventMask>& truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("score_masks: empty or mismatched inputs");
  MaskMetrics m;
  for (size_t k = 0; k < predicted.size(); ++k) {
    if (predicted[k].size() != truth[k].size())
      throw std::invalid_argument("score_masks: mask size mismatch");
    for (int i = 0; i < predicted[k].size(); ++i) {
      const bool pred_event = !predicted[k].y(i);
      const bool true_event = !truth[k].y(i);
      if (pred_event && true_event)
        ++m.tp;
      else if (pred_event)
        ++m.fp;
      else if (true_event)
        ++m.fn;
      else
        ++m.tn;
    }
  }
  if (m.tp + m.fn > 0) m.recall = double(m.tp) / double(m.tp + m.fn);
  if (m.tn + m.fp > 0) m.specificity = double(m.tn) / double(m.tn + m.fp);
  m.fpr = 1.0 - m.specificity;
  if (m.tp + m.fn > 0) m.fnr = double(m.fn) / double(m.tp + m.fn);
  if (m.tp + m.fp > 0) m.precision = double(m.tp) / double(m.tp + m.fp);
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

}  // namespace lrp
