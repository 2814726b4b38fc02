#pragma once

#include <chrono>
#include <stdexcept>
#include <vector>

#include "lrp/completion.hpp"
#include "lrp/config.hpp"
#include "lrp/detection.hpp"
#include "lrp/model.hpp"
#include "lrp/projection.hpp"

namespace lrp {

struct StepRecord {
  long frame_index = 0;
  int threshold = ThresholdHistogram::kNoThreshold;
  int event_count = 0;
  double objective = 0.0;
  double feasibility = 1.0;
  double millis = 0.0;
};

// One streaming session per data stream: projection, thresholding,
// window maintenance and the warm-started completion, one frame at a
// time. Single writer; not reentrant.
class PursuitSession {
 public:
  PursuitSession(const PursuitConfig& cfg,
                 const std::vector<FrameVector>& warmup_frames)
      : cfg_(cfg),
        window_(make_window(cfg, warmup_frames)),
        factors_(cfg.window_len, cfg.rank,
                 warmup_frames.front().dim()),
        n_(warmup_frames.front().n),
        N_(warmup_frames.front().N),
        rng_(cfg.rng_seed) {
    // Warmup: ridge ALS seed, then 1 epoch per frame for the configured
    // number of passes. A literal all-zero start would never move: the
    // coordinate steps all have zero gradient there.
    factors_ = als_init(window_, cfg_.rank, cfg_.reg_weight, rng_);
    const long epochs =
        static_cast<long>(cfg_.warmup_passes) * warmup_frames.size();
    const SweepPlan plan =
        SweepPlan::epoch(window_.rows(), window_.cols(), cfg_.rank);
    for (long e = 0; e < epochs * cfg_.epochs_per_update; ++e)
      sweep(factors_, window_, cfg_.reg_weight, plan, rng_,
            cfg_.backtracking);
    k_ = static_cast<long>(warmup_frames.size());
    refresh_metrics(0.0);
  }

  // Process one frame: project, threshold residuals, roll the window
  // with only the accepted entries, and update the factors.
  EventMask step(const FrameVector& x) {
    if (x.n != n_ || x.N != N_)
      throw std::invalid_argument("frame dimensions do not match session");
    const auto t0 = std::chrono::steady_clock::now();

    const ProjectionResult pr =
        project(x, factors_.R, cfg_.projection_norm, cfg_.subsample_period,
                rng_);
    const RowVector res = residuals(x, pr.v, factors_.R);

    int gh = cfg_.grid_height, gw = cfg_.grid_width;
    if (gh < 1 || gw < 1 || gh * gw != N_) {
      gh = 1;
      gw = N_;
    }
    const DetectionResult det = detect_events(
        quantize_residuals(res, gh, gw, cfg_.residual_scale),
        cfg_.threshold_fraction);

    // Accepted sensors contribute values; flagged ones enter as absent.
    BoolRow present(window_.cols());
    for (int i = 0; i < N_; ++i)
      for (int e = 0; e < n_; ++e) present(i * n_ + e) = det.mask.y(i);
    window_.roll(x.x, present);

    shift_factors(pr.v);
    const SweepPlan plan =
        SweepPlan::epoch(window_.rows(), window_.cols(), cfg_.rank);
    for (int e = 0; e < cfg_.epochs_per_update; ++e)
      sweep(factors_, window_, cfg_.reg_weight, plan, rng_,
            cfg_.backtracking);

    ++k_;
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    refresh_metrics(ms);
    last_.threshold = det.threshold;
    last_.event_count = det.mask.event_count();
    return det.mask;
  }

  const StepRecord& track_metrics() const { return last_; }
  const PursuitConfig& config() const { return cfg_; }
  const ObservationWindow& window() const { return window_; }
  const FactorPair& factors() const { return factors_; }
  long frame_index() const { return k_; }
  int sensors() const { return N_; }
  int entries_per_sensor() const { return n_; }

 private:
  static ObservationWindow make_window(
      const PursuitConfig& cfg, const std::vector<FrameVector>& warmup) {
    cfg.validate();
    if (warmup.empty())
      throw std::invalid_argument("warmup requires at least one frame");
    const int cols = warmup.front().dim();
    ObservationWindow w(cfg.window_len, cols, cfg.delta, cfg.range_lo,
                        cfg.range_hi);
    // Fill from the bottom with the most recent warmup frames; earlier
    // rows stay absent when warmup is shorter than the window.
    const int T = cfg.window_len;
    const int count = std::min<int>(T, static_cast<int>(warmup.size()));
    const int first = static_cast<int>(warmup.size()) - count;
    for (int i = 0; i < count; ++i) {
      const FrameVector& fr = warmup[first + i];
      if (fr.dim() != cols)
        throw std::invalid_argument("inconsistent warmup frame dimensions");
      w.set_row(T - count + i, fr.x);
    }
    return w;
  }

  // Roll L (and the cache) in lockstep with the window; the new bottom
  // row starts from the projection coefficients.
  void shift_factors(const RowVector& v) {
    const int T = factors_.rows();
    for (int i = 0; i + 1 < T; ++i) {
      factors_.L.row(i) = factors_.L.row(i + 1);
      factors_.A.row(i) = factors_.A.row(i + 1);
    }
    factors_.L.row(T - 1) = v;
    factors_.A.row(T - 1) = v * factors_.R;
  }

  void refresh_metrics(double ms) {
    last_.frame_index = k_;
    last_.objective = objective_value(factors_, window_, cfg_.reg_weight);
    last_.feasibility = feasibility_fraction(factors_, window_);
    last_.millis = ms;
  }

  PursuitConfig cfg_;
  ObservationWindow window_;
  FactorPair factors_;
  int n_, N_;
  Rng rng_;
  long k_ = 0;
  StepRecord last_;
};

}  // namespace lrp
