#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lrp {

// Loss used when projecting a new frame onto the current subspace.
enum class ProjectionNorm { L1, L2, GemanMcLure };

inline const char* to_string(ProjectionNorm p) {
  switch (p) {
    case ProjectionNorm::L1: return "l1";
    case ProjectionNorm::L2: return "l2";
    case ProjectionNorm::GemanMcLure: return "geman-mclure";
  }
  return "?";
}

inline ProjectionNorm projection_norm_from_string(const std::string& s) {
  if (s == "l1" || s == "L1") return ProjectionNorm::L1;
  if (s == "l2" || s == "L2") return ProjectionNorm::L2;
  if (s == "geman-mclure" || s == "gm") return ProjectionNorm::GemanMcLure;
  throw std::invalid_argument("unknown projection norm: " + s);
}

// Knobs of the streaming tracker. Field names double as config-file keys.
struct PursuitConfig {
  int window_len = 35;         // T, rows of the sliding observation matrix
  int rank = 4;                // r
  double delta = 5.0;          // half-width of the uniform measurement noise
  double reg_weight = 0.1;     // nu, Frobenius regularisation weight
  int epochs_per_update = 1;   // completion sweeps per incoming frame
  ProjectionNorm projection_norm = ProjectionNorm::L1;
  int subsample_period = 100;  // ratio dim(x)/dim(x~) in the projection
  double threshold_fraction = 0.0025;
  bool backtracking = true;
  std::uint64_t rng_seed = 0;

  // Natural data range; bounds for absent entries and residual quantisation.
  double range_lo = 0.0;
  double range_hi = 255.0;
  double residual_scale = 1.0;  // residual -> integer bin factor

  // Sensor grid used by the 3x3 threshold voting; height*width == N,
  // or height == 1 for non-imagery streams (no interior pixels, no votes).
  int grid_height = 1;
  int grid_width = 0;

  int warmup_passes = 3;

  void validate() const {
    if (window_len < 1 || rank < 1 || window_len < rank)
      throw std::invalid_argument("require window_len >= rank >= 1");
    if (delta < 0.0) throw std::invalid_argument("delta must be >= 0");
    if (reg_weight <= 0.0) throw std::invalid_argument("reg_weight must be > 0");
    if (epochs_per_update < 1)
      throw std::invalid_argument("epochs_per_update must be >= 1");
    if (subsample_period < 1)
      throw std::invalid_argument("subsample_period must be >= 1");
    if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
      throw std::invalid_argument("threshold_fraction must be in (0,1)");
    if (range_hi < range_lo)
      throw std::invalid_argument("range_hi must be >= range_lo");
  }
};

}  // namespace lrp
