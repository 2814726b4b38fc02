#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lrp/model.hpp"

namespace lrp {

using IntGrid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

// Histogram of candidate thresholds accumulated by 3x3 neighbourhood
// voting over an integer residual map.
struct ThresholdHistogram {
  std::vector<long> bins;  // index = residual value
  int mode_left = 0;       // least-width region holding half the mass
  int mode_right = 0;
  int chosen_threshold = kNoThreshold;

  static constexpr int kNoThreshold = -1;

  long total_mass() const {
    long s = 0;
    for (long b : bins) s += b;
    return s;
  }
};

// Each interior pixel that is the maximum of its 3x3 neighbourhood votes
// for every threshold in [v3+1 .. v1], where v2, v3 are the second and
// third largest neighbourhood values. Border pixels do not vote.
inline ThresholdHistogram build_histogram(const IntGrid& residual_map) {
  ThresholdHistogram h;
  const int H = static_cast<int>(residual_map.rows());
  const int W = static_cast<int>(residual_map.cols());
  const int max_val = (H > 0 && W > 0) ? residual_map.maxCoeff() : 0;
  h.bins.assign(static_cast<size_t>(std::max(max_val + 2, 1)), 0);

  int nb[9];
  for (int i = 1; i + 1 < H; ++i)
    for (int j = 1; j + 1 < W; ++j) {
      const int c = residual_map(i, j);
      int cnt = 0;
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int v = residual_map(i + di, j + dj);
          if (v > c) {
            is_max = false;
            break;
          }
          nb[cnt++] = v;
        }
      if (!is_max) continue;
      std::nth_element(nb, nb + 2, nb + 9, std::greater<int>());
      const int v3 = nb[2];
      for (int b = v3 + 1; b <= c; ++b) ++h.bins[b];
    }
  return h;
}

// Locate the least-width window around the mode holding >= 50% of the
// histogram mass (leftmost on ties), then scan right from its right
// edge for the first bin whose count drops below fraction * n_pixels.
inline int choose_threshold(ThresholdHistogram& h, double fraction,
                            long n_pixels) {
  const long total = h.total_mass();
  if (total == 0) {
    h.chosen_threshold = ThresholdHistogram::kNoThreshold;
    return h.chosen_threshold;
  }
  const long target = (total + 1) / 2;  // ceil(total/2)
  const int nbins = static_cast<int>(h.bins.size());

  int best_l = 0, best_r = nbins - 1;
  int best_w = nbins;
  long sum = 0;
  int l = 0;
  for (int r = 0; r < nbins; ++r) {
    sum += h.bins[r];
    while (sum - h.bins[l] >= target) sum -= h.bins[l++];
    if (sum >= target && r - l < best_w) {
      best_w = r - l;
      best_l = l;
      best_r = r;
    }
  }
  h.mode_left = best_l;
  h.mode_right = best_r;

  const double cutoff = fraction * static_cast<double>(n_pixels);
  int t = h.mode_right;
  while (t < nbins && static_cast<double>(h.bins[t]) >= cutoff) ++t;
  h.chosen_threshold = t;
  return t;
}

struct DetectionResult {
  EventMask mask;
  int threshold = ThresholdHistogram::kNoThreshold;
  ThresholdHistogram histogram;
};

// Full thresholding pass: residuals below the chosen threshold are
// consistent with the model (true); the degenerate all-zero histogram
// falls back to an all-true mask.
inline DetectionResult detect_events(const IntGrid& residual_map,
                                     double fraction) {
  DetectionResult out;
  out.histogram = build_histogram(residual_map);
  const long n_pixels =
      static_cast<long>(residual_map.rows()) * residual_map.cols();
  out.threshold = choose_threshold(out.histogram, fraction, n_pixels);

  out.mask.y = BoolRow::Constant(n_pixels, true);
  if (out.threshold != ThresholdHistogram::kNoThreshold) {
    long idx = 0;
    for (int i = 0; i < residual_map.rows(); ++i)
      for (int j = 0; j < residual_map.cols(); ++j, ++idx)
        out.mask.y(idx) = residual_map(i, j) < out.threshold;
  }
  return out;
}

// Row-major quantisation of real residuals onto the voting grid.
inline IntGrid quantize_residuals(const RowVector& res, int height, int width,
                                  double scale) {
  IntGrid grid(height, width);
  long idx = 0;
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j, ++idx) {
      const long v = std::llround(res(idx) * scale);
      grid(i, j) = static_cast<int>(std::max(v, 0L));
    }
  return grid;
}

}  // namespace lrp
