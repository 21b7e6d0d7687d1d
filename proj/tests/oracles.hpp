#pragma once

// Independent reference computations used to freeze expected values. None
// of these call into the code paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

// Closed-form magnitude of a digital Butterworth filter designed by the
// pre-warped bilinear transform: |H| = 1 / sqrt(1 + (W / Wc)^(2n)) for a
// low-pass, with W = tan(pi f / fs).
inline double butterworth_lowpass_gain(double f, double fc, double fs, int order) {
  const double r = std::tan(std::numbers::pi * f / fs) / std::tan(std::numbers::pi * fc / fs);
  return 1.0 / std::sqrt(1.0 + std::pow(r, 2 * order));
}

inline double butterworth_highpass_gain(double f, double fc, double fs, int order) {
  if (f == 0.0) return 0.0;
  const double r = std::tan(std::numbers::pi * fc / fs) / std::tan(std::numbers::pi * f / fs);
  return 1.0 / std::sqrt(1.0 + std::pow(r, 2 * order));
}

inline double bandpass_gain(double f, double lo, double hi, double fs, int order) {
  return butterworth_highpass_gain(f, lo, fs, order) * butterworth_lowpass_gain(f, hi, fs, order);
}

// Amplitude of the f-Hz component of y by projection onto sin/cos; exact
// for a steady-state sinusoid observed over whole periods.
inline double tone_amplitude(const std::vector<double>& y, std::size_t first, double f, double fs) {
  double s = 0.0, c = 0.0;
  const std::size_t n = y.size() - first;
  for (std::size_t i = first; i < y.size(); ++i) {
    const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs;
    s += y[i] * std::sin(ph);
    c += y[i] * std::cos(ph);
  }
  return 2.0 / static_cast<double>(n) * std::hypot(s, c);
}

// Window start offsets by walking the stream one step at a time.
inline std::vector<std::size_t> enumerate_window_starts(std::size_t n, std::size_t len, std::size_t step) {
  std::vector<std::size_t> starts;
  std::size_t next = 0;
  for (std::size_t i = 0; i + len <= n; ++i) {
    if (i == next) {
      starts.push_back(i);
      next += step;
    }
  }
  return starts;
}

// Best training accuracy over every axis-aligned tree of depth <= 2 whose
// thresholds are midpoints of distinct feature values (rows x features,
// integer labels).
inline double best_depth2_accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes) {
  const std::size_t n = x.size(), d = x.front().size();
  auto thresholds = [&](std::size_t f) {
    std::vector<double> v;
    for (const auto& row : x) v.push_back(row[f]);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<double> t;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) t.push_back((v[i] + v[i + 1]) / 2.0);
    t.push_back(std::numeric_limits<double>::infinity());  // "no split"
    return t;
  };
  auto majority_correct = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> counts(static_cast<std::size_t>(classes), 0);
    for (auto r : rows) ++counts[static_cast<std::size_t>(y[r])];
    return rows.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  };
  auto best_stump = [&](const std::vector<std::size_t>& rows) {
    int best = majority_correct(rows);
    for (std::size_t f = 0; f < d; ++f) {
      for (double t : thresholds(f)) {
        std::vector<std::size_t> l, r;
        for (auto i : rows) (x[i][f] <= t ? l : r).push_back(i);
        best = std::max(best, majority_correct(l) + majority_correct(r));
      }
    }
    return best;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  int best = best_stump(all);
  for (std::size_t f = 0; f < d; ++f) {
    for (double t : thresholds(f)) {
      std::vector<std::size_t> l, r;
      for (auto i : all) (x[i][f] <= t ? l : r).push_back(i);
      best = std::max(best, best_stump(l) + best_stump(r));
    }
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

// Exhaustive argmax of sum_s R(s, a) b(s), first maximum wins.
inline std::size_t argmax_expected_reward(const std::vector<double>& b, const std::vector<std::vector<double>>& r) {
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < r.front().size(); ++a) {
    double v = 0.0;
    for (std::size_t s = 0; s < b.size(); ++s) v += r[s][a] * b[s];
    if (v > best_v) {
      best_v = v;
      best = a;
    }
  }
  return best;
}

}  // namespace oracle
