/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/datamodel.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace earnav
{

// ---------------------------------------------------------------------------
// Zero-phase low-pass
// ---------------------------------------------------------------------------

/// Pole of the one-pole section y[n] = (1-a) x[n] + a y[n-1]. Two such sections run
/// forward then backward (four passes in total), so the combined amplitude response is
/// |H1|^4; `a` is chosen so that this equals 1/sqrt(2) (-3 dB) at the cutoff.
inline double critically_damped_pole(double fs, double cutoff_hz)
{
  if (!(cutoff_hz > 0.0) || !(fs > 2.0 * cutoff_hz))
    throw InputError("sampling rate too low for low-pass cutoff (need fs > 2 * cutoff)");
  const double k = std::pow(2.0, -0.25);  // |H1|^2 at the cutoff
  const double c = std::cos(kTwoPi * cutoff_hz / fs);
  const double p = 1.0 - k * c;
  const double q = 1.0 - k;
  return (p - std::sqrt(p * p - q * q)) / q;
}

/// Second-order critically damped IIR (double real pole) applied forward and backward.
/// Each pass is initialized at steady state on its first input value.
inline std::vector<double> zero_phase_lowpass(std::span<const double> x, double fs, double cutoff_hz)
{
  const double a = critically_damped_pole(fs, cutoff_hz);
  std::vector<double> y(x.begin(), x.end());
  if (y.empty())
    return y;
  auto one_pole = [a](std::vector<double>& v, bool reverse) {
    const auto n = v.size();
    double state = reverse ? v[n - 1] : v[0];
    for (std::size_t k = 0; k < n; ++k)
    {
      double& s = reverse ? v[n - 1 - k] : v[k];
      state = (1.0 - a) * s + a * state;
      s = state;
    }
  };
  one_pole(y, false);
  one_pole(y, false);
  one_pole(y, true);
  one_pole(y, true);
  return y;
}

// ---------------------------------------------------------------------------
// Peaks and topographic prominence
// ---------------------------------------------------------------------------

/// Strict local maxima; flat tops report their middle sample. Edge samples are never peaks.
inline std::vector<std::size_t> find_local_maxima(std::span<const double> x)
{
  std::vector<std::size_t> peaks;
  if (x.size() < 3)
    return peaks;
  std::size_t i = 1;
  const std::size_t last = x.size() - 1;
  while (i < last)
  {
    if (x[i - 1] < x[i])
    {
      std::size_t ahead = i + 1;
      while (ahead < last && x[ahead] == x[i])
        ++ahead;
      if (x[ahead] < x[i])
      {
        peaks.push_back((i + ahead - 1) / 2);
        i = ahead;
        continue;
      }
    }
    ++i;
  }
  return peaks;
}

/// Height of the peak above the higher of its two bases. Each base is the minimum between
/// the peak and the nearest strictly higher sample on that side (or the series edge).
inline double peak_prominence(std::span<const double> x, std::size_t peak)
{
  const double h = x[peak];
  double left_min = h;
  for (std::size_t j = peak; j-- > 0;)
  {
    if (x[j] > h)
      break;
    left_min = std::min(left_min, x[j]);
  }
  double right_min = h;
  for (std::size_t j = peak + 1; j < x.size(); ++j)
  {
    if (x[j] > h)
      break;
    right_min = std::min(right_min, x[j]);
  }
  return h - std::max(left_min, right_min);
}

// ---------------------------------------------------------------------------
// Strides
// ---------------------------------------------------------------------------

/// Stride spans from sorted peak indices: boundaries sit at midpoints between consecutive
/// peaks, and no span extends more than half the median peak spacing (plus one sample of
/// rounding slack) from its own peak.
/// A lone peak spans the whole series.
inline void assign_stride_spans(std::vector<StrideEvent>& strides, std::size_t n)
{
  if (strides.empty())
    return;
  if (strides.size() == 1)
  {
    strides[0].begin = 0;
    strides[0].end = n;
    return;
  }
  std::vector<std::size_t> gaps;
  for (std::size_t k = 1; k < strides.size(); ++k)
    gaps.push_back(strides[k].peak_index - strides[k - 1].peak_index);
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
  const std::size_t half = gaps[gaps.size() / 2] / 2 + 1;

  for (std::size_t k = 0; k < strides.size(); ++k)
  {
    const std::size_t p = strides[k].peak_index;
    std::size_t lo = p >= half ? p - half : 0;
    std::size_t hi = std::min(n, p + half);
    if (k > 0)
      lo = std::max(lo, (strides[k - 1].peak_index + p + 1) / 2);
    if (k + 1 < strides.size())
      hi = std::min(hi, (p + strides[k + 1].peak_index + 1) / 2);
    strides[k].begin = lo;
    strides[k].end = std::max(hi, lo + 1);
  }
}

/// Low-pass the accelerometer norm, take local maxima, keep those whose prominence
/// reaches the threshold, then assign stride spans.
inline std::vector<StrideEvent> detect_strides(std::span<const double> times, std::span<const double> accel_norm,
                                               double fs, double prominence_threshold, double cutoff_hz = 3.0)
{
  if (times.size() != accel_norm.size())
    throw InputError("detect_strides: misaligned series");
  const auto filtered = zero_phase_lowpass(accel_norm, fs, cutoff_hz);
  std::vector<StrideEvent> strides;
  for (std::size_t p : find_local_maxima(filtered))
  {
    const double prom = peak_prominence(filtered, p);
    if (prom >= prominence_threshold)
      strides.push_back({times[p], p, 0, 0, prom});
  }
  assign_stride_spans(strides, accel_norm.size());
  return strides;
}

inline double stride_length(double height_m)
{
  if (!(height_m >= 0.5 && height_m <= 2.5))
    throw InputError("user height must be within [0.5, 2.5] m");
  return 0.43 * height_m;
}

/// Every timestamp in a stride span [i, j) receives stride_len / (j - i); others get 0.
inline std::vector<double> per_timestamp_distance(std::span<const StrideEvent> strides, std::size_t n,
                                                  double stride_len)
{
  std::vector<double> d(n, 0.0);
  std::size_t prev_end = 0;
  for (const auto& s : strides)
  {
    if (s.begin >= s.end || s.end > n)
      throw InputError("per_timestamp_distance: invalid stride span");
    if (s.begin < prev_end)
      throw InputError("per_timestamp_distance: overlapping spans");
    const double step = stride_len / static_cast<double>(s.end - s.begin);
    for (std::size_t i = s.begin; i < s.end; ++i)
      d[i] = step;
    prev_end = s.end;
  }
  return d;
}

/// S_t = S_{t-1} + d_t (cos psi_t, sin psi_t), accumulated from the origin.
inline Track integrate_track(std::span<const double> times, std::span<const double> distance,
                             std::span<const Angle> heading)
{
  if (distance.size() != times.size() || heading.size() != times.size())
    throw InputError("integrate_track: misaligned series");
  Track tr;
  tr.t.assign(times.begin(), times.end());
  tr.pos.reserve(times.size());
  Position2D s;
  for (std::size_t i = 0; i < times.size(); ++i)
  {
    s.x += distance[i] * std::cos(heading[i].rad());
    s.y += distance[i] * std::sin(heading[i].rad());
    tr.pos.push_back(s);
  }
  return tr;
}

/// Trapezoidal double integration of world-frame planar acceleration from rest,
/// without zero-velocity resets.
inline Track kinematics_track_world(std::span<const double> times, std::span<const Eigen::Vector2d> accel_world)
{
  if (accel_world.size() != times.size())
    throw InputError("kinematics_track: misaligned series");
  Track tr;
  tr.t.assign(times.begin(), times.end());
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < times.size(); ++i)
  {
    if (i > 0)
    {
      const double dt = times[i] - times[i - 1];
      const Eigen::Vector2d v_next = v + 0.5 * dt * (accel_world[i - 1] + accel_world[i]);
      p += 0.5 * dt * (v + v_next);
      v = v_next;
    }
    tr.pos.push_back({p.x(), p.y()});
  }
  return tr;
}

/// Kinematics baseline from level-frame (forward, left) acceleration with gravity removed;
/// the heading series rotates each sample into the world frame.
inline Track kinematics_track(std::span<const double> times, std::span<const Eigen::Vector2d> accel_level,
                              std::span<const Angle> heading)
{
  if (accel_level.size() != times.size() || heading.size() != times.size())
    throw InputError("kinematics_track: misaligned series");
  std::vector<Eigen::Vector2d> world;
  world.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    world.push_back(Eigen::Rotation2Dd(heading[i].rad()) * accel_level[i]);
  return kinematics_track_world(times, world);
}

}  // namespace earnav
