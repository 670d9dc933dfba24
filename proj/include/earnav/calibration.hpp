/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/datamodel.hpp"
#include "earnav/trace_io.hpp"

#include <Eigen/Dense>

#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace earnav
{

// ---------------------------------------------------------------------------
// Accelerometer: a' = L * S * (a - b), L unit lower-triangular, S diagonal
// ---------------------------------------------------------------------------

struct AccelCalib
{
  double alpha_yx = 0.0;
  double alpha_zx = 0.0;
  double alpha_zy = 0.0;
  Vec3 scale = Vec3::Ones();
  Vec3 bias = Vec3::Zero();  // m/s^2

  Mat3 misalignment() const
  {
    Mat3 m = Mat3::Identity();
    m(1, 0) = alpha_yx;
    m(2, 0) = alpha_zx;
    m(2, 1) = alpha_zy;
    return m;
  }

  Mat3 matrix() const { return misalignment() * scale.asDiagonal(); }

  bool within_sanity_bounds() const
  {
    for (int i = 0; i < 3; ++i)
    {
      if (!(scale[i] > 0.5 && scale[i] < 2.0) || !(std::abs(bias[i]) < 2.0))
        return false;
    }
    return std::abs(alpha_yx) < 0.2 && std::abs(alpha_zx) < 0.2 && std::abs(alpha_zy) < 0.2;
  }

  static AccelCalib identity() { return {}; }
};

inline Vec3 apply_accel_calibration(const Vec3& a, const AccelCalib& c) { return c.matrix() * (a - c.bias); }

struct AccelFitOptions
{
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;
  double lambda_init = 1e-3;
  double lambda_factor = 10.0;
  std::size_t min_orientations = 9;
  double static_variance = 0.05;       // per-axis accel variance bound for a clip, (m/s^2)^2
  double distinct_angle_deg = 5.0;     // clip means closer than this count as one orientation
};

struct AccelFit
{
  AccelCalib calib;
  double rms_residual = 0.0;  // sqrt(mean((|a'| - g)^2)) over clip means
  int iterations = 0;
  static constexpr const char* residual_definition = "rms(|a'|-g) over static clip means";
};

namespace detail
{
inline Eigen::Matrix<double, 9, 1> pack(const AccelCalib& c)
{
  Eigen::Matrix<double, 9, 1> p;
  p << c.alpha_yx, c.alpha_zx, c.alpha_zy, c.scale, c.bias;
  return p;
}

inline AccelCalib unpack(const Eigen::Matrix<double, 9, 1>& p)
{
  AccelCalib c;
  c.alpha_yx = p[0];
  c.alpha_zx = p[1];
  c.alpha_zy = p[2];
  c.scale = p.segment<3>(3);
  c.bias = p.segment<3>(6);
  return c;
}

// Residuals r_k = |T (m_k - b)| - g and their analytic Jacobian.
inline void gravity_residuals(const Eigen::Matrix<double, 9, 1>& p, std::span<const Vec3> means,
                              Eigen::VectorXd& r, Eigen::MatrixXd& J)
{
  const auto c = unpack(p);
  const Mat3 T = c.matrix();
  const auto n = static_cast<Eigen::Index>(means.size());
  r.resize(n);
  J.resize(n, 9);
  for (Eigen::Index k = 0; k < n; ++k)
  {
    const Vec3 u = means[static_cast<std::size_t>(k)] - c.bias;
    const Vec3 v = T * u;
    const double nv = v.norm();
    r[k] = nv - kGravity;
    const Vec3 g = v / nv;
    const double sx = c.scale[0], sy = c.scale[1];
    Eigen::Matrix<double, 3, 9> dv = Eigen::Matrix<double, 3, 9>::Zero();
    dv(1, 0) = sx * u[0];
    dv(2, 1) = sx * u[0];
    dv(2, 2) = sy * u[1];
    dv.col(3) = Vec3(u[0], c.alpha_yx * u[0], c.alpha_zx * u[0]);
    dv.col(4) = Vec3(0.0, u[1], c.alpha_zy * u[1]);
    dv.col(5) = Vec3(0.0, 0.0, u[2]);
    dv.block<3, 3>(0, 6) = -T;
    J.row(k) = g.transpose() * dv;
  }
}

inline std::size_t count_distinct_orientations(std::span<const Vec3> means, double min_angle_deg)
{
  std::vector<Vec3> reps;
  const double cos_min = std::cos(deg2rad(min_angle_deg));
  for (const auto& m : means)
  {
    const Vec3 u = m.normalized();
    bool seen = false;
    for (const auto& r : reps)
    {
      if (u.dot(r) > cos_min)
      {
        seen = true;
        break;
      }
    }
    if (!seen)
      reps.push_back(u);
  }
  return reps.size();
}
}  // namespace detail

/// Levenberg-Marquardt fit of the nine-parameter model to static clips, minimizing
/// sum_k (|a'_k| - g)^2 over clip means. Starts from identity/zero.
inline AccelFit fit_accel_calibration(std::span<const std::vector<ImuSample>> clips,
                                      const AccelFitOptions& opt = {})
{
  std::vector<Vec3> means;
  for (const auto& clip : clips)
  {
    if (clip.empty())
      throw InputError("accel calibration: empty clip");
    Vec3 mean = Vec3::Zero();
    for (const auto& s : clip)
      mean += s.acc;
    mean /= static_cast<double>(clip.size());
    Vec3 var = Vec3::Zero();
    for (const auto& s : clip)
      var += (s.acc - mean).cwiseAbs2();
    var /= static_cast<double>(clip.size());
    if (var.maxCoeff() > opt.static_variance)
      throw InputError("accel calibration: clip is not static (variance " + std::to_string(var.maxCoeff()) + ")");
    means.push_back(mean);
  }
  if (means.size() < opt.min_orientations ||
      detail::count_distinct_orientations(means, opt.distinct_angle_deg) < opt.min_orientations)
    throw InputError("insufficient orientations: need at least " + std::to_string(opt.min_orientations) +
                     " distinct static orientations");

  Eigen::Matrix<double, 9, 1> p = detail::pack(AccelCalib::identity());
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  detail::gravity_residuals(p, means, r, J);
  double cost = r.squaredNorm();
  double lambda = opt.lambda_init;
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it)
  {
    const Eigen::Matrix<double, 9, 1> grad = J.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance || cost < 1e-28)
    {
      converged = true;
      break;
    }
    const Eigen::Matrix<double, 9, 9> JtJ = J.transpose() * J;
    bool accepted = false;
    while (!accepted)
    {
      Eigen::Matrix<double, 9, 9> A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 9, 1> step = A.ldlt().solve(-grad);
      const Eigen::Matrix<double, 9, 1> trial = p + step;
      Eigen::VectorXd rt;
      Eigen::MatrixXd Jt;
      detail::gravity_residuals(trial, means, rt, Jt);
      const double trial_cost = rt.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost)
      {
        const double reduction = cost - trial_cost;
        const bool tiny_step = step.norm() < 1e-15 * (p.norm() + 1e-15);
        p = trial;
        r = std::move(rt);
        J = std::move(Jt);
        cost = trial_cost;
        lambda = std::max(lambda / opt.lambda_factor, 1e-15);
        accepted = true;
        if (tiny_step || reduction <= 1e-30)
          converged = true;
      }
      else
      {
        lambda *= opt.lambda_factor;
        if (lambda > 1e16)
        {
          // No descent direction left; accept only if we are at a stationary point.
          converged = grad.lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + cost);
          accepted = true;
        }
      }
    }
    if (converged)
    {
      ++it;
      break;
    }
  }
  if (!converged)
    throw NumericalError("accel calibration: Levenberg-Marquardt did not converge in " +
                         std::to_string(opt.max_iterations) + " iterations");

  AccelFit fit;
  fit.calib = detail::unpack(p);
  fit.iterations = it;
  fit.rms_residual = std::sqrt(cost / static_cast<double>(means.size()));
  if (!fit.calib.within_sanity_bounds())
    throw NumericalError("accel calibration: fitted parameters outside sanity bounds");
  return fit;
}

/// Splits a trace into static clips: consecutive block_s blocks whose per-axis accel
/// variance stays below `variance` and whose means agree within `mean_tol` m/s^2.
inline std::vector<std::vector<ImuSample>> segment_static_clips(const DeviceTrace& trace, double block_s = 0.5,
                                                                double variance = 0.02, double mean_tol = 0.3,
                                                                double min_clip_s = 1.0)
{
  const auto block = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(block_s * trace.rate_hz)));
  std::vector<std::vector<ImuSample>> clips;
  std::vector<ImuSample> current;
  Vec3 current_mean = Vec3::Zero();
  auto flush = [&] {
    if (!current.empty() && current.back().t - current.front().t + 1.0 / trace.rate_hz >= min_clip_s - 1e-9)
      clips.push_back(current);
    current.clear();
  };
  for (std::size_t start = 0; start + block <= trace.samples.size(); start += block)
  {
    Vec3 mean = Vec3::Zero();
    for (std::size_t i = start; i < start + block; ++i)
      mean += trace.samples[i].acc;
    mean /= static_cast<double>(block);
    Vec3 var = Vec3::Zero();
    for (std::size_t i = start; i < start + block; ++i)
      var += (trace.samples[i].acc - mean).cwiseAbs2();
    var /= static_cast<double>(block);
    const bool is_static = var.maxCoeff() < variance;
    if (!is_static)
    {
      flush();
      continue;
    }
    if (!current.empty() && (mean - current_mean).norm() > mean_tol)
      flush();
    if (current.empty())
      current_mean = mean;
    current.insert(current.end(), trace.samples.begin() + static_cast<std::ptrdiff_t>(start),
                   trace.samples.begin() + static_cast<std::ptrdiff_t>(start + block));
  }
  flush();
  return clips;
}

// ---------------------------------------------------------------------------
// Gyroscope: rotational offset between integrated gyro heading and magnetic heading
// ---------------------------------------------------------------------------

struct GyroCalib
{
  Angle offset;  // added to the integrated gyro yaw
  double calibrated_at = 0.0;
};

inline bool is_stationary(const ImuSample& s, double threshold) { return std::abs(s.acc.norm() - kGravity) < threshold; }

/// Index ranges [begin, end) where every sample is stationary for at least window_s.
inline std::vector<std::pair<std::size_t, std::size_t>> find_stationary_windows(std::span<const ImuSample> samples,
                                                                                 double rate_hz, double threshold,
                                                                                 double window_s)
{
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  const auto min_len = static_cast<std::size_t>(std::ceil(window_s * rate_hz - 1e-9));
  std::size_t i = 0;
  while (i < samples.size())
  {
    if (!is_stationary(samples[i], threshold))
    {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < samples.size() && is_stationary(samples[j], threshold))
      ++j;
    if (j - i >= min_len)
      runs.emplace_back(i, j);
    i = j;
  }
  return runs;
}

/// Offset = circular mean over the window of circular_diff(mag heading, gyro heading).
/// Every sample in the window must be stationary.
inline GyroCalib calibrate_gyro(std::span<const ImuSample> window, std::span<const Angle> gyro_heading,
                                std::span<const Angle> mag_heading, double threshold = 0.3)
{
  if (window.empty())
    throw InputError("no stationary window found");
  if (gyro_heading.size() != window.size() || mag_heading.size() != window.size())
    throw InputError("calibrate_gyro: misaligned series");
  for (const auto& s : window)
  {
    if (!is_stationary(s, threshold))
      throw InputError("no stationary window found");
  }
  std::vector<double> diffs;
  diffs.reserve(window.size());
  for (std::size_t i = 0; i < window.size(); ++i)
    diffs.push_back(circular_diff(mag_heading[i], gyro_heading[i]));
  return {Angle::radians(circular_mean_signed(diffs)), window.back().t};
}

// ---------------------------------------------------------------------------
// Magnetometer: phone-referenced rolling window of heading offsets
// ---------------------------------------------------------------------------

struct MagReferencePoint
{
  double t = 0.0;
  double offset = 0.0;  // signed radians, circular_diff(phone, earable)
};

struct MagCalibState
{
  std::deque<MagReferencePoint> window;
  Angle current_offset;
  double last_point_time = -std::numeric_limits<double>::infinity();
  double period_s = 15.0;
  std::size_t capacity = 15;
  std::size_t dropped = 0;    // points rejected for arriving within period_s
  std::size_t rollovers = 0;  // full re-calibrations triggered

  std::vector<double> offsets() const
  {
    std::vector<double> v;
    for (const auto& p : window)
      v.push_back(p.offset);
    return v;
  }
};

namespace detail
{
inline void refresh_offset(MagCalibState& s)
{
  if (s.window.empty())
    return;
  try
  {
    s.current_offset = Angle::radians(circular_mean_signed(s.offsets()));
  }
  catch (const NumericalError&)
  {
    // Perfectly opposed offsets: fall back to the newest point.
    s.current_offset = Angle::radians(s.window.back().offset);
  }
}
}  // namespace detail

inline MagCalibState mag_add_reference_point(MagCalibState state, double t, Angle phone_heading,
                                             Angle earable_heading)
{
  if (t < state.last_point_time + state.period_s - 1e-6)
  {
    ++state.dropped;
    return state;
  }
  state.window.push_back({t, circular_diff(phone_heading, earable_heading)});
  while (state.window.size() > state.capacity)
    state.window.pop_front();
  state.last_point_time = t;
  detail::refresh_offset(state);
  return state;
}

/// True when the shortest move from prev to next passes through 0/360 degrees.
inline bool crosses_north_boundary(Angle prev, Angle next)
{
  const double moved = prev.rad() + circular_diff(next, prev);
  return moved >= kTwoPi || moved < 0.0;
}

inline MagCalibState mag_check_rollover(MagCalibState state, Angle prev_heading, Angle new_heading)
{
  if (!crosses_north_boundary(prev_heading, new_heading) || state.window.empty())
    return state;
  const auto newest = state.window.back();
  state.window.clear();
  state.window.push_back(newest);
  ++state.rollovers;
  detail::refresh_offset(state);
  return state;
}

// ---------------------------------------------------------------------------
// Calibration file (calibrate -> track handoff)
// ---------------------------------------------------------------------------

struct CalibrationSet
{
  AccelCalib accel;
  double accel_rms_residual = 0.0;
  std::optional<GyroCalib> gyro;
  MagCalibState mag;
};

inline void write_calibration(std::ostream& out, const CalibrationSet& c)
{
  out << "# residual_definition=" << AccelFit::residual_definition << '\n';
  out << "accel.alpha_yx=" << fmt_fixed(c.accel.alpha_yx, 12) << '\n'
      << "accel.alpha_zx=" << fmt_fixed(c.accel.alpha_zx, 12) << '\n'
      << "accel.alpha_zy=" << fmt_fixed(c.accel.alpha_zy, 12) << '\n';
  const char* axes = "xyz";
  for (int i = 0; i < 3; ++i)
    out << "accel.sf_" << axes[i] << '=' << fmt_fixed(c.accel.scale[i], 12) << '\n';
  for (int i = 0; i < 3; ++i)
    out << "accel.bias_" << axes[i] << '=' << fmt_fixed(c.accel.bias[i], 12) << '\n';
  out << "accel.rms_residual=" << fmt_fixed(c.accel_rms_residual, 12) << '\n';
  if (c.gyro)
  {
    out << "gyro.offset_deg=" << fmt_fixed(c.gyro->offset.deg(), 9) << '\n'
        << "gyro.calibrated_at=" << fmt_fixed(c.gyro->calibrated_at, 6) << '\n';
  }
  out << "mag.offset_deg=" << fmt_fixed(c.mag.current_offset.deg(), 9) << '\n'
      << "mag.window_size=" << c.mag.window.size() << '\n';
  for (std::size_t i = 0; i < c.mag.window.size(); ++i)
    out << "mag.point." << i << '=' << fmt_fixed(c.mag.window[i].t, 6) << ','
        << fmt_fixed(rad2deg(c.mag.window[i].offset), 9) << '\n';
}

inline void save_calibration(const std::string& path, const CalibrationSet& c)
{
  auto out = open_output(path);
  write_calibration(out, c);
}

inline CalibrationSet parse_calibration(const KeyValueFile& kv)
{
  CalibrationSet c;
  std::optional<double> gyro_offset;
  double gyro_at = 0.0;
  std::size_t window_size = 0;
  std::map<std::size_t, MagReferencePoint> points;
  for (const auto& e : kv.entries)
  {
    auto real = [&] { return parse_real(e.value, kv.source, e.line); };
    const std::string& k = e.key;
    if (k == "accel.alpha_yx")
      c.accel.alpha_yx = real();
    else if (k == "accel.alpha_zx")
      c.accel.alpha_zx = real();
    else if (k == "accel.alpha_zy")
      c.accel.alpha_zy = real();
    else if (k == "accel.sf_x")
      c.accel.scale[0] = real();
    else if (k == "accel.sf_y")
      c.accel.scale[1] = real();
    else if (k == "accel.sf_z")
      c.accel.scale[2] = real();
    else if (k == "accel.bias_x")
      c.accel.bias[0] = real();
    else if (k == "accel.bias_y")
      c.accel.bias[1] = real();
    else if (k == "accel.bias_z")
      c.accel.bias[2] = real();
    else if (k == "accel.rms_residual")
      c.accel_rms_residual = real();
    else if (k == "gyro.offset_deg")
      gyro_offset = real();
    else if (k == "gyro.calibrated_at")
      gyro_at = real();
    else if (k == "mag.offset_deg")
      c.mag.current_offset = Angle::degrees(real());
    else if (k == "mag.window_size")
      window_size = static_cast<std::size_t>(real());
    else if (k.rfind("mag.point.", 0) == 0)
    {
      const auto idx = static_cast<std::size_t>(parse_real(k.substr(10), kv.source, e.line));
      const auto f = split_fields(e.value);
      if (f.size() != 2)
        throw InputError(located(kv.source, e.line, "mag point must be 't,offset_deg'"));
      points[idx] = {parse_real(f[0], kv.source, e.line), deg2rad(parse_real(f[1], kv.source, e.line))};
    }
    else
      throw InputError(located(kv.source, e.line, "unknown calibration key '" + k + "'"));
  }
  if (points.size() != window_size)
    throw InputError(kv.source + ": mag.window_size does not match the number of mag points");
  for (const auto& [idx, p] : points)
  {
    c.mag.window.push_back(p);
    c.mag.last_point_time = p.t;
  }
  if (gyro_offset)
    c.gyro = GyroCalib{Angle::degrees(*gyro_offset), gyro_at};
  if (!c.accel.within_sanity_bounds())
    throw InputError(kv.source + ": accelerometer parameters outside sanity bounds");
  return c;
}

inline CalibrationSet load_calibration(const std::string& path) { return parse_calibration(load_key_values(path)); }

}  // namespace earnav
