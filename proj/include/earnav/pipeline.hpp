/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/calibration.hpp"
#include "earnav/datamodel.hpp"
#include "earnav/displacement.hpp"
#include "earnav/fusion.hpp"
#include "earnav/heading.hpp"
#include "earnav/trace_io.hpp"

#include <optional>
#include <span>
#include <vector>

namespace earnav
{

struct DeviceInputs
{
  DeviceTrace trace;
  AccelCalib accel;              // applied when calibrating
  std::vector<Angle> reference;  // phone heading on the trace grid; may be empty
};

/// Everything derived from one device on its own time grid.
struct DeviceResult
{
  DeviceTrace calibrated;  // accelerometer-calibrated samples
  std::vector<std::pair<std::size_t, std::size_t>> stationary;
  std::vector<Tilt> tilt;
  std::vector<Angle> mag_offset;  // per-sample magnetometer correction
  HeadingSeries mag;
  HeadingSeries gyro;
  HeadingSeries complementary;
  std::vector<StrideEvent> strides;
  MagCalibState mag_state;
  std::vector<double> rollover_times;
  std::vector<GyroCalib> gyro_calibrations;
};

namespace detail
{

inline std::vector<Tilt> held_tilt(const DeviceTrace& tr, const std::vector<std::pair<std::size_t, std::size_t>>& runs)
{
  auto mean_acc = [&](std::size_t b, std::size_t e) {
    Vec3 m = Vec3::Zero();
    for (std::size_t i = b; i < e; ++i)
      m += tr.samples[i].acc;
    return Vec3(m / static_cast<double>(e - b));
  };
  std::vector<Tilt> tilt(tr.size());
  if (runs.empty())
  {
    Tilt t{};
    try
    {
      t = tilt_angles(mean_acc(0, tr.size()));
    }
    catch (const NumericalError&)
    {
    }
    std::fill(tilt.begin(), tilt.end(), t);
    return tilt;
  }
  std::size_t k = 0;
  Tilt current = tilt_angles(mean_acc(runs[0].first, runs[0].second));
  for (std::size_t i = 0; i < tr.size(); ++i)
  {
    if (k < runs.size() && i >= runs[k].first)
    {
      current = tilt_angles(mean_acc(runs[k].first, runs[k].second));
      ++k;
    }
    tilt[i] = current;
  }
  return tilt;
}

}  // namespace detail

/// Per-device stages: accelerometer calibration, tilt from stationary windows, tilt-
/// compensated magnetic heading with the phone-referenced offset window, gyro yaw anchored
/// to the magnetic heading in stationary windows, complementary blend, and strides.
/// With `calibrate` false the accelerometer is used raw, no magnetometer offset is applied
/// and the gyro is aligned once to the first magnetic heading.
inline DeviceResult process_device(const DeviceInputs& in, const RunConfig& cfg, bool calibrate = true)
{
  cfg.validate();
  const DeviceTrace& raw = in.trace;
  if (raw.samples.size() < 2)
    throw InputError("trace '" + raw.device_id + "' has fewer than two samples");
  require_uniform(raw, "pipeline");
  if (!in.reference.empty() && in.reference.size() != raw.size())
    throw InputError("reference heading series does not match the trace");

  DeviceResult r;
  r.calibrated = raw;
  if (calibrate)
  {
    for (auto& s : r.calibrated.samples)
      s.acc = apply_accel_calibration(s.acc, in.accel);
  }
  const DeviceTrace& tr = r.calibrated;
  const auto times = tr.times();
  const std::size_t n = tr.size();

  r.stationary = find_stationary_windows(tr.samples, tr.rate_hz, cfg.stationary_threshold, cfg.stationary_window_s);
  r.tilt = detail::held_tilt(tr, r.stationary);

  std::vector<Angle> raw_mag(n);
  for (std::size_t i = 0; i < n; ++i)
    raw_mag[i] = mag_heading(tr.samples[i].mag, r.tilt[i]);

  // Magnetometer offset from phone reference points every mag_period_s.
  r.mag_state.period_s = cfg.mag_period_s;
  r.mag_state.capacity = static_cast<std::size_t>(cfg.mag_window_cap);
  r.mag = {HeadingMethod::Mag, times, {}};
  r.mag_offset.assign(n, Angle{});
  const bool use_reference = calibrate && !in.reference.empty();
  double next_point = times.front();
  for (std::size_t i = 0; i < n; ++i)
  {
    if (use_reference && times[i] >= next_point - 1e-9)
    {
      r.mag_state = mag_add_reference_point(r.mag_state, times[i], in.reference[i], raw_mag[i]);
      next_point += cfg.mag_period_s;
    }
    Angle cal = Angle::radians(raw_mag[i].rad() + r.mag_state.current_offset.rad());
    if (use_reference && i > 0)
    {
      const auto before = r.mag_state.rollovers;
      r.mag_state = mag_check_rollover(r.mag_state, r.mag.psi.back(), cal);
      if (r.mag_state.rollovers != before)
      {
        r.rollover_times.push_back(times[i]);
        cal = Angle::radians(raw_mag[i].rad() + r.mag_state.current_offset.rad());
      }
    }
    r.mag_offset[i] = r.mag_state.current_offset;
    r.mag.psi.push_back(cal);
  }

  // Gyro yaw, anchored to the magnetic heading.
  const auto yaw = integrate_gyro_yaw(tr, Attitude::from_euler(r.tilt[0].roll, r.tilt[0].pitch, 0.0));
  std::vector<Angle> offset(n);
  if (calibrate && !r.stationary.empty())
  {
    const std::size_t used = cfg.gyro_freeze_after_first ? 1 : r.stationary.size();
    for (std::size_t k = 0; k < used; ++k)
    {
      const auto [b, e] = r.stationary[k];
      r.gyro_calibrations.push_back(calibrate_gyro(std::span(tr.samples).subspan(b, e - b),
                                                   std::span(yaw).subspan(b, e - b),
                                                   std::span<const Angle>(r.mag.psi).subspan(b, e - b),
                                                   cfg.stationary_threshold));
    }
    // Each window's offset holds until the next window; the first also covers the head.
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
      while (k + 1 < used && i >= r.stationary[k + 1].first)
        ++k;
      offset[i] = r.gyro_calibrations[k].offset;
    }
  }
  else
  {
    const Angle anchor = calibrate ? r.mag.psi[0] : raw_mag[0];
    std::fill(offset.begin(), offset.end(), Angle::radians(circular_diff(anchor, yaw[0])));
  }
  r.gyro = {HeadingMethod::Gyro, times, {}};
  for (std::size_t i = 0; i < n; ++i)
    r.gyro.psi.push_back(Angle::radians(yaw[i].rad() + offset[i].rad()));

  const ComplementarySchedule schedule{cfg.comp_alpha0, cfg.comp_slope, cfg.comp_floor};
  r.complementary = complementary_heading(
      r.gyro, r.mag, schedule, cfg.comp_reset_on_rollover ? std::span<const double>(r.rollover_times) : std::span<const double>{});

  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i)
    norm[i] = tr.samples[i].acc.norm();
  r.strides = detect_strides(times, norm, tr.rate_hz, cfg.stride_prominence, cfg.lowpass_cutoff_hz);
  return r;
}

inline HeadingSeries select_heading(const DeviceResult& d, const DeviceInputs& in, const RunConfig& cfg,
                                    HeadingMethod method)
{
  switch (method)
  {
    case HeadingMethod::Mag:
      return d.mag;
    case HeadingMethod::Gyro:
      return d.gyro;
    case HeadingMethod::Complementary:
      return d.complementary;
    case HeadingMethod::Madgwick:
      return madgwick_heading(d.calibrated, cfg.madgwick_gain, d.mag_offset);
    case HeadingMethod::Reference:
      if (in.reference.empty())
        throw InputError("method 'reference' needs a reference heading column");
      return {HeadingMethod::Reference, d.calibrated.times(), in.reference};
    case HeadingMethod::Fused:
      break;
  }
  throw InputError("method 'fused' needs two devices (use the fuse command)");
}

struct TrackResult
{
  HeadingSeries heading;
  std::vector<double> distance;
  Track track;
};

inline TrackResult assemble_track(std::span<const double> times, HeadingSeries heading,
                                  std::vector<StrideEvent> strides, const RunConfig& cfg)
{
  TrackResult out;
  out.distance = per_timestamp_distance(strides, times.size(), stride_length(cfg.user_height));
  out.track = integrate_track(times, out.distance, heading.psi);
  out.track.strides = std::move(strides);
  out.heading = std::move(heading);
  return out;
}

struct SingleResult
{
  DeviceResult device;
  TrackResult result;
};

inline SingleResult run_single(const DeviceInputs& in, const RunConfig& cfg, HeadingMethod method,
                               bool calibrate = true)
{
  SingleResult s;
  s.device = process_device(in, cfg, calibrate);
  auto heading = select_heading(s.device, in, cfg, method);
  const auto times = heading.t;
  s.result = assemble_track(times, std::move(heading), s.device.strides, cfg);
  return s;
}

inline HeadingFilterConfig heading_filter_config(const RunConfig& cfg)
{
  return {static_cast<std::size_t>(cfg.heading_particles), deg2rad(cfg.heading_process_noise_deg), deg2rad(cfg.heading_measurement_noise_deg),
          0.5, cfg.seed};
}

inline PositionFilterConfig position_filter_config(const RunConfig& cfg)
{
  return {static_cast<std::size_t>(cfg.position_particles), cfg.position_process_noise, cfg.seed};
}

struct DualResult
{
  DeviceResult left;
  DeviceResult right;
  TrackResult result;             // dead-reckoned from the fused heading and merged strides
  std::optional<Track> gps_track;  // after the positional particle filter
};

/// Both devices calibrated independently, complementary heading on each, particle-filter
/// heading fusion, stride times averaged across devices, then the track (optionally
/// corrected by GPS fixes).
inline DualResult run_dual(const DeviceInputs& left, const DeviceInputs& right, const RunConfig& cfg,
                           bool calibrate = true, std::span<const GpsFix> fixes = {}, bool use_gps = false)
{
  DualResult d;
  d.left = process_device(left, cfg, calibrate);
  d.right = process_device(right, cfg, calibrate);
  require_aligned(d.left.complementary.t, d.right.complementary.t, "fuse");
  auto fused = fuse_headings(d.left.complementary, d.right.complementary, heading_filter_config(cfg));
  const auto times = d.left.complementary.t;
  auto strides = average_stride_times(d.left.strides, d.right.strides, times);
  d.result = assemble_track(times, std::move(fused), std::move(strides), cfg);
  if (use_gps)
    d.gps_track = gps_position_filter(d.result.track, fixes, position_filter_config(cfg));
  return d;
}

/// Emulates a slower right device: samples are dropped down to `right_rate_hz`, then the
/// stream is interpolated back onto the left device's grid.
inline DeviceInputs degrade_rate(const DeviceInputs& right, std::span<const double> grid, double native_hz,
                                 double right_rate_hz)
{
  if (!(right_rate_hz > 0.0) || right_rate_hz > native_hz + 1e-9)
    throw InputError("unsupported rate: must be in (0, native rate]");
  const double ratio = native_hz / right_rate_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    throw InputError("unsupported rate: native rate must be an integer multiple of it");
  if (std::abs(ratio - 1.0) < 1e-12)
    return right;
  DeviceInputs out = right;
  out.trace = interpolate_to_grid(resample(right.trace, right_rate_hz), grid);
  out.trace.rate_hz = native_hz;
  out.trace.reference = right.trace.reference;
  return out;
}

inline DualResult run_mixed_rate(const DeviceInputs& left, const DeviceInputs& right, double right_rate_hz,
                                 const RunConfig& cfg, bool calibrate = true, std::span<const GpsFix> fixes = {},
                                 bool use_gps = false)
{
  const auto grid = left.trace.times();
  return run_dual(left, degrade_rate(right, grid, left.trace.rate_hz, right_rate_hz), cfg, calibrate, fixes, use_gps);
}

}  // namespace earnav
