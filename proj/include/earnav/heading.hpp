/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/calibration.hpp"
#include "earnav/datamodel.hpp"
#include "earnav/trace_io.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace earnav
{

/// Roll about body x and pitch about body y, from a gravity-only accelerometer reading.
struct Tilt
{
  double roll = 0.0;
  double pitch = 0.0;
};

/// roll = atan2(a_y, a_z); pitch = atan(-a_x / (a_y sin(roll) + a_z cos(roll))).
/// Throws NumericalError("tilt unavailable") when |a| is not within 20% of g.
inline Tilt tilt_angles(const Vec3& a)
{
  if (!a.allFinite() || std::abs(a.norm() - kGravity) > 0.2 * kGravity)
    throw NumericalError("tilt unavailable");
  const double roll = std::atan2(a.y(), a.z());
  const double den = a.y() * std::sin(roll) + a.z() * std::cos(roll);
  return {roll, std::atan2(-a.x(), den)};
}

// The magnetometer is mounted with its own axis layout relative to the accel/gyro
// body frame: x_mag = y_body, y_mag = x_body, z_mag = -z_body. The map is an involution.
inline Vec3 mag_sensor_to_body(const Vec3& m) { return {m.y(), m.x(), -m.z()}; }
inline Vec3 mag_body_to_sensor(const Vec3& m) { return mag_sensor_to_body(m); }

/// Rotates a body-frame vector into the local level plane (roll = pitch = 0).
inline Vec3 level(const Vec3& body, const Tilt& tilt)
{
  return Eigen::AngleAxisd(tilt.pitch, Vec3::UnitY()) * (Eigen::AngleAxisd(tilt.roll, Vec3::UnitX()) * body);
}

/// Tilt-compensated magnetic heading psi = atan2(m_y, m_x) in the level plane, plus the
/// magnetometer calibration offset.
inline Angle mag_heading(const Vec3& m_sensor, const Tilt& tilt, Angle mag_offset = {})
{
  if (!m_sensor.allFinite() || m_sensor.norm() <= 0.0)
    throw NumericalError("heading undefined");
  const Vec3 h = mag_body_to_sensor(level(mag_sensor_to_body(m_sensor), tilt));
  if (std::hypot(h.x(), h.y()) <= 1e-12 * m_sensor.norm())
    throw NumericalError("heading undefined");
  return Angle::radians(std::atan2(h.y(), h.x()) + mag_offset.rad());
}

inline void require_uniform(const DeviceTrace& trace, const char* what)
{
  if (!is_uniform(trace))
    throw InputError(std::string(what) + ": non-uniform timestamps");
}

/// Raw strapdown yaw from quaternion integration, trapezoidal body rate per step.
inline std::vector<Angle> integrate_gyro_yaw(const DeviceTrace& trace, Attitude initial)
{
  require_uniform(trace, "integrate_gyro");
  std::vector<Angle> yaw;
  yaw.reserve(trace.size());
  Attitude q = initial;
  for (std::size_t i = 0; i < trace.size(); ++i)
  {
    if (i > 0)
    {
      const auto& a = trace.samples[i - 1];
      const auto& b = trace.samples[i];
      q.integrate(0.5 * (a.gyro + b.gyro), b.t - a.t);
    }
    yaw.push_back(q.yaw());
  }
  return yaw;
}

inline HeadingSeries integrate_gyro(const DeviceTrace& trace, Attitude initial, const GyroCalib& calib = {})
{
  HeadingSeries h{HeadingMethod::Gyro, trace.times(), {}};
  for (Angle y : integrate_gyro_yaw(trace, initial))
    h.psi.push_back(Angle::radians(y.rad() + calib.offset.rad()));
  return h;
}

struct ComplementarySchedule
{
  double alpha0 = 0.8;
  double slope = 1.0 / 400.0;  // per second
  double floor = 0.0;

  double gyro_weight(double elapsed) const { return std::clamp(alpha0 - slope * elapsed, floor, 1.0); }
};

/// Time-scheduled blend psi = w_g*gyro + (1 - w_g)*mag along the shortest arc between the
/// two inputs, with w_g = clamp(alpha0 - slope*t, floor, 1) and t measured from the series
/// start (or the latest entry of reset_times at or before the sample).
inline HeadingSeries complementary_heading(const HeadingSeries& gyro, const HeadingSeries& mag,
                                           const ComplementarySchedule& schedule = {},
                                           std::span<const double> reset_times = {})
{
  require_aligned(gyro.t, mag.t, "complementary_heading");
  HeadingSeries out{HeadingMethod::Complementary, gyro.t, {}};
  out.psi.reserve(gyro.size());
  if (gyro.t.empty())
    return out;
  double origin = gyro.t.front();
  std::size_t next_reset = 0;
  for (std::size_t i = 0; i < gyro.size(); ++i)
  {
    while (next_reset < reset_times.size() && reset_times[next_reset] <= gyro.t[i])
      origin = reset_times[next_reset++];
    const double wg = schedule.gyro_weight(gyro.t[i] - origin);
    if (wg <= 0.0)
      out.psi.push_back(mag.psi[i]);
    else if (wg >= 1.0)
      out.psi.push_back(gyro.psi[i]);
    else
      out.psi.push_back(Angle::radians(gyro.psi[i].rad() + (1.0 - wg) * circular_diff(mag.psi[i], gyro.psi[i])));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Madgwick gradient-descent MARG filter (baseline)
// ---------------------------------------------------------------------------

/// Madgwick's earth frame is (magnetic north, west, up); ours is (east, north, up).
inline const Eigen::Quaterniond& enu_to_madgwick_earth()
{
  static const Eigen::Quaterniond q(Eigen::AngleAxisd(-kPi / 2.0, Vec3::UnitZ()));
  return q;
}

class MadgwickFilter
{
public:
  explicit MadgwickFilter(double beta = 0.1, Eigen::Quaterniond q = Eigen::Quaterniond::Identity())
      : beta_(beta), q_(q.normalized())
  {
  }

  /// Attitude consistent with one static reading (tilt from accel, yaw from mag).
  static Eigen::Quaterniond initial_from(const Vec3& acc, const Vec3& mag_sensor)
  {
    const Tilt tilt = tilt_angles(acc);
    const Angle psi = mag_heading(mag_sensor, tilt);
    const Attitude enu = Attitude::from_euler(tilt.roll, tilt.pitch, psi.rad());
    return enu_to_madgwick_earth() * enu.quaternion();
  }

  /// One update; acc/mag in body frame (units irrelevant), gyro in rad/s.
  void update(const Vec3& gyro, const Vec3& acc, const Vec3& mag, double dt)
  {
    double q0 = q_.w(), q1 = q_.x(), q2 = q_.y(), q3 = q_.z();
    const double gx = gyro.x(), gy = gyro.y(), gz = gyro.z();

    double qDot1 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz);
    double qDot2 = 0.5 * (q0 * gx + q2 * gz - q3 * gy);
    double qDot3 = 0.5 * (q0 * gy - q1 * gz + q3 * gx);
    double qDot4 = 0.5 * (q0 * gz + q1 * gy - q2 * gx);

    if (acc.norm() > 0.0 && mag.norm() > 0.0)
    {
      const Vec3 a = acc.normalized();
      const Vec3 m = mag.normalized();
      const double ax = a.x(), ay = a.y(), az = a.z();
      const double mx = m.x(), my = m.y(), mz = m.z();

      const double _2q0mx = 2.0 * q0 * mx;
      const double _2q0my = 2.0 * q0 * my;
      const double _2q0mz = 2.0 * q0 * mz;
      const double _2q1mx = 2.0 * q1 * mx;
      const double _2q0 = 2.0 * q0;
      const double _2q1 = 2.0 * q1;
      const double _2q2 = 2.0 * q2;
      const double _2q3 = 2.0 * q3;
      const double _2q0q2 = 2.0 * q0 * q2;
      const double _2q2q3 = 2.0 * q2 * q3;
      const double q0q0 = q0 * q0;
      const double q0q1 = q0 * q1;
      const double q0q2 = q0 * q2;
      const double q0q3 = q0 * q3;
      const double q1q1 = q1 * q1;
      const double q1q2 = q1 * q2;
      const double q1q3 = q1 * q3;
      const double q2q2 = q2 * q2;
      const double q2q3 = q2 * q3;
      const double q3q3 = q3 * q3;

      // Reference direction of the earth's field
      const double hx = mx * q0q0 - _2q0my * q3 + _2q0mz * q2 + mx * q1q1 + _2q1 * my * q2 + _2q1 * mz * q3 -
                        mx * q2q2 - mx * q3q3;
      const double hy = _2q0mx * q3 + my * q0q0 - _2q0mz * q1 + _2q1mx * q2 - my * q1q1 + my * q2q2 +
                        _2q2 * mz * q3 - my * q3q3;
      const double _2bx = std::sqrt(hx * hx + hy * hy);
      const double _2bz = -_2q0mx * q2 + _2q0my * q1 + mz * q0q0 + _2q1mx * q3 - mz * q1q1 + _2q2 * my * q3 -
                          mz * q2q2 + mz * q3q3;
      const double _4bx = 2.0 * _2bx;
      const double _4bz = 2.0 * _2bz;

      // Gradient of the objective
      const double fx = _2bx * (0.5 - q2q2 - q3q3) + _2bz * (q1q3 - q0q2) - mx;
      const double fy = _2bx * (q1q2 - q0q3) + _2bz * (q0q1 + q2q3) - my;
      const double fz = _2bx * (q0q2 + q1q3) + _2bz * (0.5 - q1q1 - q2q2) - mz;
      const double g1 = 2.0 * q1q3 - _2q0q2 - ax;
      const double g2 = 2.0 * q0q1 + _2q2q3 - ay;
      const double g3 = 1.0 - 2.0 * q1q1 - 2.0 * q2q2 - az;

      double s0 = -_2q2 * g1 + _2q1 * g2 - _2bz * q2 * fx + (-_2bx * q3 + _2bz * q1) * fy + _2bx * q2 * fz;
      double s1 = _2q3 * g1 + _2q0 * g2 - 4.0 * q1 * g3 + _2bz * q3 * fx + (_2bx * q2 + _2bz * q0) * fy +
                  (_2bx * q3 - _4bz * q1) * fz;
      double s2 = -_2q0 * g1 + _2q3 * g2 - 4.0 * q2 * g3 + (-_4bx * q2 - _2bz * q0) * fx +
                  (_2bx * q1 + _2bz * q3) * fy + (_2bx * q0 - _4bz * q2) * fz;
      double s3 = _2q1 * g1 + _2q2 * g2 + (-_4bx * q3 + _2bz * q1) * fx + (-_2bx * q0 + _2bz * q2) * fy +
                  _2bx * q1 * fz;
      const double sn = std::sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3);
      if (sn > 1e-15)
      {
        s0 /= sn;
        s1 /= sn;
        s2 /= sn;
        s3 /= sn;
        qDot1 -= beta_ * s0;
        qDot2 -= beta_ * s1;
        qDot3 -= beta_ * s2;
        qDot4 -= beta_ * s3;
      }
    }

    q0 += qDot1 * dt;
    q1 += qDot2 * dt;
    q2 += qDot3 * dt;
    q3 += qDot4 * dt;
    q_ = Eigen::Quaterniond(q0, q1, q2, q3).normalized();
  }

  const Eigen::Quaterniond& quaternion() const { return q_; }

  /// Heading counter-clockwise from east.
  Angle heading() const
  {
    const Attitude enu(enu_to_madgwick_earth().conjugate() * q_);
    return enu.yaw();
  }

private:
  double beta_;
  Eigen::Quaterniond q_;
};

/// Runs the Madgwick filter over a trace (accel assumed calibrated). The filter is seeded
/// from the first sample; `mag_offsets` (optional, per sample) is added to the output.
inline HeadingSeries madgwick_heading(const DeviceTrace& trace, double gain = 0.1,
                                      std::span<const Angle> mag_offsets = {})
{
  require_uniform(trace, "madgwick_heading");
  HeadingSeries h{HeadingMethod::Madgwick, trace.times(), {}};
  if (trace.samples.empty())
    return h;
  const auto& first = trace.samples.front();
  Eigen::Quaterniond q0 = Eigen::Quaterniond::Identity();
  try
  {
    q0 = MadgwickFilter::initial_from(first.acc, first.mag);
  }
  catch (const NumericalError&)
  {
    // Not static at start: begin level and let the filter converge.
  }
  MadgwickFilter f(gain, q0);
  for (std::size_t i = 0; i < trace.size(); ++i)
  {
    const auto& s = trace.samples[i];
    if (i > 0)
      f.update(s.gyro, s.acc, mag_sensor_to_body(s.mag), s.t - trace.samples[i - 1].t);
    const double off = mag_offsets.empty() ? 0.0 : mag_offsets[i].rad();
    h.psi.push_back(Angle::radians(f.heading().rad() + off));
  }
  return h;
}

}  // namespace earnav
