/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace earnav
{

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Standard gravity (m/s^2)
inline constexpr double kGravity = 9.80665;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Error taxonomy. The CLI maps InputError to exit code 2 and NumericalError to 3.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error
{
public:
  using Error::Error;
};

class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Planar angle in radians, always wrapped to [0, 2*pi).
class Angle
{
public:
  constexpr Angle() = default;

  /// Wraps any finite radian value. Throws InputError on NaN/inf.
  static Angle radians(double x)
  {
    if (!std::isfinite(x))
      throw InputError("non-finite angle");
    double r = std::fmod(x, kTwoPi);
    if (r < 0.0)
      r += kTwoPi;
    // fmod of a tiny negative number can round back up to 2*pi
    if (r >= kTwoPi)
      r = 0.0;
    return Angle(r);
  }

  static Angle degrees(double x) { return radians(deg2rad(x)); }

  constexpr double rad() const { return value_; }
  constexpr double deg() const { return rad2deg(value_); }

  friend constexpr bool operator==(Angle a, Angle b) = default;

private:
  constexpr explicit Angle(double wrapped) : value_(wrapped) {}

  double value_ = 0.0;
};

inline Angle wrap_angle(double x) { return Angle::radians(x); }

/// Signed shortest arc from b to a, in (-pi, pi]. Antipodal ties resolve to +pi.
inline double circular_diff(Angle a, Angle b)
{
  double d = a.rad() - b.rad();  // in (-2pi, 2pi)
  if (d > kPi)
    d -= kTwoPi;
  else if (d <= -kPi)
    d += kTwoPi;
  return d;
}

/// Weighted circular mean via the resultant vector.
/// Throws NumericalError("undefined mean") when the resultant vanishes.
inline Angle circular_mean(std::span<const Angle> angles, std::span<const double> weights = {})
{
  if (angles.empty())
    throw InputError("circular_mean: empty input");
  if (!weights.empty() && weights.size() != angles.size())
    throw InputError("circular_mean: weight count does not match angle count");

  double s = 0.0;
  double c = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i)
  {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InputError("circular_mean: weights must be finite and non-negative");
    s += w * std::sin(angles[i].rad());
    c += w * std::cos(angles[i].rad());
    total += w;
  }
  if (total <= 0.0)
    throw InputError("circular_mean: weights sum to zero");
  if (std::hypot(s, c) <= 1e-12 * total)
    throw NumericalError("undefined mean");
  return Angle::radians(std::atan2(s, c));
}

/// Circular mean of signed offsets (radians), returned as a signed value in (-pi, pi].
inline double circular_mean_signed(std::span<const double> offsets)
{
  std::vector<Angle> a;
  a.reserve(offsets.size());
  for (double o : offsets)
    a.push_back(Angle::radians(o));
  return circular_diff(circular_mean(a), Angle{});
}

/// Unit quaternion mapping device frame to world (ENU) frame.
class Attitude
{
public:
  Attitude() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Attitude(const Eigen::Quaterniond& q) : q_(q.normalized()) {}

  /// Body-frame first-order exponential-map update over dt seconds.
  void integrate(const Vec3& omega_body, double dt)
  {
    const Vec3 half = 0.5 * dt * omega_body;
    const double angle = half.norm();
    Eigen::Quaterniond dq;
    if (angle < 1e-12)
    {
      dq = Eigen::Quaterniond(1.0, half.x(), half.y(), half.z());
    }
    else
    {
      const Vec3 axis = half / angle;
      dq = Eigen::Quaterniond(std::cos(angle), std::sin(angle) * axis.x(),
                              std::sin(angle) * axis.y(), std::sin(angle) * axis.z());
    }
    q_ = (q_ * dq).normalized();
  }

  /// ZYX yaw, counter-clockwise from world +x.
  Angle yaw() const
  {
    const double w = q_.w(), x = q_.x(), y = q_.y(), z = q_.z();
    return Angle::radians(std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)));
  }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  /// R = Rz(yaw) * Ry(pitch) * Rx(roll)
  static Attitude from_euler(double roll, double pitch, double yaw)
  {
    return Attitude(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                    Eigen::AngleAxisd(roll, Vec3::UnitX()));
  }

private:
  Eigen::Quaterniond q_;
};

struct Position2D
{
  double x = 0.0;  // meters east
  double y = 0.0;  // meters north

  double norm() const { return std::hypot(x, y); }
  friend Position2D operator+(Position2D a, Position2D b) { return {a.x + b.x, a.y + b.y}; }
  friend Position2D operator-(Position2D a, Position2D b) { return {a.x - b.x, a.y - b.y}; }
  friend Position2D operator*(double k, Position2D a) { return {k * a.x, k * a.y}; }
  friend Position2D operator*(Position2D a, double k) { return {k * a.x, k * a.y}; }
};

/// One 9-axis reading. The magnetometer triple is in the sensor's own axis
/// layout (see heading.hpp, mag_sensor_to_body).
struct ImuSample
{
  double t = 0.0;  // seconds since trace start
  Vec3 acc = Vec3::Zero();   // m/s^2
  Vec3 gyro = Vec3::Zero();  // rad/s
  Vec3 mag = Vec3::Zero();   // uT-like
};

inline bool is_valid(const ImuSample& s)
{
  return std::isfinite(s.t) && s.t >= 0.0 && s.acc.allFinite() && s.gyro.allFinite() &&
         s.mag.allFinite();
}

struct DeviceTrace
{
  std::string device_id;
  double rate_hz = 0.0;
  std::vector<ImuSample> samples;
  // Phone traces only: per-sample reference heading. Empty otherwise.
  std::vector<Angle> reference;

  bool has_reference() const { return !reference.empty(); }
  std::size_t size() const { return samples.size(); }
  double duration() const { return samples.empty() ? 0.0 : samples.back().t - samples.front().t; }

  std::vector<double> times() const
  {
    std::vector<double> t;
    t.reserve(samples.size());
    for (const auto& s : samples)
      t.push_back(s.t);
    return t;
  }
};

enum class HeadingMethod
{
  Mag,
  Gyro,
  Complementary,
  Madgwick,
  Fused,
  Reference,
};

inline std::string_view to_string(HeadingMethod m)
{
  switch (m)
  {
    case HeadingMethod::Mag:
      return "mag";
    case HeadingMethod::Gyro:
      return "gyro";
    case HeadingMethod::Complementary:
      return "complementary";
    case HeadingMethod::Madgwick:
      return "madgwick";
    case HeadingMethod::Fused:
      return "fused";
    case HeadingMethod::Reference:
      return "reference";
  }
  return "unknown";
}

/// Accepts only the single-device estimators selectable from the CLI.
inline HeadingMethod parse_heading_method(std::string_view name)
{
  for (auto m : {HeadingMethod::Mag, HeadingMethod::Gyro, HeadingMethod::Complementary,
                 HeadingMethod::Madgwick})
  {
    if (to_string(m) == name)
      return m;
  }
  throw InputError("unknown heading method '" + std::string(name) +
                   "' (supported: mag, gyro, complementary, madgwick)");
}

struct HeadingSeries
{
  HeadingMethod method = HeadingMethod::Mag;
  std::vector<double> t;
  std::vector<Angle> psi;

  std::size_t size() const { return t.size(); }
};

struct StrideEvent
{
  double peak_time = 0.0;
  std::size_t peak_index = 0;
  std::size_t begin = 0;  // first timestamp index of the stride span
  std::size_t end = 0;    // one past the last index
  double prominence = 0.0;
};

struct Track
{
  std::vector<double> t;
  std::vector<Position2D> pos;
  std::vector<StrideEvent> strides;

  std::size_t size() const { return t.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }
};

/// Throws InputError unless both series share the same timestamps (within tol).
inline void require_aligned(std::span<const double> a, std::span<const double> b,
                            std::string_view what, double tol = 1e-6)
{
  if (a.size() != b.size())
    throw InputError(std::string(what) + ": misaligned series (length mismatch)");
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    if (std::abs(a[i] - b[i]) > tol)
      throw InputError(std::string(what) + ": misaligned series at index " + std::to_string(i));
  }
}

}  // namespace earnav
