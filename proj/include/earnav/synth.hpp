/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/calibration.hpp"
#include "earnav/datamodel.hpp"
#include "earnav/displacement.hpp"
#include "earnav/heading.hpp"
#include "earnav/trace_io.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace earnav
{

/// Raw reading that the forward calibration maps back to `a`: raw = T^-1 a + b.
inline Vec3 uncalibrate_accel(const Vec3& a, const AccelCalib& c)
{
  return c.matrix().triangularView<Eigen::Lower>().solve(a) + c.bias;
}

inline void require_invertible(const AccelCalib& c)
{
  for (int i = 0; i < 3; ++i)
  {
    if (!(c.scale[i] > 1e-9) || !std::isfinite(c.scale[i]))
      throw InputError("singular scale factor");
  }
}

/// Applies the inverse accelerometer model to every sample of a trace.
inline DeviceTrace inject_miscalibration(DeviceTrace trace, const AccelCalib& c)
{
  require_invertible(c);
  for (auto& s : trace.samples)
    s.acc = uncalibrate_accel(s.acc, c);
  return trace;
}

/// How one head-worn (or hand-held) device is mounted and how it misbehaves.
struct DeviceModel
{
  std::string id = "left";
  double mount_yaw = 0.0;  // rad, device yaw relative to walking direction
  double roll = 0.0;       // rad, fixed head tilt
  double pitch = 0.0;      // rad
  double accel_noise = 0.0;  // m/s^2, per channel
  double gyro_noise = 0.0;   // rad/s, per channel
  double mag_noise = 0.0;    // field units, per channel
  Vec3 gyro_bias = Vec3::Zero();  // rad/s
  double hard_iron = 0.0;         // rad, apparent rotation of the field
  AccelCalib miscalibration;      // identity means a perfect accelerometer
};

struct SynthScenario
{
  std::vector<Position2D> waypoints;
  double step_frequency = 2.0;  // Hz, one stride per period
  double step_amplitude = 3.0;  // m/s^2, vertical
  double user_height = 1.80;    // m
  double rate_hz = 20.0;
  double turn_length = 2.0;  // m of path over which the heading sweeps at each vertex
  double stand_start = 3.0;  // s
  double stand_end = 2.0;    // s
  double field_horizontal = 20.0;
  double field_vertical = -40.0;  // negative: field dips below the horizon
  DeviceModel left{};
  std::optional<DeviceModel> right;
  double phone_heading_noise_deg = 0.0;
  std::uint64_t seed = 1;

  double stride() const { return stride_length(user_height); }
  double walking_speed() const { return stride() * step_frequency; }
};

struct SynthOutput
{
  DeviceTrace left;
  std::optional<DeviceTrace> right;
  DeviceTrace phone;  // carries the reference-heading column
  Track truth;        // ground-truth positions and stride events
  HeadingSeries truth_heading;
  std::vector<double> stride_times;
};

namespace detail
{

/// Polyline walked with smooth (raised-cosine) heading changes around each vertex.
class SmoothPath
{
public:
  SmoothPath(const std::vector<Position2D>& waypoints, double turn_length)
  {
    if (waypoints.size() < 2)
      throw InputError("synth: polyline needs at least two waypoints");
    double s = 0.0;
    double prev_dir = 0.0;
    for (std::size_t i = 0; i + 1 < waypoints.size(); ++i)
    {
      const Position2D d = waypoints[i + 1] - waypoints[i];
      const double len = d.norm();
      if (!(len > 1e-9))
        throw InputError("synth: degenerate polyline (zero-length segment)");
      const double dir = std::atan2(d.y, d.x);
      if (i == 0)
      {
        initial_ = dir;
      }
      else
      {
        turns_.push_back({s, circular_diff(Angle::radians(dir), Angle::radians(prev_dir)), 0.0});
      }
      lengths_.push_back(len);
      prev_dir = dir;
      s += len;
    }
    length_ = s;
    for (std::size_t i = 0; i < turns_.size(); ++i)
      turns_[i].half_width = std::min({0.5 * turn_length, 0.45 * lengths_[i], 0.45 * lengths_[i + 1]});
  }

  double length() const { return length_; }

  /// Unwrapped heading at arc length s.
  double heading(double s) const
  {
    double psi = initial_;
    for (const auto& t : turns_)
    {
      if (s >= t.at + t.half_width)
        psi += t.delta;
      else if (s > t.at - t.half_width)
        psi += t.delta * 0.5 * (1.0 - std::cos(kPi * ramp(t, s)));
    }
    return psi;
  }

  /// d(heading)/ds at arc length s.
  double curvature(double s) const
  {
    double k = 0.0;
    for (const auto& t : turns_)
    {
      if (s > t.at - t.half_width && s < t.at + t.half_width)
        k += t.delta * 0.5 * kPi * std::sin(kPi * ramp(t, s)) / (2.0 * t.half_width);
    }
    return k;
  }

  /// Position change between arc lengths a and b (composite Simpson).
  Position2D advance(double a, double b) const
  {
    if (b <= a)
      return {};
    constexpr int m = 16;
    const double h = (b - a) / m;
    double sx = 0.0, sy = 0.0;
    for (int i = 0; i <= m; ++i)
    {
      const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      const double psi = heading(a + i * h);
      sx += w * std::cos(psi);
      sy += w * std::sin(psi);
    }
    return {sx * h / 3.0, sy * h / 3.0};
  }

private:
  struct Turn
  {
    double at;
    double delta;
    double half_width;
  };

  static double ramp(const Turn& t, double s) { return (s - (t.at - t.half_width)) / (2.0 * t.half_width); }

  double initial_ = 0.0;
  double length_ = 0.0;
  std::vector<double> lengths_;
  std::vector<Turn> turns_;
};

inline std::mt19937_64 device_rng(std::uint64_t seed, std::uint64_t stream)
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return std::mt19937_64(seq);
}

struct Kinematics
{
  std::vector<double> t;
  std::vector<double> psi;       // unwrapped walking heading
  std::vector<double> psi_rate;  // rad/s
  std::vector<double> vertical;  // step acceleration, m/s^2
  std::vector<Position2D> pos;
};

}  // namespace detail

inline void validate(const SynthScenario& sc)
{
  if (!(sc.step_frequency > 0.0) || !(sc.step_amplitude > 0.0) || !(sc.rate_hz > 0.0) || !(sc.turn_length > 0.0))
    throw InputError("synth: frequencies, amplitudes and rates must be positive");
  if (!(sc.stand_start >= 0.0) || !(sc.stand_end >= 0.0))
    throw InputError("synth: standing durations must be non-negative");
  stride_length(sc.user_height);
}

namespace detail
{
inline Kinematics walk_kinematics(const SynthScenario& sc)
{
  const SmoothPath path(sc.waypoints, sc.turn_length);
  const double L = sc.stride();
  const double v = sc.walking_speed();
  const double D = path.length();
  const auto strides = static_cast<std::size_t>(std::ceil(D / L - 1e-9));
  const double t0 = sc.stand_start;
  const double walk_end = t0 + static_cast<double>(strides) / sc.step_frequency;
  const double total = walk_end + sc.stand_end;
  const auto count = static_cast<std::size_t>(std::floor(total * sc.rate_hz + 1e-9)) + 1;

  Kinematics k;
  Position2D p;
  double s_prev = 0.0;
  for (std::size_t i = 0; i < count; ++i)
  {
    const double t = static_cast<double>(i) / sc.rate_hz;
    const double s = std::clamp(v * (t - t0), 0.0, D);
    p = p + path.advance(s_prev, s);
    s_prev = s;
    const bool moving = t > t0 && v * (t - t0) < D;
    const bool stepping = t >= t0 && t < walk_end - 1e-12;
    k.t.push_back(t);
    k.psi.push_back(path.heading(s));
    k.psi_rate.push_back(moving ? v * path.curvature(s) : 0.0);
    k.vertical.push_back(stepping ? -sc.step_amplitude * std::cos(kTwoPi * sc.step_frequency * (t - t0)) : 0.0);
    k.pos.push_back(p);
  }
  return k;
}

inline DeviceTrace render_device(const SynthScenario& sc, const Kinematics& k, const DeviceModel& dev,
                                 std::uint64_t stream)
{
  require_invertible(dev.miscalibration);
  auto rng = device_rng(sc.seed, stream);
  std::normal_distribution<double> unit(0.0, 1.0);
  auto noise = [&](double sigma) {
    Vec3 n(unit(rng), unit(rng), unit(rng));
    return Vec3(sigma * n);
  };

  const Mat3 r0 = (Eigen::AngleAxisd(dev.pitch, Vec3::UnitY()) * Eigen::AngleAxisd(dev.roll, Vec3::UnitX()))
                      .toRotationMatrix();
  const Vec3 field = Eigen::AngleAxisd(-dev.hard_iron, Vec3::UnitZ()) *
                     Vec3(0.0, sc.field_horizontal, sc.field_vertical);

  DeviceTrace tr;
  tr.device_id = dev.id;
  tr.rate_hz = sc.rate_hz;
  tr.samples.reserve(k.t.size());
  for (std::size_t i = 0; i < k.t.size(); ++i)
  {
    const Mat3 R = Eigen::AngleAxisd(k.psi[i] + dev.mount_yaw, Vec3::UnitZ()).toRotationMatrix() * r0;
    ImuSample s;
    s.t = k.t[i];
    const Vec3 specific_force(0.0, 0.0, kGravity + k.vertical[i]);
    s.acc = uncalibrate_accel(R.transpose() * specific_force, dev.miscalibration);
    s.gyro = r0.transpose() * Vec3(0.0, 0.0, k.psi_rate[i]) + dev.gyro_bias;
    s.mag = mag_body_to_sensor(R.transpose() * field);
    // Noise is drawn in a fixed channel order so outputs are reproducible per seed.
    s.acc += noise(dev.accel_noise);
    s.gyro += noise(dev.gyro_noise);
    s.mag += noise(dev.mag_noise);
    tr.samples.push_back(s);
  }
  return tr;
}
}  // namespace detail

/// Synthesizes a walk along the scenario polyline. Each stride covers one stride length
/// (0.43 * height) of path in one step period; the final stride is cut short at the path
/// end. Deterministic for a given seed.
inline SynthOutput generate(const SynthScenario& sc)
{
  validate(sc);
  const auto k = detail::walk_kinematics(sc);

  SynthOutput out;
  out.left = detail::render_device(sc, k, sc.left, 1);
  if (sc.right)
    out.right = detail::render_device(sc, k, *sc.right, 2);

  DeviceModel phone;
  phone.id = "phone";
  out.phone = detail::render_device(sc, k, phone, 3);
  auto rng = detail::device_rng(sc.seed, 4);
  std::normal_distribution<double> ref_noise(0.0, deg2rad(sc.phone_heading_noise_deg));
  for (double psi : k.psi)
    out.phone.reference.push_back(Angle::radians(psi + (sc.phone_heading_noise_deg > 0.0 ? ref_noise(rng) : 0.0)));

  out.truth.t = k.t;
  out.truth.pos = k.pos;
  out.truth_heading.method = HeadingMethod::Reference;
  out.truth_heading.t = k.t;
  for (double psi : k.psi)
    out.truth_heading.psi.push_back(Angle::radians(psi));

  const detail::SmoothPath path(sc.waypoints, sc.turn_length);
  const auto strides = static_cast<std::size_t>(std::ceil(path.length() / sc.stride() - 1e-9));
  auto index_of = [&](double t) {
    return std::min(k.t.size(), static_cast<std::size_t>(std::lround(t * sc.rate_hz)));
  };
  for (std::size_t j = 0; j < strides; ++j)
  {
    const double begin = sc.stand_start + static_cast<double>(j) / sc.step_frequency;
    const double peak = begin + 0.5 / sc.step_frequency;
    const double end = begin + 1.0 / sc.step_frequency;
    out.stride_times.push_back(peak);
    out.truth.strides.push_back({peak, index_of(peak), index_of(begin), index_of(end), sc.step_amplitude});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Static-orientation calibration recordings
// ---------------------------------------------------------------------------

/// `count` gravity directions, pairwise at least min_sep_deg apart (seeded).
inline std::vector<Vec3> spread_orientations(std::size_t count, std::uint64_t seed, double min_sep_deg = 25.0)
{
  auto rng = detail::device_rng(seed, 99);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec3> dirs;
  const double cos_sep = std::cos(deg2rad(min_sep_deg));
  int attempts = 0;
  while (dirs.size() < count)
  {
    const Vec3 u = Vec3(n(rng), n(rng), n(rng)).normalized();
    bool ok = true;
    for (const auto& d : dirs)
      ok = ok && u.dot(d) < cos_sep;
    if (ok || ++attempts > 100000)
      dirs.push_back(u);
  }
  return dirs;
}

/// Static holds in spread orientations separated by short tumbling transitions, as
/// recorded by a miscalibrated accelerometer.
inline DeviceTrace generate_calibration_trace(const AccelCalib& miscal, std::size_t orientations = 12,
                                              std::uint64_t seed = 1, double accel_noise = 0.0,
                                              double rate_hz = 20.0, double hold_s = 2.0,
                                              double transition_s = 0.5)
{
  require_invertible(miscal);
  const auto dirs = spread_orientations(orientations, seed);
  auto rng = detail::device_rng(seed, 98);
  std::normal_distribution<double> n(0.0, 1.0);
  DeviceTrace tr;
  tr.device_id = "calibration";
  tr.rate_hz = rate_hz;
  const auto hold = static_cast<std::size_t>(std::lround(hold_s * rate_hz));
  const auto move = static_cast<std::size_t>(std::lround(transition_s * rate_hz));
  std::size_t idx = 0;
  auto emit = [&](const Vec3& true_acc) {
    ImuSample s;
    s.t = static_cast<double>(idx++) / rate_hz;
    s.acc = uncalibrate_accel(true_acc, miscal) + accel_noise * Vec3(n(rng), n(rng), n(rng));
    s.mag = Vec3(20.0, 0.0, 40.0);
    tr.samples.push_back(s);
  };
  for (std::size_t o = 0; o < dirs.size(); ++o)
  {
    for (std::size_t i = 0; i < hold; ++i)
      emit(kGravity * dirs[o]);
    if (o + 1 < dirs.size())
    {
      for (std::size_t i = 0; i < move; ++i)
      {
        const double u = (static_cast<double>(i) + 1.0) / static_cast<double>(move + 1);
        // Handling jolts: the norm departs from g during the transition.
        emit((1.0 - u) * kGravity * dirs[o] + u * kGravity * dirs[o + 1] +
             3.0 * std::sin(kPi * u) * Vec3(1.0, -1.0, 1.0));
      }
    }
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar: t, x_m, y_m, heading_deg, stride_flag
// ---------------------------------------------------------------------------

inline void write_truth(std::ostream& out, const Track& truth, const HeadingSeries& heading)
{
  require_aligned(truth.t, heading.t, "write_truth");
  std::vector<int> flag(truth.size(), 0);
  for (const auto& s : truth.strides)
  {
    if (s.peak_index < flag.size())
      flag[s.peak_index] = 1;
  }
  out << "t,x_m,y_m,heading_deg,stride_flag\n";
  for (std::size_t i = 0; i < truth.size(); ++i)
    out << fmt_fixed(truth.t[i], 6) << ',' << fmt_fixed(truth.pos[i].x, 6) << ',' << fmt_fixed(truth.pos[i].y, 6)
        << ',' << fmt_fixed(heading.psi[i].deg(), 6) << ',' << flag[i] << '\n';
}

struct GroundTruth
{
  Track track;
  HeadingSeries heading;
};

inline GroundTruth parse_truth(std::istream& in, const std::string& source)
{
  std::string line;
  if (!next_line(in, line) || line != "t,x_m,y_m,heading_deg,stride_flag")
    throw InputError(located(source, 1, "expected header 't,x_m,y_m,heading_deg,stride_flag'"));
  GroundTruth g;
  g.heading.method = HeadingMethod::Reference;
  std::size_t n = 1;
  while (next_line(in, line))
  {
    ++n;
    if (line.empty())
      continue;
    const auto f = split_fields(line);
    if (f.size() != 5)
      throw InputError(located(source, n, "malformed row"));
    const double t = parse_real(f[0], source, n);
    if (!g.track.t.empty() && t <= g.track.t.back())
      throw InputError(located(source, n, "non-monotonic time"));
    g.track.t.push_back(t);
    g.track.pos.push_back({parse_real(f[1], source, n), parse_real(f[2], source, n)});
    g.heading.t.push_back(t);
    g.heading.psi.push_back(Angle::degrees(parse_real(f[3], source, n)));
    if (parse_real(f[4], source, n) != 0.0)
      g.track.strides.push_back({t, g.track.t.size() - 1, 0, 0, 0.0});
  }
  return g;
}

inline GroundTruth load_truth(const std::string& path)
{
  auto in = open_input(path);
  return parse_truth(in, path);
}

// ---------------------------------------------------------------------------
// Route presets
// ---------------------------------------------------------------------------

inline std::vector<Position2D> straight_route(double length) { return {{0.0, 0.0}, {length, 0.0}}; }

/// Counter-clockwise square starting at its south-west corner, heading east.
inline std::vector<Position2D> square_route(double side)
{
  return {{0.0, 0.0}, {side, 0.0}, {side, side}, {0.0, side}, {0.0, 0.0}};
}

/// Up and down a north-south corridor `round_trips` times.
inline std::vector<Position2D> corridor_route(double length = 10.0, int round_trips = 5)
{
  std::vector<Position2D> w{{0.0, 0.0}};
  for (int i = 0; i < round_trips; ++i)
  {
    w.push_back({0.0, length});
    w.push_back({0.0, 0.0});
  }
  return w;
}

/// Irregular closed loop of about 190 m.
inline std::vector<Position2D> outdoor_route()
{
  return {{0.0, 0.0}, {42.0, 3.0}, {55.0, 27.0}, {31.0, 46.0}, {-6.0, 33.0}, {0.0, 0.0}};
}

}  // namespace earnav
