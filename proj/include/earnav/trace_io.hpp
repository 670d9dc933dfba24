/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace earnav
{

// ---------------------------------------------------------------------------
// Text helpers shared by every file format in the project
// ---------------------------------------------------------------------------

/// Fixed-point formatting; "-0.000" collapses to "0.000" so output is canonical.
inline std::string fmt_fixed(double v, int decimals)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  std::string s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos)
    s.erase(0, 1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',')
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true)
  {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos)
    {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string located(std::string_view source, std::size_t line, std::string_view msg)
{
  return std::string(source) + ":" + std::to_string(line) + ": " + std::string(msg);
}

/// Parses a real number; rejects trailing garbage and non-finite values.
inline double parse_real(std::string_view field, std::string_view source, std::size_t line)
{
  while (!field.empty() && field.front() == ' ')
    field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ')
    field.remove_suffix(1);
  double v = 0.0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != end)
    throw InputError(located(source, line, "malformed row (cannot parse '" + std::string(field) + "')"));
  if (!std::isfinite(v))
    throw InputError(located(source, line, "non-finite field"));
  return v;
}

inline std::ifstream open_input(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write '" + path + "'");
  return out;
}

inline bool next_line(std::istream& in, std::string& line)
{
  if (!std::getline(in, line))
    return false;
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  return true;
}

/// Ordered key=value pairs with their source line numbers. '#' starts a comment line.
struct KeyValueFile
{
  struct Entry
  {
    std::string key;
    std::string value;
    std::size_t line = 0;
  };
  std::string source;
  std::vector<Entry> entries;
};

inline KeyValueFile parse_key_values(std::istream& in, std::string source)
{
  KeyValueFile kv{std::move(source), {}};
  std::string line;
  std::size_t n = 0;
  while (next_line(in, line))
  {
    ++n;
    std::string_view v(line);
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t'))
      v.remove_prefix(1);
    if (v.empty() || v.front() == '#')
      continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw InputError(located(kv.source, n, "expected key=value"));
    std::string key(v.substr(0, eq));
    while (!key.empty() && key.back() == ' ')
      key.pop_back();
    std::string value(v.substr(eq + 1));
    while (!value.empty() && value.front() == ' ')
      value.erase(0, 1);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t'))
      value.pop_back();
    kv.entries.push_back({std::move(key), std::move(value), n});
  }
  return kv;
}

inline KeyValueFile load_key_values(const std::string& path)
{
  auto in = open_input(path);
  return parse_key_values(in, path);
}

inline bool parse_bool(std::string_view v, std::string_view source, std::size_t line)
{
  if (v == "1" || v == "true" || v == "yes")
    return true;
  if (v == "0" || v == "false" || v == "no")
    return false;
  throw InputError(located(source, line, "expected boolean, got '" + std::string(v) + "'"));
}

// ---------------------------------------------------------------------------
// Device traces
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTraceColumns = "t,ax,ay,az,gx,gy,gz,mx,my,mz";
inline constexpr std::string_view kTraceColumnsWithReference = "t,ax,ay,az,gx,gy,gz,mx,my,mz,ref_heading_deg";

/// Header line: `# device_id=<id> rate_hz=<r> columns=<list>`, then one CSV row per sample.
/// expected_columns = 0 accepts either layout (10 or 11 columns).
inline DeviceTrace parse_trace(std::istream& in, const std::string& source, std::size_t expected_columns = 0)
{
  std::string line;
  if (!next_line(in, line))
    throw InputError(located(source, 1, "empty trace file"));
  if (line.rfind("# ", 0) != 0)
    throw InputError(located(source, 1, "missing trace header"));

  DeviceTrace trace;
  std::string columns;
  std::istringstream hs(line.substr(2));
  std::string token;
  while (hs >> token)
  {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw InputError(located(source, 1, "malformed header token '" + token + "'"));
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    if (key == "device_id")
      trace.device_id = value;
    else if (key == "rate_hz")
      trace.rate_hz = parse_real(value, source, 1);
    else if (key == "columns")
      columns = value;
    else
      throw InputError(located(source, 1, "unknown header key '" + key + "'"));
  }
  if (trace.device_id.empty())
    throw InputError(located(source, 1, "header lacks device_id"));
  if (!(trace.rate_hz > 0.0))
    throw InputError(located(source, 1, "header rate_hz must be positive"));

  std::size_t ncols = 0;
  if (columns == kTraceColumns)
    ncols = 10;
  else if (columns == kTraceColumnsWithReference)
    ncols = 11;
  else
    throw InputError(located(source, 1, "unsupported column list '" + columns + "'"));
  if (expected_columns != 0 && expected_columns != ncols)
    throw InputError(located(source, 1, "expected " + std::to_string(expected_columns) + " columns, file has " +
                                          std::to_string(ncols)));

  std::size_t n = 1;
  while (next_line(in, line))
  {
    ++n;
    if (line.empty())
      continue;
    const auto f = split_fields(line);
    if (f.size() != ncols)
      throw InputError(located(source, n, "malformed row (expected " + std::to_string(ncols) + " fields, got " +
                                              std::to_string(f.size()) + ")"));
    ImuSample s;
    s.t = parse_real(f[0], source, n);
    if (s.t < 0.0)
      throw InputError(located(source, n, "negative timestamp"));
    s.acc = Vec3(parse_real(f[1], source, n), parse_real(f[2], source, n), parse_real(f[3], source, n));
    s.gyro = Vec3(parse_real(f[4], source, n), parse_real(f[5], source, n), parse_real(f[6], source, n));
    s.mag = Vec3(parse_real(f[7], source, n), parse_real(f[8], source, n), parse_real(f[9], source, n));
    if (!trace.samples.empty())
    {
      const double prev = trace.samples.back().t;
      if (s.t == prev)
        throw InputError(located(source, n, "duplicate timestamp"));
      if (s.t < prev)
        throw InputError(located(source, n, "non-monotonic time"));
    }
    trace.samples.push_back(s);
    if (ncols == 11)
      trace.reference.push_back(Angle::degrees(parse_real(f[10], source, n)));
  }
  return trace;
}

inline DeviceTrace load_trace(const std::string& path, std::size_t expected_columns = 0)
{
  auto in = open_input(path);
  return parse_trace(in, path, expected_columns);
}

inline void write_trace(std::ostream& out, const DeviceTrace& trace)
{
  const bool ref = trace.has_reference();
  if (ref && trace.reference.size() != trace.samples.size())
    throw InputError("write_trace: reference column length mismatch");
  out << "# device_id=" << trace.device_id << " rate_hz=" << fmt_fixed(trace.rate_hz, 6)
      << " columns=" << (ref ? kTraceColumnsWithReference : kTraceColumns) << '\n';
  for (std::size_t i = 0; i < trace.samples.size(); ++i)
  {
    const auto& s = trace.samples[i];
    out << fmt_fixed(s.t, 6);
    for (const Vec3* v : {&s.acc, &s.gyro, &s.mag})
      for (int k = 0; k < 3; ++k)
        out << ',' << fmt_fixed((*v)[k], 9);
    if (ref)
      out << ',' << fmt_fixed(trace.reference[i].deg(), 6);
    out << '\n';
  }
}

inline void write_trace(const std::string& path, const DeviceTrace& trace)
{
  auto out = open_output(path);
  write_trace(out, trace);
}

/// True when consecutive timestamps are spaced 1/rate_hz apart within tol seconds.
inline bool is_uniform(const DeviceTrace& trace, double tol = 1e-6)
{
  if (trace.samples.size() < 2)
    return true;
  const double dt = 1.0 / trace.rate_hz;
  for (std::size_t i = 1; i < trace.samples.size(); ++i)
  {
    if (std::abs(trace.samples[i].t - trace.samples[i - 1].t - dt) > tol)
      return false;
  }
  return true;
}

/// Shortest-arc linear interpolation between two headings.
inline Angle lerp_angle(Angle a, Angle b, double u)
{
  return Angle::radians(a.rad() + u * circular_diff(b, a));
}

namespace detail
{
// Returns i such that t[i] <= q < t[i+1] (clamped to valid segment).
inline std::size_t segment_of(std::span<const double> t, double q)
{
  const auto it = std::upper_bound(t.begin(), t.end(), q);
  if (it == t.begin())
    return 0;
  const auto i = static_cast<std::size_t>(it - t.begin()) - 1;
  return std::min(i, t.size() - 2);
}
}  // namespace detail

/// Linearly interpolates every channel onto arbitrary query times; values outside the
/// trace's time span are held at the first/last sample. The rate field is left unchanged.
inline DeviceTrace interpolate_to_grid(const DeviceTrace& trace, std::span<const double> times)
{
  if (trace.samples.empty())
    throw InputError("interpolate_to_grid: empty trace");
  const auto t = trace.times();
  DeviceTrace out;
  out.device_id = trace.device_id;
  out.rate_hz = trace.rate_hz;
  out.samples.reserve(times.size());
  for (double q : times)
  {
    ImuSample s;
    std::optional<Angle> ref;
    if (t.size() == 1 || q <= t.front())
    {
      s = trace.samples.front();
      if (trace.has_reference())
        ref = trace.reference.front();
    }
    else if (q >= t.back())
    {
      s = trace.samples.back();
      if (trace.has_reference())
        ref = trace.reference.back();
    }
    else
    {
      const auto i = detail::segment_of(t, q);
      const auto& a = trace.samples[i];
      const auto& b = trace.samples[i + 1];
      const double u = (q - a.t) / (b.t - a.t);
      if (std::abs(q - a.t) <= 1e-9)
      {
        s = a;
      }
      else if (std::abs(q - b.t) <= 1e-9)
      {
        s = b;
      }
      else
      {
        s.acc = a.acc + u * (b.acc - a.acc);
        s.gyro = a.gyro + u * (b.gyro - a.gyro);
        s.mag = a.mag + u * (b.mag - a.mag);
      }
      if (trace.has_reference())
        ref = lerp_angle(trace.reference[i], trace.reference[i + 1], u);
    }
    s.t = q;
    out.samples.push_back(s);
    if (ref)
      out.reference.push_back(*ref);
  }
  return out;
}

/// Uniform grid t0 + k/target_hz, k = 0..floor(duration*target_hz); channels linearly
/// interpolated. target_hz may not exceed the trace's declared rate.
inline DeviceTrace resample(const DeviceTrace& trace, double target_hz)
{
  if (!(target_hz > 0.0) || !std::isfinite(target_hz))
    throw InputError("resample: target rate must be positive");
  if (trace.samples.empty())
    throw InputError("resample: empty trace");
  if (target_hz > trace.rate_hz * (1.0 + 1e-9))
    throw InputError("resample: target rate exceeds native rate");
  const double t0 = trace.samples.front().t;
  const auto count = static_cast<std::size_t>(std::floor(trace.duration() * target_hz + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k)
    grid[k] = t0 + static_cast<double>(k) / target_hz;
  auto out = interpolate_to_grid(trace, grid);
  out.rate_hz = target_hz;
  return out;
}

/// Circular interpolation of a heading series at time q (held outside the series).
inline Angle interpolate_heading(std::span<const double> t, std::span<const Angle> psi, double q)
{
  if (t.empty())
    throw InputError("interpolate_heading: empty series");
  if (t.size() == 1 || q <= t.front())
    return psi.front();
  if (q >= t.back())
    return psi.back();
  const auto i = detail::segment_of(t, q);
  return lerp_angle(psi[i], psi[i + 1], (q - t[i]) / (t[i + 1] - t[i]));
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig
{
  double user_height = 1.80;  // m
  double rate_hz = 20.0;      // pipeline sampling rate

  // Complementary schedule: gyro weight = clamp(alpha0 - slope * t, floor, 1)
  double comp_alpha0 = 0.8;
  double comp_slope = 1.0 / 400.0;
  double comp_floor = 0.0;
  bool comp_reset_on_rollover = false;

  double stride_prominence = 0.8;  // m/s^2 on the filtered norm
  double lowpass_cutoff_hz = 3.0;

  double stationary_threshold = 0.3;  // | |acc| - g | bound, m/s^2
  double stationary_window_s = 1.0;
  bool gyro_freeze_after_first = false;

  double mag_period_s = 15.0;
  int mag_window_cap = 15;

  int heading_particles = 500;
  double heading_process_noise_deg = 4.0;
  double heading_measurement_noise_deg = 6.0;

  int position_particles = 1000;
  double position_process_noise = 1.5;  // m / sqrt(s)
  double gps_period_s = 30.0;
  double gps_sigma_m = 3.9;

  double madgwick_gain = 0.1;
  std::uint64_t seed = 1;

  void validate() const
  {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw InputError(std::string("config: ") + name + " must be strictly positive");
    };
    if (!(user_height >= 0.5 && user_height <= 2.5))
      throw InputError("config: user_height must be within [0.5, 2.5] m");
    positive(rate_hz, "rate_hz");
    positive(comp_slope, "comp_slope");
    positive(stride_prominence, "stride_prominence");
    positive(lowpass_cutoff_hz, "lowpass_cutoff_hz");
    positive(stationary_threshold, "stationary_threshold");
    positive(stationary_window_s, "stationary_window_s");
    positive(mag_period_s, "mag_period_s");
    positive(heading_process_noise_deg, "heading_process_noise_deg");
    positive(heading_measurement_noise_deg, "heading_measurement_noise_deg");
    positive(position_process_noise, "position_process_noise");
    positive(gps_period_s, "gps_period_s");
    positive(gps_sigma_m, "gps_sigma_m");
    positive(madgwick_gain, "madgwick_gain");
    if (mag_window_cap <= 0 || heading_particles <= 0 || position_particles <= 0)
      throw InputError("config: counts must be strictly positive");
    if (!(comp_alpha0 >= 0.0 && comp_alpha0 <= 1.0) || !(comp_floor >= 0.0 && comp_floor <= 1.0))
      throw InputError("config: complementary weights must lie in [0, 1]");
  }
};

inline RunConfig parse_config(const KeyValueFile& kv)
{
  RunConfig c;
  std::map<std::string, std::size_t> seen;
  for (const auto& e : kv.entries)
  {
    if (seen.count(e.key))
      throw InputError(located(kv.source, e.line, "duplicate key '" + e.key + "'"));
    seen[e.key] = e.line;
    auto real = [&] { return parse_real(e.value, kv.source, e.line); };
    auto integer = [&] {
      const double v = real();
      if (v != std::floor(v))
        throw InputError(located(kv.source, e.line, "expected integer for '" + e.key + "'"));
      return v;
    };
    if (e.key == "user_height")
      c.user_height = real();
    else if (e.key == "rate_hz")
      c.rate_hz = real();
    else if (e.key == "comp_alpha0")
      c.comp_alpha0 = real();
    else if (e.key == "comp_slope")
      c.comp_slope = real();
    else if (e.key == "comp_floor")
      c.comp_floor = real();
    else if (e.key == "comp_reset_on_rollover")
      c.comp_reset_on_rollover = parse_bool(e.value, kv.source, e.line);
    else if (e.key == "stride_prominence")
      c.stride_prominence = real();
    else if (e.key == "lowpass_cutoff_hz")
      c.lowpass_cutoff_hz = real();
    else if (e.key == "stationary_threshold")
      c.stationary_threshold = real();
    else if (e.key == "stationary_window_s")
      c.stationary_window_s = real();
    else if (e.key == "gyro_freeze_after_first")
      c.gyro_freeze_after_first = parse_bool(e.value, kv.source, e.line);
    else if (e.key == "mag_period_s")
      c.mag_period_s = real();
    else if (e.key == "mag_window_cap")
      c.mag_window_cap = static_cast<int>(integer());
    else if (e.key == "heading_particles")
      c.heading_particles = static_cast<int>(integer());
    else if (e.key == "heading_process_noise_deg")
      c.heading_process_noise_deg = real();
    else if (e.key == "heading_measurement_noise_deg")
      c.heading_measurement_noise_deg = real();
    else if (e.key == "position_particles")
      c.position_particles = static_cast<int>(integer());
    else if (e.key == "position_process_noise")
      c.position_process_noise = real();
    else if (e.key == "gps_period_s")
      c.gps_period_s = real();
    else if (e.key == "gps_sigma_m")
      c.gps_sigma_m = real();
    else if (e.key == "madgwick_gain")
      c.madgwick_gain = real();
    else if (e.key == "seed")
    {
      const double v = integer();
      if (v < 0)
        throw InputError(located(kv.source, e.line, "seed must be non-negative"));
      c.seed = static_cast<std::uint64_t>(v);
    }
    else
      throw InputError(located(kv.source, e.line, "unknown config key '" + e.key + "'"));
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) { return parse_config(load_key_values(path)); }

inline void write_config(std::ostream& out, const RunConfig& c)
{
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "user_height=" << fmt_fixed(c.user_height, 6) << '\n'
      << "rate_hz=" << fmt_fixed(c.rate_hz, 6) << '\n'
      << "comp_alpha0=" << fmt_fixed(c.comp_alpha0, 6) << '\n'
      << "comp_slope=" << fmt_fixed(c.comp_slope, 9) << '\n'
      << "comp_floor=" << fmt_fixed(c.comp_floor, 6) << '\n'
      << "comp_reset_on_rollover=" << b(c.comp_reset_on_rollover) << '\n'
      << "stride_prominence=" << fmt_fixed(c.stride_prominence, 6) << '\n'
      << "lowpass_cutoff_hz=" << fmt_fixed(c.lowpass_cutoff_hz, 6) << '\n'
      << "stationary_threshold=" << fmt_fixed(c.stationary_threshold, 6) << '\n'
      << "stationary_window_s=" << fmt_fixed(c.stationary_window_s, 6) << '\n'
      << "gyro_freeze_after_first=" << b(c.gyro_freeze_after_first) << '\n'
      << "mag_period_s=" << fmt_fixed(c.mag_period_s, 6) << '\n'
      << "mag_window_cap=" << c.mag_window_cap << '\n'
      << "heading_particles=" << c.heading_particles << '\n'
      << "heading_process_noise_deg=" << fmt_fixed(c.heading_process_noise_deg, 6) << '\n'
      << "heading_measurement_noise_deg=" << fmt_fixed(c.heading_measurement_noise_deg, 6) << '\n'
      << "position_particles=" << c.position_particles << '\n'
      << "position_process_noise=" << fmt_fixed(c.position_process_noise, 6) << '\n'
      << "gps_period_s=" << fmt_fixed(c.gps_period_s, 6) << '\n'
      << "gps_sigma_m=" << fmt_fixed(c.gps_sigma_m, 6) << '\n'
      << "madgwick_gain=" << fmt_fixed(c.madgwick_gain, 6) << '\n'
      << "seed=" << c.seed << '\n';
}

// ---------------------------------------------------------------------------
// Series files: headings, tracks, stride events
// ---------------------------------------------------------------------------

inline void write_heading_series(std::ostream& out, const HeadingSeries& h)
{
  out << "t,heading_deg,method\n";
  for (std::size_t i = 0; i < h.size(); ++i)
    out << fmt_fixed(h.t[i], 6) << ',' << fmt_fixed(h.psi[i].deg(), 6) << ',' << to_string(h.method) << '\n';
}

inline HeadingSeries parse_heading_series(std::istream& in, const std::string& source)
{
  std::string line;
  if (!next_line(in, line) || line != "t,heading_deg,method")
    throw InputError(located(source, 1, "expected header 't,heading_deg,method'"));
  HeadingSeries h;
  std::size_t n = 1;
  bool first = true;
  while (next_line(in, line))
  {
    ++n;
    if (line.empty())
      continue;
    const auto f = split_fields(line);
    if (f.size() != 3)
      throw InputError(located(source, n, "malformed row"));
    const double t = parse_real(f[0], source, n);
    if (!h.t.empty() && t <= h.t.back())
      throw InputError(located(source, n, "non-monotonic time"));
    h.t.push_back(t);
    h.psi.push_back(Angle::degrees(parse_real(f[1], source, n)));
    HeadingMethod m = HeadingMethod::Mag;
    bool known = false;
    for (auto cand : {HeadingMethod::Mag, HeadingMethod::Gyro, HeadingMethod::Complementary,
                      HeadingMethod::Madgwick, HeadingMethod::Fused, HeadingMethod::Reference})
    {
      if (to_string(cand) == f[2])
      {
        m = cand;
        known = true;
      }
    }
    if (!known)
      throw InputError(located(source, n, "unknown method tag '" + std::string(f[2]) + "'"));
    if (first)
      h.method = m;
    else if (m != h.method)
      throw InputError(located(source, n, "method tag changes within series"));
    first = false;
  }
  return h;
}

inline HeadingSeries load_heading_series(const std::string& path)
{
  auto in = open_input(path);
  return parse_heading_series(in, path);
}

inline void write_track(std::ostream& out, const Track& track)
{
  out << "t,x_m,y_m\n";
  for (std::size_t i = 0; i < track.size(); ++i)
    out << fmt_fixed(track.t[i], 6) << ',' << fmt_fixed(track.pos[i].x, 6) << ',' << fmt_fixed(track.pos[i].y, 6)
        << '\n';
}

inline Track parse_track(std::istream& in, const std::string& source)
{
  std::string line;
  if (!next_line(in, line) || line != "t,x_m,y_m")
    throw InputError(located(source, 1, "expected header 't,x_m,y_m'"));
  Track tr;
  std::size_t n = 1;
  while (next_line(in, line))
  {
    ++n;
    if (line.empty())
      continue;
    const auto f = split_fields(line);
    if (f.size() != 3)
      throw InputError(located(source, n, "malformed row"));
    const double t = parse_real(f[0], source, n);
    if (!tr.t.empty() && t <= tr.t.back())
      throw InputError(located(source, n, "non-monotonic time"));
    tr.t.push_back(t);
    tr.pos.push_back({parse_real(f[1], source, n), parse_real(f[2], source, n)});
  }
  return tr;
}

inline Track load_track(const std::string& path)
{
  auto in = open_input(path);
  return parse_track(in, path);
}

inline void write_strides(std::ostream& out, const std::vector<StrideEvent>& strides)
{
  out << "peak_time,i,j,prominence\n";
  for (const auto& s : strides)
    out << fmt_fixed(s.peak_time, 6) << ',' << s.begin << ',' << s.end << ',' << fmt_fixed(s.prominence, 6) << '\n';
}

}  // namespace earnav
