/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/datamodel.hpp"
#include "earnav/trace_io.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

namespace earnav
{

struct DriftReport
{
  double drift = 0.0;     // m/s
  double duration = 0.0;  // s
  Position2D final_position;
  double final_error = 0.0;  // m, distance from the expected end point
};

/// Final-position error divided by elapsed time. Closed loops end where they start, so the
/// expected end defaults to the origin.
inline DriftReport drift(const Track& track, Position2D expected_end = {})
{
  if (track.t.empty())
    throw InputError("drift: empty track");
  const double duration = track.duration();
  if (!(duration > 0.0))
    throw InputError("drift: duration must be positive");
  DriftReport r;
  r.duration = duration;
  r.final_position = track.pos.back();
  r.final_error = (track.pos.back() - expected_end).norm();
  r.drift = r.final_error / duration;
  return r;
}

struct HeadingErrorReport
{
  double mean_abs_error = 0.0;  // deg
  double std_dev = 0.0;         // deg, population sd of the per-timestamp errors
  std::vector<double> t;
  std::vector<double> errors;  // deg

  struct Stats
  {
    double mean = 0.0;
    double sd = 0.0;
  };
  Stats stats() const { return {mean_abs_error, std_dev}; }
};

/// Absolute circular difference per timestamp. When the grids differ the reference is
/// interpolated circularly at estimate times inside their common span.
inline HeadingErrorReport heading_error(const HeadingSeries& estimate, const HeadingSeries& reference)
{
  if (estimate.t.empty() || reference.t.empty())
    throw InputError("heading_error: empty series");
  bool aligned = estimate.t.size() == reference.t.size();
  for (std::size_t i = 0; aligned && i < estimate.t.size(); ++i)
    aligned = std::abs(estimate.t[i] - reference.t[i]) <= 1e-6;

  HeadingErrorReport r;
  const double lo = reference.t.front() - 1e-9;
  const double hi = reference.t.back() + 1e-9;
  for (std::size_t i = 0; i < estimate.t.size(); ++i)
  {
    const double q = estimate.t[i];
    Angle ref;
    if (aligned)
      ref = reference.psi[i];
    else if (q >= lo && q <= hi)
      ref = interpolate_heading(reference.t, reference.psi, q);
    else
      continue;
    r.t.push_back(q);
    r.errors.push_back(std::abs(rad2deg(circular_diff(estimate.psi[i], ref))));
  }
  if (r.errors.empty())
    throw InputError("heading_error: disjoint time ranges");
  double s = 0.0;
  for (double e : r.errors)
    s += e;
  r.mean_abs_error = s / static_cast<double>(r.errors.size());
  double v = 0.0;
  for (double e : r.errors)
    v += (e - r.mean_abs_error) * (e - r.mean_abs_error);
  r.std_dev = std::sqrt(v / static_cast<double>(r.errors.size()));
  return r;
}

struct Summary
{
  double mean = 0.0;
  double sd = 0.0;  // sample sd (n - 1)
  std::size_t n = 0;
};

inline Summary summarize(std::span<const double> x)
{
  Summary s;
  s.n = x.size();
  if (x.empty())
    return s;
  for (double v : x)
    s.mean += v;
  s.mean /= static_cast<double>(x.size());
  if (x.size() > 1)
  {
    double q = 0.0;
    for (double v : x)
      q += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(q / static_cast<double>(x.size() - 1));
  }
  return s;
}

struct TTestResult
{
  double t = 0.0;
  double df = 0.0;
  double mean_difference = 0.0;
  double critical = 0.0;  // two-sided critical |t| at alpha
  double p_value = 1.0;
  bool significant = false;
  bool degenerate = false;  // differences have zero variance
};

/// Paired t test on d = a - b with a two-sided Student-t critical value.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.05)
{
  if (a.size() != b.size())
    throw InputError("paired_t_test: samples must have equal length");
  if (a.size() < 2)
    throw InputError("paired_t_test: need at least two pairs");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InputError("paired_t_test: alpha must lie in (0, 1)");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    d[i] = a[i] - b[i];
  const Summary s = summarize(d);

  TTestResult r;
  r.df = static_cast<double>(a.size() - 1);
  r.mean_difference = s.mean;
  const boost::math::students_t dist(r.df);
  r.critical = boost::math::quantile(boost::math::complement(dist, alpha / 2.0));

  const double scale = std::max(1.0, std::abs(s.mean));
  if (s.sd <= 1e-12 * scale)
  {
    r.degenerate = true;
    if (std::abs(s.mean) <= 1e-15)
    {
      r.t = 0.0;
      r.p_value = 1.0;
      r.significant = false;
    }
    else
    {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), s.mean);
      r.p_value = 0.0;
      r.significant = true;
    }
    return r;
  }
  r.t = s.mean / (s.sd / std::sqrt(static_cast<double>(a.size())));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.significant = std::abs(r.t) > r.critical;
  return r;
}

// ---------------------------------------------------------------------------
// key=value reports
// ---------------------------------------------------------------------------

inline void write_drift_report(std::ostream& out, const DriftReport& r, std::string_view prefix = "")
{
  out << prefix << "drift_m_per_s=" << fmt_fixed(r.drift, 6) << '\n'
      << prefix << "duration_s=" << fmt_fixed(r.duration, 6) << '\n'
      << prefix << "final_x_m=" << fmt_fixed(r.final_position.x, 6) << '\n'
      << prefix << "final_y_m=" << fmt_fixed(r.final_position.y, 6) << '\n'
      << prefix << "final_error_m=" << fmt_fixed(r.final_error, 6) << '\n';
}

inline void write_heading_report(std::ostream& out, const HeadingErrorReport& r, std::string_view prefix = "")
{
  out << prefix << "heading_error_mean_deg=" << fmt_fixed(r.mean_abs_error, 6) << '\n'
      << prefix << "heading_error_sd_deg=" << fmt_fixed(r.std_dev, 6) << '\n'
      << prefix << "heading_error_samples=" << r.errors.size() << '\n';
}

inline void write_heading_errors(std::ostream& out, const HeadingErrorReport& r)
{
  out << "t,error_deg\n";
  for (std::size_t i = 0; i < r.errors.size(); ++i)
    out << fmt_fixed(r.t[i], 6) << ',' << fmt_fixed(r.errors[i], 6) << '\n';
}

inline void write_t_test(std::ostream& out, const TTestResult& r, std::string_view prefix = "")
{
  out << prefix << "t=" << (std::isinf(r.t) ? (r.t > 0 ? "inf" : "-inf") : fmt_fixed(r.t, 6)) << '\n'
      << prefix << "df=" << fmt_fixed(r.df, 0) << '\n'
      << prefix << "p_value=" << fmt_fixed(r.p_value, 6) << '\n'
      << prefix << "significant=" << (r.significant ? "true" : "false") << '\n'
      << prefix << "degenerate=" << (r.degenerate ? "true" : "false") << '\n';
}

}  // namespace earnav
