/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/datamodel.hpp"
#include "earnav/displacement.hpp"
#include "earnav/trace_io.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace earnav
{

namespace detail
{

/// Systematic resampling: one uniform draw, N evenly spaced pointers into the CDF.
template <class Rng>
std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng)
{
  const std::size_t n = weights.size();
  std::vector<std::size_t> idx(n);
  const double u0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng) / static_cast<double>(n);
  double cdf = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i)
  {
    const double u = u0 + static_cast<double>(i) / static_cast<double>(n);
    while (u > cdf && j + 1 < n)
      cdf += weights[++j];
    idx[i] = j;
  }
  return idx;
}

/// Adds log-likelihoods to normalized weights and renormalizes (max-shifted, so
/// vanishing likelihood scales do not underflow everything).
inline void reweight(std::vector<double>& w, std::span<const double> log_like)
{
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> lw(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    lw[i] = w[i] > 0.0 ? std::log(w[i]) + log_like[i] : -std::numeric_limits<double>::infinity();
    best = std::max(best, lw[i]);
  }
  if (!std::isfinite(best))
    throw NumericalError("particle weights collapsed");
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
  {
    w[i] = std::exp(lw[i] - best);
    total += w[i];
  }
  for (double& x : w)
    x /= total;
}

inline double effective_sample_size(std::span<const double> w)
{
  double s = 0.0;
  for (double x : w)
    s += x * x;
  return 1.0 / s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Heading particle filter
// ---------------------------------------------------------------------------

struct HeadingFilterConfig
{
  std::size_t particles = 500;
  double process_noise = deg2rad(4.0);      // rad per step
  double measurement_noise = deg2rad(6.0);  // rad
  double resample_fraction = 0.5;           // resample when ESS < fraction * N
  std::uint64_t seed = 1;
};

class HeadingParticleFilter
{
public:
  explicit HeadingParticleFilter(const HeadingFilterConfig& cfg) : cfg_(cfg), rng_(cfg.seed)
  {
    if (cfg.particles == 0)
      throw InputError("heading filter needs at least one particle");
    if (!(cfg.process_noise >= 0.0) || !(cfg.measurement_noise > 0.0))
      throw InputError("heading filter noise must be positive");
  }

  /// Particles drawn around the consensus of the first measurements.
  void initialize(std::span<const Angle> measurements)
  {
    Angle centre = measurements.front();
    try
    {
      centre = circular_mean(measurements);
    }
    catch (const NumericalError&)
    {
    }
    std::normal_distribution<double> n(0.0, cfg_.measurement_noise);
    particles_.clear();
    for (std::size_t i = 0; i < cfg_.particles; ++i)
      particles_.push_back(Angle::radians(centre.rad() + n(rng_)));
    weights_.assign(cfg_.particles, 1.0 / static_cast<double>(cfg_.particles));
  }

  /// Shifts every particle by `motion` (rad) and adds Gaussian process noise.
  void predict(double motion = 0.0)
  {
    std::normal_distribution<double> n(0.0, cfg_.process_noise);
    for (auto& p : particles_)
      p = Angle::radians(p.rad() + motion + n(rng_));
  }

  void update(std::span<const Angle> measurements)
  {
    const double inv = 1.0 / (2.0 * cfg_.measurement_noise * cfg_.measurement_noise);
    std::vector<double> ll(particles_.size(), 0.0);
    for (std::size_t i = 0; i < particles_.size(); ++i)
    {
      for (const Angle& z : measurements)
      {
        const double d = circular_diff(z, particles_[i]);
        ll[i] -= d * d * inv;
      }
    }
    detail::reweight(weights_, ll);
  }

  Angle estimate() const
  {
    try
    {
      return circular_mean(particles_, weights_);
    }
    catch (const NumericalError&)
    {
      const auto best = std::max_element(weights_.begin(), weights_.end()) - weights_.begin();
      return particles_[static_cast<std::size_t>(best)];
    }
  }

  void resample_if_needed()
  {
    if (detail::effective_sample_size(weights_) >= cfg_.resample_fraction * static_cast<double>(weights_.size()))
      return;
    const auto idx = detail::systematic_resample(weights_, rng_);
    std::vector<Angle> next;
    next.reserve(idx.size());
    for (auto i : idx)
      next.push_back(particles_[i]);
    particles_ = std::move(next);
    weights_.assign(particles_.size(), 1.0 / static_cast<double>(particles_.size()));
  }

  /// One full cycle: predict, weight, estimate, then resample if degenerate.
  Angle step(std::span<const Angle> measurements, double motion = 0.0)
  {
    if (particles_.empty())
      initialize(measurements);
    else
      predict(motion);
    update(measurements);
    const Angle out = estimate();
    resample_if_needed();
    return out;
  }

  std::span<const Angle> particles() const { return particles_; }
  std::span<const double> weights() const { return weights_; }

private:
  HeadingFilterConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Angle> particles_;
  std::vector<double> weights_;
};

inline HeadingSeries fuse_headings(const HeadingSeries& left, const HeadingSeries& right,
                                   const HeadingFilterConfig& cfg)
{
  require_aligned(left.t, right.t, "fuse_headings");
  HeadingParticleFilter pf(cfg);
  HeadingSeries out;
  out.method = HeadingMethod::Fused;
  out.t = left.t;
  out.psi.reserve(left.size());
  for (std::size_t i = 0; i < left.size(); ++i)
  {
    const Angle z[2] = {left.psi[i], right.psi[i]};
    // The particles follow the mean heading change reported by the two devices.
    const double motion =
        i == 0 ? 0.0
               : 0.5 * (circular_diff(left.psi[i], left.psi[i - 1]) + circular_diff(right.psi[i], right.psi[i - 1]));
    out.psi.push_back(pf.step(z, motion));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stride-time averaging across devices
// ---------------------------------------------------------------------------

inline double median_period(std::span<const StrideEvent> a, std::span<const StrideEvent> b)
{
  std::vector<double> gaps;
  for (auto s : {a, b})
  {
    for (std::size_t k = 1; k < s.size(); ++k)
      gaps.push_back(s[k].peak_time - s[k - 1].peak_time);
  }
  if (gaps.empty())
    return std::numeric_limits<double>::infinity();
  std::sort(gaps.begin(), gaps.end());
  const std::size_t m = gaps.size() / 2;
  return gaps.size() % 2 ? gaps[m] : 0.5 * (gaps[m - 1] + gaps[m]);
}

/// Greedy nearest-neighbour matching of peaks within 0.4 * median stride period; matched
/// pairs are averaged, unmatched peaks kept. Peaks are snapped to the nearest sample of
/// `times` and the stride spans recomputed.
inline std::vector<StrideEvent> average_stride_times(std::span<const StrideEvent> left,
                                                     std::span<const StrideEvent> right,
                                                     std::span<const double> times)
{
  const double window = 0.4 * median_period(left, right);
  struct Pair
  {
    double gap;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < left.size(); ++i)
  {
    for (std::size_t j = 0; j < right.size(); ++j)
    {
      const double gap = std::abs(left[i].peak_time - right[j].peak_time);
      if (gap <= window)
        pairs.push_back({gap, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.gap != b.gap ? a.gap < b.gap : (a.i != b.i ? a.i < b.i : a.j < b.j);
  });

  std::vector<bool> used_l(left.size(), false), used_r(right.size(), false);
  std::vector<StrideEvent> merged;
  for (const auto& p : pairs)
  {
    if (used_l[p.i] || used_r[p.j])
      continue;
    used_l[p.i] = used_r[p.j] = true;
    StrideEvent e;
    e.peak_time = 0.5 * (left[p.i].peak_time + right[p.j].peak_time);
    e.prominence = 0.5 * (left[p.i].prominence + right[p.j].prominence);
    merged.push_back(e);
  }
  for (std::size_t i = 0; i < left.size(); ++i)
  {
    if (!used_l[i])
      merged.push_back(left[i]);
  }
  for (std::size_t j = 0; j < right.size(); ++j)
  {
    if (!used_r[j])
      merged.push_back(right[j]);
  }
  std::sort(merged.begin(), merged.end(),
            [](const StrideEvent& a, const StrideEvent& b) { return a.peak_time < b.peak_time; });

  std::vector<StrideEvent> out;
  for (auto e : merged)
  {
    if (!times.empty())
    {
      const auto it = std::lower_bound(times.begin(), times.end(), e.peak_time);
      std::size_t k = static_cast<std::size_t>(it - times.begin());
      if (k == times.size() || (k > 0 && e.peak_time - times[k - 1] <= times[k] - e.peak_time))
        k = k == 0 ? 0 : k - 1;
      e.peak_index = k;
      if (!out.empty() && out.back().peak_index == k)
        continue;
    }
    out.push_back(e);
  }
  if (!times.empty())
    assign_stride_spans(out, times.size());
  return out;
}

// ---------------------------------------------------------------------------
// GPS-aided position particle filter
// ---------------------------------------------------------------------------

struct GpsFix
{
  double t = 0.0;
  Position2D pos;
  double sigma = 3.9;
};

struct PositionFilterConfig
{
  std::size_t particles = 1000;
  double process_noise = 1.5;  // m / sqrt(s)
  std::uint64_t seed = 1;
};

/// Particles carry the dead-reckoned increments plus Gaussian process noise; each fix
/// reweights by the isotropic Gaussian likelihood of the particle-to-fix distance and
/// resamples. Before the first fix the output is the dead-reckoned track (the prior mean).
inline Track gps_position_filter(const Track& dead_reckoned, std::span<const GpsFix> fixes,
                                 const PositionFilterConfig& cfg)
{
  if (dead_reckoned.t.empty())
    throw InputError("gps_position_filter: empty track");
  if (cfg.particles == 0 || !(cfg.process_noise >= 0.0))
    throw InputError("gps_position_filter: invalid configuration");
  for (std::size_t k = 0; k < fixes.size(); ++k)
  {
    if (!(fixes[k].sigma > 0.0))
      throw InputError("gps fix sigma must be positive");
    if (k > 0 && fixes[k].t < fixes[k - 1].t)
      throw InputError("gps fixes must be sorted by time");
  }
  if (!fixes.empty() && fixes.front().t < dead_reckoned.t.front())
    throw InputError("gps fix before track start");

  const auto& dr = dead_reckoned.pos;
  const std::size_t n = cfg.particles;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<Position2D> p(n, dr.front());
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<Position2D> noise(n);

  Track out;
  out.t = dead_reckoned.t;
  out.strides = dead_reckoned.strides;
  out.pos.reserve(dr.size());
  std::size_t next_fix = 0;
  bool corrected = false;
  for (std::size_t i = 0; i < dr.size(); ++i)
  {
    if (i > 0)
    {
      const Position2D inc = dr[i] - dr[i - 1];
      const double s = cfg.process_noise * std::sqrt(std::max(0.0, dead_reckoned.t[i] - dead_reckoned.t[i - 1]));
      Position2D mean;
      for (auto& e : noise)
      {
        e = {s * unit(rng), s * unit(rng)};
        mean = mean + e;
      }
      mean = mean * (1.0 / static_cast<double>(n));
      for (std::size_t k = 0; k < n; ++k)
        p[k] = p[k] + inc + (noise[k] - mean);
    }
    while (next_fix < fixes.size() && fixes[next_fix].t <= dead_reckoned.t[i] + 1e-9)
    {
      const GpsFix& f = fixes[next_fix++];
      const double inv = 1.0 / (2.0 * f.sigma * f.sigma);
      std::vector<double> ll(n);
      for (std::size_t k = 0; k < n; ++k)
      {
        const Position2D d = p[k] - f.pos;
        ll[k] = -(d.x * d.x + d.y * d.y) * inv;
      }
      detail::reweight(w, ll);
      const auto idx = detail::systematic_resample(w, rng);
      std::vector<Position2D> q;
      q.reserve(n);
      for (auto k : idx)
        q.push_back(p[k]);
      p = std::move(q);
      w.assign(n, 1.0 / static_cast<double>(n));
      corrected = true;
    }
    if (!corrected)
    {
      out.pos.push_back(dr[i]);
      continue;
    }
    Position2D m;
    for (std::size_t k = 0; k < n; ++k)
      m = m + p[k] * w[k];
    out.pos.push_back(m);
  }
  return out;
}

/// Linear interpolation of a track's position at time q (clamped to its ends).
inline Position2D position_at(const Track& tr, double q)
{
  if (tr.t.empty())
    throw InputError("position_at: empty track");
  if (q <= tr.t.front())
    return tr.pos.front();
  if (q >= tr.t.back())
    return tr.pos.back();
  const auto k = detail::segment_of(tr.t, q);
  const double u = (q - tr.t[k]) / (tr.t[k + 1] - tr.t[k]);
  return tr.pos[k] + (tr.pos[k + 1] - tr.pos[k]) * u;
}

/// Fixes every `period_s` after the track start: truth + N(0, sigma^2) per axis.
inline std::vector<GpsFix> synthesize_gps_fixes(const Track& truth, double period_s, double sigma,
                                                std::uint64_t seed)
{
  if (!(period_s > 0.0) || !(sigma > 0.0))
    throw InputError("gps period and sigma must be positive");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<GpsFix> fixes;
  if (truth.t.empty())
    return fixes;
  for (int k = 1;; ++k)
  {
    const double t = truth.t.front() + k * period_s;
    if (t > truth.t.back() + 1e-9)
      break;
    const Position2D p = position_at(truth, t);
    const double ex = n(rng);
    const double ey = n(rng);
    fixes.push_back({t, {p.x + ex, p.y + ey}, sigma});
  }
  return fixes;
}

inline void write_gps_fixes(std::ostream& out, std::span<const GpsFix> fixes)
{
  out << "t,x_m,y_m,sigma_m\n";
  for (const auto& f : fixes)
    out << fmt_fixed(f.t, 6) << ',' << fmt_fixed(f.pos.x, 6) << ',' << fmt_fixed(f.pos.y, 6) << ','
        << fmt_fixed(f.sigma, 6) << '\n';
}

inline std::vector<GpsFix> parse_gps_fixes(std::istream& in, const std::string& source)
{
  std::string line;
  if (!next_line(in, line) || line != "t,x_m,y_m,sigma_m")
    throw InputError(located(source, 1, "expected header 't,x_m,y_m,sigma_m'"));
  std::vector<GpsFix> fixes;
  std::size_t n = 1;
  while (next_line(in, line))
  {
    ++n;
    if (line.empty())
      continue;
    const auto f = split_fields(line);
    if (f.size() != 4)
      throw InputError(located(source, n, "malformed row"));
    GpsFix fix{parse_real(f[0], source, n), {parse_real(f[1], source, n), parse_real(f[2], source, n)},
               parse_real(f[3], source, n)};
    if (!(fix.sigma > 0.0))
      throw InputError(located(source, n, "sigma must be positive"));
    if (!fixes.empty() && fix.t < fixes.back().t)
      throw InputError(located(source, n, "fixes not sorted by time"));
    fixes.push_back(fix);
  }
  return fixes;
}

inline std::vector<GpsFix> load_gps_fixes(const std::string& path)
{
  auto in = open_input(path);
  return parse_gps_fixes(in, path);
}

}  // namespace earnav
