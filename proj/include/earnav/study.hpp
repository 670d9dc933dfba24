/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/calibration.hpp"
#include "earnav/eval.hpp"
#include "earnav/fusion.hpp"
#include "earnav/pipeline.hpp"
#include "earnav/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace earnav
{

/// Evaluates f(0..n-1) on a pool of threads; results are stored by index, so the output
/// does not depend on scheduling.
template <class F>
auto parallel_map(std::size_t n, F f, unsigned threads = 0) -> std::vector<decltype(f(std::size_t{}))>
{
  using R = decltype(f(std::size_t{}));
  std::vector<R> out(n);
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++)
    {
      try
      {
        out[i] = f(i);
      }
      catch (...)
      {
        std::lock_guard lock(error_mutex);
        if (!error)
          error = std::current_exception();
      }
    }
  };
  if (threads <= 1)
  {
    worker();
  }
  else
  {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(worker);
    for (auto& t : pool)
      t.join();
  }
  if (error)
    std::rethrow_exception(error);
  return out;
}

/// Spread of per-device imperfections drawn for each Monte-Carlo seed.
struct NoiseProfile
{
  double accel_noise = 0.05;               // m/s^2
  double gyro_noise = deg2rad(0.5);        // rad/s
  double mag_noise = 1.0;                  // field units (horizontal field is 20)
  double gyro_bias_sd = deg2rad(0.25);     // rad/s per axis
  double hard_iron_max = deg2rad(30.0);    // uniform in [-max, max]
  double mount_yaw_sd = deg2rad(5.0);
  double tilt_sd = deg2rad(4.0);           // roll and pitch
  double accel_scale_sd = 0.02;
  double accel_bias_sd = 0.1;
  double accel_misalignment_sd = 0.01;
  double phone_heading_noise_deg = 3.0;
  double step_frequency_jitter = 0.1;  // relative, uniform
  double start_jitter_s = 1.0;         // extra standing time, uniform in [0, max]

  static NoiseProfile noiseless()
  {
    NoiseProfile p;
    p.accel_noise = p.gyro_noise = p.mag_noise = p.gyro_bias_sd = p.hard_iron_max = 0.0;
    p.mount_yaw_sd = p.tilt_sd = p.accel_scale_sd = p.accel_bias_sd = p.accel_misalignment_sd = 0.0;
    p.phone_heading_noise_deg = 0.0;
    p.step_frequency_jitter = p.start_jitter_s = 0.0;
    return p;
  }
};

/// Base scenarios used by the studies.
inline SynthScenario outdoor_scenario()
{
  SynthScenario sc;
  sc.waypoints = outdoor_route();
  return sc;
}

/// Up and down a corridor five times, pivoting sharply at each end. The corridor is
/// about 10 m, rounded to a whole number of strides.
inline SynthScenario indoor_scenario(double turn_length = 1.0)
{
  SynthScenario sc;
  sc.waypoints = corridor_route(std::round(10.0 / sc.stride()) * sc.stride(), 5);
  sc.turn_length = turn_length;
  return sc;
}

inline DeviceModel draw_device(std::string id, const NoiseProfile& p, std::mt19937_64& rng)
{
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DeviceModel d;
  d.id = std::move(id);
  d.mount_yaw = p.mount_yaw_sd * n(rng);
  d.roll = p.tilt_sd * n(rng);
  d.pitch = p.tilt_sd * n(rng);
  d.accel_noise = p.accel_noise;
  d.gyro_noise = p.gyro_noise;
  d.mag_noise = p.mag_noise;
  d.gyro_bias = p.gyro_bias_sd * Vec3(n(rng), n(rng), n(rng));
  d.hard_iron = p.hard_iron_max * u(rng);
  d.miscalibration.alpha_yx = p.accel_misalignment_sd * n(rng);
  d.miscalibration.alpha_zx = p.accel_misalignment_sd * n(rng);
  d.miscalibration.alpha_zy = p.accel_misalignment_sd * n(rng);
  d.miscalibration.scale = Vec3::Ones() + p.accel_scale_sd * Vec3(n(rng), n(rng), n(rng));
  d.miscalibration.bias = p.accel_bias_sd * Vec3(n(rng), n(rng), n(rng));
  return d;
}

/// Copies `base` (route, gait, field) and draws fresh devices for this seed.
inline SynthScenario draw_scenario(const SynthScenario& base, const NoiseProfile& p, std::uint64_t seed,
                                   bool two_devices = true)
{
  auto rng = detail::device_rng(seed, 7);
  SynthScenario sc = base;
  sc.seed = seed;
  sc.phone_heading_noise_deg = p.phone_heading_noise_deg;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  sc.step_frequency *= 1.0 + p.step_frequency_jitter * (2.0 * u(rng) - 1.0);
  sc.stand_start += p.start_jitter_s * u(rng);
  sc.left = draw_device("left", p, rng);
  if (two_devices)
    sc.right = draw_device("right", p, rng);
  return sc;
}

/// Accelerometer parameters fitted from a synthetic static recording of the same device.
inline AccelCalib fitted_accel(const DeviceModel& d, std::uint64_t seed)
{
  if (d.miscalibration.alpha_yx == 0.0 && d.miscalibration.alpha_zx == 0.0 && d.miscalibration.alpha_zy == 0.0 &&
      d.miscalibration.scale == Vec3::Ones() && d.miscalibration.bias == Vec3::Zero())
    return AccelCalib::identity();
  const auto trace = generate_calibration_trace(d.miscalibration, 12, seed, d.accel_noise);
  const auto clips = segment_static_clips(trace);
  return fit_accel_calibration(clips).calib;
}

inline DeviceInputs device_inputs(const DeviceTrace& trace, const DeviceModel& model, const SynthOutput& out,
                                  std::uint64_t seed)
{
  return {trace, fitted_accel(model, seed), out.phone.reference};
}

// ---------------------------------------------------------------------------
// Closed-loop drift: gyro-only vs complementary vs fused
// ---------------------------------------------------------------------------

struct LoopTrial
{
  double gyro_left = 0.0, gyro_right = 0.0;
  double comp_left = 0.0, comp_right = 0.0;
  double fused = 0.0;

  // heading error against truth, left device for the single-device methods (deg)
  HeadingErrorReport::Stats gyro_heading, comp_heading, fused_heading;

  double gyro() const { return 0.5 * (gyro_left + gyro_right); }
  double complementary() const { return 0.5 * (comp_left + comp_right); }
};

inline LoopTrial loop_trial(const SynthScenario& base, const NoiseProfile& p, std::uint64_t seed,
                            RunConfig cfg)
{
  cfg.seed = seed;
  const auto sc = draw_scenario(base, p, seed);
  const auto out = generate(sc);
  const Position2D end = out.truth.pos.back();
  const auto left = device_inputs(out.left, sc.left, out, seed * 2 + 1);
  const auto right = device_inputs(*out.right, *sc.right, out, seed * 2 + 2);

  LoopTrial t;
  const auto dl = process_device(left, cfg);
  const auto dr = process_device(right, cfg);
  auto drift_of = [&](const DeviceResult& d, const HeadingSeries& h) {
    return drift(assemble_track(h.t, h, d.strides, cfg).track, end).drift;
  };
  t.gyro_left = drift_of(dl, dl.gyro);
  t.gyro_right = drift_of(dr, dr.gyro);
  t.comp_left = drift_of(dl, dl.complementary);
  t.comp_right = drift_of(dr, dr.complementary);
  const auto dual = run_dual(left, right, cfg);
  t.fused = drift(dual.result.track, end).drift;
  t.gyro_heading = heading_error(dl.gyro, out.truth_heading).stats();
  t.comp_heading = heading_error(dl.complementary, out.truth_heading).stats();
  t.fused_heading = heading_error(dual.result.heading, out.truth_heading).stats();
  return t;
}

struct OrderingStudy
{
  std::vector<LoopTrial> trials;
  Summary gyro, complementary, fused;
  TTestResult comp_vs_gyro;   // complementary - gyro
  TTestResult fused_vs_comp;  // fused - complementary
  double fused_ratio = 0.0;   // mean fused / mean single complementary
};

inline OrderingStudy drift_ordering_study(const SynthScenario& base, const NoiseProfile& p,
                                          std::size_t seeds, std::uint64_t first_seed = 1, const RunConfig& cfg = {})
{
  OrderingStudy s;
  s.trials = parallel_map(seeds, [&](std::size_t k) { return loop_trial(base, p, first_seed + k, cfg); });
  std::vector<double> g, c, f;
  for (const auto& t : s.trials)
  {
    g.push_back(t.gyro());
    c.push_back(t.complementary());
    f.push_back(t.fused);
  }
  s.gyro = summarize(g);
  s.complementary = summarize(c);
  s.fused = summarize(f);
  s.comp_vs_gyro = paired_t_test(c, g);
  s.fused_vs_comp = paired_t_test(f, c);
  s.fused_ratio = s.fused.mean / s.complementary.mean;
  return s;
}

// ---------------------------------------------------------------------------
// Mixed sampling rates
// ---------------------------------------------------------------------------

struct MixedRateStudy
{
  std::vector<double> rates;
  std::vector<Summary> drift;  // one per rate
  std::vector<std::vector<double>> per_seed;
};

inline MixedRateStudy mixed_rate_study(const SynthScenario& base, const NoiseProfile& p,
                                       const std::vector<double>& rates, std::size_t seeds,
                                       std::uint64_t first_seed = 1, RunConfig cfg = {})
{
  MixedRateStudy s;
  s.rates = rates;
  const auto rows = parallel_map(seeds, [&](std::size_t k) {
    const std::uint64_t seed = first_seed + k;
    RunConfig c = cfg;
    c.seed = seed;
    const auto sc = draw_scenario(base, p, seed);
    const auto out = generate(sc);
    const auto left = device_inputs(out.left, sc.left, out, seed * 2 + 1);
    const auto right = device_inputs(*out.right, *sc.right, out, seed * 2 + 2);
    std::vector<double> row;
    for (double r : rates)
      row.push_back(drift(run_mixed_rate(left, right, r, c).result.track, out.truth.pos.back()).drift);
    return row;
  });
  s.per_seed.assign(rates.size(), {});
  for (const auto& row : rows)
  {
    for (std::size_t r = 0; r < rates.size(); ++r)
      s.per_seed[r].push_back(row[r]);
  }
  for (const auto& v : s.per_seed)
    s.drift.push_back(summarize(v));
  return s;
}

// ---------------------------------------------------------------------------
// GPS-aided positional filter on a drifting dead-reckoned track
// ---------------------------------------------------------------------------

struct GpsTrial
{
  double mean_error = 0.0;     // time-averaged position error with GPS, m
  double dead_reckoning = 0.0;  // same without GPS, m
};

/// Truth: a 1 Hz random walk of a pedestrian. Dead reckoning follows the truth increments
/// plus a constant velocity error of `drift_speed` in a random direction.
inline GpsTrial gps_trial(std::uint64_t seed, double duration_s = 600.0, double drift_speed = 0.5,
                          double period_s = 30.0, double sigma = 3.9, PositionFilterConfig pf = {})
{
  auto rng = detail::device_rng(seed, 11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  const double drift_dir = u(rng);
  const Position2D drift_v{drift_speed * std::cos(drift_dir), drift_speed * std::sin(drift_dir)};
  Track truth, dr;
  double psi = u(rng);
  Position2D p, q;
  for (int k = 0; k <= static_cast<int>(duration_s); ++k)
  {
    if (k > 0)
    {
      psi += deg2rad(10.0) * n(rng);
      const Position2D step{1.3 * std::cos(psi), 1.3 * std::sin(psi)};
      p = p + step;
      q = q + step + drift_v;
    }
    truth.t.push_back(k);
    truth.pos.push_back(p);
    dr.t.push_back(k);
    dr.pos.push_back(q);
  }
  const auto fixes = synthesize_gps_fixes(truth, period_s, sigma, seed);
  pf.seed = seed;
  const auto est = gps_position_filter(dr, fixes, pf);
  GpsTrial t;
  for (std::size_t i = 0; i < truth.size(); ++i)
  {
    t.mean_error += (est.pos[i] - truth.pos[i]).norm();
    t.dead_reckoning += (dr.pos[i] - truth.pos[i]).norm();
  }
  t.mean_error /= static_cast<double>(truth.size());
  t.dead_reckoning /= static_cast<double>(truth.size());
  return t;
}

// ---------------------------------------------------------------------------
// Magnetometer calibration ablation
// ---------------------------------------------------------------------------

struct AblationTrial
{
  double calibrated = 0.0;    // mean heading error, deg
  double uncalibrated = 0.0;  // deg
};

inline AblationTrial calibration_ablation_trial(const SynthScenario& base, const NoiseProfile& p,
                                                std::uint64_t seed, HeadingMethod method = HeadingMethod::Mag,
                                                RunConfig cfg = {})
{
  cfg.seed = seed;
  const auto sc = draw_scenario(base, p, seed, false);
  const auto out = generate(sc);
  const auto in = device_inputs(out.left, sc.left, out, seed * 2 + 1);
  AblationTrial t;
  t.calibrated = heading_error(run_single(in, cfg, method, true).result.heading, out.truth_heading).mean_abs_error;
  t.uncalibrated = heading_error(run_single(in, cfg, method, false).result.heading, out.truth_heading).mean_abs_error;
  return t;
}

}  // namespace earnav
