/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

// earnav: calibrate, track, fuse, synth, eval and tone from the command line.

#include "earnav/calibration.hpp"
#include "earnav/eval.hpp"
#include "earnav/fusion.hpp"
#include "earnav/pipeline.hpp"
#include "earnav/study.hpp"
#include "earnav/synth.hpp"
#include "earnav/tone.hpp"
#include "earnav/trace_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace earnav;

namespace
{

struct Common
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, Common& c)
{
  cmd->add_option("--config", c.config_path, "key=value run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--out-dir", c.out_dir, "directory for output files");
}

RunConfig resolve(const Common& c)
{
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed)
    cfg.seed = *c.seed;
  cfg.validate();
  std::cout << "# resolved config\n";
  write_config(std::cout, cfg);
  return cfg;
}

std::string out_path(const Common& c, const std::string& name)
{
  fs::create_directories(c.out_dir);
  return (fs::path(c.out_dir) / name).string();
}

template <class Writer>
void save(const Common& c, const std::string& name, Writer&& w)
{
  const auto path = out_path(c, name);
  auto out = open_output(path);
  w(out);
  std::cout << "wrote " << path << '\n';
}

/// Phone reference headings on the device grid: from a separate phone trace if given,
/// otherwise from the device trace's own reference column.
std::vector<Angle> reference_for(const DeviceTrace& trace, const std::string& phone_path)
{
  if (!phone_path.empty())
  {
    const auto phone = load_trace(phone_path);
    if (!phone.has_reference())
      throw InputError(phone_path + ": phone trace has no ref_heading_deg column");
    const auto phone_t = phone.times();
    std::vector<Angle> ref;
    for (const auto& s : trace.samples)
      ref.push_back(interpolate_heading(phone_t, phone.reference, s.t));
    return ref;
  }
  return trace.reference;
}

DeviceInputs inputs_for(const DeviceTrace& trace, const std::string& calibration, const std::string& phone)
{
  DeviceInputs in;
  in.trace = trace;
  if (!calibration.empty())
    in.accel = load_calibration(calibration).accel;
  in.reference = reference_for(trace, phone);
  return in;
}

DeviceTrace at_rate(DeviceTrace trace, const RunConfig& cfg)
{
  if (std::abs(trace.rate_hz - cfg.rate_hz) > 1e-9)
    trace = resample(trace, cfg.rate_hz);
  return trace;
}

struct ReferenceChoice
{
  std::string kind = "phone";
  std::string truth_path;
};

std::optional<HeadingSeries> reference_series(const ReferenceChoice& r, std::span<const double> times,
                                              std::span<const Angle> phone)
{
  if (r.kind == "truth")
  {
    if (r.truth_path.empty())
      throw InputError("--reference truth needs --truth <file>");
    return load_truth(r.truth_path).heading;
  }
  if (phone.empty())
    return std::nullopt;
  return HeadingSeries{HeadingMethod::Reference, {times.begin(), times.end()}, {phone.begin(), phone.end()}};
}

void report_track(const Common& c, const TrackResult& r, const ReferenceChoice& ref, std::span<const Angle> phone,
                  const std::string& extra_report)
{
  Position2D expected_end;
  if (!ref.truth_path.empty())
    expected_end = load_truth(ref.truth_path).track.pos.back();
  const auto d = drift(r.track, expected_end);
  std::ostringstream report;
  write_drift_report(report, d);
  report << "strides=" << r.track.strides.size() << '\n';
  if (const auto refs = reference_series(ref, r.heading.t, phone))
  {
    const auto he = heading_error(r.heading, *refs);
    report << "reference=" << ref.kind << '\n';
    write_heading_report(report, he);
    save(c, "heading_errors.csv", [&](std::ostream& o) { write_heading_errors(o, he); });
  }
  report << extra_report;
  save(c, "track.csv", [&](std::ostream& o) { write_track(o, r.track); });
  save(c, "heading.csv", [&](std::ostream& o) { write_heading_series(o, r.heading); });
  save(c, "strides.csv", [&](std::ostream& o) { write_strides(o, r.track.strides); });
  save(c, "report.txt", [&](std::ostream& o) { o << report.str(); });
  std::cout << report.str();
}

SynthScenario scenario_named(const std::string& name)
{
  if (name == "outdoor")
    return outdoor_scenario();
  if (name == "indoor")
    return indoor_scenario();
  SynthScenario sc;
  if (name == "straight")
    sc.waypoints = straight_route(10.0);
  else if (name == "square")
    sc.waypoints = square_route(20.0);
  else if (name == "corridor")
    sc.waypoints = corridor_route();
  else
    throw InputError("unknown scenario '" + name + "' (supported: straight, square, corridor, indoor, outdoor)");
  return sc;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"earnav: earable inertial navigation"};
  app.require_subcommand(1);

  // calibrate ----------------------------------------------------------------
  Common cal_c;
  std::string cal_input;
  auto* cal = app.add_subcommand("calibrate", "fit accelerometer calibration from a static-orientation recording");
  add_common(cal, cal_c);
  cal->add_option("--input", cal_input, "trace with the device held in several static orientations")
      ->required()
      ->check(CLI::ExistingFile);

  // track --------------------------------------------------------------------
  Common trk_c;
  std::string trk_input, trk_calib, trk_phone, trk_method = "complementary";
  std::optional<double> trk_rate;
  bool trk_uncal = false;
  ReferenceChoice trk_ref;
  auto* trk = app.add_subcommand("track", "single-device heading, strides and track");
  add_common(trk, trk_c);
  trk->add_option("--input", trk_input, "device trace")->required()->check(CLI::ExistingFile);
  trk->add_option("--calibration", trk_calib, "calibration file from 'calibrate'")->check(CLI::ExistingFile);
  trk->add_flag("--no-calibration", trk_uncal, "run without any sensor calibration");
  trk->add_option("--method", trk_method, "mag | gyro | complementary | madgwick | reference");
  trk->add_option("--rate", trk_rate, "resample the trace to this rate first (Hz)");
  trk->add_option("--phone", trk_phone, "phone trace carrying reference headings")->check(CLI::ExistingFile);
  trk->add_option("--reference", trk_ref.kind, "heading reference for evaluation")
      ->check(CLI::IsMember({"phone", "truth"}));
  trk->add_option("--truth", trk_ref.truth_path, "ground-truth sidecar")->check(CLI::ExistingFile);

  // fuse ---------------------------------------------------------------------
  Common fus_c;
  std::vector<std::string> fus_inputs;
  std::string fus_calib_l, fus_calib_r, fus_phone, fus_gps;
  std::optional<double> fus_rate;
  bool fus_uncal = false;
  ReferenceChoice fus_ref;
  auto* fus = app.add_subcommand("fuse", "two-device fusion, optionally GPS-aided");
  add_common(fus, fus_c);
  fus->add_option("--input", fus_inputs, "left and right traces")->required()->check(CLI::ExistingFile);
  fus->add_option("--calibration-left", fus_calib_l, "left calibration file")->check(CLI::ExistingFile);
  fus->add_option("--calibration-right", fus_calib_r, "right calibration file")->check(CLI::ExistingFile);
  fus->add_flag("--no-calibration", fus_uncal, "run without any sensor calibration");
  fus->add_option("--rate", fus_rate, "sampling rate of the right device (mixed-rate operation)");
  fus->add_option("--gps", fus_gps, "GPS fix file (t,x_m,y_m,sigma_m)")->check(CLI::ExistingFile);
  fus->add_option("--phone", fus_phone, "phone trace carrying reference headings")->check(CLI::ExistingFile);
  fus->add_option("--reference", fus_ref.kind, "heading reference for evaluation")
      ->check(CLI::IsMember({"phone", "truth"}));
  fus->add_option("--truth", fus_ref.truth_path, "ground-truth sidecar")->check(CLI::ExistingFile);

  // synth --------------------------------------------------------------------
  Common syn_c;
  std::string syn_scenario = "square", syn_noise = "realistic";
  bool syn_single = false;
  auto* syn = app.add_subcommand("synth", "generate synthetic traces with ground truth");
  add_common(syn, syn_c);
  syn->add_option("--scenario", syn_scenario, "straight | square | corridor | indoor | outdoor");
  syn->add_option("--noise", syn_noise, "device imperfections")->check(CLI::IsMember({"none", "realistic"}));
  syn->add_flag("--single", syn_single, "one device only");

  // eval ---------------------------------------------------------------------
  Common ev_c;
  std::string ev_track, ev_heading, ev_truth, ev_phone, ev_scenario = "outdoor";
  std::string ev_reference = "truth";
  std::optional<std::size_t> ev_seeds;
  auto* ev = app.add_subcommand("eval", "drift and heading error of saved outputs, or a seeded Monte-Carlo study");
  add_common(ev, ev_c);
  ev->add_option("--track", ev_track, "track file")->check(CLI::ExistingFile);
  ev->add_option("--heading", ev_heading, "heading series file")->check(CLI::ExistingFile);
  ev->add_option("--truth", ev_truth, "ground-truth sidecar")->check(CLI::ExistingFile);
  ev->add_option("--phone", ev_phone, "phone trace carrying reference headings")->check(CLI::ExistingFile);
  ev->add_option("--reference", ev_reference, "heading reference")->check(CLI::IsMember({"phone", "truth"}));
  ev->add_option("--seeds", ev_seeds, "run the drift-ordering study over this many seeds");
  ev->add_option("--scenario", ev_scenario, "scenario for --seeds");

  // tone ---------------------------------------------------------------------
  Common tn_c;
  std::optional<double> tn_diff;
  std::string tn_heading, tn_wav;
  double tn_target = 0.0;
  auto* tn = app.add_subcommand("tone", "audio-feedback pitch for a heading difference or a heading series");
  add_common(tn, tn_c);
  tn->add_option("--diff", tn_diff, "heading difference in degrees");
  tn->add_option("--heading", tn_heading, "heading series to steer")->check(CLI::ExistingFile);
  tn->add_option("--target", tn_target, "target heading in degrees");
  tn->add_option("--wav", tn_wav, "also render a 16-bit 44.1 kHz mono WAV file (name inside --out-dir)");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp& e)
  {
    return app.exit(e);
  }
  catch (const CLI::ParseError& e)
  {
    app.exit(e);
    return 2;
  }

  try
  {
    if (*cal)
    {
      resolve(cal_c);
      const auto trace = load_trace(cal_input);
      const auto clips = segment_static_clips(trace);
      const auto fit = fit_accel_calibration(clips);
      CalibrationSet set;
      set.accel = fit.calib;
      set.accel_rms_residual = fit.rms_residual;
      save(cal_c, "calibration.txt", [&](std::ostream& o) { write_calibration(o, set); });
      std::cout << "static_clips=" << clips.size() << "\niterations=" << fit.iterations
                << "\nresidual=gravity_norm"
                << "\nrms_residual=" << fmt_fixed(fit.rms_residual, 9) << '\n';
    }
    else if (*trk)
    {
      RunConfig cfg = resolve(trk_c);
      const auto method = parse_heading_method(trk_method);
      if (trk_calib.empty() && !trk_uncal)
        throw InputError("missing calibration: pass --calibration <file> or --no-calibration");
      if (trk_rate)
        cfg.rate_hz = *trk_rate;
      const auto trace = at_rate(load_trace(trk_input), cfg);
      const auto in = inputs_for(trace, trk_uncal ? "" : trk_calib, trk_phone);
      const auto r = run_single(in, cfg, method, !trk_uncal);
      std::ostringstream extra;
      extra << "method=" << to_string(method) << "\ncalibrated=" << (trk_uncal ? "false" : "true")
            << "\nmag_reference_points=" << r.device.mag_state.window.size()
            << "\nmag_rollovers=" << r.device.mag_state.rollovers
            << "\nstationary_windows=" << r.device.stationary.size() << '\n';
      report_track(trk_c, r.result, trk_ref, in.reference, extra.str());
    }
    else if (*fus)
    {
      RunConfig cfg = resolve(fus_c);
      if (fus_inputs.size() != 2)
        throw InputError("fuse needs exactly two traces (--input left.csv right.csv); got " +
                         std::to_string(fus_inputs.size()));
      if (!fus_uncal && (fus_calib_l.empty() || fus_calib_r.empty()))
        throw InputError("missing calibration: pass --calibration-left/--calibration-right or --no-calibration");
      const auto left_trace = at_rate(load_trace(fus_inputs[0]), cfg);
      const auto right_raw = load_trace(fus_inputs[1]);
      const auto left = inputs_for(left_trace, fus_uncal ? "" : fus_calib_l, fus_phone);
      auto right = inputs_for(at_rate(right_raw, cfg), fus_uncal ? "" : fus_calib_r, fus_phone);
      std::vector<GpsFix> fixes;
      if (!fus_gps.empty())
        fixes = load_gps_fixes(fus_gps);
      const auto r = fus_rate ? run_mixed_rate(left, right, *fus_rate, cfg, !fus_uncal, fixes, !fus_gps.empty())
                              : run_dual(left, right, cfg, !fus_uncal, fixes, !fus_gps.empty());
      std::ostringstream extra;
      extra << "method=fused\ncalibrated=" << (fus_uncal ? "false" : "true")
            << "\nright_rate_hz=" << fmt_fixed(fus_rate.value_or(cfg.rate_hz), 3)
            << "\nleft_strides=" << r.left.strides.size() << "\nright_strides=" << r.right.strides.size() << '\n';
      if (r.gps_track)
      {
        extra << "gps_fixes=" << fixes.size() << '\n';
        Position2D expected_end;
        if (!fus_ref.truth_path.empty())
        {
          const auto truth = load_truth(fus_ref.truth_path);
          expected_end = truth.track.pos.back();
          double err = 0.0;
          for (std::size_t i = 0; i < r.gps_track->size(); ++i)
            err += (r.gps_track->pos[i] - position_at(truth.track, r.gps_track->t[i])).norm();
          extra << "gps_mean_position_error_m=" << fmt_fixed(err / static_cast<double>(r.gps_track->size()), 6)
                << '\n';
        }
        write_drift_report(extra, drift(*r.gps_track, expected_end), "gps_");
        save(fus_c, "track_gps.csv", [&](std::ostream& o) { write_track(o, *r.gps_track); });
      }
      report_track(fus_c, r.result, fus_ref, left.reference, extra.str());
    }
    else if (*syn)
    {
      const RunConfig cfg = resolve(syn_c);
      const NoiseProfile profile = syn_noise == "none" ? NoiseProfile::noiseless() : NoiseProfile{};
      auto sc = draw_scenario(scenario_named(syn_scenario), profile, cfg.seed, !syn_single);
      sc.user_height = cfg.user_height;
      sc.rate_hz = cfg.rate_hz;
      const auto out = generate(sc);
      save(syn_c, "left.csv", [&](std::ostream& o) { write_trace(o, out.left); });
      if (out.right)
        save(syn_c, "right.csv", [&](std::ostream& o) { write_trace(o, *out.right); });
      save(syn_c, "phone.csv", [&](std::ostream& o) { write_trace(o, out.phone); });
      save(syn_c, "truth.csv", [&](std::ostream& o) { write_truth(o, out.truth, out.truth_heading); });
      const auto fixes = synthesize_gps_fixes(out.truth, cfg.gps_period_s, cfg.gps_sigma_m, cfg.seed);
      save(syn_c, "gps.csv", [&](std::ostream& o) { write_gps_fixes(o, fixes); });
      save(syn_c, "calib_left.csv", [&](std::ostream& o) {
        write_trace(o, generate_calibration_trace(sc.left.miscalibration, 12, cfg.seed * 2 + 1, sc.left.accel_noise,
                                                  cfg.rate_hz));
      });
      if (sc.right)
        save(syn_c, "calib_right.csv", [&](std::ostream& o) {
          write_trace(o, generate_calibration_trace(sc.right->miscalibration, 12, cfg.seed * 2 + 2,
                                                    sc.right->accel_noise, cfg.rate_hz));
        });
      std::cout << "samples=" << out.left.size() << "\nstrides=" << out.stride_times.size()
                << "\nduration_s=" << fmt_fixed(out.truth.duration(), 3) << '\n';
    }
    else if (*ev)
    {
      const RunConfig cfg = resolve(ev_c);
      std::ostringstream report;
      if (ev_seeds)
      {
        if (*ev_seeds < 2)
          throw InputError("--seeds needs at least 2 runs");
        const auto s = drift_ordering_study(scenario_named(ev_scenario), NoiseProfile{}, *ev_seeds, cfg.seed, cfg);
        report << "seeds=" << *ev_seeds << "\nscenario=" << ev_scenario << '\n';
        for (auto [name, sum] : {std::pair{"gyro", s.gyro}, {"complementary", s.complementary}, {"fused", s.fused}})
          report << name << "_drift_mean=" << fmt_fixed(sum.mean, 6) << '\n'
                 << name << "_drift_sd=" << fmt_fixed(sum.sd, 6) << '\n';
        report << "fused_over_complementary=" << fmt_fixed(s.fused_ratio, 6) << '\n';
        // heading error spread both within runs (per timestamp) and across runs (per run means)
        using Stats = HeadingErrorReport::Stats;
        for (auto [name, field] : {std::pair{"gyro", &LoopTrial::gyro_heading},
                                   {"complementary", &LoopTrial::comp_heading},
                                   {"fused", &LoopTrial::fused_heading}})
        {
          std::vector<double> means;
          double within = 0.0;
          for (const auto& t : s.trials)
          {
            const Stats& h = t.*field;
            means.push_back(h.mean);
            within += h.sd / static_cast<double>(s.trials.size());
          }
          const auto across = summarize(means);
          report << name << "_heading_error_mean_deg=" << fmt_fixed(across.mean, 6) << '\n'
                 << name << "_heading_error_sd_within_run_deg=" << fmt_fixed(within, 6) << '\n'
                 << name << "_heading_error_sd_across_runs_deg=" << fmt_fixed(across.sd, 6) << '\n';
        }
        write_t_test(report, s.comp_vs_gyro, "complementary_vs_gyro_");
        write_t_test(report, s.fused_vs_comp, "fused_vs_complementary_");
        save(ev_c, "study.csv", [&](std::ostream& o) {
          o << "seed,gyro_left,gyro_right,comp_left,comp_right,fused\n";
          for (std::size_t k = 0; k < s.trials.size(); ++k)
          {
            const auto& t = s.trials[k];
            o << cfg.seed + k << ',' << fmt_fixed(t.gyro_left, 6) << ',' << fmt_fixed(t.gyro_right, 6) << ','
              << fmt_fixed(t.comp_left, 6) << ',' << fmt_fixed(t.comp_right, 6) << ',' << fmt_fixed(t.fused, 6)
              << '\n';
          }
        });
      }
      else
      {
        if (ev_track.empty() && ev_heading.empty())
          throw InputError("eval needs --track and/or --heading, or --seeds N");
        std::optional<GroundTruth> truth;
        if (!ev_truth.empty())
          truth = load_truth(ev_truth);
        if (!ev_track.empty())
          write_drift_report(report, drift(load_track(ev_track), truth ? truth->track.pos.back() : Position2D{}));
        if (!ev_heading.empty())
        {
          const auto est = load_heading_series(ev_heading);
          HeadingSeries ref;
          if (ev_reference == "truth")
          {
            if (!truth)
              throw InputError("--reference truth needs --truth <file>");
            ref = truth->heading;
          }
          else
          {
            if (ev_phone.empty())
              throw InputError("--reference phone needs --phone <file>");
            const auto phone = load_trace(ev_phone);
            if (!phone.has_reference())
              throw InputError(ev_phone + ": phone trace has no ref_heading_deg column");
            ref = {HeadingMethod::Reference, phone.times(), phone.reference};
          }
          const auto he = heading_error(est, ref);
          report << "reference=" << ev_reference << '\n';
          write_heading_report(report, he);
          save(ev_c, "heading_errors.csv", [&](std::ostream& o) { write_heading_errors(o, he); });
        }
      }
      save(ev_c, "eval.txt", [&](std::ostream& o) { o << report.str(); });
      std::cout << report.str();
    }
    else if (*tn)
    {
      resolve(tn_c);
      if (tn_diff)
      {
        std::cout << "frequency_hz=" << fmt_fixed(tone_frequency(*tn_diff), 6) << '\n';
      }
      else if (!tn_heading.empty())
      {
        const auto series = tone_series(load_heading_series(tn_heading), Angle::degrees(tn_target));
        save(tn_c, "tone.csv", [&](std::ostream& o) { write_tone_series(o, series); });
        if (!tn_wav.empty())
        {
          const auto path = out_path(tn_c, tn_wav);
          std::ofstream wav(path, std::ios::binary);
          if (!wav)
            throw InputError("cannot open output file " + path);
          write_tone_wav(wav, series);
          std::cout << "wrote " << path << '\n';
        }
      }
      else
      {
        throw InputError("tone needs --diff <deg> or --heading <file>");
      }
    }
  }
  catch (const NumericalError& e)
  {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  }
  catch (const InputError& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  catch (const fs::filesystem_error& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
