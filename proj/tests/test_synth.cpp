/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#include "earnav/heading.hpp"
#include "earnav/synth.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace earnav;
using earnav::test::to_text;

TEST(Synth, StraightWalkStrideCount)
{
  SynthScenario sc;
  sc.waypoints = straight_route(10.0);
  const auto out = generate(sc);
  // 10 / 0.774 = 12.9, so the last stride is cut short
  EXPECT_EQ(out.truth.strides.size(), 13u);
  EXPECT_EQ(out.stride_times.size(), 13u);
  EXPECT_NEAR(out.truth.pos.back().x, 10.0, 1e-6);
  EXPECT_NEAR(out.truth.pos.back().y, 0.0, 1e-9);
  EXPECT_NEAR(sc.walking_speed(), 2.0 * 0.774, 1e-12);
}

TEST(Synth, GyroZeroOnStraightSegments)
{
  SynthScenario sc;
  sc.waypoints = straight_route(20.0);
  const auto out = generate(sc);
  for (const auto& s : out.left.samples)
    ASSERT_EQ(s.gyro, Vec3::Zero());
}

TEST(Synth, HardIronShiftsRawHeading)
{
  SynthScenario sc;
  sc.waypoints = square_route(8.0);
  sc.left.hard_iron = deg2rad(10.0);
  const auto out = generate(sc);
  // tilt held from the standing start; the step bounce leaves the gravity band
  const Tilt held = tilt_angles(out.left.samples.front().acc);
  for (std::size_t i = 0; i < out.left.size(); ++i)
  {
    const Angle raw = mag_heading(out.left.samples[i].mag, held);
    ASSERT_NEAR(rad2deg(circular_diff(raw, out.truth_heading.psi[i])), 10.0, 1e-9);
  }
}

TEST(Synth, InjectIdentityLeavesTraceUnchanged)
{
  SynthScenario sc;
  sc.waypoints = straight_route(5.0);
  sc.left.accel_noise = 0.1;
  const auto out = generate(sc);
  EXPECT_EQ(to_text(inject_miscalibration(out.left, AccelCalib{})), to_text(out.left));
}

TEST(Synth, InjectBiasOnly)
{
  SynthScenario sc;
  sc.waypoints = straight_route(5.0);
  const auto out = generate(sc);
  AccelCalib b;
  b.bias = Vec3(0.1, 0, 0);
  const auto biased = inject_miscalibration(out.left, b);
  for (std::size_t i = 0; i < out.left.size(); ++i)
    ASSERT_LT((biased.samples[i].acc - out.left.samples[i].acc - Vec3(0.1, 0, 0)).norm(), 1e-12);
}

TEST(Synth, InjectRejectsSingularScale)
{
  AccelCalib c;
  c.scale.y() = 0.0;
  DeviceTrace tr;
  EXPECT_THROW(inject_miscalibration(tr, c), InputError);
}

TEST(Synth, Deterministic)
{
  SynthScenario sc;
  sc.waypoints = square_route(10.0);
  sc.left.accel_noise = 0.05;
  sc.left.gyro_noise = 0.01;
  sc.left.mag_noise = 1.0;
  sc.right = sc.left;
  sc.right->id = "right";
  sc.phone_heading_noise_deg = 3.0;
  sc.seed = 77;
  const auto a = generate(sc);
  const auto b = generate(sc);
  EXPECT_EQ(to_text(a.left), to_text(b.left));
  EXPECT_EQ(to_text(*a.right), to_text(*b.right));
  EXPECT_EQ(to_text(a.phone), to_text(b.phone));
  std::ostringstream ta, tb;
  write_truth(ta, a.truth, a.truth_heading);
  write_truth(tb, b.truth, b.truth_heading);
  EXPECT_EQ(ta.str(), tb.str());
  // different devices draw different noise
  EXPECT_NE(to_text(a.left).substr(200, 400), to_text(*a.right).substr(200, 400));
  sc.seed = 78;
  EXPECT_NE(to_text(generate(sc).left), to_text(a.left));
}

TEST(Synth, StridesAndHeadingsReproduceEndpoint)
{
  for (const auto& route : {straight_route(23.0), square_route(10.0), corridor_route(10.0, 2), outdoor_route()})
  {
    SynthScenario sc;
    sc.waypoints = route;
    const auto out = generate(sc);
    // every truth stride advances one stride length along the true heading at its peak
    Position2D p;
    for (const auto& s : out.truth.strides)
    {
      const Angle psi = out.truth_heading.psi[std::min(s.peak_index, out.truth_heading.size() - 1)];
      p = p + sc.stride() * Position2D{std::cos(psi.rad()), std::sin(psi.rad())};
    }
    const Position2D end = out.truth.pos.back();
    EXPECT_LT((p - end).norm(), sc.stride()) << route.size();
    // rounded corners cut each vertex by at most one turn length
    const double slack = static_cast<double>(route.size() - 2) * sc.turn_length;
    EXPECT_LT((end - route.back()).norm(), slack + 1e-3);
  }
}

TEST(Synth, NoiselessLeftRightHeadingsAgree)
{
  SynthScenario sc;
  sc.waypoints = square_route(10.0);
  sc.left.mount_yaw = deg2rad(7.0);
  sc.right = DeviceModel{};
  sc.right->id = "right";
  sc.right->mount_yaw = deg2rad(-4.0);
  const auto out = generate(sc);
  const Tilt held = tilt_angles(out.left.samples.front().acc);
  for (std::size_t i = 0; i < out.left.size(); ++i)
  {
    const auto& l = out.left.samples[i];
    const auto& r = out.right->samples[i];
    const Angle hl = mag_heading(l.mag, held, Angle::degrees(-7.0));
    const Angle hr = mag_heading(r.mag, held, Angle::degrees(4.0));
    ASSERT_NEAR(circular_diff(hl, hr), 0.0, 1e-9);
    ASSERT_LT((l.gyro - r.gyro).norm(), 1e-15);
  }
}

TEST(Synth, TiltedMountStillLevelsToTruth)
{
  SynthScenario sc;
  sc.waypoints = square_route(6.0);
  sc.left.roll = deg2rad(12.0);
  sc.left.pitch = deg2rad(-25.0);
  const auto out = generate(sc);
  for (std::size_t i = 0; i < out.left.size(); i += 7)
  {
    if (out.left.samples[i].t > sc.stand_start)
      break;
    const auto& s = out.left.samples[i];
    ASSERT_NEAR(circular_diff(mag_heading(s.mag, tilt_angles(s.acc)), out.truth_heading.psi[i]), 0.0, 1e-9);
  }
}

TEST(Synth, CalibrationRecordingHasDistinctHolds)
{
  const auto dirs = spread_orientations(12, 5);
  ASSERT_EQ(dirs.size(), 12u);
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (std::size_t j = i + 1; j < dirs.size(); ++j)
      EXPECT_LT(dirs[i].dot(dirs[j]), std::cos(deg2rad(25.0)) + 1e-12);
  const auto tr = generate_calibration_trace(AccelCalib{}, 12, 5);
  EXPECT_EQ(tr.size(), 12u * 40u + 11u * 10u);
}

TEST(Synth, TruthFileRoundTrip)
{
  SynthScenario sc;
  sc.waypoints = square_route(4.0);
  const auto out = generate(sc);
  std::ostringstream os;
  write_truth(os, out.truth, out.truth_heading);
  std::istringstream in(os.str());
  const auto gt = parse_truth(in, "truth");
  ASSERT_EQ(gt.track.size(), out.truth.size());
  EXPECT_NEAR(gt.track.pos.back().x, out.truth.pos.back().x, 1e-6);
  EXPECT_NEAR(gt.heading.psi[100].deg(), out.truth_heading.psi[100].deg(), 1e-6);
}

TEST(Synth, RejectsBadScenario)
{
  SynthScenario sc;
  sc.waypoints = straight_route(5.0);
  sc.step_frequency = 0.0;
  EXPECT_THROW(generate(sc), InputError);
  sc.step_frequency = 2.0;
  sc.user_height = 3.0;
  EXPECT_THROW(generate(sc), InputError);
}
