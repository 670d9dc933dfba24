/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#include "earnav/trace_io.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace earnav;
using earnav::test::make_trace;
using earnav::test::to_text;

namespace
{

const char* kThreeRows =
    "# device_id=left rate_hz=20 columns=t,ax,ay,az,gx,gy,gz,mx,my,mz\n"
    "0.000000,0.0,0.0,9.81,0.0,0.0,0.0,20.0,0.0,40.0\n"
    "0.050000,0.0,0.0,9.81,0.0,0.0,0.1,20.0,0.0,40.0\n"
    "0.100000,0.0,0.0,9.81,0.0,0.0,0.2,20.0,0.0,40.0\n";

DeviceTrace parse(const std::string& text)
{
  std::istringstream in(text);
  return parse_trace(in, "mem.csv");
}

std::string error_of(const std::string& text)
{
  try
  {
    parse(text);
  }
  catch (const InputError& e)
  {
    return e.what();
  }
  return {};
}

DeviceTrace ramp(double rate, double seconds)
{
  const auto n = static_cast<std::size_t>(std::lround(seconds * rate)) + 1;
  return make_trace(rate, n, [](ImuSample& s) {
    s.acc = Vec3(2.0 * s.t + 1.0, -s.t, 0.5);
    s.gyro = Vec3(0.1 * s.t, 0.0, 3.0 - s.t);
    s.mag = Vec3(10.0 + s.t, 4.0 * s.t, -40.0);
  });
}

}  // namespace

TEST(LoadTrace, ThreeRows)
{
  const auto tr = parse(kThreeRows);
  EXPECT_EQ(tr.size(), 3u);
  EXPECT_EQ(tr.device_id, "left");
  EXPECT_DOUBLE_EQ(tr.rate_hz, 20.0);
  EXPECT_DOUBLE_EQ(tr.samples[2].gyro.z(), 0.2);
  EXPECT_FALSE(tr.has_reference());
}

TEST(LoadTrace, DuplicateTimestampNamesLine)
{
  std::string text = kThreeRows;
  text += "0.100000,0.0,0.0,9.81,0.0,0.0,0.2,20.0,0.0,40.0\n";
  const auto msg = error_of(text);
  EXPECT_NE(msg.find("duplicate timestamp"), std::string::npos);
  EXPECT_NE(msg.find("mem.csv:5"), std::string::npos) << msg;
}

TEST(LoadTrace, NanField)
{
  std::string text = kThreeRows;
  text += "0.150000,0.0,0.0,9.81,0.0,nan,0.2,20.0,0.0,40.0\n";
  EXPECT_NE(error_of(text).find("non-finite field"), std::string::npos);
}

TEST(LoadTrace, MalformedInputs)
{
  EXPECT_NE(error_of("").find("empty"), std::string::npos);
  EXPECT_NE(error_of("t,ax\n").find("header"), std::string::npos);
  std::string short_row = kThreeRows;
  short_row += "0.2,1,2\n";
  EXPECT_NE(error_of(short_row).find("malformed row"), std::string::npos);
  std::string backwards = kThreeRows;
  backwards += "0.05,0,0,9.81,0,0,0,20,0,40\n";
  EXPECT_NE(error_of(backwards).find("non-monotonic"), std::string::npos);
}

TEST(LoadTrace, ExpectedColumnCount)
{
  std::istringstream in(kThreeRows);
  EXPECT_THROW(parse_trace(in, "mem.csv", 11), InputError);
}

TEST(LoadTrace, MissingFile) { EXPECT_THROW(load_trace("/nonexistent/trace.csv"), InputError); }

TEST(WriteTrace, RoundTripByteIdentical)
{
  auto tr = ramp(20.0, 2.0);
  tr.reference.assign(tr.size(), Angle::degrees(359.5));
  const std::string first = to_text(tr);
  const std::string second = to_text(parse(first));
  EXPECT_EQ(first, second);
}

TEST(Resample, NativeRateIdentity)
{
  const auto tr = ramp(20.0, 5.0);
  const auto r = resample(tr, 20.0);
  EXPECT_EQ(to_text(r), to_text(tr));
}

TEST(Resample, RampIsExact)
{
  const auto r = resample(ramp(20.0, 5.0), 10.0);
  for (const auto& s : r.samples)
  {
    EXPECT_NEAR(s.acc.x(), 2.0 * s.t + 1.0, 1e-12);
    EXPECT_NEAR(s.gyro.z(), 3.0 - s.t, 1e-12);
    EXPECT_NEAR(s.mag.y(), 4.0 * s.t, 1e-12);
  }
}

TEST(Resample, InclusiveGridCount)
{
  const auto r = resample(ramp(20.0, 10.0), 5.0);
  EXPECT_EQ(r.size(), 51u);
  EXPECT_DOUBLE_EQ(r.rate_hz, 5.0);
}

TEST(Resample, TwiceEqualsOnce)
{
  const auto tr = ramp(20.0, 7.0);
  EXPECT_EQ(to_text(resample(resample(tr, 10.0), 10.0)), to_text(resample(tr, 10.0)));
}

TEST(Resample, NonUniformInput)
{
  // 40 Hz nominal stream with jitter lands on an exact uniform grid
  DeviceTrace tr;
  tr.device_id = "x";
  tr.rate_hz = 40.0;
  for (int i = 0; i < 400; ++i)
  {
    ImuSample s;
    s.t = i / 40.0 + ((i % 3) - 1) * 0.004 + 0.01;
    s.acc = Vec3(s.t, 0, 0);
    tr.samples.push_back(s);
  }
  EXPECT_FALSE(is_uniform(tr));
  const auto r = resample(tr, 20.0);
  EXPECT_TRUE(is_uniform(r));
  for (const auto& s : r.samples)
    EXPECT_NEAR(s.acc.x(), s.t, 1e-12);
}

TEST(Resample, RejectsUpsamplingAndBadRates)
{
  const auto tr = ramp(20.0, 1.0);
  EXPECT_THROW(resample(tr, 40.0), InputError);
  EXPECT_THROW(resample(tr, 0.0), InputError);
}

TEST(Resample, ReferenceInterpolatesAcrossNorth)
{
  auto tr = make_trace(20.0, 3, [](ImuSample&) {});
  tr.reference = {Angle::degrees(350), Angle::degrees(10), Angle::degrees(10)};
  std::vector<double> q{0.025};
  const auto r = interpolate_to_grid(tr, q);
  EXPECT_NEAR(std::abs(circular_diff(r.reference[0], Angle{})), 0.0, 1e-9);
}

TEST(Config, DefaultsRoundTrip)
{
  RunConfig c;
  c.seed = 42;
  c.mag_window_cap = 7;
  std::ostringstream os;
  write_config(os, c);
  std::istringstream in(os.str());
  const auto back = parse_config(parse_key_values(in, "cfg"));
  std::ostringstream os2;
  write_config(os2, back);
  EXPECT_EQ(os.str(), os2.str());
  EXPECT_EQ(back.seed, 42u);
}

TEST(Config, UnknownKeyRejected)
{
  std::istringstream in("user_height=1.7\nbogus=1\n");
  try
  {
    parse_config(parse_key_values(in, "cfg"));
    FAIL();
  }
  catch (const InputError& e)
  {
    EXPECT_NE(std::string(e.what()).find("unknown config key 'bogus'"), std::string::npos);
  }
}

TEST(Config, BoundsEnforced)
{
  for (const char* text : {"user_height=0\n", "rate_hz=-1\n", "heading_particles=0\n", "comp_alpha0=1.5\n",
                           "mag_window_cap=2.5\n", "seed=-3\n"})
  {
    std::istringstream in(text);
    EXPECT_THROW(parse_config(parse_key_values(in, "cfg")), InputError) << text;
  }
}

TEST(SeriesFiles, HeadingAndTrackRoundTrip)
{
  HeadingSeries h{HeadingMethod::Gyro, {0.0, 0.05, 0.1}, {Angle::degrees(1), Angle::degrees(359), Angle::degrees(180)}};
  std::ostringstream os;
  write_heading_series(os, h);
  std::istringstream in(os.str());
  const auto hb = parse_heading_series(in, "h");
  ASSERT_EQ(hb.size(), 3u);
  EXPECT_EQ(hb.method, HeadingMethod::Gyro);
  EXPECT_NEAR(hb.psi[1].deg(), 359.0, 1e-6);

  Track t;
  t.t = {0.0, 1.0};
  t.pos = {{0.0, 0.0}, {1.5, -2.25}};
  std::ostringstream ot;
  write_track(ot, t);
  std::istringstream it(ot.str());
  const auto tb = parse_track(it, "t");
  ASSERT_EQ(tb.size(), 2u);
  EXPECT_NEAR(tb.pos[1].y, -2.25, 1e-9);
}
