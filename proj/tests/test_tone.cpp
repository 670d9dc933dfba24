/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#include "earnav/tone.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

using namespace earnav;

TEST(Tone, Endpoints)
{
  EXPECT_DOUBLE_EQ(tone_frequency(0.0), 3000.0);
  EXPECT_DOUBLE_EQ(tone_frequency(180.0), 250.0);
  EXPECT_DOUBLE_EQ(tone_frequency(90.0), 1625.0);
}

TEST(Tone, FoldsInputs)
{
  EXPECT_NEAR(tone_frequency(-90.0), 1625.0, 1e-9);
  EXPECT_NEAR(tone_frequency(270.0), 1625.0, 1e-9);
  EXPECT_NEAR(tone_frequency(360.0), 3000.0, 1e-9);
  EXPECT_NEAR(tone_frequency(190.0), tone_frequency(170.0), 1e-9);
}

TEST(Tone, StrictlyDecreasingWithinRange)
{
  double prev = tone_frequency(0.0);
  for (int d = 1; d <= 180; ++d)
  {
    const double f = tone_frequency(d);
    EXPECT_LT(f, prev) << d;
    EXPECT_GE(f, kToneMinHz);
    EXPECT_LE(f, kToneMaxHz);
    prev = f;
  }
}

TEST(Tone, SeriesTowardTarget)
{
  HeadingSeries h{HeadingMethod::Fused, {0.0, 1.0, 2.0}, {Angle::degrees(10), Angle::degrees(100), Angle::degrees(190)}};
  const auto s = tone_series(h, Angle::degrees(10));
  ASSERT_EQ(s.frequency_hz.size(), 3u);
  EXPECT_NEAR(s.frequency_hz[0], 3000.0, 1e-9);
  EXPECT_NEAR(s.frequency_hz[1], 1625.0, 1e-9);
  EXPECT_NEAR(s.frequency_hz[2], 250.0, 1e-9);
}

TEST(Tone, WavHeader)
{
  ToneSeries s{{0.0, 0.5}, {440.0, 880.0}};
  std::ostringstream os;
  write_tone_wav(os, s, 8000);
  const std::string w = os.str();
  ASSERT_GE(w.size(), 44u);
  EXPECT_EQ(w.substr(0, 4), "RIFF");
  EXPECT_EQ(w.substr(8, 8), "WAVEfmt ");
  EXPECT_EQ(w.substr(36, 4), "data");
  std::uint32_t data = 0;
  std::memcpy(&data, w.data() + 40, 4);
  EXPECT_EQ(data, 8000u * 2u);
  EXPECT_EQ(w.size(), 44u + data);
  EXPECT_THROW(write_tone_wav(os, ToneSeries{}), InputError);
}
