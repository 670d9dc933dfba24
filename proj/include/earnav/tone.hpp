/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include "earnav/datamodel.hpp"
#include "earnav/trace_io.hpp"

#include <cstdint>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace earnav
{

inline constexpr double kToneMinHz = 250.0;
inline constexpr double kToneMaxHz = 3000.0;

/// Audio-feedback pitch: 3000 Hz when facing the target, 250 Hz when facing away.
/// Any input is first folded to |circular_diff| in [0, 180] degrees.
inline double tone_frequency(double heading_diff_deg)
{
  const double d = std::abs(rad2deg(circular_diff(Angle::degrees(heading_diff_deg), Angle{})));
  return 2750.0 * ((180.0 - d) / 180.0) + 250.0;
}

struct ToneSeries
{
  std::vector<double> t;
  std::vector<double> frequency_hz;
};

/// Pitch over time for a heading series steering toward a fixed target heading.
inline ToneSeries tone_series(const HeadingSeries& heading, Angle target)
{
  ToneSeries s;
  s.t = heading.t;
  for (const Angle& a : heading.psi)
    s.frequency_hz.push_back(tone_frequency(rad2deg(circular_diff(a, target))));
  return s;
}

inline void write_tone_series(std::ostream& out, const ToneSeries& s)
{
  out << "t,frequency_hz\n";
  for (std::size_t i = 0; i < s.t.size(); ++i)
    out << fmt_fixed(s.t[i], 6) << ',' << fmt_fixed(s.frequency_hz[i], 6) << '\n';
}

namespace detail
{
inline void put_le(std::ostream& out, std::uint32_t v, int bytes)
{
  for (int i = 0; i < bytes; ++i)
    out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}
}  // namespace detail

/// Mono 16-bit PCM rendering of a piecewise-constant frequency series; phase is continuous
/// across frequency changes.
inline void write_tone_wav(std::ostream& out, const ToneSeries& s, int sample_rate = 44100, double amplitude = 0.5)
{
  if (s.t.empty())
    throw InputError("tone: empty series");
  const double duration = s.t.size() > 1 ? s.t.back() - s.t.front() + (s.t[1] - s.t[0]) : 1.0;
  const auto frames = static_cast<std::uint32_t>(std::lround(duration * sample_rate));
  const std::uint32_t data_bytes = frames * 2;

  out.write("RIFF", 4);
  detail::put_le(out, 36 + data_bytes, 4);
  out.write("WAVEfmt ", 8);
  detail::put_le(out, 16, 4);
  detail::put_le(out, 1, 2);  // PCM
  detail::put_le(out, 1, 2);  // mono
  detail::put_le(out, static_cast<std::uint32_t>(sample_rate), 4);
  detail::put_le(out, static_cast<std::uint32_t>(sample_rate) * 2, 4);
  detail::put_le(out, 2, 2);
  detail::put_le(out, 16, 2);
  out.write("data", 4);
  detail::put_le(out, data_bytes, 4);

  double phase = 0.0;
  std::size_t k = 0;
  for (std::uint32_t i = 0; i < frames; ++i)
  {
    const double t = s.t.front() + static_cast<double>(i) / sample_rate;
    while (k + 1 < s.t.size() && s.t[k + 1] <= t)
      ++k;
    phase = std::fmod(phase + kTwoPi * s.frequency_hz[k] / sample_rate, kTwoPi);
    const auto v = static_cast<std::int16_t>(std::lround(amplitude * 32767.0 * std::sin(phase)));
    detail::put_le(out, static_cast<std::uint16_t>(v), 2);
  }
}

}  // namespace earnav
