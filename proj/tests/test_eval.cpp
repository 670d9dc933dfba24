/*
 *  Copyright (C) 2026 The earnav Authors
 *
 *  SPDX-License-Identifier: Apache-2.0
 */

#include "earnav/eval.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace earnav;

namespace
{

Track line_to(Position2D end, double duration, std::size_t n = 11)
{
  Track tr;
  for (std::size_t i = 0; i < n; ++i)
  {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    tr.t.push_back(u * duration);
    tr.pos.push_back(end * u);
  }
  return tr;
}

HeadingSeries series(std::vector<double> t, std::vector<double> deg)
{
  HeadingSeries h{HeadingMethod::Mag, std::move(t), {}};
  for (double d : deg)
    h.psi.push_back(Angle::degrees(d));
  return h;
}

}  // namespace

TEST(Drift, Examples)
{
  const auto r = drift(line_to({3.0, 4.0}, 100.0));
  EXPECT_NEAR(r.drift, 0.05, 1e-15);
  EXPECT_NEAR(r.final_error, 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.duration, 100.0);

  Track loop = line_to({3.0, 4.0}, 50.0);
  loop.t.push_back(60.0);
  loop.pos.push_back({0.0, 0.0});
  EXPECT_EQ(drift(loop).drift, 0.0);
}

TEST(Drift, ExpectedEnd)
{
  EXPECT_NEAR(drift(line_to({10.0, 0.0}, 10.0), {10.0, 1.0}).drift, 0.1, 1e-12);
}

TEST(Drift, Errors)
{
  EXPECT_THROW(drift(Track{}), InputError);
  Track single;
  single.t = {1.0};
  single.pos = {{1.0, 1.0}};
  EXPECT_THROW(drift(single), InputError);
}

TEST(Drift, TranslationAndRotationInvariant)
{
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-50, 50), ang(0, kTwoPi);
  for (int trial = 0; trial < 500; ++trial)
  {
    Track tr;
    for (int i = 0; i < 20; ++i)
    {
      tr.t.push_back(0.5 * i);
      tr.pos.push_back({u(rng), u(rng)});
    }
    const Position2D expected{u(rng), u(rng)};
    const double base = drift(tr, expected).drift;

    const Position2D shift{u(rng), u(rng)};
    Track moved = tr;
    for (auto& p : moved.pos)
      p = p + shift;
    ASSERT_NEAR(drift(moved, expected + shift).drift, base, 1e-12);

    const double r = ang(rng);
    auto rot = [r](Position2D p) {
      return Position2D{std::cos(r) * p.x - std::sin(r) * p.y, std::sin(r) * p.x + std::cos(r) * p.y};
    };
    Track turned = tr;
    for (auto& p : turned.pos)
      p = rot(p);
    ASSERT_NEAR(drift(turned, rot(expected)).drift, base, 1e-12);
  }
}

TEST(HeadingError, Examples)
{
  const auto ref = series({0, 1, 2, 3}, {10, 200, 359, 0});
  const auto same = heading_error(ref, ref);
  EXPECT_EQ(same.mean_abs_error, 0.0);
  EXPECT_EQ(same.std_dev, 0.0);

  const auto off = heading_error(series({0, 1, 2, 3}, {20, 210, 9, 10}), ref);
  EXPECT_NEAR(off.mean_abs_error, 10.0, 1e-9);
  EXPECT_NEAR(off.std_dev, 0.0, 1e-9);
  ASSERT_EQ(off.errors.size(), 4u);
}

TEST(HeadingError, FoldedNormalMean)
{
  std::mt19937_64 rng(62);
  std::normal_distribution<double> n(0.0, 15.0);
  std::uniform_real_distribution<double> u(0, 360);
  std::vector<double> t, est, ref;
  for (int i = 0; i < 400000; ++i)
  {
    t.push_back(0.05 * i);
    ref.push_back(u(rng));
    est.push_back(ref.back() + n(rng));
  }
  const auto r = heading_error(series(t, est), series(t, ref));
  EXPECT_NEAR(r.mean_abs_error, 15.0 * std::sqrt(2.0 / kPi), 0.05);
  // sd of a folded normal: sigma * sqrt(1 - 2/pi)
  EXPECT_NEAR(r.std_dev, 15.0 * std::sqrt(1.0 - 2.0 / kPi), 0.05);
}

TEST(HeadingError, InterpolatesMismatchedGrids)
{
  const auto ref = series({0, 1, 2}, {350, 10, 30});
  const auto est = series({0.5, 1.5, 5.0}, {0, 20, 0});
  const auto r = heading_error(est, ref);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_NEAR(r.errors[0], 0.0, 1e-9);
  EXPECT_NEAR(r.errors[1], 0.0, 1e-9);
  EXPECT_THROW(heading_error(series({10, 11}, {0, 0}), ref), InputError);
}

TEST(HeadingError, InvariantUnderCommonRotation)
{
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(0, 360);
  std::vector<double> t, a, b;
  for (int i = 0; i < 500; ++i)
  {
    t.push_back(i);
    a.push_back(u(rng));
    b.push_back(u(rng));
  }
  const auto base = heading_error(series(t, a), series(t, b));
  for (double r : {1.0, 90.0, 181.0, 359.5})
  {
    std::vector<double> ar = a, br = b;
    for (auto& v : ar)
      v += r;
    for (auto& v : br)
      v += r;
    const auto rot = heading_error(series(t, ar), series(t, br));
    EXPECT_NEAR(rot.mean_abs_error, base.mean_abs_error, 1e-9);
    EXPECT_NEAR(rot.std_dev, base.std_dev, 1e-9);
  }
}

TEST(TTest, IdenticalSamples)
{
  const std::vector<double> a{1, 2, 3, 4};
  const auto r = paired_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_FALSE(r.significant);
  EXPECT_TRUE(r.degenerate);
}

TEST(TTest, ConstantDifference)
{
  const std::vector<double> b{0.3, 1.7, 2.2, 5.0, 4.1};
  std::vector<double> a = b;
  for (auto& v : a)
    v += 1.0;
  const auto r = paired_t_test(a, b);
  EXPECT_TRUE(std::isinf(r.t));
  EXPECT_GT(r.t, 0.0);
  EXPECT_TRUE(r.significant);
  EXPECT_TRUE(r.degenerate);
}

TEST(TTest, HandComputed)
{
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 2, 4, 4, 6};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.mean_difference, -0.6, 1e-12);
  EXPECT_NEAR(r.t, -0.6 / (std::sqrt(0.3) / std::sqrt(5.0)), 1e-12);
  EXPECT_NEAR(r.t, -2.449, 5e-4);
  EXPECT_EQ(r.df, 4.0);
  // two-sided 5% critical value for 4 degrees of freedom, from standard tables
  EXPECT_NEAR(r.critical, 2.776, 5e-4);
  EXPECT_FALSE(r.significant);
  EXPECT_NEAR(r.p_value, 0.0705, 5e-4);
}

TEST(TTest, LargeSampleCritical)
{
  std::vector<double> a(100), b(100);
  for (int i = 0; i < 100; ++i)
  {
    a[i] = i + 0.5 * (i % 3);
    b[i] = i;
  }
  EXPECT_NEAR(paired_t_test(a, b).critical, 1.984, 5e-4);
}

TEST(TTest, Antisymmetric)
{
  std::mt19937_64 rng(64);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial)
  {
    std::vector<double> a(12), b(12);
    for (int i = 0; i < 12; ++i)
    {
      a[i] = n(rng);
      b[i] = n(rng) + 0.3;
    }
    const auto ab = paired_t_test(a, b);
    const auto ba = paired_t_test(b, a);
    ASSERT_DOUBLE_EQ(ab.t, -ba.t);
    ASSERT_EQ(ab.significant, ba.significant);
    ASSERT_NEAR(ab.p_value, ba.p_value, 1e-15);
  }
}

TEST(TTest, Preconditions)
{
  const std::vector<double> a{1, 2}, b{1}, one{1};
  EXPECT_THROW(paired_t_test(a, b), InputError);
  EXPECT_THROW(paired_t_test(one, one), InputError);
  EXPECT_THROW(paired_t_test(a, a, 0.0), InputError);
}

TEST(Summaries, MeanAndSampleSd)
{
  const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
  const auto s = summarize(x);
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_NEAR(s.sd, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(s.n, 8u);
}

TEST(Reports, KeyValueFormat)
{
  std::ostringstream os;
  write_drift_report(os, drift(line_to({3.0, 4.0}, 100.0)), "gps_");
  const std::string text = os.str();
  EXPECT_NE(text.find("gps_drift_m_per_s=0.050000"), std::string::npos) << text;
  EXPECT_NE(text.find("gps_final_error_m=5.000000"), std::string::npos) << text;
}
