// Copyright 2026 The Deflate Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "deflate/core_model.h"
#include "deflate/errors.h"
#include "deflate/properties.h"
#include "deflate/random.h"

namespace deflate {
namespace {

TEST(SpectralProfileTest, Exponential) {
  const auto s = make_spectral_profile(SpectralProfile::Exponential(), 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_DOUBLE_EQ(s[2], 0.25);
}

TEST(SpectralProfileTest, Uniform) {
  const auto s = make_spectral_profile(SpectralProfile::Uniform(), 4);
  EXPECT_EQ(s, std::vector<double>(4, 1.0));
}

TEST(SpectralProfileTest, PowerLaw) {
  const auto s = make_spectral_profile(SpectralProfile::PowerLaw(1.5), 3);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_NEAR(s[1], std::pow(2.0, -1.5), 1e-15);
  EXPECT_NEAR(s[2], std::pow(3.0, -1.5), 1e-15);
  EXPECT_NEAR(s[1], 0.353553, 1e-6);
  EXPECT_NEAR(s[2], 0.192450, 1e-6);
}

TEST(SpectralProfileTest, LinearGapClampsAtFloor) {
  const auto s = make_spectral_profile(SpectralProfile::LinearGap(0.5), 4);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_DOUBLE_EQ(s[2], 0.01);
  EXPECT_DOUBLE_EQ(s[3], 0.01);
}

TEST(SpectralProfileTest, ParseNames) {
  EXPECT_EQ(ParseProfile("exp").kind, SpectralProfile::Kind::kExponential);
  EXPECT_EQ(ParseProfile("power").kind, SpectralProfile::Kind::kPowerLaw);
  EXPECT_EQ(ParseProfile("uniform").kind, SpectralProfile::Kind::kUniform);
  EXPECT_EQ(ParseProfile("lingap").kind, SpectralProfile::Kind::kLinearGap);
  EXPECT_THROW(ParseProfile("cubic"), Error);
}

TEST(GenerateInstanceTest, NoiselessIdentity) {
  const auto inst = generate_instance(20, 30, 60, 3, SpectralProfile::Exponential(), 0.0, 7);
  EXPECT_EQ((inst.Y - inst.W_star * inst.X).norm(), 0.0);
}

TEST(GenerateInstanceTest, SameSeedSameBytes) {
  const auto a = generate_instance(50, 80, 200, 5, SpectralProfile::Exponential(), 0.1, 43);
  const auto b = generate_instance(50, 80, 200, 5, SpectralProfile::Exponential(), 0.1, 43);
  ASSERT_EQ(a.Y.size(), b.Y.size());
  EXPECT_EQ(std::memcmp(a.Y.data(), b.Y.data(), sizeof(double) * a.Y.size()), 0);
  EXPECT_EQ(std::memcmp(a.X.data(), b.X.data(), sizeof(double) * a.X.size()), 0);
  const auto c = generate_instance(50, 80, 200, 5, SpectralProfile::Exponential(), 0.1, 44);
  EXPECT_NE((a.Y - c.Y).norm(), 0.0);
}

TEST(GenerateInstanceTest, RankOfWStar) {
  const auto inst = generate_instance(50, 80, 200, 5, SpectralProfile::Exponential(), 0.0, 3);
  const Eigen::VectorXd s = singular_values(inst.W_star);
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) rank += s[i] > 1e-8;
  EXPECT_EQ(rank, 5);
}

TEST(GenerateInstanceTest, NormalizedSpectrum) {
  for (const char* name : {"exp", "power", "uniform"}) {
    const auto inst = generate_instance(30, 40, 100, 4, ParseProfile(name), 0.0, 1);
    ASSERT_EQ(inst.sigma_Y.size(), 4u);
    EXPECT_EQ(inst.sigma_Y[0], 1.0) << name;
    const Eigen::VectorXd s = singular_values(inst.Y_clean);
    EXPECT_NEAR(s[0], inst.sigma_scale, 1e-10 * inst.sigma_scale);
    EXPECT_NEAR(s[3] / s[0], inst.sigma_Y[3], 1e-12);
  }
}

TEST(GenerateInstanceTest, UniformIsGapDegenerate) {
  const auto u = generate_instance(30, 40, 100, 3, SpectralProfile::Uniform(), 0.0, 1);
  EXPECT_TRUE(u.gap_degenerate);
  const auto e = generate_instance(30, 40, 100, 3, SpectralProfile::Exponential(), 0.0, 1);
  EXPECT_FALSE(e.gap_degenerate);
}

TEST(GenerateInstanceTest, RejectsBadDimensions) {
  EXPECT_THROW(generate_instance(0, 4, 10, 1, SpectralProfile::Exponential(), 0.0, 1), Error);
  EXPECT_THROW(generate_instance(4, 4, 10, 5, SpectralProfile::Exponential(), 0.0, 1), Error);
  EXPECT_THROW(generate_instance(4, 4, 10, 2, SpectralProfile::Exponential(), -1.0, 1), Error);
}

TEST(SpectralGapsTest, Examples) {
  const GapReport a = spectral_gaps({1, 0.5, 0.25});
  ASSERT_EQ(a.gaps.size(), 3u);
  EXPECT_DOUBLE_EQ(a.gaps[0], 0.5);
  EXPECT_DOUBLE_EQ(a.gaps[1], 0.25);
  EXPECT_DOUBLE_EQ(a.gaps[2], 0.25);
  EXPECT_FALSE(a.degenerate);

  // The last entry has an empty inner min, so it is sigma_r itself.
  const GapReport b = spectral_gaps({1, 1});
  EXPECT_DOUBLE_EQ(b.gaps[0], 0.0);
  EXPECT_DOUBLE_EQ(b.gaps[1], 1.0);
  EXPECT_TRUE(b.degenerate);

  const GapReport c = spectral_gaps({1});
  EXPECT_DOUBLE_EQ(c.gaps[0], 1.0);
}

TEST(TailSumTest, Examples) {
  EXPECT_DOUBLE_EQ(tail_sum({1, 0.5, 0.25}, 2), 0.25);
  EXPECT_DOUBLE_EQ(tail_sum({1, 0.5, 0.25}, 3), 0.0);
  EXPECT_DOUBLE_EQ(tail_sum({1, 0.5, 0.25}, 1), 0.75);
}

TEST(TopSvdTest, Diagonal) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
  M(0, 0) = 3;
  M(1, 1) = 1;
  const auto t = top_svd(M, 1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_DOUBLE_EQ(t[0].sigma, 3.0);
  EXPECT_NEAR(std::abs(t[0].u[0]), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(t[0].v[0]), 1.0, 1e-15);
}

TEST(TopSvdTest, Zero) {
  const auto t = top_svd(Eigen::MatrixXd::Zero(3, 2), 2);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].sigma, 0.0);
  EXPECT_EQ(t[1].sigma, 0.0);
}

TEST(TopSvdTest, MatchesEigenOracle) {
  Rng rng(11);
  const Eigen::MatrixXd M = rng.GaussianMatrix(10, 8);
  const auto t = top_svd(M, 3);
  // Oracle: eigen-decomposition of M^T M.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.transpose() * M);
  for (int i = 0; i < 3; ++i) {
    const int j = 7 - i;
    const double sigma = std::sqrt(eig.eigenvalues()[j]);
    EXPECT_NEAR(t[i].sigma, sigma, 1e-8);
    const Eigen::VectorXd v = eig.eigenvectors().col(j);
    EXPECT_NEAR(std::abs(t[i].v.dot(v)), 1.0, 1e-8);
    const Eigen::VectorXd u = M * v / sigma;
    EXPECT_NEAR((t[i].sigma * t[i].u * t[i].v.transpose() -
                 sigma * u * v.transpose()).norm(), 0.0, 1e-8);
  }
}

TEST(PerturbationTest, WeylOnRandomPairs) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const Eigen::MatrixXd M = rng.GaussianMatrix(6, 5);
    const Eigen::MatrixXd D = rng.GaussianMatrix(6, 5, 0.1 + t * 0.01);
    EXPECT_LE(weyl_excess(M, D), 1e-9);
  }
}

TEST(PerturbationTest, WedinOnRandomPairs) {
  Rng rng(6);
  int applicable = 0;
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd M = rng.GaussianMatrix(6, 5);
    M.col(0) *= 4.0;  // widen the top gap
    const Eigen::MatrixXd D = rng.GaussianMatrix(6, 5, 0.02);
    const WedinCheck w = wedin_check(M, D);
    if (!w.applicable) continue;
    ++applicable;
    EXPECT_LE(w.lhs, w.rhs + 1e-9);
  }
  EXPECT_GT(applicable, 150);
}

}  // namespace
}  // namespace deflate
