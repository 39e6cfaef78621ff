#include "offgrid/frame.hpp"
#include "offgrid/nuft.hpp"
#include "offgrid/opnorm.hpp"
#include "offgrid/patterns.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <tbb/task_arena.h>

using namespace offgrid;

namespace {

SamplingPattern random_pattern(Eigen::Index m, int d, std::uint64_t seed)
{
  return vds_uniform(d == 1 ? ImageGrid{8} : ImageGrid{8, 8}, m, seed);
}

/// All N on-grid frequencies 2 pi k / dims, k in {0..dims-1}^2, row-major.
SamplingPattern cartesian_pattern(const ImageGrid& grid)
{
  PointMatrix pts(grid.size(), grid.rank());
  for (Eigen::Index n = 0; n < grid.size(); ++n) {
    if (grid.rank() == 1) {
      pts(n, 0) = kTwoPi * static_cast<double>(n) / grid.extent(0);
    } else {
      pts(n, 0) = kTwoPi * static_cast<double>(n / grid.extent(1)) / grid.extent(0);
      pts(n, 1) = kTwoPi * static_cast<double>(n % grid.extent(1)) / grid.extent(1);
    }
  }
  return SamplingPattern(pts);
}

double inner_re(const CVector& a, const CVector& b) { return a.dot(b).real(); }

}  // namespace

TEST(NuftForward, ZeroFrequencyGivesPixelSum)
{
  const ImageGrid grid{4, 6};
  Rng rng(1);
  const CVector x = rng.complex_normal_vector(grid.size());
  const NuftOperator op(SamplingPattern(PointMatrix::Zero(3, 2)), grid);
  const CVector y = op.forward(x);
  for (Eigen::Index m = 0; m < 3; ++m) {
    EXPECT_NEAR(std::abs(y[m] - x.sum()), 0.0, 1e-13);
  }
}

TEST(NuftForward, OriginIndicatorGivesOnes)
{
  const ImageGrid grid{4, 4};
  CVector x = CVector::Zero(16);
  x[10] = 1.0;  // p = (0, 0)
  const NuftOperator op(random_pattern(5, 2, 3), grid);
  const CVector y = op.forward(x);
  for (Eigen::Index m = 0; m < 5; ++m) {
    EXPECT_EQ(y[m], Complex(1.0, 0.0));
  }
}

TEST(NuftForward, MatchesSerialOracle)
{
  for (const ImageGrid& grid : {ImageGrid{4, 4}, ImageGrid{6, 10}, ImageGrid{8}}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const CVector x = rng.complex_normal_vector(grid.size());
      const auto pattern = random_pattern(3 + seed, grid.rank(), seed + 100);
      const NuftOperator op(pattern, grid);
      EXPECT_LE(oracle::rel_err(op.forward(x), oracle::naive_forward(pattern.points(), grid.dims(), x)), 1e-12);
      const CVector y = rng.complex_normal_vector(pattern.size());
      EXPECT_LE(oracle::rel_err(op.adjoint(y), oracle::naive_adjoint(pattern.points(), grid.dims(), y)), 1e-12);
    }
  }
}

TEST(NuftForward, OnGridMatchesDft)
{
  const ImageGrid grid{8, 6};
  Rng rng(4);
  const CVector x = rng.complex_normal_vector(grid.size());
  const NuftOperator op(cartesian_pattern(grid), grid);
  CVector y = op.forward(x);
  // Pixel positions are offset by -dims/2, which multiplies bin k by (-1)^(k0 + k1).
  for (Eigen::Index n = 0; n < y.size(); ++n) {
    const auto k0 = n / grid.extent(1);
    const auto k1 = n % grid.extent(1);
    if ((k0 + k1) % 2 != 0) {
      y[n] = -y[n];
    }
  }
  EXPECT_LE(oracle::rel_err(y, oracle::dft2(x, grid.extent(0), grid.extent(1))), 1e-10);
}

TEST(NuftAdjoint, UnitVectorGivesConjugatePhases)
{
  const ImageGrid grid{4, 4};
  const auto pattern = random_pattern(4, 2, 9);
  const NuftOperator op(pattern, grid);
  CVector e = CVector::Zero(4);
  e[2] = 1.0;
  const CVector x = op.adjoint(e);
  for (Eigen::Index n = 0; n < grid.size(); ++n) {
    const auto p = grid_position(grid, n);
    const Complex expect = std::polar(1.0, p[0] * pattern(2, 0) + p[1] * pattern(2, 1));
    EXPECT_NEAR(std::abs(x[n] - expect), 0.0, 1e-14);
  }
}

TEST(NuftAdjoint, AdjointIdentity)
{
  const ImageGrid grid{16, 16};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const NuftOperator op(vds_uniform(grid, 77, seed), grid);
    const CVector x = rng.complex_normal_vector(grid.size());
    const CVector y = rng.complex_normal_vector(77);
    const CVector ax = op.forward(x);
    const Complex lhs = ax.dot(y);
    const Complex rhs = x.dot(op.adjoint(y));
    EXPECT_LE(std::abs(lhs - rhs) / (ax.norm() * y.norm()), 1e-10);
  }
}

TEST(NuftAdjoint, ShapeErrors)
{
  const NuftOperator op(random_pattern(3, 2, 1), ImageGrid{4, 4});
  EXPECT_THROW(op.forward(CVector::Zero(15)), std::invalid_argument);
  EXPECT_THROW(op.adjoint(CVector::Zero(4)), std::invalid_argument);
  EXPECT_THROW(op.forward(ComplexImage(ImageGrid{4, 6})), std::invalid_argument);
  EXPECT_THROW(NuftOperator(random_pattern(3, 1, 1), ImageGrid{4, 4}), std::invalid_argument);
  EXPECT_THROW(op.vjp_pattern(CVector::Zero(16), CVector::Zero(2)), std::invalid_argument);
}

TEST(NuftVjp, TrivialCases)
{
  const ImageGrid grid{4, 4};
  const auto pattern = random_pattern(5, 2, 2);
  const NuftOperator op(pattern, grid);
  Rng rng(3);
  CVector x = CVector::Zero(16);
  x[10] = Complex(0.3, -1.2);
  EXPECT_EQ(op.vjp_pattern(x, rng.complex_normal_vector(5)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(op.vjp_pattern(rng.complex_normal_vector(16), CVector::Zero(5)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NuftVjp, MatchesCentralDifferences)
{
  for (const ImageGrid& grid : {ImageGrid{16, 16}, ImageGrid{16}}) {
    Rng rng(21);
    const auto pattern = vds_uniform(grid, 9, 22);
    const CVector x = rng.complex_normal_vector(grid.size());
    const CVector c = rng.complex_normal_vector(9);
    const PatternGradient g = NuftOperator(pattern, grid).vjp_pattern(x, c);
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index m = 0; m < pattern.size(); ++m) {
      for (int j = 0; j < pattern.rank(); ++j) {
        PointMatrix plus = pattern.points(), minus = pattern.points();
        plus(m, j) += h;
        minus(m, j) -= h;
        const double fp = c.dot(NuftOperator(SamplingPattern(plus), grid).forward(x)).real();
        const double fm = c.dot(NuftOperator(SamplingPattern(minus), grid).forward(x)).real();
        const double fd = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(fd - g(m, j)) / std::max(std::abs(g(m, j)), 1e-3 * g.cwiseAbs().maxCoeff()));
      }
    }
    EXPECT_LE(worst, 1e-6) << "rank " << grid.rank();
  }
}

TEST(NuftVjp, FusedForwardAgreesWithForward)
{
  const ImageGrid grid{12, 8};
  Rng rng(5);
  const NuftOperator op(vds_uniform(grid, 300, 6), grid);
  const CVector x = rng.complex_normal_vector(grid.size());
  const auto [y, g] = op.forward_and_vjp(x, rng.complex_normal_vector(300));
  EXPECT_LE(oracle::rel_err(y, op.forward(x)), 1e-14);
}

TEST(NuftParallel, ThreadCountDoesNotChangeBits)
{
  const ImageGrid grid{32, 32};
  Rng rng(17);
  const NuftOperator op(vds_uniform(grid, 700, 18), grid);
  const CVector x = rng.complex_normal_vector(grid.size());
  const CVector c = rng.complex_normal_vector(700);
  auto run = [&](int threads) {
    tbb::task_arena arena(threads);
    CVector y, xa;
    PatternGradient g;
    arena.execute([&] {
      y = op.forward(x);
      xa = op.adjoint(c);
      g = op.vjp_pattern(x, c);
    });
    return std::make_tuple(y, xa, g);
  };
  const auto serial = run(1);
  const auto parallel = run(4);
  EXPECT_EQ(std::get<0>(serial), std::get<0>(parallel));
  EXPECT_EQ(std::get<1>(serial), std::get<1>(parallel));
  EXPECT_EQ(std::get<2>(serial), std::get<2>(parallel));
}

TEST(OperatorNorm, FullCartesianIsSqrtN)
{
  const ImageGrid grid{4, 4};
  const NuftOperator op(cartesian_pattern(grid), grid);
  // Dense SVD confirms A^H A = N I on the full grid.
  const auto a = oracle::dense_matrix(op.pattern().points(), grid.dims());
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
  EXPECT_NEAR(svd.singularValues()(0), 4.0, 1e-12);
  EXPECT_NEAR(svd.singularValues()(15), 4.0, 1e-12);
  EXPECT_NEAR(estimate_opnorm(op, nullptr, 5, 1), 4.0, 4.0 * 1e-6);
}

TEST(OperatorNorm, SinglePointIsSqrtN)
{
  const ImageGrid grid{4, 4};
  const NuftOperator op(random_pattern(1, 2, 3), grid);
  EXPECT_NEAR(estimate_opnorm(op, nullptr, 3, 2), 4.0, 1e-12);
  const auto a = oracle::dense_matrix(op.pattern().points(), grid.dims());
  EXPECT_NEAR(Eigen::JacobiSVD<Eigen::MatrixXcd>(a).singularValues()(0), 4.0, 1e-12);
}

TEST(OperatorNorm, NeverExceedsAndIncreasesTowardTrueNorm)
{
  const ImageGrid grid{4, 4};
  const WaveletFrame frame(grid, 2);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const NuftOperator op(random_pattern(7, 2, seed), grid);
    const auto a = oracle::dense_matrix(op.pattern().points(), grid.dims());
    const double truth = Eigen::JacobiSVD<Eigen::MatrixXcd>(a).singularValues()(0);
    double prev = 0.0;
    for (int iters = 1; iters <= 40; iters += 3) {
      const double est = estimate_opnorm(op, nullptr, iters, seed);
      EXPECT_LE(est, truth * (1 + 1e-12));
      EXPECT_GE(est, prev * (1 - 1e-12));
      prev = est;
      // ||A Psi|| = ||A|| for a tight frame.
      EXPECT_LE(estimate_opnorm(op, &frame, iters, seed), truth * (1 + 1e-12));
    }
    EXPECT_NEAR(prev, truth, 1e-3 * truth);
    EXPECT_NEAR(estimate_opnorm(op, &frame, 200, seed), truth, 1e-3 * truth);
  }
}
