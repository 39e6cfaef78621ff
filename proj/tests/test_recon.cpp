#include "offgrid/patterns.hpp"
#include "offgrid/recon.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <tbb/task_arena.h>

using namespace offgrid;

namespace {

SamplingPattern cartesian_pattern(const ImageGrid& grid)
{
  PointMatrix pts(grid.size(), 2);
  for (Eigen::Index n = 0; n < grid.size(); ++n) {
    pts(n, 0) = kTwoPi * static_cast<double>(n / grid.extent(1)) / grid.extent(0);
    pts(n, 1) = kTwoPi * static_cast<double>(n % grid.extent(1)) / grid.extent(1);
  }
  return SamplingPattern(pts);
}

struct Instance {
  ImageGrid grid;
  NuftOperator op;
  KSpaceVector y;
};

Instance make_instance(int side, Eigen::Index m, std::uint64_t seed)
{
  const ImageGrid grid{side, side};
  NuftOperator op(vds_uniform(grid, m, seed), grid);
  Rng rng(seed + 1000);
  KSpaceVector y(rng.complex_normal_vector(m));
  return {grid, std::move(op), std::move(y)};
}

double max_abs(const CVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(SoftThreshold, Examples)
{
  EXPECT_NEAR(std::abs(soft_threshold(Complex(3.0, 4.0), 1.0) - Complex(2.4, 3.2)), 0.0, 1e-15);
  EXPECT_EQ(soft_threshold(Complex(0.3, 0.0), 0.5), Complex(0.0, 0.0));
  EXPECT_EQ(soft_threshold(Complex(0.5, 0.0), 0.5), Complex(0.0, 0.0));
  EXPECT_EQ(soft_threshold(Complex(-2.0, 0.0), 0.0), Complex(-2.0, 0.0));
  EXPECT_THROW(soft_threshold(Complex(1.0, 0.0), -1e-300), std::invalid_argument);
}

TEST(Tikhonov, ZeroDataGivesZero)
{
  const auto inst = make_instance(8, 20, 1);
  const auto res = reconstruct(inst.op, KSpaceVector(CVector::Zero(20)), ReconConfig::tikhonov(0.1, 5));
  EXPECT_EQ(max_abs(res.image.data()), 0.0);
  EXPECT_TRUE(res.trace.identity_step.front());
}

TEST(Tikhonov, CartesianConvergesInOneStep)
{
  const ImageGrid grid{8, 8};
  const NuftOperator op(cartesian_pattern(grid), grid);
  Rng rng(2);
  const KSpaceVector y(rng.complex_normal_vector(64));
  const double lambda = 0.7;
  const auto res = reconstruct(op, y, ReconConfig::tikhonov(lambda, 1));
  const CVector expect = oracle::naive_adjoint(op.pattern().points(), grid.dims(), y.data()) / (64.0 + lambda);
  EXPECT_LE(oracle::rel_err(res.image.data(), expect), 1e-12);
}

TEST(Tikhonov, MatchesDenseSolveAfter2NIterations)
{
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto inst = make_instance(8, 40, seed);
    const double lambda = 0.05;
    const Eigen::MatrixXcd a = oracle::dense_matrix(inst.op.pattern().points(), inst.grid.dims());
    Eigen::MatrixXcd h = a.adjoint() * a;
    h.diagonal().array() += lambda;
    const CVector exact = h.ldlt().solve(a.adjoint() * inst.y.data());
    const auto res = reconstruct(inst.op, inst.y, ReconConfig::tikhonov(lambda, 2 * 64));
    EXPECT_LE(oracle::rel_err(res.image.data(), exact), 1e-8);
  }
}

TEST(Tikhonov, ResidualNormNonincreasing)
{
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = make_instance(16, 100 + 10 * seed, seed);
    for (double lambda : {1e-3, 0.256, 10.0}) {
      const auto res = reconstruct(inst.op, inst.y, ReconConfig::tikhonov(lambda, 60));
      double prev = res.trace.initial_residual_norm;
      for (double r : res.trace.residual_norms) {
        EXPECT_LE(r, prev * (1 + 1e-12)) << "seed " << seed << " lambda " << lambda;
        prev = r;
      }
    }
  }
}

TEST(Tikhonov, LinearInData)
{
  const auto inst = make_instance(8, 30, 4);
  Rng rng(5);
  const CVector y2 = rng.complex_normal_vector(30);
  const auto cfg = ReconConfig::tikhonov(0.1, 200);
  const CVector a = reconstruct(inst.op, inst.y, cfg).image.data();
  const CVector b = reconstruct(inst.op, KSpaceVector(y2), cfg).image.data();
  const CVector ab = reconstruct(inst.op, KSpaceVector(inst.y.data() + 2.0 * y2), cfg).image.data();
  EXPECT_LE(oracle::rel_err(ab, a + 2.0 * b), 1e-8);
}

TEST(Tikhonov, ValidatesConfig)
{
  const auto inst = make_instance(8, 10, 1);
  EXPECT_THROW(reconstruct(inst.op, inst.y, ReconConfig::tikhonov(-1.0)), std::invalid_argument);
  EXPECT_THROW(reconstruct(inst.op, inst.y, ReconConfig::tikhonov(1.0, 0)), std::invalid_argument);
  EXPECT_THROW(reconstruct(inst.op, KSpaceVector(CVector::Zero(11)), ReconConfig::tikhonov(1.0)),
               std::invalid_argument);
  EXPECT_THROW(reconstruct(inst.op, inst.y, ReconConfig::l1(WaveletFrame(ImageGrid{4, 4}, 1), 1.0)),
               std::invalid_argument);
}

TEST(L1Wavelet, LargeLambdaGivesZero)
{
  const auto inst = make_instance(16, 80, 3);
  const WaveletFrame frame(inst.grid, 3);
  const double lam = max_abs(frame.analyze(inst.op.adjoint(inst.y.data())));
  const auto res = reconstruct(inst.op, inst.y, ReconConfig::l1(frame, lam, 30));
  EXPECT_EQ(max_abs(res.image.data()), 0.0);
}

TEST(L1Wavelet, FistaFinalObjectiveNotAboveStart)
{
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = make_instance(16, 77, seed);
    const WaveletFrame frame(inst.grid, 3);
    const double lam = default_l1_lambda(inst.op, frame, inst.y);
    const auto res = reconstruct(inst.op, inst.y, ReconConfig::l1(frame, lam, 60));
    const double start = l1_objective(inst.op, frame, inst.y.data(), CVector::Zero(frame.coefficient_count()), lam);
    const double end = l1_objective(inst.op, frame, inst.y.data(), res.trace.iterates.back(), lam);
    EXPECT_LE(end, start);
  }
}

TEST(L1Wavelet, IstaObjectiveMonotone)
{
  const auto inst = make_instance(16, 77, 7);
  const WaveletFrame frame(inst.grid, 2);
  auto cfg = ReconConfig::l1(frame, 0.05, 40);
  cfg.accelerated = false;
  const auto res = reconstruct(inst.op, inst.y, cfg);
  double prev = l1_objective(inst.op, frame, inst.y.data(), CVector::Zero(frame.coefficient_count()), 0.05);
  for (const auto& z : res.trace.iterates) {
    const double f = l1_objective(inst.op, frame, inst.y.data(), z, 0.05);
    EXPECT_LE(f, prev * (1 + 1e-12));
    prev = f;
  }
}

TEST(L1Wavelet, MatchesIstaOracleAndKkt)
{
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto inst = make_instance(4, 8, seed);
    const WaveletFrame frame(inst.grid, 2);
    const double lam = 0.1 * max_abs(frame.analyze(inst.op.adjoint(inst.y.data())));
    auto cfg = ReconConfig::l1(frame, lam, 5000);
    cfg.opnorm_iters = 200;
    const auto res = reconstruct(inst.op, inst.y, cfg);
    const CVector& z = res.trace.iterates.back();

    // Dense proximal-gradient oracle on B = A Psi, from a random start.
    const Eigen::MatrixXcd a = oracle::dense_matrix(inst.op.pattern().points(), inst.grid.dims());
    Eigen::MatrixXcd psi_h(frame.coefficient_count(), 16);
    for (Eigen::Index n = 0; n < 16; ++n) {
      psi_h.col(n) = frame.analyze(CVector::Unit(16, n));
    }
    const Eigen::MatrixXcd bm = a * psi_h.adjoint();
    const double lip = Eigen::JacobiSVD<Eigen::MatrixXcd>(bm).singularValues()(0);
    const double step = 1.0 / (lip * lip);
    Rng rng(seed + 77);
    CVector w = rng.complex_normal_vector(frame.coefficient_count());
    for (int it = 0; it < 200000; ++it) {
      const CVector u = w - step * (bm.adjoint() * (bm * w - inst.y.data()));
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double mag = std::abs(u[i]);
        w[i] = mag <= step * lam ? Complex(0.0) : u[i] * (1.0 - step * lam / mag);
      }
    }
    auto objective = [&](const CVector& c) {
      return 0.5 * (bm * c - inst.y.data()).squaredNorm() + lam * c.cwiseAbs().sum();
    };
    const double f_oracle = objective(w);
    EXPECT_LE(std::abs(l1_objective(inst.op, frame, inst.y.data(), z, lam) - f_oracle), 1e-6 * f_oracle);

    const CVector g = bm.adjoint() * (bm * z - inst.y.data());
    double kkt = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (z[i] == Complex(0.0)) {
        kkt = std::max(kkt, std::abs(g[i]) - lam);
      }
    }
    EXPECT_LE(kkt, 1e-5);
  }
}

TEST(L1Wavelet, MomentumScheduleDependsOnlyOnIndex)
{
  const auto beta = fista_momentum(5);
  EXPECT_EQ(beta[0], 0.0);
  for (std::size_t k = 1; k < beta.size(); ++k) {
    EXPECT_GT(beta[k], beta[k - 1]);
    EXPECT_LT(beta[k], 1.0);
  }
  const auto a = make_instance(8, 20, 1), b = make_instance(8, 20, 2);
  const WaveletFrame frame(a.grid, 2);
  EXPECT_EQ(reconstruct(a.op, a.y, ReconConfig::l1(frame, 0.1, 5)).trace.momentum,
            reconstruct(b.op, b.y, ReconConfig::l1(frame, 0.2, 5)).trace.momentum);
}

TEST(Replay, BitwiseForBothReconstructors)
{
  const auto inst = make_instance(16, 77, 5);
  const WaveletFrame frame(inst.grid, 3);
  for (const auto& cfg : {ReconConfig::tikhonov(0.256, 30), ReconConfig::l1(frame, 0.05, 60)}) {
    const auto res = reconstruct(inst.op, inst.y, cfg);
    EXPECT_EQ(replay(inst.op, inst.y, cfg, res.trace), res.image.data());
  }
}

TEST(Determinism, RepeatedAndThreadCountIndependent)
{
  const auto inst = make_instance(32, 300, 8);
  const WaveletFrame frame(inst.grid, 3);
  for (const auto& cfg : {ReconConfig::tikhonov(1.024, 30), ReconConfig::l1(frame, 0.05, 20)}) {
    CVector serial, wide;
    tbb::task_arena(1).execute([&] { serial = reconstruct(inst.op, inst.y, cfg).image.data(); });
    tbb::task_arena(4).execute([&] { wide = reconstruct(inst.op, inst.y, cfg).image.data(); });
    EXPECT_EQ(serial, wide);
    EXPECT_EQ(serial, reconstruct(inst.op, inst.y, cfg).image.data());
  }
}
