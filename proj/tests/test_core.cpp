#include "offgrid/core.hpp"
#include "offgrid/io.hpp"
#include "offgrid/nuft.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <set>

using namespace offgrid;

namespace {

std::filesystem::path temp_path(const std::string& name)
{
  auto dir = std::filesystem::temp_directory_path() / "offgrid_test_core";
  std::filesystem::create_directories(dir);
  return dir / name;
}

SamplingPattern random_pattern(Eigen::Index m, int d, std::uint64_t seed, double spread = 10.0)
{
  Rng rng(seed);
  PointMatrix pts(m, d);
  for (Eigen::Index i = 0; i < pts.size(); ++i) {
    pts.data()[i] = rng.uniform(-spread, spread);
  }
  return SamplingPattern(pts);
}

}  // namespace

TEST(GridPosition, CornerAndOrigin)
{
  const ImageGrid grid{4, 4};
  EXPECT_EQ(grid_position(grid, 0), (GridPosition(2) << -2, -2).finished());
  EXPECT_EQ(grid_position(grid, 10), (GridPosition(2) << 0, 0).finished());
  EXPECT_THROW(grid_position(grid, 16), std::out_of_range);
  EXPECT_THROW(grid_position(grid, -1), std::out_of_range);
}

TEST(GridPosition, BijectionUpTo64)
{
  for (int side : {2, 4, 16, 64}) {
    const ImageGrid grid{side, side};
    std::set<std::pair<int, int>> seen;
    for (Eigen::Index n = 0; n < grid.size(); ++n) {
      const auto p = grid_position(grid, n);
      ASSERT_GE(p[0], -side / 2);
      ASSERT_LT(p[0], side / 2);
      ASSERT_GE(p[1], -side / 2);
      ASSERT_LT(p[1], side / 2);
      const auto ref = oracle::position({side, side}, static_cast<long>(n));
      ASSERT_EQ(p[0], ref[0]);
      ASSERT_EQ(p[1], ref[1]);
      seen.insert({p[0], p[1]});
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(grid.size()));
  }
}

TEST(ImageGrid, RejectsOddAndBadRank)
{
  EXPECT_THROW(ImageGrid({3, 4}), std::invalid_argument);
  EXPECT_THROW(ImageGrid({0}), std::invalid_argument);
  EXPECT_THROW(ImageGrid({2, 2, 2}), std::invalid_argument);
  EXPECT_EQ(ImageGrid({6}).size(), 6);
}

TEST(ValueTypes, RejectNonFinite)
{
  CVector bad = CVector::Zero(4);
  bad[2] = Complex(std::nan(""), 0.0);
  EXPECT_THROW(ComplexImage(ImageGrid{4}, bad), std::invalid_argument);
  EXPECT_THROW(ComplexImage(ImageGrid{6}, CVector::Zero(4)), std::invalid_argument);
  EXPECT_THROW(KSpaceVector{bad}, std::invalid_argument);
  PointMatrix pts(1, 2);
  pts << 0.0, INFINITY;
  EXPECT_THROW(SamplingPattern{pts}, std::invalid_argument);
  EXPECT_THROW(SamplingPattern{PointMatrix(0, 2)}, std::invalid_argument);
}

TEST(WrapPattern, Examples)
{
  PointMatrix pts(2, 2);
  pts << 0.0, 0.0, 1.5 * kPi, -3.0 * kPi;
  const auto w = wrap_pattern(SamplingPattern(pts));
  EXPECT_EQ(w(0, 0), 0.0);
  EXPECT_EQ(w(0, 1), 0.0);
  EXPECT_NEAR(w(1, 0), -0.5 * kPi, 1e-15);
  EXPECT_DOUBLE_EQ(w(1, 1), -kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), -kPi);
  EXPECT_THROW(wrap_angle(std::nan("")), std::invalid_argument);
}

TEST(WrapPattern, IdempotentRangeAndNuftInvariant)
{
  const ImageGrid grid{8, 8};
  Rng rng(5);
  const CVector x = rng.complex_normal_vector(grid.size());
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto p = random_pattern(13, 2, seed, 40.0);
    const auto w = wrap_pattern(p);
    for (Eigen::Index i = 0; i < w.points().size(); ++i) {
      ASSERT_GE(w.points().data()[i], -kPi);
      ASSERT_LT(w.points().data()[i], kPi);
    }
    EXPECT_EQ(wrap_pattern(w).points(), w.points());
    const CVector y0 = NuftOperator(p, grid).forward(x);
    const CVector y1 = NuftOperator(w, grid).forward(x);
    EXPECT_LE(oracle::rel_err(y1, y0), 1e-12);
  }
}

TEST(Rng, SeededDeterminism)
{
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_NE(Rng(42).normal(), c.normal());
}

TEST(FileIo, ImageRoundTripIsBitwise)
{
  const ImageGrid grid{6, 8};
  Rng rng(7);
  const ComplexImage img(grid, rng.complex_normal_vector(grid.size()));
  const auto path = temp_path("img.ksimg");
  save_image(path, img);
  const auto back = load_image(path);
  ASSERT_EQ(back.grid(), grid);
  for (Eigen::Index n = 0; n < img.size(); ++n) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[n].real()), std::bit_cast<std::uint64_t>(img[n].real()));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[n].imag()), std::bit_cast<std::uint64_t>(img[n].imag()));
  }
}

TEST(FileIo, RealImageUsesRealLayout)
{
  const ImageGrid grid{4};
  CVector d(4);
  d << 1.0, -2.5, 0.0, 3.25;
  save_image(temp_path("real.ksimg"), ComplexImage(grid, d));
  const auto size = std::filesystem::file_size(temp_path("real.ksimg"));
  EXPECT_EQ(size, std::string("KSIMG1\n1 4 1 0\n").size() + 4 * 8);
  EXPECT_EQ(load_image(temp_path("real.ksimg")).data(), d);
}

TEST(FileIo, KSpaceRoundTripAndDeclaredLengthMismatch)
{
  Rng rng(8);
  const KSpaceVector y(rng.complex_normal_vector(9));
  const auto path = temp_path("y.ksp");
  save_kspace(path, y);
  EXPECT_EQ(load_kspace(path).data(), y.data());

  // Declare 10 samples but keep 9 samples of data.
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes.replace(bytes.find("\n9\n"), 3, "\n10\n");
  std::ofstream(temp_path("bad.ksp"), std::ios::binary) << bytes;
  EXPECT_THROW(load_kspace(temp_path("bad.ksp")), LengthMismatchError);
}

TEST(FileIo, DistinctErrors)
{
  EXPECT_THROW(load_image(temp_path("does_not_exist.ksimg")), IoError);
  std::ofstream(temp_path("magic.ksimg"), std::ios::binary) << "NOTIMG\n2 4 4 0\n";
  EXPECT_THROW(load_image(temp_path("magic.ksimg")), FormatError);
  std::ofstream(temp_path("header.ksimg"), std::ios::binary) << "KSIMG1\n2 4 four 0\n";
  EXPECT_THROW(load_image(temp_path("header.ksimg")), FormatError);
  std::ofstream(temp_path("short.ksimg"), std::ios::binary) << "KSIMG1\n2 4 4 0\n12345678";
  EXPECT_THROW(load_image(temp_path("short.ksimg")), LengthMismatchError);
  std::ofstream(temp_path("badrow.csv")) << "kx,ky\n0.5,0.25\n0.5\n";
  EXPECT_THROW(load_pattern(temp_path("badrow.csv")), FormatError);
  std::ofstream(temp_path("badhdr.csv")) << "u,v\n0.5,0.25\n";
  EXPECT_THROW(load_pattern(temp_path("badhdr.csv")), FormatError);
}

TEST(FileIo, PatternCsvRoundTripWithin1Ulp)
{
  for (int d : {1, 2}) {
    const auto p = random_pattern(50, d, 11 + d, 100.0);
    const auto path = temp_path("p.csv");
    save_pattern(path, p);
    const auto back = load_pattern(path);
    ASSERT_EQ(back.rank(), d);
    ASSERT_EQ(back.size(), 50);
    for (Eigen::Index i = 0; i < p.points().size(); ++i) {
      const double a = p.points().data()[i];
      const double b = back.points().data()[i];
      EXPECT_LE(std::abs(a - b), std::abs(std::nextafter(a, INFINITY) - a));
    }
    EXPECT_THROW(load_pattern(path, 49), LengthMismatchError);
  }
  std::ifstream in(temp_path("p.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "kx,ky");
}
