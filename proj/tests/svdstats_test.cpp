#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include <Eigen/Eigenvalues>

#include "oada/scenegen.hpp"
#include "oada/svdstats.hpp"

namespace {

using namespace oada::svd;
namespace fs = std::filesystem;

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void expect_valid(const Matrix& m, const SvdResult& s) {
  EXPECT_LE(reconstruction_error(m, s), 1e-10);
  EXPECT_LE(orthonormality_error(s.u), 1e-10);
  EXPECT_LE(orthonormality_error(s.v), 1e-10);
  for (Eigen::Index i = 0; i < s.sigma.size(); ++i) {
    EXPECT_GE(s.sigma[i], 0.0);
    if (i > 0) {
      EXPECT_LE(s.sigma[i], s.sigma[i - 1]);
    }
  }
}

TEST(Svd, ContractOnAssortedShapes) {
  std::uint64_t seed = 1;
  for (auto [r, c] : {std::pair{4, 50}, {50, 4}, {7, 7}, {32, 300}, {1, 9}, {9, 1}, {3, 3}}) {
    const Matrix m = random_matrix(r, c, seed++);
    const SvdResult s = jacobi_svd(m);
    EXPECT_EQ(s.u.rows(), r);
    EXPECT_EQ(s.v.rows(), c);
    EXPECT_EQ(s.sigma.size(), std::min(r, c));
    expect_valid(m, s);
  }
}

TEST(Svd, RankDeficientInputsKeepOrthonormalFactors) {
  const Matrix a = random_matrix(6, 2, 11), b = random_matrix(2, 40, 12);
  const Matrix m = a * b;  // rank 2
  const SvdResult s = jacobi_svd(m);
  expect_valid(m, s);
  for (int i = 2; i < 6; ++i) EXPECT_EQ(s.sigma[i], 0.0);
  const SvdResult z = jacobi_svd(Matrix::Zero(3, 5));
  EXPECT_EQ(z.sigma.norm(), 0.0);
  EXPECT_LE(orthonormality_error(z.u), 1e-12);
}

TEST(Svd, RejectsBadInput) {
  EXPECT_THROW(jacobi_svd(Matrix(0, 3)), std::invalid_argument);
  Matrix m = Matrix::Ones(2, 2);
  m(0, 1) = std::nan("");
  EXPECT_THROW(jacobi_svd(m), std::invalid_argument);
}

TEST(Svd, SingularValuesMatchEigenOracle) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const Matrix f = random_matrix(5, 60, seed);
    Eigen::SelfAdjointEigenSolver<Matrix> es(f * f.transpose());
    const SvdResult s = jacobi_svd(f);
    for (int i = 0; i < 5; ++i) {
      const double oracle = std::sqrt(es.eigenvalues()[4 - i]);  // ascending order
      EXPECT_NEAR(s.sigma[i], oracle, 1e-10 * oracle);
    }
  }
}

TEST(Spectrum, Examples) {
  const auto id = singular_spectrum(Matrix::Identity(3, 3), 3);
  for (double v : id) EXPECT_DOUBLE_EQ(v, 1.0);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  const auto ds = singular_spectrum(d, 2);
  EXPECT_NEAR(ds[0], 1.0, 1e-15);
  EXPECT_NEAR(ds[1], 1.0 / 3.0, 1e-15);

  const Matrix r1 = random_matrix(6, 1, 3) * random_matrix(1, 30, 4);
  const auto rs = singular_spectrum(r1, 6);
  EXPECT_NEAR(rs[0], 1.0, 1e-15);
  for (std::size_t i = 1; i < rs.size(); ++i) EXPECT_NEAR(rs[i], 0.0, 1e-12);
}

TEST(Spectrum, NormalizedDescendingInUnitInterval) {
  const auto s = singular_spectrum(random_matrix(32, 200, 5), 20);
  ASSERT_EQ(s.size(), 20u);
  EXPECT_EQ(s[0], 1.0);
  for (std::size_t i = 1; i < s.size(); ++i) {
    EXPECT_LE(s[i], s[i - 1]);
    EXPECT_GE(s[i], 0.0);
  }
}

TEST(Spectrum, InvariantUnderColumnPermutation) {
  const Matrix f = random_matrix(8, 40, 6);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
  Matrix g(8, 40);
  for (int j = 0; j < 40; ++j) g.col(j) = f.col(perm[static_cast<std::size_t>(j)]);
  const auto a = singular_spectrum(f, 8), b = singular_spectrum(g, 8);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Spectrum, KBeyondRankRejected) {
  EXPECT_THROW(singular_spectrum(random_matrix(4, 10, 8), 5), std::invalid_argument);
  EXPECT_THROW(singular_spectrum(random_matrix(4, 10, 8), 0), std::invalid_argument);
}

TEST(Angles, IdenticalInputsGiveOne) {
  const Matrix f = random_matrix(6, 40, 9);
  const AngleReport r = corresponding_angles(f, f, 6);
  for (double c : r.cosine) EXPECT_NEAR(c, 1.0, 1e-12);
}

TEST(Angles, OrthogonalRankOneGivesZero) {
  Matrix s = Matrix::Zero(3, 10), t = Matrix::Zero(3, 10);
  s.row(0) = random_matrix(1, 10, 10);
  t.row(1) = random_matrix(1, 10, 11);
  const AngleReport r = corresponding_angles(s, t, 1);
  EXPECT_NEAR(r.cosine[0], 0.0, 1e-15);
  EXPECT_FALSE(r.degenerate[0]);
}

TEST(Angles, MatchEigendecompositionOracle) {
  const Matrix fs = random_matrix(4, 50, 31), ft = random_matrix(4, 50, 32);
  Eigen::SelfAdjointEigenSolver<Matrix> es(fs * fs.transpose()), et(ft * ft.transpose());
  const AngleReport r = corresponding_angles(fs, ft, 4);
  for (int i = 0; i < 4; ++i) {
    const double oracle = std::abs(es.eigenvectors().col(3 - i).dot(et.eigenvectors().col(3 - i)));
    EXPECT_NEAR(r.cosine[static_cast<std::size_t>(i)], oracle, 1e-9) << "i=" << i;
    EXPECT_FALSE(r.degenerate[static_cast<std::size_t>(i)]);
  }
}

TEST(Angles, SymmetricInArguments) {
  const Matrix a = random_matrix(5, 30, 41), b = random_matrix(5, 45, 42);
  const auto ab = corresponding_angles(a, b, 5), ba = corresponding_angles(b, a, 5);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(ab.cosine[static_cast<std::size_t>(i)], ba.cosine[static_cast<std::size_t>(i)], 1e-12);
}

TEST(Angles, RepeatedSingularValuesFlagged) {
  const AngleReport r = corresponding_angles(Matrix::Identity(3, 3), random_matrix(3, 20, 43), 3);
  for (bool d : r.degenerate) EXPECT_TRUE(d);
}

TEST(Angles, DimensionMismatchRejected) {
  EXPECT_THROW(corresponding_angles(random_matrix(3, 9, 1), random_matrix(4, 9, 2), 2), std::invalid_argument);
}

// ---------------------------------------------------------------------------

std::vector<oada::scene::Scene> scenes(int n, std::uint64_t seed) {
  std::vector<oada::scene::Scene> out;
  for (int i = 0; i < n; ++i) out.push_back(oada::scene::generate_scene(seed + static_cast<std::uint64_t>(i), {}));
  return out;
}

TEST(Collect, ColumnCountEqualsForegroundTotal) {
  const oada::fcos::Detector det({}, 3);
  const auto sc = scenes(4, 100);
  int expected = 0;
  std::vector<int> per_level(3, 0);
  for (const auto& s : sc) {
    const auto t = oada::fcos::assign_targets(s.boxes, s.labels, det.config());
    expected += oada::fcos::total_foreground(t);
    for (std::size_t l = 0; l < 3; ++l) per_level[l] += t[l].num_fg;
  }
  const FeatureMatrix f = collect_features(det, sc, "source");
  EXPECT_EQ(f.count(), expected);
  EXPECT_EQ(f.dim(), det.config().feature_channels);
  EXPECT_EQ(f.level, -1);
  for (int l = 0; l < 3; ++l) {
    if (per_level[static_cast<std::size_t>(l)] == 0) continue;
    CollectOptions o;
    o.level = l;
    EXPECT_EQ(collect_features(det, sc, "source", o).count(), per_level[static_cast<std::size_t>(l)]);
  }
}

TEST(Collect, FirstColumnIsFeatureAtFirstForegroundCell) {
  const oada::fcos::Detector det({}, 3);
  const auto sc = scenes(1, 200);
  const auto t = oada::fcos::assign_targets(sc[0].boxes, sc[0].labels, det.config());
  oada::diff::Tape tape(false);
  const auto outs = det.forward(tape, tape.constant(sc[0].image));
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& fg = t[l].fg;
    for (std::size_t i = 0; i < fg.size(); ++i) {
      if (fg[i] == 0.0) continue;
      const FeatureMatrix f = collect_features(det, sc, "source");
      const auto& feat = outs[l].feature.value();
      for (int c = 0; c < f.dim(); ++c) EXPECT_EQ(f.data(c, 0), feat[static_cast<std::size_t>(c) * fg.size() + i]);
      return;
    }
  }
  GTEST_SKIP() << "scene without foreground";
}

TEST(Collect, NoForegroundIsAnError) {
  const oada::fcos::Detector det({}, 3);
  oada::scene::Scene blank;
  blank.image = oada::diff::Tensor({3, 128, 128}, 0.5);
  std::vector<oada::scene::Scene> sc{blank};
  EXPECT_THROW(collect_features(det, sc, "target"), std::runtime_error);
  EXPECT_THROW(collect_features(det, std::span<const oada::scene::Scene>{}, "target"), std::runtime_error);
  CollectOptions o;
  o.mask_source = MaskSource::confidence;
  o.rho = 0.99;  // untrained head sits near the 0.01 prior
  EXPECT_THROW(collect_features(det, scenes(2, 300), "target", o), std::runtime_error);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Export, RoundTripAndByteIdenticalRerun) {
  const fs::path dir = fs::temp_directory_path() / "oada_svdstats_test";
  fs::remove_all(dir);
  const oada::fcos::Detector det({}, 4);
  const auto sc = scenes(3, 400);
  const FeatureMatrix f = collect_features(det, sc, "source");
  export_features(dir / "a.bin", f);
  export_features(dir / "b.bin", collect_features(oada::fcos::Detector({}, 4), scenes(3, 400), "source"));
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));

  const FeatureMatrix g = import_features(dir / "a.bin");
  EXPECT_EQ(g.domain, "source");
  EXPECT_EQ(g.level, -1);
  EXPECT_EQ(g.data, f.data);
  EXPECT_EQ(g.meta.at("mask_source"), "gt");

  // Header is one JSON line; payload is D * N doubles.
  const std::string bytes = slurp(dir / "a.bin");
  const auto nl = bytes.find('\n');
  const auto h = nlohmann::json::parse(bytes.substr(0, nl));
  EXPECT_EQ(h.at("D").get<int>(), f.dim());
  EXPECT_EQ(h.at("N").get<int>(), f.count());
  EXPECT_EQ(bytes.size() - nl - 1, static_cast<std::size_t>(f.dim()) * f.count() * 8);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + nl + 1, 8);
  EXPECT_EQ(first, f.data(0, 0));
  double second = 0.0;
  std::memcpy(&second, bytes.data() + nl + 9, 8);
  EXPECT_EQ(second, f.data(1, 0));  // column-major

  std::ofstream(dir / "a.bin", std::ios::app) << 'x';
  EXPECT_THROW(import_features(dir / "a.bin"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Report, CsvColumnsAndRows) {
  const fs::path dir = fs::temp_directory_path() / "oada_svdstats_report";
  fs::remove_all(dir);
  const SvdReport r = analyze(random_matrix(6, 30, 50), random_matrix(6, 40, 51), 20);
  EXPECT_EQ(r.angles.cosine.size(), 6u);  // clamped to D
  EXPECT_LE(r.recon_error_s, 1e-10);
  EXPECT_LE(r.recon_error_t, 1e-10);
  write_report_csv(dir / "r.csv", r);
  std::ifstream in(dir / "r.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,sigma_hat_S,sigma_hat_T,angle");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
  fs::remove_all(dir);
}

}  // namespace
