#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "puri/common/rng.hpp"
#include "puri/metrics/metrics.hpp"

using namespace puri;
using namespace puri::metrics;
using imaging::ImageTensor;

namespace {

ImageTensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(h, w);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

// Direct-formula PSNR in double precision, independent of the implementation.
double psnr_oracle(const ImageTensor& a, const ImageTensor& b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d =
        static_cast<long double>(a.data()[i]) - static_cast<long double>(b.data()[i]);
    acc += d * d;
  }
  const long double mse = acc / static_cast<long double>(a.size());
  return static_cast<double>(10.0L * std::log10(1.0L / mse));
}

}  // namespace

TEST_CASE("psnr: known MSE, cap, and formula oracle") {
  // MSE = 0.01 -> 20 dB: first channel entry of every pixel differs by 0.1
  // is wrong (only a third of entries); build exact MSE instead.
  ImageTensor a(8, 8);
  ImageTensor b(8, 8);
  for (auto& v : a.data()) v = 0.5f;
  b = a;
  for (auto& v : b.data()) v += 0.1f;  // every entry differs by 0.1 -> MSE 0.01
  // float storage makes the difference 0.1 only to single precision
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

  CHECK(psnr(a, a) == kPsnrCapDb);

  // DERIVED: direct-formula oracle, relative error < 1e-9 over random pairs.
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = random_image(8, 8, 2 * trial);
    const auto y = random_image(8, 8, 2 * trial + 1);
    const double got = psnr(x, y);
    const double want = psnr_oracle(x, y);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }

  ImageTensor other(4, 4);
  CHECK_THROWS_AS(psnr(a, other), ContractError);
}

TEST_CASE("psnr strictly decreases along a perturbation ladder") {
  const auto base = random_image(16, 16, 99);
  double prev = kPsnrCapDb + 1.0;
  for (float mag : {0.01f, 0.02f, 0.04f}) {
    ImageTensor shifted = base;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
      shifted.data()[i] += (i % 2 == 0 ? mag : -mag);
    }
    const double v = psnr(base, shifted);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("lpips proxy: zero distance, symmetry, linear oracle") {
  RandomProjectionExtractor fx("desk-rp", 32, 8, 9001);
  const auto a = random_image(16, 16, 5);
  const auto b = random_image(16, 16, 6);
  CHECK(lpips_proxy(a, a, fx) == doctest::Approx(0.0));
  CHECK(lpips_proxy(a, b, fx) == doctest::Approx(lpips_proxy(b, a, fx)));

  // DERIVED: linear-map oracle. d = |W(a-b)|^2 / m.
  const int m = 4;
  const int n = 4 * 4 * 3;
  Eigen::MatrixXd w(m, n);
  Rng rng(77);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) w(r, c) = rng.normal();
  }
  LinearFeatureExtractor lin("lin", w);
  const auto x = random_image(4, 4, 7);
  const auto y = random_image(4, 4, 8);
  Eigen::VectorXd dv(n);
  for (int i = 0; i < n; ++i) dv[i] = static_cast<double>(x.data()[i]) - y.data()[i];
  const double want = (w * dv).squaredNorm() / m;
  CHECK(lpips_proxy(x, y, lin) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("accumulate_stats: hand case, streaming oracle, merge, order") {
  // TRIVIAL: two identical vectors -> zero covariance.
  {
    GaussianAccumulator acc(3);
    Eigen::VectorXd v(3);
    v << 1, 2, 3;
    acc.add(v);
    acc.add(v);
    const auto s = acc.stats();
    CHECK(s.cov.norm() == doctest::Approx(0.0));
    CHECK(s.mean.isApprox(v));
  }
  // DERIVED: standard basis vectors in 2D with the unbiased divisor.
  {
    GaussianAccumulator acc(2);
    Eigen::VectorXd e1(2), e2(2);
    e1 << 1, 0;
    e2 << 0, 1;
    acc.add(e1);
    acc.add(e2);
    const auto s = acc.stats();
    CHECK(s.mean[0] == doctest::Approx(0.5));
    CHECK(s.mean[1] == doctest::Approx(0.5));
    // Unbiased: var = ((0.5)^2 + (0.5)^2) / (2-1) = 0.5
    CHECK(s.cov(0, 0) == doctest::Approx(0.5));
    CHECK(s.cov(1, 1) == doctest::Approx(0.5));
    CHECK(s.cov(0, 1) == doctest::Approx(-0.5));
  }
  // DERIVED: streaming vs two-pass batch oracle on 1000 random vectors.
  {
    const int dim = 6;
    const int n = 1000;
    Rng rng(123);
    std::vector<Eigen::VectorXd> xs;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd x(dim);
      for (int j = 0; j < dim; ++j) x[j] = rng.normal();
      xs.push_back(x);
    }
    GaussianAccumulator acc(dim);
    for (const auto& x : xs) acc.add(x);
    const auto s = acc.stats();

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (const auto& x : xs) mean += x;
    mean /= n;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
    cov /= (n - 1);
    CHECK((s.mean - mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((s.cov - cov).cwiseAbs().maxCoeff() < 1e-8);

    // Merge formula against the batch oracle.
    GaussianAccumulator left(dim), right(dim);
    for (int i = 0; i < 400; ++i) left.add(xs[i]);
    for (int i = 400; i < n; ++i) right.add(xs[i]);
    left.merge(right);
    const auto merged = left.stats();
    CHECK((merged.mean - mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((merged.cov - cov).cwiseAbs().maxCoeff() < 1e-8);

    // Order insensitivity within 1e-8.
    GaussianAccumulator rev(dim);
    for (auto it = xs.rbegin(); it != xs.rend(); ++it) rev.add(*it);
    const auto rs = rev.stats();
    CHECK((rs.cov - s.cov).cwiseAbs().maxCoeff() < 1e-8);
  }
  GaussianAccumulator small(2);
  small.add(Eigen::VectorXd::Zero(2));
  CHECK_THROWS_AS(small.stats(), ContractError);
}

TEST_CASE("fid: identical, mean shift, diagonal oracle, symmetry") {
  GaussianStats a;
  a.mean = Eigen::VectorXd::Zero(2);
  a.cov = Eigen::MatrixXd::Identity(2, 2);
  a.count = 10;
  CHECK(fid(a, a) <= 1e-6);

  GaussianStats b = a;
  b.mean << 1, 0;  // unit mean shift, identical covariance
  CHECK(fid(a, b) == doctest::Approx(1.0).epsilon(1e-9));

  // DERIVED: diagonal case where (cov_a cov_b)^{1/2} = diag(2,2):
  // FID = 0 + (1+4) + (4+1) - 2*(2+2) = 2.
  GaussianStats da, db;
  da.mean = Eigen::VectorXd::Zero(2);
  db.mean = Eigen::VectorXd::Zero(2);
  da.cov = Eigen::Vector2d(1, 4).asDiagonal();
  db.cov = Eigen::Vector2d(4, 1).asDiagonal();
  da.count = db.count = 10;
  CHECK(fid(da, db) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(fid(da, db) - fid(db, da)) < 1e-8);

  // Random symmetric check.
  Rng rng(321);
  GaussianAccumulator accA(4), accB(4);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x(4), y(4);
    for (int j = 0; j < 4; ++j) {
      x[j] = rng.normal();
      y[j] = 0.5 * rng.normal() + 0.3;
    }
    accA.add(x);
    accB.add(y);
  }
  const auto sa = accA.stats();
  const auto sb = accB.stats();
  CHECK(std::abs(fid(sa, sb) - fid(sb, sa)) < 1e-8);

  // Indefinite covariance beyond tolerance must raise.
  GaussianStats bad = a;
  bad.cov(0, 0) = -1.0;
  CHECK_THROWS_AS(fid(bad, a), NumericalError);
}

TEST_CASE("external scorer: stub adapter, zero scores, arity check") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "puri_scorer_test";
  fs::create_directories(dir);
  const auto script = dir / "zero_scorer.sh";
  {
    std::ofstream os(script);
    os << "#!/bin/sh\n"
       << "count=$(wc -l < \"$1\")\n"
       << "i=0\n"
       << "while [ $i -lt $count ]; do echo 0.0; i=$((i+1)); done > \"$3\"\n";
  }
  fs::permissions(script, fs::perms::owner_all, fs::perm_options::add);

  ScorerAdapter adapter{"zero-stub", script.string()};
  const std::vector<std::string> images = {"a.png", "b.png", "c.png"};
  const std::vector<std::string> prompts = {"p1", "p2", "p3"};
  const auto result = run_external_scorer(adapter, images, prompts, dir.string());
  REQUIRE(result.ok);
  REQUIRE(result.scores.size() == 3);
  for (double s : result.scores) CHECK(s == 0.0);

  // Wrong count -> contract error.
  const auto bad_script = dir / "bad_scorer.sh";
  {
    std::ofstream os(bad_script);
    os << "#!/bin/sh\necho 1.0 > \"$3\"\n";
  }
  fs::permissions(bad_script, fs::perms::owner_all, fs::perm_options::add);
  ScorerAdapter bad{"bad-stub", bad_script.string()};
  CHECK_THROWS_AS(run_external_scorer(bad, images, prompts, dir.string()),
                  ContractError);

  // Missing adapter binary -> skipped with diagnostic, not a crash.
  ScorerAdapter missing{"missing", (dir / "not_here.sh").string()};
  const auto skip = run_external_scorer(missing, images, prompts, dir.string());
  CHECK_FALSE(skip.ok);
  CHECK(!skip.diagnostic.empty());
}
