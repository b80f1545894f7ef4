#include "puri/metrics/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "puri/common/rng.hpp"

namespace puri::metrics {

double psnr(const imaging::ImageTensor& a, const imaging::ImageTensor& b) {
  PURI_CHECK(a.same_shape(b), "psnr: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double lpips_proxy(const imaging::ImageTensor& a, const imaging::ImageTensor& b,
                   const FeatureExtractor& fx) {
  const Eigen::VectorXd ea = fx.embed(a);
  const Eigen::VectorXd eb = fx.embed(b);
  PURI_CHECK(ea.size() == fx.dim() && eb.size() == fx.dim(),
             "lpips_proxy: extractor dimension mismatch");
  return (ea - eb).squaredNorm() / static_cast<double>(fx.dim());
}

RandomProjectionExtractor::RandomProjectionExtractor(std::string id, int dim,
                                                     int pool_grid,
                                                     std::uint64_t seed)
    : id_(std::move(id)), dim_(dim), pool_grid_(pool_grid) {
  const int in = pool_grid * pool_grid * 3;
  projection_.resize(dim, in);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < in; ++c) projection_(r, c) = scale * rng.normal();
  }
}

Eigen::VectorXd RandomProjectionExtractor::embed(const imaging::ImageTensor& img) const {
  // Box-average pooling onto the fixed grid.
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(pool_grid_ * pool_grid_ * 3);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(pool_grid_ * pool_grid_ * 3);
  for (int y = 0; y < img.height(); ++y) {
    const int gy = y * pool_grid_ / img.height();
    for (int x = 0; x < img.width(); ++x) {
      const int gx = x * pool_grid_ / img.width();
      for (int c = 0; c < 3; ++c) {
        const int j = (gy * pool_grid_ + gx) * 3 + c;
        pooled[j] += img.at(y, x, c);
        counts[j] += 1.0;
      }
    }
  }
  for (int j = 0; j < pooled.size(); ++j) {
    if (counts[j] > 0) pooled[j] /= counts[j];
  }
  Eigen::VectorXd e = (projection_ * pooled).array().tanh();
  const double norm = e.norm();
  if (norm > 1e-12) e /= norm;
  return e * std::sqrt(static_cast<double>(dim_));
}

LinearFeatureExtractor::LinearFeatureExtractor(std::string id, Eigen::MatrixXd weights)
    : id_(std::move(id)), weights_(std::move(weights)) {}

Eigen::VectorXd LinearFeatureExtractor::embed(const imaging::ImageTensor& img) const {
  PURI_CHECK(weights_.cols() == static_cast<Eigen::Index>(img.size()),
             "LinearFeatureExtractor: image size mismatch");
  Eigen::VectorXd v(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) v[static_cast<Eigen::Index>(i)] = img.data()[i];
  return weights_ * v;
}

GaussianAccumulator::GaussianAccumulator(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {}

void GaussianAccumulator::add(const Eigen::VectorXd& x) {
  PURI_CHECK(x.size() == mean_.size(), "GaussianAccumulator: dimension mismatch");
  ++n_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_).transpose();
}

void GaussianAccumulator::merge(const GaussianAccumulator& other) {
  PURI_CHECK(other.mean_.size() == mean_.size(),
             "GaussianAccumulator::merge: dimension mismatch");
  if (other.n_ == 0) return;
  if (n_ == 0) {
    mean_ = other.mean_;
    m2_ = other.m2_;
    n_ = other.n_;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const Eigen::VectorXd delta = other.mean_ - mean_;
  const double n = na + nb;
  mean_ += delta * (nb / n);
  m2_ += other.m2_ + (delta * delta.transpose()) * (na * nb / n);
  n_ += other.n_;
}

GaussianStats GaussianAccumulator::stats() const {
  PURI_CHECK(n_ >= 2, "GaussianAccumulator: need at least two samples");
  GaussianStats s;
  s.mean = mean_;
  Eigen::MatrixXd cov = m2_ / static_cast<double>(n_ - 1);
  s.cov = 0.5 * (cov + cov.transpose());
  s.count = n_;
  return s;
}

namespace {

// PSD square root via eigendecomposition; negative eigenvalues beyond the
// tolerance indicate genuinely indefinite input.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  PURI_CHECK(es.info() == Eigen::Success, "fid: eigendecomposition failed");
  Eigen::VectorXd vals = es.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals[i] < 0.0) {
      if (vals[i] > -1e-6) {
        vals[i] = 0.0;
      } else {
        std::ostringstream oss;
        oss << "fid: " << what << " has eigenvalue " << vals[i]
            << " below the -1e-6 stability threshold";
        throw NumericalError(oss.str());
      }
    }
  }
  return es.eigenvectors() * vals.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

double fid(const GaussianStats& a, const GaussianStats& b) {
  PURI_CHECK(a.mean.size() == b.mean.size(), "fid: feature dimensions differ");
  PURI_CHECK(a.cov.rows() == a.mean.size() && b.cov.rows() == b.mean.size(),
             "fid: malformed stats");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd sqrt_a = psd_sqrt(a.cov, "covariance");
  const Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
  PURI_CHECK(es.info() == Eigen::Success, "fid: eigendecomposition failed");
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double v = es.eigenvalues()[i];
    if (v < 0.0) {
      if (v > -1e-6) {
        v = 0.0;
      } else {
        std::ostringstream oss;
        oss << "fid: product matrix eigenvalue " << v
            << " below the -1e-6 stability threshold";
        throw NumericalError(oss.str());
      }
    }
    trace_sqrt += std::sqrt(v);
  }
  const double value =
      mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
  return value;
}

ScorerResult run_external_scorer(const ScorerAdapter& adapter,
                                 const std::vector<std::string>& image_paths,
                                 const std::vector<std::string>& prompts,
                                 const std::string& scratch_dir) {
  namespace fs = std::filesystem;
  ScorerResult result;
  if (image_paths.size() != prompts.size()) {
    throw ContractError("external_scorer: image and prompt counts differ");
  }
  fs::create_directories(scratch_dir);
  const fs::path images_file = fs::path(scratch_dir) / "scorer_images.txt";
  const fs::path prompts_file = fs::path(scratch_dir) / "scorer_prompts.txt";
  const fs::path scores_file = fs::path(scratch_dir) / "scorer_scores.txt";
  {
    std::ofstream imgs(images_file);
    for (const auto& p : image_paths) imgs << p << '\n';
    std::ofstream prm(prompts_file);
    for (const auto& p : prompts) prm << p << '\n';
  }
  std::error_code ec;
  fs::remove(scores_file, ec);

  const std::string cmd = adapter.command + " '" + images_file.string() + "' '" +
                          prompts_file.string() + "' '" + scores_file.string() +
                          "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    result.diagnostic = "scorer '" + adapter.scorer_id + "' exited with status " +
                        std::to_string(rc);
    return result;
  }
  std::ifstream in(scores_file);
  if (!in.good()) {
    result.diagnostic = "scorer '" + adapter.scorer_id + "' produced no output";
    return result;
  }
  double v = 0.0;
  while (in >> v) result.scores.push_back(v);
  if (result.scores.size() != image_paths.size()) {
    throw ContractError("external_scorer: adapter returned " +
                        std::to_string(result.scores.size()) + " scores for " +
                        std::to_string(image_paths.size()) + " images");
  }
  result.ok = true;
  return result;
}

}  // namespace puri::metrics
