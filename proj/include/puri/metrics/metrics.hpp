#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"

namespace puri::metrics {

// Finite stand-in for the +inf of a zero-MSE pair so aggregation stays total.
inline constexpr double kPsnrCapDb = 100.0;

// 10*log10(peak^2 / MSE) with peak = 1; identical images return the cap.
double psnr(const imaging::ImageTensor& a, const imaging::ImageTensor& b);

// Deterministic image embedding with a fixed output dimension.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual const std::string& extractor_id() const = 0;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd embed(const imaging::ImageTensor& img) const = 0;
};

// Mean squared embedding distance: |f(a) - f(b)|^2 / m. The published LPIPS
// network attaches as another FeatureExtractor; this desk extractor keeps the
// pipeline dependency-free.
double lpips_proxy(const imaging::ImageTensor& a, const imaging::ImageTensor& b,
                   const FeatureExtractor& fx);

// Box-pool to a fixed grid, fixed-seed random projection, tanh, then unit
// normalization. Any image size maps to the same embedding space.
class RandomProjectionExtractor : public FeatureExtractor {
 public:
  RandomProjectionExtractor(std::string id, int dim, int pool_grid,
                            std::uint64_t seed);
  const std::string& extractor_id() const override { return id_; }
  int dim() const override { return dim_; }
  Eigen::VectorXd embed(const imaging::ImageTensor& img) const override;

 private:
  std::string id_;
  int dim_;
  int pool_grid_;
  Eigen::MatrixXd projection_;
};

// A very small linear extractor for oracle tests.
class LinearFeatureExtractor : public FeatureExtractor {
 public:
  LinearFeatureExtractor(std::string id, Eigen::MatrixXd weights);
  const std::string& extractor_id() const override { return id_; }
  int dim() const override { return static_cast<int>(weights_.rows()); }
  Eigen::VectorXd embed(const imaging::ImageTensor& img) const override;

 private:
  std::string id_;
  Eigen::MatrixXd weights_;
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n-1) divisor
  long count = 0;
};

// Numerically stable one-pass mean/covariance with an exact pairwise merge,
// so per-worker accumulators combine deterministically.
class GaussianAccumulator {
 public:
  explicit GaussianAccumulator(int dim);

  void add(const Eigen::VectorXd& x);
  void merge(const GaussianAccumulator& other);
  long count() const { return n_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  // Requires n >= 2.
  GaussianStats stats() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
  long n_ = 0;
};

// Frechet distance between Gaussian fits:
//   |mu_a - mu_b|^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2})
// The matrix square root comes from the eigendecomposition of the symmetrized
// product; eigenvalues in (-1e-6, 0) are clipped to zero, anything more
// negative raises a numerical-stability error.
double fid(const GaussianStats& a, const GaussianStats& b);

// --- external scorer hooks ---------------------------------------------

// Invokes `command <images.txt> <prompts.txt> <scores.txt>`; the adapter
// writes one score per line, aligned with the inputs.
struct ScorerAdapter {
  std::string scorer_id;
  std::string command;
};

struct ScorerResult {
  bool ok = false;
  std::string diagnostic;
  std::vector<double> scores;
};

ScorerResult run_external_scorer(const ScorerAdapter& adapter,
                                 const std::vector<std::string>& image_paths,
                                 const std::vector<std::string>& prompts,
                                 const std::string& scratch_dir);

}  // namespace puri::metrics
