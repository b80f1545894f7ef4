#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "puri/common/check.hpp"

namespace puri::nn {

using Array = Eigen::ArrayXf;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// One node of the computation tape. Values are 2D row-major (rows x cols);
// vectors are 1 x n. Interior nodes are created fresh per forward pass,
// parameter leaves persist and accumulate gradients until zero_grad.
struct Node {
  Array value;
  Array grad;
  int rows = 0;
  int cols = 0;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor constant(int rows, int cols, float fill);
  static Tensor from_array(Array values, int rows, int cols,
                           bool requires_grad = false);
  static Tensor from_vector(const std::vector<float>& values, int rows, int cols,
                            bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  Eigen::Index size() const { return n_->value.size(); }

  const Array& value() const { return n_->value; }
  Array& value() { return n_->value; }  // leaf mutation only (optimizer steps)
  const Array& grad() const { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }

  void zero_grad() {
    n_->ensure_grad();
    n_->grad.setZero();
  }

  float item() const {
    PURI_CHECK(size() == 1, "Tensor::item: tensor is not scalar");
    return n_->value[0];
  }

  // Reverse-mode sweep from a scalar output.
  void backward() const;

  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

// --- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // (r,k) x (k,c)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, (r,k) x (c,k)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // v is 1 x cols
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1
Tensor mse(const Tensor& a, const Tensor& b);  // mean squared error, 1x1
Tensor reshape(const Tensor& a, int rows, int cols);
Tensor gather_rows(const Tensor& a, std::vector<int> indices);
// Generic flat-index gather: out[i] = a.flat[indices[i]].  Patchify and
// unpatchify are permutations expressed through this.
Tensor gather_flat(const Tensor& a, std::vector<int> indices, int rows, int cols);
Tensor concat_rows(const Tensor& a, const Tensor& b);

}  // namespace puri::nn
