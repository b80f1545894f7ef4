#include "puri/nn/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace puri::nn {

namespace {

std::shared_ptr<Node> make_node(int rows, int cols) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = Array::Zero(static_cast<Eigen::Index>(rows) * cols);
  return n;
}

std::shared_ptr<Node> result_of(int rows, int cols,
                                std::vector<std::shared_ptr<Node>> parents) {
  auto n = make_node(rows, cols);
  for (const auto& p : parents) n->requires_grad |= p->requires_grad;
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

MatMap as_mat(Array& a, int r, int c) { return MatMap(a.data(), r, c); }
ConstMatMap as_mat(const Array& a, int r, int c) {
  return ConstMatMap(a.data(), r, c);
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::constant(int rows, int cols, float fill) {
  auto n = make_node(rows, cols);
  n->value.setConstant(fill);
  return Tensor(n);
}

Tensor Tensor::from_array(Array values, int rows, int cols, bool requires_grad) {
  PURI_CHECK(values.size() == static_cast<Eigen::Index>(rows) * cols,
             "Tensor::from_array: size mismatch");
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_vector(const std::vector<float>& values, int rows, int cols,
                           bool requires_grad) {
  Array a(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) a[i] = values[i];
  return from_array(std::move(a), rows, cols, requires_grad);
}

void Tensor::backward() const {
  PURI_CHECK(defined() && size() == 1, "backward: output must be a scalar");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS; graphs are shallow but can hold many nodes.
  std::vector<std::pair<Node*, std::size_t>> stack{{n_.get(), 0}};
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (!node->requires_grad || (next_child == 0 && seen.count(node))) {
      stack.pop_back();
      continue;
    }
    if (next_child == 0) seen.insert(node);
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child].get();
      ++next_child;
      if (child->requires_grad && !seen.count(child)) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->ensure_grad();
  n_->ensure_grad();
  n_->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  PURI_CHECK(a.cols() == b.rows(), "matmul: inner dimensions differ");
  auto n = result_of(a.rows(), b.cols(), {a.node(), b.node()});
  as_mat(n->value, n->rows, n->cols) =
      as_mat(a.value(), a.rows(), a.cols()) * as_mat(b.value(), b.rows(), b.cols());
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      auto dout = as_mat(self.grad, self.rows, self.cols);
      if (pa.requires_grad) {
        pa.ensure_grad();
        as_mat(pa.grad, pa.rows, pa.cols).noalias() +=
            dout * as_mat(pb.value, pb.rows, pb.cols).transpose();
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        as_mat(pb.grad, pb.rows, pb.cols).noalias() +=
            as_mat(pa.value, pa.rows, pa.cols).transpose() * dout;
      }
    };
  }
  return Tensor(n);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  PURI_CHECK(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  auto n = result_of(a.rows(), b.rows(), {a.node(), b.node()});
  as_mat(n->value, n->rows, n->cols) =
      as_mat(a.value(), a.rows(), a.cols()) *
      as_mat(b.value(), b.rows(), b.cols()).transpose();
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      auto dout = as_mat(self.grad, self.rows, self.cols);
      if (pa.requires_grad) {
        pa.ensure_grad();
        as_mat(pa.grad, pa.rows, pa.cols).noalias() +=
            dout * as_mat(pb.value, pb.rows, pb.cols);
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        as_mat(pb.grad, pb.rows, pb.cols).noalias() +=
            dout.transpose() * as_mat(pa.value, pa.rows, pa.cols);
      }
    };
  }
  return Tensor(n);
}

namespace {

Tensor elementwise_pair(const Tensor& a, const Tensor& b, const char* name,
                        Array value, float da, float db) {
  PURI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
             std::string(name) + ": shape mismatch");
  auto n = result_of(a.rows(), a.cols(), {a.node(), b.node()});
  n->value = std::move(value);
  if (n->requires_grad) {
    n->backprop = [da, db](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        pa.grad += da * self.grad;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad += db * self.grad;
      }
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_pair(a, b, "add", a.value() + b.value(), 1.0f, 1.0f);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_pair(a, b, "sub", a.value() - b.value(), 1.0f, -1.0f);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  PURI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  auto n = result_of(a.rows(), a.cols(), {a.node(), b.node()});
  n->value = a.value() * b.value();
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        pa.grad += self.grad * pb.value;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad += self.grad * pa.value;
      }
    };
  }
  return Tensor(n);
}

Tensor scale(const Tensor& a, float s) {
  auto n = result_of(a.rows(), a.cols(), {a.node()});
  n->value = a.value() * s;
  if (n->requires_grad) {
    n->backprop = [s](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      pa.grad += s * self.grad;
    };
  }
  return Tensor(n);
}

Tensor add_scalar(const Tensor& a, float s) {
  auto n = result_of(a.rows(), a.cols(), {a.node()});
  n->value = a.value() + s;
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      pa.grad += self.grad;
    };
  }
  return Tensor(n);
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  PURI_CHECK(v.rows() == 1 && v.cols() == a.cols(),
             "add_rowvec: vector must be 1 x cols");
  auto n = result_of(a.rows(), a.cols(), {a.node(), v.node()});
  auto out = as_mat(n->value, n->rows, n->cols);
  out = as_mat(a.value(), a.rows(), a.cols());
  out.rowwise() += Eigen::RowVectorXf::Map(v.value().data(), v.cols());
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pv = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        pa.grad += self.grad;
      }
      if (pv.requires_grad) {
        pv.ensure_grad();
        MatMap(pv.grad.data(), 1, pv.cols).noalias() +=
            as_mat(self.grad, self.rows, self.cols).colwise().sum();
      }
    };
  }
  return Tensor(n);
}

namespace {

template <typename FwdFn, typename BwdFn>
Tensor unary_elementwise(const Tensor& a, FwdFn fwd, BwdFn bwd_from_value) {
  auto n = result_of(a.rows(), a.cols(), {a.node()});
  n->value = fwd(a.value());
  if (n->requires_grad) {
    n->backprop = [bwd_from_value](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      pa.grad += self.grad * bwd_from_value(self.value);
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor tanh(const Tensor& a) {
  return unary_elementwise(
      a, [](const Array& v) { return v.tanh().eval(); },
      [](const Array& y) { return (1.0f - y.square()).eval(); });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      a,
      [](const Array& v) { return (0.5f * (0.5f * v).tanh() + 0.5f).eval(); },
      [](const Array& y) { return (y * (1.0f - y)).eval(); });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](const Array& v) { return v.max(0.0f).eval(); },
      [](const Array& y) { return (y > 0.0f).cast<float>().eval(); });
}

Tensor softmax_rows(const Tensor& a) {
  auto n = result_of(a.rows(), a.cols(), {a.node()});
  auto in = as_mat(a.value(), a.rows(), a.cols());
  auto out = as_mat(n->value, n->rows, n->cols);
  for (int r = 0; r < a.rows(); ++r) {
    Eigen::RowVectorXf row = in.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    out.row(r) = row / row.sum();
  }
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      auto y = as_mat(self.value, self.rows, self.cols);
      auto dy = as_mat(self.grad, self.rows, self.cols);
      auto dx = as_mat(pa.grad, pa.rows, pa.cols);
      for (int r = 0; r < self.rows; ++r) {
        const float dot = y.row(r).dot(dy.row(r));
        dx.row(r).array() +=
            y.row(r).array() * (dy.row(r).array() - dot);
      }
    };
  }
  return Tensor(n);
}

Tensor sum(const Tensor& a) {
  auto n = result_of(1, 1, {a.node()});
  n->value[0] = a.value().sum();
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      pa.grad += self.grad[0];
    };
  }
  return Tensor(n);
}

Tensor mean(const Tensor& a) {
  const float inv = 1.0f / static_cast<float>(a.size());
  auto n = result_of(1, 1, {a.node()});
  n->value[0] = a.value().sum() * inv;
  if (n->requires_grad) {
    n->backprop = [inv](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      pa.grad += self.grad[0] * inv;
    };
  }
  return Tensor(n);
}

Tensor mse(const Tensor& a, const Tensor& b) {
  PURI_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "mse: shape mismatch");
  const float inv = 1.0f / static_cast<float>(a.size());
  auto n = result_of(1, 1, {a.node(), b.node()});
  n->value[0] = (a.value() - b.value()).square().sum() * inv;
  if (n->requires_grad) {
    n->backprop = [inv](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const Array diff = pa.value - pb.value;
      if (pa.requires_grad) {
        pa.ensure_grad();
        pa.grad += self.grad[0] * 2.0f * inv * diff;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad -= self.grad[0] * 2.0f * inv * diff;
      }
    };
  }
  return Tensor(n);
}

Tensor reshape(const Tensor& a, int rows, int cols) {
  PURI_CHECK(static_cast<Eigen::Index>(rows) * cols == a.size(),
             "reshape: element count mismatch");
  auto n = result_of(rows, cols, {a.node()});
  n->value = a.value();
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      pa.grad += self.grad;
    };
  }
  return Tensor(n);
}

Tensor gather_rows(const Tensor& a, std::vector<int> indices) {
  const int out_rows = static_cast<int>(indices.size());
  const int c = a.cols();
  auto n = result_of(out_rows, c, {a.node()});
  for (int i = 0; i < out_rows; ++i) {
    PURI_CHECK(indices[i] >= 0 && indices[i] < a.rows(),
               "gather_rows: index out of range");
    n->value.segment(static_cast<Eigen::Index>(i) * c, c) =
        a.value().segment(static_cast<Eigen::Index>(indices[i]) * c, c);
  }
  if (n->requires_grad) {
    n->backprop = [indices = std::move(indices), c](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        pa.grad.segment(static_cast<Eigen::Index>(indices[i]) * c, c) +=
            self.grad.segment(static_cast<Eigen::Index>(i) * c, c);
      }
    };
  }
  return Tensor(n);
}

Tensor gather_flat(const Tensor& a, std::vector<int> indices, int rows, int cols) {
  PURI_CHECK(static_cast<Eigen::Index>(rows) * cols ==
                 static_cast<Eigen::Index>(indices.size()),
             "gather_flat: index count must match output size");
  auto n = result_of(rows, cols, {a.node()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    n->value[static_cast<Eigen::Index>(i)] = a.value()[indices[i]];
  }
  if (n->requires_grad) {
    n->backprop = [indices = std::move(indices)](Node& self) {
      Node& pa = *self.parents[0];
      pa.ensure_grad();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        pa.grad[indices[i]] += self.grad[static_cast<Eigen::Index>(i)];
      }
    };
  }
  return Tensor(n);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  PURI_CHECK(a.cols() == b.cols(), "concat_rows: column counts differ");
  auto n = result_of(a.rows() + b.rows(), a.cols(), {a.node(), b.node()});
  n->value.head(a.size()) = a.value();
  n->value.tail(b.size()) = b.value();
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        pa.grad += self.grad.head(pa.value.size());
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad += self.grad.tail(pb.value.size());
      }
    };
  }
  return Tensor(n);
}

}  // namespace puri::nn
