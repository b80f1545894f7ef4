#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "puri/common/rng.hpp"
#include "puri/nn/layers.hpp"
#include "puri/nn/optim.hpp"
#include "puri/nn/serialize.hpp"
#include "puri/nn/tensor.hpp"

using namespace puri;
using namespace puri::nn;

namespace {

// Central finite differences against the analytic gradient; the meta-oracle
// behind every loss and trainer in the project.
void check_gradient(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                    double tol = 2e-2) {
  Tensor out = f(x);
  REQUIRE(out.size() == 1);
  x.zero_grad();
  out.backward();
  const Array analytic = x.grad();

  const float h = 1e-3f;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const float orig = x.value()[i];
    x.value()[i] = orig + h;
    const double up = f(x).item();
    x.value()[i] = orig - h;
    const double down = f(x).item();
    x.value()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    CHECK(std::abs(numeric - analytic[i]) <=
          tol * std::max(1.0, std::abs(numeric)));
  }
}

Tensor random_tensor(int r, int c, std::uint64_t seed, bool rg = true) {
  Rng rng(seed);
  Array a(static_cast<Eigen::Index>(r) * c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = 0.5f * rng.normalf();
  return Tensor::from_array(std::move(a), r, c, rg);
}

}  // namespace

TEST_CASE("matmul forward matches a hand computation") {
  Tensor a = Tensor::from_vector({1, 2, 3, 4, 5, 6}, 2, 3);
  Tensor b = Tensor::from_vector({7, 8, 9, 10, 11, 12}, 3, 2);
  Tensor c = matmul(a, b);
  CHECK(c.value()[0] == 58.0f);   // 1*7+2*9+3*11
  CHECK(c.value()[1] == 64.0f);   // 1*8+2*10+3*12
  CHECK(c.value()[2] == 139.0f);  // 4*7+5*9+6*11
  CHECK(c.value()[3] == 154.0f);
}

TEST_CASE("gradients agree with finite differences") {
  Tensor w = random_tensor(4, 3, 1);
  Tensor b = random_tensor(1, 3, 2);
  Tensor target = random_tensor(2, 3, 3, false);

  SUBCASE("matmul + bias + tanh + mse") {
    Tensor x = random_tensor(2, 4, 4);
    check_gradient(
        [&](const Tensor& in) {
          return mse(nn::tanh(add_rowvec(matmul(in, w), b)), target);
        },
        x);
  }
  SUBCASE("weight gradient path") {
    Tensor x = random_tensor(2, 4, 5, false);
    check_gradient(
        [&](const Tensor& win) {
          return mse(nn::tanh(add_rowvec(matmul(x, win), b)), target);
        },
        w);
  }
  SUBCASE("softmax attention block") {
    Tensor q = random_tensor(3, 4, 6);
    Tensor k = random_tensor(2, 4, 7);
    Tensor v = random_tensor(2, 5, 8, false);
    Tensor tgt = random_tensor(3, 5, 9, false);
    check_gradient(
        [&](const Tensor& qin) {
          Tensor scores = scale(matmul_nt(qin, k), 0.5f);
          return mse(matmul(softmax_rows(scores), v), tgt);
        },
        q);
  }
  SUBCASE("sigmoid, relu, mul, gather") {
    Tensor x = random_tensor(2, 6, 10);
    Tensor y = random_tensor(2, 6, 11, false);
    check_gradient(
        [&](const Tensor& in) {
          Tensor s = sigmoid(in);
          Tensor r = relu(sub(s, Tensor::constant(2, 6, 0.4f)));
          Tensor g = gather_flat(mul(r, y), {0, 5, 3, 2, 8, 11}, 2, 3);
          return mean(g);
        },
        x);
  }
  SUBCASE("gather_rows and concat") {
    Tensor x = random_tensor(4, 3, 12);
    check_gradient(
        [&](const Tensor& in) {
          Tensor g = gather_rows(in, {2, 0, 2});
          Tensor c = concat_rows(g, in);
          return sum(mul(c, c));
        },
        x);
  }
}

TEST_CASE("parameter grads accumulate across samples and reset on zero_grad") {
  Tensor w = random_tensor(2, 2, 20);
  Tensor x1 = random_tensor(1, 2, 21, false);
  Tensor x2 = random_tensor(1, 2, 22, false);
  w.zero_grad();
  sum(matmul(x1, w)).backward();
  const Array g1 = w.grad();
  sum(matmul(x2, w)).backward();
  const Array g12 = w.grad();
  CHECK((g12 - g1).abs().maxCoeff() > 0.0f);
  w.zero_grad();
  CHECK(w.grad().abs().maxCoeff() == 0.0f);
}

TEST_CASE("AdamW converges on a quadratic") {
  Rng rng(33);
  Tensor w = random_tensor(1, 8, 34);
  Tensor target = random_tensor(1, 8, 35, false);
  Parameter p{"w", w, true};
  AdamW::Options opts;
  opts.lr = 0.05f;
  opts.weight_decay = 0.0f;
  AdamW optim({&p}, opts);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 200; ++it) {
    optim.zero_grad();
    Tensor loss = mse(w, target);
    loss.backward();
    optim.step();
    if (it == 0) first = loss.item();
    last = loss.item();
  }
  CHECK(last < first * 1e-2);
}

TEST_CASE("LoRA layer starts as the identity delta and counts parameters") {
  Rng rng(44);
  Linear base = Linear::make("layer", 6, 4, rng);
  Tensor x = random_tensor(2, 6, 45, false);
  const Array base_out = base(x).value();
  LoraLinear lora = LoraLinear::adapt(base, 2, 2.0f, rng);
  const Array lora_out = lora(x).value();
  CHECK((base_out - lora_out).abs().maxCoeff() == 0.0f);  // B starts at zero
  CHECK(lora.lora_param_count() == 2 * 6 + 2 * 4);
  CHECK_THROWS_AS(LoraLinear::adapt(lora.base, 0, 1.0f, rng), ContractError);
}

TEST_CASE("parameter serialization round trip and digest stability") {
  Rng rng(55);
  Linear l = Linear::make("lin", 3, 5, rng);
  ParameterList params;
  l.collect(params);
  const std::string digest_before = parameter_digest(params);

  const auto path =
      (std::filesystem::temp_directory_path() / "puri_nn_params.bin").string();
  save_parameters(params, path);

  Rng rng2(56);
  Linear l2 = Linear::make("lin", 3, 5, rng2);
  ParameterList params2;
  l2.collect(params2);
  CHECK(parameter_digest(params2) != digest_before);
  load_parameters(params2, path);
  CHECK(parameter_digest(params2) == digest_before);
}
