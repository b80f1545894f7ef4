#include "doctest.h"
#include "puri/common/rng.hpp"
#include "puri/purify/purifier.hpp"

using namespace puri;
using namespace puri::purify;
using imaging::ImageTensor;

namespace {

ImageTensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(h, w);
  for (auto& v : img.data()) {
    v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  }
  return img;
}

}  // namespace

TEST_CASE("identity purifier returns inputs bit-for-bit with a stable digest") {
  const auto op1 = identity_purifier();
  const auto op2 = identity_purifier();
  CHECK(op1.config_digest() == op2.config_digest());
  const auto img = random_image(16, 16, 1);
  CHECK(op1.apply(img, 7).data() == img.data());

  // composition with identity behaves as the other op
  const auto g = gaussian_purifier(0.05f, 3);
  const auto chain = compose({op1, g});
  CHECK(chain.apply(img, 5).same_shape(img));
}

TEST_CASE("gaussian purifier delegates to imaging noise and respects seeds") {
  const auto op = gaussian_purifier(0.1f, 7);
  const auto img = random_image(16, 16, 2);
  const auto a = op.apply(img, 11);
  const auto b = op.apply(img, 11);
  CHECK(a.data() == b.data());
  const auto c = op.apply(img, 12);
  CHECK(a.data() != c.data());

  const auto zero = gaussian_purifier(0.0f, 7);
  CHECK(zero.apply(img, 11).data() == img.data());
}

TEST_CASE("compose applies left-to-right, joins names, chains digests") {
  const auto j = jpeg_purifier({75});
  const auto g = gaussian_purifier(0.05f, 1);
  const auto chain = compose({g, j});
  CHECK(chain.name() == "gaussian:sigma=0.05|jpeg:quality=75");

  const auto chain2 = compose({g, jpeg_purifier({80})});
  CHECK(chain.config_digest() != chain2.config_digest());  // member digest changed
  const auto chain3 = compose({g, jpeg_purifier({75})});
  CHECK(chain.config_digest() == chain3.config_digest());

  CHECK_THROWS_AS(compose({}), ContractError);
}

TEST_CASE("jpeg quality bounds enforced") {
  CHECK_THROWS_AS(jpeg_purifier({0}), ContractError);
  CHECK_THROWS_AS(jpeg_purifier({101}), ContractError);
}

TEST_CASE("conformance suite passes for every built-in purifier") {
  const auto sample = random_image(32, 32, 3);
  for (const auto& op :
       {identity_purifier(), jpeg_purifier({75}), gaussian_purifier(0.1f, 5),
        compose({gaussian_purifier(0.05f, 6), jpeg_purifier({90})})}) {
    const auto report = conformance_check(op, sample);
    INFO(report.failure);
    CHECK(report.ok);
  }
}

TEST_CASE("registry resolves CLI strings and flags unknown ops as skips") {
  PurifierRegistry registry;
  auto r1 = registry.resolve("jpeg:quality=75");
  REQUIRE(r1.op.has_value());
  CHECK(r1.op->name() == "jpeg:quality=75");

  auto r2 = registry.resolve("gaussian:sigma=0.10,seed=7");
  REQUIRE(r2.op.has_value());

  auto r3 = registry.resolve("chain:gaussian:sigma=0.05|jpeg:quality=75");
  REQUIRE(r3.op.has_value());
  CHECK(r3.op->name() == "gaussian:sigma=0.05|jpeg:quality=75");

  // IMPRESS/GridPure are adapter slots; without a registered adapter the
  // resolution carries a skip reason, never a silent zero.
  auto r4 = registry.resolve("impress");
  CHECK_FALSE(r4.op.has_value());
  CHECK(r4.skip_reason.find("impress") != std::string::npos);

  // Registered instances take precedence.
  registry.register_op("impress", identity_purifier());
  auto r5 = registry.resolve("impress");
  CHECK(r5.op.has_value());

  CHECK_THROWS_AS(registry.resolve("jpeg:quality"), ContractError);
}
