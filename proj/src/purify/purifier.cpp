#include "puri/purify/purifier.hpp"

#include <sstream>

#include "nlohmann/json.hpp"
#include "puri/common/digest.hpp"
#include "puri/common/rng.hpp"
#include "puri/imaging/jpeg_codec.hpp"

namespace puri::purify {

using json = nlohmann::json;

PurifierOp::PurifierOp(std::string name, std::string config_digest, ApplyFn apply)
    : name_(std::move(name)), config_digest_(std::move(config_digest)),
      apply_(std::move(apply)) {}

imaging::ImageTensor PurifierOp::apply(const imaging::ImageTensor& img,
                                       std::uint64_t seed) const {
  PURI_CHECK(static_cast<bool>(apply_), "PurifierOp: empty operator");
  imaging::ImageTensor out = apply_(img, seed);
  PURI_CHECK(out.same_shape(img), "PurifierOp '" + name_ + "' changed the shape");
  return out;
}

namespace {

std::string digest_of(const json& config) { return sha256_hex(config.dump()); }

}  // namespace

PurifierOp identity_purifier() {
  return PurifierOp("identity", digest_of({{"op", "identity"}}),
                    [](const imaging::ImageTensor& img, std::uint64_t) {
                      return img;
                    });
}

const std::string& identity_digest() {
  static const std::string d = identity_purifier().config_digest();
  return d;
}

PurifierOp jpeg_purifier(const JpegConfig& cfg) {
  PURI_CHECK(cfg.quality >= 1 && cfg.quality <= 100,
             "jpeg_purifier: quality must be in [1, 100]");
  std::ostringstream name;
  name << "jpeg:quality=" << cfg.quality;
  return PurifierOp(name.str(),
                    digest_of({{"op", "jpeg"}, {"quality", cfg.quality}}),
                    [quality = cfg.quality](const imaging::ImageTensor& img,
                                            std::uint64_t) {
                      return imaging::jpeg_roundtrip(img, quality);
                    });
}

PurifierOp gaussian_purifier(float sigma, std::uint64_t seed) {
  PURI_CHECK(sigma >= 0.0f, "gaussian_purifier: sigma must be >= 0");
  std::ostringstream name;
  name << "gaussian:sigma=" << sigma;
  return PurifierOp(
      name.str(),
      digest_of({{"op", "gaussian"}, {"sigma", sigma}, {"seed", seed}}),
      [sigma, seed](const imaging::ImageTensor& img, std::uint64_t call_seed) {
        const std::uint64_t s =
            derive_seed(seed, "call-" + std::to_string(call_seed));
        return imaging::add_gaussian_noise(img, sigma, s);
      });
}

PurifierOp compose(const std::vector<PurifierOp>& ops) {
  PURI_CHECK(!ops.empty(), "compose: operator list must be non-empty");
  std::string name;
  std::string digest_chain;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i > 0) name += '|';
    name += ops[i].name();
    digest_chain += ops[i].config_digest();
  }
  std::vector<PurifierOp> chain = ops;
  return PurifierOp(
      name, sha256_hex("chain:" + digest_chain),
      [chain = std::move(chain)](const imaging::ImageTensor& img,
                                 std::uint64_t seed) {
        imaging::ImageTensor out = img;
        for (std::size_t i = 0; i < chain.size(); ++i) {
          out = chain[i].apply(out, derive_seed(seed, "stage-" + std::to_string(i)));
        }
        return out;
      });
}

ConformanceReport conformance_check(const PurifierOp& op,
                                    const imaging::ImageTensor& sample) {
  ConformanceReport report;
  auto fail = [&](const std::string& why) {
    report.ok = false;
    report.failure = op.name() + ": " + why;
    return report;
  };
  imaging::ImageTensor a = op.apply(sample, 42);
  if (!a.same_shape(sample)) return fail("shape not preserved");
  for (float v : a.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) return fail("range not preserved");
  }
  imaging::ImageTensor b = op.apply(sample, 42);
  if (a.data() != b.data()) return fail("not deterministic under a fixed seed");
  if (op.config_digest().empty()) return fail("empty config digest");
  return report;
}

void PurifierRegistry::register_op(const std::string& key, PurifierOp op) {
  registered_[key] = std::move(op);
}

bool PurifierRegistry::has(const std::string& key) const {
  return registered_.count(key) > 0;
}

PurifierRegistry::Resolution PurifierRegistry::resolve(const std::string& spec) const {
  Resolution res;
  // Exact registered instances take precedence (model-backed + adapters).
  if (auto it = registered_.find(spec); it != registered_.end()) {
    res.op = it->second;
    return res;
  }
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);

  auto parse_params = [](const std::string& s) {
    std::map<std::string, std::string> kv;
    std::istringstream iss(s);
    std::string item;
    while (std::getline(iss, item, ',')) {
      const auto eq = item.find('=');
      PURI_CHECK(eq != std::string::npos,
                 "purifier spec: expected key=value, got '" + item + "'");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
  };

  try {
    if (head == "identity") {
      res.op = identity_purifier();
    } else if (head == "jpeg") {
      JpegConfig cfg;
      auto kv = parse_params(args);
      if (kv.count("quality")) cfg.quality = std::stoi(kv["quality"]);
      res.op = jpeg_purifier(cfg);
    } else if (head == "gaussian") {
      auto kv = parse_params(args);
      float sigma = kv.count("sigma") ? std::stof(kv["sigma"]) : 0.1f;
      std::uint64_t seed = kv.count("seed") ? std::stoull(kv["seed"]) : 0;
      res.op = gaussian_purifier(sigma, seed);
    } else if (head == "chain") {
      std::vector<PurifierOp> ops;
      std::istringstream iss(args);
      std::string part;
      while (std::getline(iss, part, '|')) {
        Resolution sub = resolve(part);
        if (!sub.op) {
          res.skip_reason = sub.skip_reason;
          return res;
        }
        ops.push_back(*sub.op);
      }
      res.op = compose(ops);
    } else {
      res.skip_reason = "no purifier registered for '" + spec + "'";
    }
  } catch (const std::exception& e) {
    throw ContractError("purifier spec '" + spec + "': " + e.what());
  }
  return res;
}

}  // namespace puri::purify
