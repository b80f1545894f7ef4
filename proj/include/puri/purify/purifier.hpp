#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "puri/imaging/image.hpp"

namespace puri::purify {

// Named, configured transformation over images. Immutable after construction;
// apply is deterministic given the config digest and the per-call seed.
class PurifierOp {
 public:
  using ApplyFn =
      std::function<imaging::ImageTensor(const imaging::ImageTensor&, std::uint64_t)>;

  PurifierOp() = default;
  PurifierOp(std::string name, std::string config_digest, ApplyFn apply);

  const std::string& name() const { return name_; }
  const std::string& config_digest() const { return config_digest_; }

  imaging::ImageTensor apply(const imaging::ImageTensor& img,
                             std::uint64_t seed) const;

 private:
  std::string name_;
  std::string config_digest_;
  ApplyFn apply_;
};

struct JpegConfig {
  int quality = 75;  // codec default when the run does not say otherwise
};

PurifierOp identity_purifier();
PurifierOp jpeg_purifier(const JpegConfig& cfg);
PurifierOp gaussian_purifier(float sigma, std::uint64_t seed);
PurifierOp compose(const std::vector<PurifierOp>& ops);

// Digest of the identity op; cells carrying it are "Unpurified" rows.
const std::string& identity_digest();

// Shape preservation, range preservation, determinism under a fixed seed, and
// digest stability. Every purifier entering a run must pass.
struct ConformanceReport {
  bool ok = true;
  std::string failure;
};
ConformanceReport conformance_check(const PurifierOp& op,
                                    const imaging::ImageTensor& sample);

// Resolves purifiers from CLI strings: "identity", "jpeg:quality=75",
// "gaussian:sigma=0.10,seed=7", "chain:gaussian:sigma=0.05|jpeg:quality=75".
// Model-backed operators (vaetrans, editorclean) and external adapter slots
// (impress, gridpure, ...) are registered by instance; asking for an
// unregistered one yields a skip reason instead of an op.
class PurifierRegistry {
 public:
  struct Resolution {
    std::optional<PurifierOp> op;
    std::string skip_reason;
  };

  void register_op(const std::string& key, PurifierOp op);
  bool has(const std::string& key) const;
  Resolution resolve(const std::string& spec) const;

 private:
  std::map<std::string, PurifierOp> registered_;
};

}  // namespace puri::purify
