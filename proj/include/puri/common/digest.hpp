#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace puri {

// SHA-256 hex digest of raw bytes. Content addressing for images, model
// parameters, and configuration documents all goes through here.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_hex(std::span<const float> values);

// First 16 hex chars; enough for cache keys and file names, full digest is
// kept in manifests.
std::string short_digest(const std::string& full);

}  // namespace puri
