#include "puri/common/digest.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace puri {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n) {
  static const char* hexdigits = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = hexdigits[data[i] >> 4];
    out[2 * i + 1] = hexdigits[data[i] & 0xf];
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &md_len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest computation failed");
  }
  EVP_MD_CTX_free(ctx);
  return to_hex(md, md_len);
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_hex(std::span<const float> values) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(values.data()),
      values.size() * sizeof(float)));
}

std::string short_digest(const std::string& full) { return full.substr(0, 16); }

}  // namespace puri
