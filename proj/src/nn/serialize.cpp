#include "puri/nn/serialize.hpp"

#include <cstdint>
#include <fstream>

namespace puri::nn {

namespace {

constexpr char kMagic[8] = {'P', 'U', 'R', 'I', 'M', 'D', 'L', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_parameters(const ParameterList& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  PURI_CHECK(os.good(), "save_parameters: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    write_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(os, static_cast<std::uint32_t>(p->tensor.rows()));
    write_u32(os, static_cast<std::uint32_t>(p->tensor.cols()));
    os.write(reinterpret_cast<const char*>(p->tensor.value().data()),
             static_cast<std::streamsize>(p->tensor.size() * sizeof(float)));
  }
  PURI_CHECK(os.good(), "save_parameters: write failed for " + path);
}

void load_parameters(const ParameterList& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  PURI_CHECK(is.good(), "load_parameters: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  PURI_CHECK(is.good() && std::equal(magic, magic + 8, kMagic),
             "load_parameters: bad file header in " + path);
  const std::uint32_t count = read_u32(is);
  PURI_CHECK(count == params.size(),
             "load_parameters: parameter count mismatch in " + path);
  for (auto* p : params) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    PURI_CHECK(name == p->name, "load_parameters: expected parameter " + p->name +
                                    ", found " + name);
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    PURI_CHECK(rows == static_cast<std::uint32_t>(p->tensor.rows()) &&
                   cols == static_cast<std::uint32_t>(p->tensor.cols()),
               "load_parameters: shape mismatch for " + p->name);
    is.read(reinterpret_cast<char*>(p->tensor.value().data()),
            static_cast<std::streamsize>(p->tensor.size() * sizeof(float)));
    PURI_CHECK(is.good(), "load_parameters: truncated data for " + p->name);
  }
}

}  // namespace puri::nn
