#include "capkit/hash.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace capkit {

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::uint64_t fold_file_hash(const std::string& path, std::uint64_t state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for hashing");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();
  state = fnv1a64(std::to_string(bytes.size()) + ":", state);
  return fnv1a64(bytes, state);
}

} // namespace capkit
