#ifndef CAPKIT_HASH_HPP_
#define CAPKIT_HASH_HPP_

#include <cstdint>
#include <string>
#include <string_view>

// FNV-1a 64-bit content hashing for pipeline manifests. Stable across
// platforms; not for security.

namespace capkit {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffsetBasis) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

std::string hex64(std::uint64_t value);

// Folds the file's bytes (and its length, so concatenations cannot
// collide across file boundaries) into the running state.
std::uint64_t fold_file_hash(const std::string& path, std::uint64_t state);

} // namespace capkit

#endif
