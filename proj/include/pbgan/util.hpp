#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

namespace pbgan {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Ts>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Ts... streams) {
  std::uint64_t s = mix64(seed);
  ((s = mix64(s ^ static_cast<std::uint64_t>(streams))), ...);
  return s;
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  return rng;
}

/// 64-bit FNV-1a. Content digests for manifests, configs, and checkpoints.
class Digest {
 public:
  Digest& update(std::span<const std::byte> bytes) {
    for (auto b : bytes) {
      h_ ^= static_cast<std::uint64_t>(b);
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Digest& update(std::string_view s) { return update(std::as_bytes(std::span(s.data(), s.size()))); }
  template <typename T>
  Digest& update_pod(const T& v) {
    return update(std::as_bytes(std::span(&v, 1)));
  }
  template <typename T>
  Digest& update_array(const T* data, std::size_t n) {
    return update(std::as_bytes(std::span(data, n)));
  }

  [[nodiscard]] std::uint64_t value() const { return h_; }
  [[nodiscard]] std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 0; i < 16; ++i) s[15 - i] = digits[(h_ >> (4 * i)) & 0xF];
    return s;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string digest_of(std::string_view s) { return Digest{}.update(s).hex(); }

}  // namespace pbgan
