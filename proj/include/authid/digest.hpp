#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace authid {

// FNV-1a 64-bit. Used for config and parameter digests, not for security.
class Digest {
 public:
  Digest& update(std::span<const std::uint8_t> bytes) noexcept {
    for (std::uint8_t b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Digest& update(std::string_view s) noexcept {
    return update({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

inline std::uint64_t digest_of(std::string_view s) noexcept { return Digest{}.update(s).value(); }

}  // namespace authid
