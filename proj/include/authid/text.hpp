#pragma once

#include <string>
#include <string_view>

namespace authid {

inline constexpr char32_t kReplacementChar = U'�';

// Decodes UTF-8; each invalid or truncated sequence becomes U+FFFD.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view text);

}  // namespace authid
