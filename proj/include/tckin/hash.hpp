#pragma once

#include <string>
#include <string_view>

namespace tckin {

/// FNV-1a 64-bit digest rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace tckin
