#pragma once

#include <string>

#include "ntk/common.hpp"

namespace ntk {

// Decodes UTF-8 into code points. Rejects overlong forms, surrogates,
// truncated sequences and values above U+10FFFF; the thrown DecodeError
// carries the byte offset of the offending byte.
std::u32string utf8_decode(const std::string& bytes);

// Encodes code points as UTF-8. Surrogates and values above U+10FFFF are
// rejected with a DecodeError (offset is the code point index).
std::string utf8_encode(const std::u32string& cps);

std::string utf8_encode(char32_t cp);

}  // namespace ntk
