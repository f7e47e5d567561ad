#include "ntk/utf8.hpp"

namespace ntk {

namespace {

bool is_cont(unsigned char b) { return (b & 0xC0) == 0x80; }

}  // namespace

std::u32string utf8_decode(const std::string& bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  size_t i = 0;
  const size_t n = bytes.size();
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    char32_t cp = 0;
    size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      throw DecodeError("invalid UTF-8 lead byte", i);
    }
    if (i + len > n) throw DecodeError("truncated UTF-8 sequence", i);
    for (size_t k = 1; k < len; ++k) {
      const auto bk = static_cast<unsigned char>(bytes[i + k]);
      // Offsets always point at the start of the malformed sequence.
      if (!is_cont(bk)) throw DecodeError("invalid UTF-8 continuation byte", i);
      cp = (cp << 6) | (bk & 0x3F);
    }
    static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len]) throw DecodeError("overlong UTF-8 encoding", i);
    if (cp >= 0xD800 && cp <= 0xDFFF) throw DecodeError("UTF-8 encoded surrogate", i);
    if (cp > 0x10FFFF) throw DecodeError("code point above U+10FFFF", i);
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp >= 0xD800 && cp <= 0xDFFF) throw DecodeError("cannot encode surrogate", 0);
  if (cp > 0x10FFFF) throw DecodeError("code point above U+10FFFF", 0);
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string utf8_encode(const std::u32string& cps) {
  std::string out;
  out.reserve(cps.size());
  for (size_t i = 0; i < cps.size(); ++i) {
    if (cps[i] >= 0xD800 && cps[i] <= 0xDFFF) throw DecodeError("cannot encode surrogate", i);
    if (cps[i] > 0x10FFFF) throw DecodeError("code point above U+10FFFF", i);
    out += utf8_encode(cps[i]);
  }
  return out;
}

}  // namespace ntk
