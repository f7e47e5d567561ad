#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ntk {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and map it to a nonzero exit code.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DecodeError : public Error {
 public:
  DecodeError(const std::string& msg, size_t byte_offset)
      : Error(msg + " at byte offset " + std::to_string(byte_offset)),
        byte_offset(byte_offset) {}
  size_t byte_offset;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class SegmentationError : public Error {
 public:
  using Error::Error;
};

// One subword span inside a word, [begin, end) in character (code point)
// offsets.
struct Span {
  int32_t begin = 0;
  int32_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

// Ordered spans partitioning a word.
using Segmentation = std::vector<Span>;

// Character-level segment tags. B opens a segment, I continues one.
enum class Tag : uint8_t { B = 0, I = 1 };

using TagSequence = std::vector<Tag>;

inline std::string tags_to_string(const TagSequence& tags) {
  std::string s;
  s.reserve(tags.size());
  for (Tag t : tags) s.push_back(t == Tag::B ? 'B' : 'I');
  return s;
}

inline TagSequence tags_from_string(const std::string& s) {
  TagSequence tags;
  tags.reserve(s.size());
  for (char c : s) {
    if (c == 'B')
      tags.push_back(Tag::B);
    else if (c == 'I')
      tags.push_back(Tag::I);
    else
      throw FormatError("invalid tag character '" + std::string(1, c) + "'");
  }
  return tags;
}

// FNV-1a, used for alphabet fingerprints in checkpoints.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace ntk
