#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ntk/common.hpp"

namespace ntk {

// Per-language word counts. Words are code point strings; counts are >= 1.
struct WordTable {
  std::string lang;
  std::map<std::u32string, int64_t> words;

  void add(const std::u32string& word, int64_t n = 1);
  int64_t total_words() const;
};

// Tokenizes raw text into words:
//   - markup spans from '<' to the nearest following '>' are removed
//     (an unmatched '<' stays literal),
//   - the remainder is split on ASCII whitespace,
//   - URL-shaped tokens (prefix "http://", "https://" or "www.",
//     ASCII-case-insensitive) are dropped,
//   - words longer than max_len code points are dropped.
// Case and punctuation are kept. Malformed UTF-8 raises DecodeError with the
// byte offset.
std::vector<std::u32string> extract_words(const std::string& utf8_text, int max_len = 30);

WordTable build_word_table(const std::vector<std::u32string>& words, const std::string& lang);

// Symbol inventory shared by every model reading or emitting character ids.
// Fixed layout: id 0 = PAD, id 1 = UNK, then one symbol per language tag
// (sorted by code), then characters sorted by code point. Language-tag
// symbols are distinct from all character symbols by construction.
class Alphabet {
 public:
  enum class SymbolKind : uint8_t { pad, unk, lang, chr };

  struct Symbol {
    SymbolKind kind;
    char32_t ch = 0;    // valid when kind == chr
    std::string lang;   // valid when kind == lang
  };

  static constexpr int32_t kPadId = 0;
  static constexpr int32_t kUnkId = 1;

  Alphabet() = default;

  int32_t size() const { return static_cast<int32_t>(symbols_.size()); }
  const Symbol& symbol(int32_t id) const;

  // Character id, kUnkId when the character is not in the alphabet.
  int32_t char_id(char32_t c) const;

  // Language-tag id; throws ConfigError for an unknown code.
  int32_t lang_id(const std::string& code) const;
  bool has_lang(const std::string& code) const;
  std::vector<std::string> langs() const;

  std::vector<int32_t> encode(const std::u32string& word) const;

  std::string serialize() const;
  static Alphabet parse(const std::string& text);

  // Fingerprint of the serialized form; embedded in checkpoints.
  uint64_t hash() const;

  friend bool operator==(const Alphabet&, const Alphabet&);

  // Appends one symbol; used by the builder and the parser. Enforces the
  // fixed layout (PAD, UNK, language tags, characters).
  void push_symbol(Symbol s);

 private:
  std::vector<Symbol> symbols_;
  std::unordered_map<char32_t, int32_t> char_ids_;
  std::map<std::string, int32_t> lang_ids_;
};

// Builds the alphabet over every table: PAD, UNK, one tag per distinct
// language, then every character whose total count (word count times
// occurrences in the word) is >= min_char_count. Throws EmptyInputError when
// the tables contain no words.
Alphabet build_alphabet(const std::vector<WordTable>& tables, int64_t min_char_count = 1);

// Word-table interchange format: "#lang=<code>" header, then one
// "word<TAB>count" line per word in lexicographic word order.
std::string serialize_word_table(const WordTable& table);
WordTable parse_word_table(const std::string& text);

}  // namespace ntk
