#include "ntk/corpus.hpp"

#include <algorithm>
#include <cctype>

#include "ntk/utf8.hpp"

namespace ntk {

namespace {

bool is_ascii_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f';
}

bool has_prefix_icase(const std::u32string& w, const char* prefix) {
  size_t i = 0;
  for (; prefix[i] != '\0'; ++i) {
    if (i >= w.size()) return false;
    char32_t c = w[i];
    if (c >= U'A' && c <= U'Z') c += 32;
    if (c != static_cast<char32_t>(prefix[i])) return false;
  }
  return true;
}

bool is_url_shaped(const std::u32string& w) {
  return has_prefix_icase(w, "http://") || has_prefix_icase(w, "https://") ||
         has_prefix_icase(w, "www.");
}

}  // namespace

void WordTable::add(const std::u32string& word, int64_t n) {
  if (n < 1) throw ConfigError("word count increment must be >= 1");
  words[word] += n;
}

int64_t WordTable::total_words() const {
  int64_t total = 0;
  for (const auto& [w, c] : words) total += c;
  return total;
}

std::vector<std::u32string> extract_words(const std::string& utf8_text, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  const std::u32string text = utf8_decode(utf8_text);

  // Strip markup spans before splitting so tags containing whitespace
  // ("<a href=...>") disappear as a unit.
  std::u32string stripped;
  stripped.reserve(text.size());
  for (size_t i = 0; i < text.size();) {
    if (text[i] == U'<') {
      const size_t close = text.find(U'>', i + 1);
      if (close != std::u32string::npos) {
        i = close + 1;
        continue;
      }
    }
    stripped.push_back(text[i]);
    ++i;
  }

  std::vector<std::u32string> words;
  std::u32string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    if (!is_url_shaped(cur) && cur.size() <= static_cast<size_t>(max_len)) words.push_back(cur);
    cur.clear();
  };
  for (char32_t c : stripped) {
    if (is_ascii_space(c)) {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return words;
}

WordTable build_word_table(const std::vector<std::u32string>& words, const std::string& lang) {
  WordTable t;
  t.lang = lang;
  for (const auto& w : words) t.add(w);
  return t;
}

const Alphabet::Symbol& Alphabet::symbol(int32_t id) const {
  if (id < 0 || id >= size()) throw ConfigError("symbol id out of range: " + std::to_string(id));
  return symbols_[static_cast<size_t>(id)];
}

int32_t Alphabet::char_id(char32_t c) const {
  const auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnkId : it->second;
}

int32_t Alphabet::lang_id(const std::string& code) const {
  const auto it = lang_ids_.find(code);
  if (it == lang_ids_.end()) throw ConfigError("unknown language tag '" + code + "'");
  return it->second;
}

bool Alphabet::has_lang(const std::string& code) const { return lang_ids_.count(code) > 0; }

std::vector<std::string> Alphabet::langs() const {
  std::vector<std::string> out;
  out.reserve(lang_ids_.size());
  for (const auto& [code, id] : lang_ids_) out.push_back(code);
  return out;
}

std::vector<int32_t> Alphabet::encode(const std::u32string& word) const {
  std::vector<int32_t> ids;
  ids.reserve(word.size());
  for (char32_t c : word) ids.push_back(char_id(c));
  return ids;
}

void Alphabet::push_symbol(Symbol s) {
  const int32_t id = size();
  switch (s.kind) {
    case SymbolKind::pad:
      if (id != kPadId) throw FormatError("PAD must be symbol 0");
      break;
    case SymbolKind::unk:
      if (id != kUnkId) throw FormatError("UNK must be symbol 1");
      break;
    case SymbolKind::lang:
      if (id < 2 || !char_ids_.empty())
        throw FormatError("language tags must follow UNK and precede characters");
      if (s.lang.empty()) throw FormatError("empty language code");
      if (!lang_ids_.emplace(s.lang, id).second)
        throw FormatError("duplicate language tag '" + s.lang + "'");
      break;
    case SymbolKind::chr:
      if (id < 2) throw FormatError("characters must follow PAD and UNK");
      if (!char_ids_.emplace(s.ch, id).second)
        throw FormatError("duplicate character symbol");
      break;
  }
  symbols_.push_back(std::move(s));
}

std::string Alphabet::serialize() const {
  std::string out;
  for (const Symbol& s : symbols_) {
    switch (s.kind) {
      case SymbolKind::pad:
        out += "<PAD>";
        break;
      case SymbolKind::unk:
        out += "<UNK>";
        break;
      case SymbolKind::lang:
        out += "<lang:" + s.lang + ">";
        break;
      case SymbolKind::chr:
        out += utf8_encode(s.ch);
        break;
    }
    out.push_back('\n');
  }
  return out;
}

Alphabet Alphabet::parse(const std::string& text) {
  Alphabet a;
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos)
      throw FormatError("alphabet file missing final newline");
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    Symbol s;
    if (line == "<PAD>") {
      s.kind = SymbolKind::pad;
    } else if (line == "<UNK>") {
      s.kind = SymbolKind::unk;
    } else if (line.size() > 7 && line.rfind("<lang:", 0) == 0 && line.back() == '>') {
      s.kind = SymbolKind::lang;
      s.lang = line.substr(6, line.size() - 7);
    } else {
      const std::u32string cps = utf8_decode(line);
      if (cps.size() != 1)
        throw FormatError("alphabet line " + std::to_string(line_no) +
                          " is not a single character");
      s.kind = SymbolKind::chr;
      s.ch = cps[0];
    }
    try {
      a.push_symbol(std::move(s));
    } catch (const FormatError& e) {
      throw FormatError("alphabet line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (a.size() < 2) throw FormatError("alphabet must contain at least PAD and UNK");
  return a;
}

uint64_t Alphabet::hash() const { return fnv1a64(serialize()); }

bool operator==(const Alphabet& x, const Alphabet& y) {
  return x.serialize() == y.serialize();
}

Alphabet build_alphabet(const std::vector<WordTable>& tables, int64_t min_char_count) {
  if (min_char_count < 1) throw ConfigError("min_char_count must be >= 1");
  std::map<std::string, bool> langs;
  std::map<char32_t, int64_t> char_counts;
  int64_t total_words = 0;
  for (const WordTable& t : tables) {
    langs[t.lang] = true;
    for (const auto& [word, count] : t.words) {
      total_words += count;
      for (char32_t c : word) char_counts[c] += count;
    }
  }
  if (total_words == 0) throw EmptyInputError("cannot build an alphabet from an empty corpus");

  Alphabet a;
  a.push_symbol({Alphabet::SymbolKind::pad, 0, {}});
  a.push_symbol({Alphabet::SymbolKind::unk, 0, {}});
  for (const auto& [code, unused] : langs) {
    a.push_symbol({Alphabet::SymbolKind::lang, 0, code});
  }
  for (const auto& [c, count] : char_counts) {
    if (count >= min_char_count) a.push_symbol({Alphabet::SymbolKind::chr, c, {}});
  }
  return a;
}

std::string serialize_word_table(const WordTable& table) {
  std::string out = "#lang=" + table.lang + "\n";
  for (const auto& [word, count] : table.words) {
    if (count < 1) throw FormatError("word count must be >= 1");
    out += utf8_encode(word);
    out.push_back('\t');
    out += std::to_string(count);
    out.push_back('\n');
  }
  return out;
}

WordTable parse_word_table(const std::string& text) {
  WordTable t;
  size_t pos = 0;
  int line_no = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("word table missing final newline");
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!saw_header) {
      if (line.rfind("#lang=", 0) != 0)
        throw FormatError("word table must start with a #lang= header");
      t.lang = line.substr(6);
      saw_header = true;
      continue;
    }
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw FormatError("word table line " + std::to_string(line_no) + " is not word<TAB>count");
    const std::u32string word = utf8_decode(line.substr(0, tab));
    const std::string count_str = line.substr(tab + 1);
    if (count_str.empty() ||
        count_str.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError("word table line " + std::to_string(line_no) + " has a malformed count");
    const int64_t count = std::stoll(count_str);
    if (count < 1)
      throw FormatError("word table line " + std::to_string(line_no) + " has count < 1");
    if (t.words.count(word))
      throw FormatError("word table line " + std::to_string(line_no) + " repeats a word");
    t.words[word] = count;
  }
  if (!saw_header) throw FormatError("word table must start with a #lang= header");
  return t;
}

}  // namespace ntk
