#include <string>
#include <vector>

#include "doctest.h"
#include "ntk/common.hpp"
#include "ntk/corpus.hpp"

using namespace ntk;

namespace {

WordTable table_of(const std::string& lang,
                   const std::vector<std::pair<std::u32string, int64_t>>& entries) {
  WordTable t;
  t.lang = lang;
  for (const auto& [w, c] : entries) t.add(w, c);
  return t;
}

}  // namespace

TEST_CASE("extract_words strips markup and splits on whitespace") {
  const auto words = extract_words("see <b>the</b> workshop");
  REQUIRE(words.size() == 3);
  CHECK(words[0] == U"see");
  CHECK(words[1] == U"the");
  CHECK(words[2] == U"workshop");
}

TEST_CASE("extract_words on empty input yields nothing") {
  CHECK(extract_words("").empty());
}

TEST_CASE("extract_words drops tokens longer than max_len") {
  const std::string token31(31, 'x');
  const auto words = extract_words("ok " + token31 + " fine");
  REQUIRE(words.size() == 2);
  CHECK(words[0] == U"ok");
  CHECK(words[1] == U"fine");
  // the default honors 30 exactly
  const std::string token30(30, 'x');
  CHECK(extract_words(token30).size() == 1);
}

TEST_CASE("extract_words drops url-shaped tokens and spanned tags") {
  const auto words = extract_words("go https://x.y/z now <a href=\"q\">link</a> www.z.w end");
  REQUIRE(words.size() == 4);
  CHECK(words[0] == U"go");
  CHECK(words[1] == U"now");
  CHECK(words[2] == U"link");
  CHECK(words[3] == U"end");
}

TEST_CASE("extract_words reports malformed unicode with a byte offset") {
  CHECK_THROWS_AS(extract_words("ab\xFFvd"), DecodeError);
}

TEST_CASE("build_word_table counts occurrences") {
  auto t = build_word_table({U"a", U"b", U"a"}, "en");
  CHECK(t.words.size() == 2);
  CHECK(t.words.at(U"a") == 2);
  CHECK(t.words.at(U"b") == 1);
  CHECK(t.total_words() == 3);

  CHECK(build_word_table({}, "en").words.empty());

  auto t3 = build_word_table({U"cat", U"cat", U"cat"}, "en");
  CHECK(t3.words.size() == 1);
  CHECK(t3.words.at(U"cat") == 3);
}

TEST_CASE("build_alphabet lays out PAD, UNK, language tags, characters") {
  auto a = build_alphabet({table_of("en", {{U"ab", 1}})});
  REQUIRE(a.size() == 5);
  CHECK(a.symbol(0).kind == Alphabet::SymbolKind::pad);
  CHECK(a.symbol(1).kind == Alphabet::SymbolKind::unk);
  CHECK(a.symbol(2).kind == Alphabet::SymbolKind::lang);
  CHECK(a.symbol(2).lang == "en");
  CHECK(a.symbol(3).ch == U'a');
  CHECK(a.symbol(4).ch == U'b');
  CHECK(a.char_id(U'a') == 3);
  CHECK(a.lang_id("en") == 2);
  CHECK(a.has_lang("en"));
  CHECK_FALSE(a.has_lang("de"));
  CHECK_THROWS_AS(a.lang_id("de"), ConfigError);
}

TEST_CASE("build_alphabet applies the character count threshold") {
  auto a = build_alphabet({table_of("en", {{U"aab", 1}})}, 2);
  // 'a' occurs twice, 'b' once: 'b' falls below the threshold
  CHECK(a.char_id(U'a') != Alphabet::kUnkId);
  CHECK(a.char_id(U'b') == Alphabet::kUnkId);
  const auto ids = a.encode(U"aab");
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == a.char_id(U'a'));
  CHECK(ids[2] == Alphabet::kUnkId);
}

TEST_CASE("build_alphabet with two languages keeps tags disjoint from characters") {
  auto a = build_alphabet({table_of("en", {{U"ab", 1}}), table_of("de", {{U"bc", 1}})});
  CHECK(a.langs() == std::vector<std::string>{"de", "en"});
  CHECK(a.lang_id("de") == 2);
  CHECK(a.lang_id("en") == 3);
  for (int32_t id = 0; id < a.size(); ++id) {
    if (a.symbol(id).kind == Alphabet::SymbolKind::lang) {
      CHECK(id >= 2);
      CHECK(id <= 3);
    }
  }
  CHECK(a.char_id(U'a') > a.lang_id("en"));
}

TEST_CASE("build_alphabet rejects an empty corpus") {
  CHECK_THROWS_AS(build_alphabet({table_of("en", {})}), EmptyInputError);
  CHECK_THROWS_AS(build_alphabet({}), EmptyInputError);
}

TEST_CASE("alphabet serialization round-trips and hashes stably") {
  auto a = build_alphabet({table_of("en", {{U"ab", 2}}), table_of("de", {{U"bé", 1}})});
  const std::string bytes = a.serialize();
  auto b = Alphabet::parse(bytes);
  CHECK(a == b);
  CHECK(a.hash() == b.hash());
  CHECK(b.serialize() == bytes);

  CHECK_THROWS_AS(Alphabet::parse("<PAD>\n"), FormatError);          // UNK missing
  CHECK_THROWS_AS(Alphabet::parse("<UNK>\n<PAD>\n"), FormatError);   // order violated
  CHECK_THROWS_AS(Alphabet::parse(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST_CASE("word table serialization round-trips") {
  auto t = table_of("sw", {{U"jambo", 3}, {U"habari", 1}, {U"漢字", 7}});
  const std::string bytes = serialize_word_table(t);
  auto u = parse_word_table(bytes);
  CHECK(u.lang == "sw");
  CHECK(u.words == t.words);
  CHECK(serialize_word_table(u) == bytes);

  CHECK_THROWS_AS(parse_word_table("jambo\t3\n"), FormatError);        // header missing
  CHECK_THROWS_AS(parse_word_table("#lang=sw\njambo\t0\n"), FormatError);
  CHECK_THROWS_AS(parse_word_table("#lang=sw\njambo 3\n"), FormatError);
  CHECK_THROWS_AS(parse_word_table("#lang=sw\njambo\t3"), FormatError);  // no final newline
}

TEST_CASE("word tables reject non-positive counts") {
  WordTable t;
  CHECK_THROWS_AS(t.add(U"x", 0), ConfigError);
  CHECK_THROWS_AS(t.add(U"x", -2), ConfigError);
}
