#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntk/corpus.hpp"
#include "ntk/evalkit.hpp"
#include "ntk/tagger.hpp"

using namespace ntk;

namespace {

Segmentation whole(const std::u32string& w) {
  return {{0, static_cast<int32_t>(w.size())}};
}

Segmentation chars(const std::u32string& w) {
  Segmentation seg;
  for (int32_t i = 0; i < static_cast<int32_t>(w.size()); ++i) seg.push_back({i, i + 1});
  return seg;
}

// Edit distance where an adjacent transposition also counts as one edit,
// matching the four noise operations.
int edit_distance(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1, 0));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i)
    for (size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  return d[a.size()][b.size()];
}

// Tiny model whose untrained head ties every position, so decode falls back
// to all-B and every character becomes its own piece.
TaggerModel char_split_model() {
  WordTable t;
  t.lang = "en";
  t.add(U"abcd", 1);
  TaggerConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_out_dim = 8;
  cfg.layers = 1;
  cfg.seed = 2;
  TaggerModel m = init_tagger(cfg, build_alphabet({t}));
  m.head_w = Tensor(m.head_w.rows, m.head_w.cols);
  m.head_b = Tensor(1, 2);
  return m;
}

}  // namespace

TEST_CASE("boundary scores compare internal split positions as sets") {
  const Segmentation gold{{0, 3}, {3, 8}, {8, 9}};  // tri / cycle / s

  SegMetrics m = boundary_prf({{0, 9}}, gold);
  CHECK(m.boundary_precision == 1.0);  // no predicted boundaries, none wrong
  CHECK(m.boundary_recall == 0.0);
  CHECK(m.boundary_f1 == 0.0);
  CHECK(m.tag_accuracy == doctest::Approx(7.0 / 9.0));

  m = boundary_prf({{0, 3}, {3, 9}}, gold);  // tri / cycles
  CHECK(m.boundary_precision == 1.0);
  CHECK(m.boundary_recall == 0.5);
  CHECK(m.boundary_f1 == doctest::Approx(2.0 / 3.0));

  m = boundary_prf(gold, gold);
  CHECK(m.boundary_precision == 1.0);
  CHECK(m.boundary_recall == 1.0);
  CHECK(m.boundary_f1 == 1.0);
  CHECK(m.tag_accuracy == 1.0);

  m = boundary_prf(gold, {{0, 9}});  // swapped roles: empty gold set
  CHECK(m.boundary_precision == 0.0);
  CHECK(m.boundary_recall == 1.0);
  CHECK(m.boundary_f1 == 0.0);

  CHECK_THROWS_AS(boundary_prf({{0, 2}}, gold), SegmentationError);
  CHECK_THROWS_AS(boundary_prf({{0, 2}, {3, 9}}, gold), SegmentationError);
  CHECK_THROWS_AS(boundary_prf({}, gold), SegmentationError);
}

TEST_CASE("tag accuracy is the matching-position fraction") {
  CHECK(tag_accuracy(tags_from_string("BIIB"), tags_from_string("BIBB")) == 0.75);
  CHECK(tag_accuracy(tags_from_string("BB"), tags_from_string("BB")) == 1.0);
  CHECK_THROWS_AS(tag_accuracy(tags_from_string("B"), tags_from_string("BB")), ShapeError);
  CHECK_THROWS_AS(tag_accuracy({}, {}), EmptyInputError);
}

TEST_CASE("junk means mostly single-character pieces") {
  CHECK_FALSE(is_junk({{0, 5}}));
  CHECK(is_junk({{0, 1}, {1, 2}}));
  CHECK_FALSE(is_junk({{0, 2}, {2, 3}}));          // half singles is not junk
  CHECK(is_junk({{0, 1}, {1, 2}, {2, 4}}));        // 2 of 3
  CHECK_FALSE(is_junk({{0, 2}, {2, 4}}));
  CHECK_FALSE(is_junk({{0, 1}}));                  // one piece never junk

  CHECK(junk_rate_of({{{0, 1}, {1, 2}}, {{0, 5}}}) == 0.5);
  CHECK_THROWS_AS(junk_rate_of({}), EmptyInputError);

  const std::vector<std::u32string> words{U"ab", U"abc"};
  CHECK(junk_rate(chars, words) == 1.0);
  CHECK(junk_rate(whole, words) == 0.0);
}

TEST_CASE("histogram buckets words by piece count") {
  const auto h = histogram_of({{{0, 2}}, {{0, 1}, {1, 2}}});
  REQUIRE(h.size() == 2);
  CHECK(h.at(1) == 0.5);
  CHECK(h.at(2) == 0.5);
  CHECK_THROWS_AS(histogram_of({}), EmptyInputError);

  const auto h2 = subword_count_histogram(chars, {U"ab", U"cd", U"e"});
  CHECK(h2.at(1) == doctest::Approx(1.0 / 3.0));
  CHECK(h2.at(2) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("average subwords is a per-sentence mean of piece totals") {
  const std::vector<std::vector<std::u32string>> sentences{{U"ab", U"cd"}, {U"abcd"}};
  CHECK(avg_subwords(whole, sentences) == 1.5);  // totals 2 and 1
  CHECK(avg_subwords(chars, sentences) == 4.0);  // totals 4 and 4
  CHECK_THROWS_AS(avg_subwords(whole, {}), EmptyInputError);
  CHECK_THROWS_AS(avg_subwords(whole, {{}}), EmptyInputError);
}

TEST_CASE("make_batch_fn matches the wrapped per-word tokenizer") {
  const BatchSegmentFn batch = make_batch_fn(chars);
  const std::vector<std::u32string> words{U"ab", U"c", U"abc"};
  const auto segs = batch(words);
  REQUIRE(segs.size() == 3);
  for (size_t i = 0; i < words.size(); ++i) CHECK(segs[i] == chars(words[i]));
}

TEST_CASE("noise injection edits exactly the floored word fraction") {
  const std::vector<std::u32string> words{U"abc", U"ab", U"ba", U"cab", U"abab",
                                          U"cc",  U"bb", U"bac", U"acb", U"aabc"};

  NoiseSpec spec;
  spec.word_fraction = 0.0;
  spec.seed = 9;
  CHECK(inject_noise(words, spec) == words);

  spec.word_fraction = 0.5;
  const auto noisy = inject_noise(words, spec);
  CHECK(inject_noise(words, spec) == noisy);  // seeded, repeatable
  REQUIRE(noisy.size() == words.size());

  std::set<char32_t> observed;
  for (const auto& w : words)
    for (char32_t c : w) observed.insert(c);

  int changed = 0;
  for (size_t i = 0; i < words.size(); ++i) {
    if (noisy[i] == words[i]) continue;
    ++changed;
    CHECK(edit_distance(words[i], noisy[i]) == 1);
    for (char32_t c : noisy[i]) CHECK(observed.count(c) == 1);
  }
  CHECK(changed == 5);

  // A different seed draws a different perturbation of the same words.
  spec.seed = 10;
  CHECK(inject_noise(words, spec) != noisy);
}

TEST_CASE("inapplicable noise operations leave the sampled word alone") {
  NoiseSpec spec;
  spec.word_fraction = 1.0;
  spec.seed = 3;

  spec.ops = {NoiseOp::substitute};  // one-letter alphabet, nothing differs
  CHECK(inject_noise({U"aaa"}, spec) == std::vector<std::u32string>{U"aaa"});
  spec.ops = {NoiseOp::swap};  // no unequal adjacent pair
  CHECK(inject_noise({U"aa"}, spec) == std::vector<std::u32string>{U"aa"});
  spec.ops = {NoiseOp::erase};  // too short to erase
  CHECK(inject_noise({U"a"}, spec) == std::vector<std::u32string>{U"a"});
  spec.ops = {NoiseOp::insert};  // insert always applies
  CHECK(inject_noise({U"a"}, spec) == std::vector<std::u32string>{U"aa"});

  spec.ops = {};
  CHECK_THROWS_AS(inject_noise({U"ab"}, spec), ConfigError);
  spec.ops = {NoiseOp::insert};
  spec.word_fraction = 1.5;
  CHECK_THROWS_AS(inject_noise({U"ab"}, spec), ConfigError);
  spec.word_fraction = -0.1;
  CHECK_THROWS_AS(inject_noise({U"ab"}, spec), ConfigError);
  spec.word_fraction = 1.0;
  CHECK_THROWS_AS(inject_noise({}, spec), EmptyInputError);
  CHECK_THROWS_AS(inject_noise({U"ab", U""}, spec), EmptyInputError);
}

TEST_CASE("the neural piece vocabulary ranks by weighted frequency") {
  const TaggerModel m = char_split_model();
  WordTable t;
  t.lang = "en";
  t.add(U"ab", 5);
  t.add(U"cd", 2);

  CHECK(neural_vocab_build(m, t, 10) == std::set<std::u32string>{U"a", U"b", U"c", U"d"});
  CHECK(neural_vocab_build(m, t, 2) == std::set<std::u32string>{U"a", U"b"});
  CHECK(neural_vocab_build(m, t, 1) == std::set<std::u32string>{U"a"});  // tie breaks lex

  WordTable empty;
  CHECK_THROWS_AS(neural_vocab_build(m, empty, 2), EmptyInputError);
  CHECK_THROWS_AS(neural_vocab_build(m, t, 0), ConfigError);
}

TEST_CASE("vocabulary segmentation marks out-of-vocabulary pieces") {
  const TaggerModel m = char_split_model();
  const std::set<std::u32string> vocab{U"a"};
  const auto marked = vocab_segment(vocab, m, U"ab");
  REQUIRE(marked.size() == 2);
  CHECK(marked[0].span == Span{0, 1});
  CHECK_FALSE(marked[0].unk);
  CHECK(marked[1].span == Span{1, 2});
  CHECK(marked[1].unk);

  // Spans always partition the word regardless of vocabulary.
  int32_t expect = 0;
  for (const MarkedSpan& ms : vocab_segment({}, m, U"abcd")) {
    CHECK(ms.span.begin == expect);
    CHECK(ms.unk);
    expect = ms.span.end;
  }
  CHECK(expect == 4);
}

TEST_CASE("the robustness report emits one row per tokenizer and level") {
  const std::vector<std::u32string> words{U"abc", U"ab", U"ba", U"cab",
                                          U"abab", U"cc", U"bac", U"acb"};
  const std::vector<std::vector<std::u32string>> sentences{
      {U"abc", U"ab", U"ba", U"cab"}, {U"abab", U"cc", U"bac", U"acb"}};

  std::map<std::string, BatchSegmentFn> toks;
  toks["chars"] = make_batch_fn(chars);
  toks["whole"] = make_batch_fn(whole);

  const auto rows = compare_report(toks, words, sentences, {0.0, 0.5}, 77);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].tokenizer == "chars");
  CHECK(rows[1].tokenizer == "chars");
  CHECK(rows[2].tokenizer == "whole");
  CHECK(rows[3].tokenizer == "whole");
  CHECK(rows[0].noise_fraction == 0.0);
  CHECK(rows[1].noise_fraction == 0.5);

  // Zero noise reproduces the clean segmentation exactly.
  CHECK(rows[0].self_f1 == 1.0);
  CHECK(rows[2].self_f1 == 1.0);

  // Character splitting: every multi-character word is junk, and the mean
  // piece count per sentence is the mean character count.
  CHECK(rows[0].junk_rate == 1.0);
  CHECK(rows[0].avg_subwords == 11.0);

  // Whole-word segmentation has no boundaries to disturb at any noise level.
  CHECK(rows[2].junk_rate == 0.0);
  CHECK(rows[2].avg_subwords == 4.0);
  CHECK(rows[3].self_f1 == 1.0);
  CHECK(rows[3].junk_rate == 0.0);

  for (const ReportRow& r : rows) {
    CHECK(r.junk_rate >= 0.0);
    CHECK(r.junk_rate <= 1.0);
    CHECK(r.self_f1 >= 0.0);
    CHECK(r.self_f1 <= 1.0);
  }

  // Same seed, same rows.
  const auto again = compare_report(toks, words, sentences, {0.0, 0.5}, 77);
  CHECK(report_to_csv(again) == report_to_csv(rows));

  CHECK_THROWS_AS(compare_report({}, words, sentences, {0.0}, 1), EmptyInputError);
  CHECK_THROWS_AS(compare_report(toks, {}, sentences, {0.0}, 1), EmptyInputError);
  CHECK_THROWS_AS(compare_report(toks, words, {}, {0.0}, 1), EmptyInputError);
  CHECK_THROWS_AS(compare_report(toks, words, sentences, {}, 1), EmptyInputError);
}

TEST_CASE("report serialization round-trips JSON and pins the CSV shape") {
  std::vector<ReportRow> rows;
  rows.push_back({"t", 0.5, 0.25, 3.0, 1.0});

  const nlohmann::json arr = nlohmann::json::parse(report_to_json(rows));
  REQUIRE(arr.is_array());
  REQUIRE(arr.size() == 1);
  CHECK(arr[0]["tokenizer"] == "t");
  CHECK(arr[0]["noise_fraction"] == 0.5);
  CHECK(arr[0]["junk_rate"] == 0.25);
  CHECK(arr[0]["avg_subwords"] == 3.0);
  CHECK(arr[0]["self_f1"] == 1.0);

  CHECK(report_to_csv(rows) ==
        "tokenizer,noise_fraction,junk_rate,avg_subwords,self_f1\n"
        "t,0.500000,0.250000,3.000000,1.000000\n");
  CHECK(report_to_csv({}) == "tokenizer,noise_fraction,junk_rate,avg_subwords,self_f1\n");
}
