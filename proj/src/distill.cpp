#include "ntk/distill.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ntk/rng.hpp"
#include "ntk/utf8.hpp"

namespace ntk {

TagSequence segments_to_tags(const std::u32string& word, const Segmentation& seg) {
  const int n = static_cast<int>(word.size());
  if (n == 0) throw EmptyInputError("cannot tag an empty word");
  int expect = 0;
  TagSequence tags;
  tags.reserve(static_cast<size_t>(n));
  for (const Span& s : seg) {
    if (s.begin != expect || s.end <= s.begin || s.end > n)
      throw SegmentationError("segments do not partition the word");
    tags.push_back(Tag::B);
    for (int i = s.begin + 1; i < s.end; ++i) tags.push_back(Tag::I);
    expect = s.end;
  }
  if (expect != n) throw SegmentationError("segments do not cover the word");
  return tags;
}

Segmentation tags_to_segments(const std::u32string& word, const TagSequence& tags) {
  if (word.empty()) throw EmptyInputError("cannot decode tags for an empty word");
  if (tags.size() != word.size())
    throw SegmentationError("tag count does not match word length");
  if (tags[0] != Tag::B) throw SegmentationError("tag sequence must start with B");
  Segmentation seg;
  int begin = 0;
  const int n = static_cast<int>(tags.size());
  for (int i = 1; i < n; ++i) {
    if (tags[static_cast<size_t>(i)] == Tag::B) {
      seg.push_back({begin, i});
      begin = i;
    }
  }
  seg.push_back({begin, n});
  return seg;
}

FilterDecision apply_filters(const std::u32string& word, const Segmentation& seg) {
  if (word.size() < 4) return FilterDecision::single_token;
  int singles = 0;
  for (const Span& s : seg)
    if (s.end - s.begin == 1) ++singles;
  if (2 * singles > static_cast<int>(seg.size())) return FilterDecision::single_token;
  return FilterDecision::use_teacher;
}

std::string dataset_mode_name(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::mono: return "mono";
    case DatasetMode::multi: return "multi";
    case DatasetMode::mixed: return "mixed";
  }
  throw ConfigError("unknown dataset mode");
}

DatasetMode dataset_mode_from_name(const std::string& name) {
  if (name == "mono") return DatasetMode::mono;
  if (name == "multi") return DatasetMode::multi;
  if (name == "mixed") return DatasetMode::mixed;
  throw ConfigError("unknown dataset mode: " + name);
}

namespace {

TagSequence single_token_tags(size_t n) {
  TagSequence tags(n, Tag::I);
  tags[0] = Tag::B;
  return tags;
}

}  // namespace

DistillDataset build_dataset(const std::map<std::string, WordTable>& tables,
                             const std::map<std::string, TeacherModel>& teachers,
                             DatasetMode mode, const Alphabet& alphabet, uint64_t seed) {
  if (tables.empty()) throw EmptyInputError("dataset needs at least one word table");
  if (mode == DatasetMode::mono && tables.size() != 1)
    throw ConfigError("mono mode takes exactly one language");
  DistillDataset ds;
  ds.mode = mode;
  ds.seed = seed;
  for (const auto& [lang, table] : tables) {
    const auto it = teachers.find(lang);
    if (it == teachers.end()) throw ConfigError("no teacher for language: " + lang);
    const SegmentFn segment = make_segment_fn(it->second);
    const bool tagged = mode != DatasetMode::mono;
    const std::optional<int32_t> lang_id =
        tagged ? std::optional<int32_t>(alphabet.lang_id(lang)) : std::nullopt;
    for (const auto& [word, count] : table.words) {
      (void)count;
      const Segmentation seg = segment(word);
      DistillExample ex;
      ex.word = word;
      ex.char_ids = alphabet.encode(word);
      ex.tags = apply_filters(word, seg) == FilterDecision::use_teacher
                    ? segments_to_tags(word, seg)
                    : single_token_tags(word.size());
      if (tagged) {
        ex.lang_id = lang_id;
        ex.lang = lang;
      }
      ds.examples.push_back(ex);
      if (mode == DatasetMode::mixed) {
        ex.lang_id.reset();
        ex.lang.reset();
        ds.examples.push_back(std::move(ex));
      }
    }
  }
  std::stable_sort(ds.examples.begin(), ds.examples.end(),
                   [](const DistillExample& a, const DistillExample& b) {
                     const std::string& la = a.lang ? *a.lang : std::string();
                     const std::string& lb = b.lang ? *b.lang : std::string();
                     return std::tie(la, a.word, a.lang_id) < std::tie(lb, b.word, b.lang_id);
                   });
  Rng rng(seed);
  rng.shuffle(ds.examples);
  return ds;
}

std::string serialize_dataset(const DistillDataset& ds) {
  std::string out;
  {
    nlohmann::json header;
    header["#mode"] = dataset_mode_name(ds.mode);
    header["#seed"] = ds.seed;
    out += header.dump();
    out.push_back('\n');
  }
  for (const DistillExample& ex : ds.examples) {
    nlohmann::json rec;
    rec["word"] = utf8_encode(ex.word);
    rec["tags"] = tags_to_string(ex.tags);
    if (ex.lang)
      rec["lang"] = *ex.lang;
    else
      rec["lang"] = nullptr;
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

DistillDataset parse_dataset(const std::string& text, const Alphabet& alphabet) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset is empty");
  DistillDataset ds;
  try {
    const nlohmann::json header = nlohmann::json::parse(line);
    ds.mode = dataset_mode_from_name(header.at("#mode").get<std::string>());
    ds.seed = header.at("#seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what());
  }
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    DistillExample ex;
    try {
      const nlohmann::json rec = nlohmann::json::parse(line);
      ex.word = utf8_decode(rec.at("word").get<std::string>());
      ex.tags = tags_from_string(rec.at("tags").get<std::string>());
      const nlohmann::json& lang = rec.at("lang");
      if (!lang.is_null()) ex.lang = lang.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad dataset record at line " + std::to_string(lineno) + ": " + e.what());
    }
    if (ex.word.empty())
      throw FormatError("empty word at line " + std::to_string(lineno));
    if (ex.tags.size() != ex.word.size() || ex.tags[0] != Tag::B)
      throw FormatError("tags do not fit the word at line " + std::to_string(lineno));
    ex.char_ids = alphabet.encode(ex.word);
    if (ex.lang) ex.lang_id = alphabet.lang_id(*ex.lang);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

}  // namespace ntk
