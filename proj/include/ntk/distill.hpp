#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ntk/common.hpp"
#include "ntk/corpus.hpp"
#include "ntk/subword.hpp"

namespace ntk {

// B at each segment start, I elsewhere. seg must partition [0, |word|).
TagSequence segments_to_tags(const std::u32string& word, const Segmentation& seg);

// Cut before every B except the first. tags[0] must be B and |tags| = |word|.
Segmentation tags_to_segments(const std::u32string& word, const TagSequence& tags);

enum class FilterDecision { use_teacher, single_token };

// Words shorter than 4 characters stay whole; so do segmentations where
// single-character pieces are a strict majority.
FilterDecision apply_filters(const std::u32string& word, const Segmentation& seg);

enum class DatasetMode { mono, multi, mixed };

std::string dataset_mode_name(DatasetMode mode);
DatasetMode dataset_mode_from_name(const std::string& name);

struct DistillExample {
  std::u32string word;
  std::vector<int32_t> char_ids;       // alphabet ids, unknown chars -> <UNK>
  TagSequence tags;                    // one tag per character
  std::optional<int32_t> lang_id;      // alphabet symbol id of the language tag
  std::optional<std::string> lang;     // language code, mirrors lang_id

  bool operator==(const DistillExample&) const = default;
};

struct DistillDataset {
  DatasetMode mode = DatasetMode::mono;
  uint64_t seed = 0;
  std::vector<DistillExample> examples;
};

// One example per (language, word); mixed mode emits each twice, with and
// without the language tag. Order is a stable (lang, word) sort followed by
// one seeded shuffle.
DistillDataset build_dataset(const std::map<std::string, WordTable>& tables,
                             const std::map<std::string, TeacherModel>& teachers,
                             DatasetMode mode, const Alphabet& alphabet, uint64_t seed);

// JSON lines: a {"#mode","#seed"} header, then {"word","tags","lang"} records.
std::string serialize_dataset(const DistillDataset& ds);
DistillDataset parse_dataset(const std::string& text, const Alphabet& alphabet);

}  // namespace ntk
