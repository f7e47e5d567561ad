#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ntk/common.hpp"
#include "ntk/corpus.hpp"
#include "ntk/segmenter.hpp"
#include "ntk/tagger.hpp"

namespace ntk {

struct SegMetrics {
  double boundary_precision = 0.0;
  double boundary_recall = 0.0;
  double boundary_f1 = 0.0;
  double tag_accuracy = 0.0;
};

// Internal boundary positions compared as sets. Conventions: an empty
// prediction set has precision 1; an empty gold set has recall 1; F1 is the
// harmonic mean, 0 when precision + recall = 0. Both segmentations must be
// partitions of the same length.
SegMetrics boundary_prf(const Segmentation& pred, const Segmentation& gold);

// Fraction of positions with equal tags; lengths must match.
double tag_accuracy(const TagSequence& a, const TagSequence& b);

// Batch segmenter: same contract as SegmentFn, amortized over many words.
using BatchSegmentFn =
    std::function<std::vector<Segmentation>(const std::vector<std::u32string>&)>;

BatchSegmentFn make_batch_fn(SegmentFn fn);

// A word is junk when it splits into at least two pieces and more than half
// of them are single characters.
bool is_junk(const Segmentation& seg);

double junk_rate_of(const std::vector<Segmentation>& segs);
double junk_rate(const SegmentFn& tokenizer, const std::vector<std::u32string>& words);

// segment count -> fraction of words; fractions sum to 1.
std::map<int, double> histogram_of(const std::vector<Segmentation>& segs);
std::map<int, double> subword_count_histogram(const SegmentFn& tokenizer,
                                              const std::vector<std::u32string>& words);

// Mean total segment count per sentence.
double avg_subwords(const SegmentFn& tokenizer,
                    const std::vector<std::vector<std::u32string>>& sentences);

enum class NoiseOp : uint8_t { swap, erase, insert, substitute };

struct NoiseSpec {
  double word_fraction = 0.0;
  std::vector<NoiseOp> ops = {NoiseOp::swap, NoiseOp::erase, NoiseOp::insert,
                              NoiseOp::substitute};
  uint64_t seed = 0;
};

// Applies exactly one character edit to exactly floor(n * word_fraction)
// words, sampled without replacement. The edit operation is drawn uniformly
// from the applicable subset of spec.ops (swap needs an unequal adjacent
// pair, erase needs length >= 2, substitute needs a differing alphabet
// character; insert always applies). Replacement characters come from the
// characters observed in the input. A sampled word with no applicable op is
// left unchanged.
std::vector<std::u32string> inject_noise(const std::vector<std::u32string>& words,
                                         const NoiseSpec& spec);

// The vocab_size most frequent neural pieces over the table, counts weighted
// by word frequency, ties broken lexicographically.
std::set<std::u32string> neural_vocab_build(const TaggerModel& model, const WordTable& table,
                                            int vocab_size);

struct MarkedSpan {
  Span span;
  bool unk = false;  // piece text absent from the vocabulary

  bool operator==(const MarkedSpan&) const = default;
};

// Neural segmentation with out-of-vocabulary pieces marked; spans always
// partition the word.
std::vector<MarkedSpan> vocab_segment(const std::set<std::u32string>& vocab,
                                      const TaggerModel& model, const std::u32string& word);

struct ReportRow {
  std::string tokenizer;
  double noise_fraction = 0.0;
  double junk_rate = 0.0;
  double avg_subwords = 0.0;
  double self_f1 = 0.0;  // boundary F1 of noisy-input vs clean-input pieces
};

// One row per tokenizer x noise level. All tokenizers see identical noisy
// inputs at each level; noise seeds derive from `seed` and the level index.
// self_f1 compares internal boundary sets of each noisy word against its
// clean counterpart (macro-averaged; two empty sets count as a match).
std::vector<ReportRow> compare_report(const std::map<std::string, BatchSegmentFn>& tokenizers,
                                      const std::vector<std::u32string>& words,
                                      const std::vector<std::vector<std::u32string>>& sentences,
                                      const std::vector<double>& noise_grid, uint64_t seed);

// JSON array of row objects, and a CSV twin with columns
// tokenizer,noise_fraction,junk_rate,avg_subwords,self_f1 (6 decimals).
std::string report_to_json(const std::vector<ReportRow>& rows);
std::string report_to_csv(const std::vector<ReportRow>& rows);

}  // namespace ntk
