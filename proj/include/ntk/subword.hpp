#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "ntk/common.hpp"
#include "ntk/corpus.hpp"
#include "ntk/segmenter.hpp"

namespace ntk {

// ---------------------------------------------------------------------------
// Unigram

struct UnigramModel {
  // piece -> log-probability; finite, <= 0. Every character of the training
  // corpus is a piece, so any of its words is segmentable.
  std::map<std::u32string, double> pieces;
};

struct UnigramTrainConfig {
  int max_piece_len = 8;     // seed substrings no longer than this
  int64_t min_count = 2;     // seed substrings must occur at least this often
  int seed_multiplier = 4;   // seed inventory capped at multiplier * vocab_size
  int em_rounds = 4;         // hard-EM rounds before pruning
  double shrink_fraction = 0.2;  // fraction of pieces dropped per pruning round
  double smoothing_eps = 0.5;    // add-eps smoothing on usage counts
};

// Hard-EM trainer: seed from frequent substrings, alternate Viterbi counting
// and re-normalization, then prune lowest-contribution pieces (contribution =
// usage * log-prob advantage over spelling the piece in single characters)
// until at most vocab_size pieces remain. Single characters are never pruned.
// Final log-probs are quantized to the file format's 9-significant-digit grid
// so save/load is an exact identity.
UnigramModel train_unigram(const WordTable& table, int64_t vocab_size,
                           const UnigramTrainConfig& cfg = {});

struct ScoredSegmentation {
  Segmentation seg;
  double score = 0.0;
};

// Reusable lookup index over a model; build once when segmenting many words.
class UnigramIndex {
 public:
  explicit UnigramIndex(const UnigramModel& model);

  // Max-sum-of-log-probs segmentation. Ties prefer fewer pieces, then the
  // leftmost-longest piece choice. Characters not covered by any piece are
  // scored as single-character pieces at unk_logprob.
  ScoredSegmentation viterbi(const std::u32string& word, double unk_logprob = -20.0) const;

 private:
  std::vector<double> logp_;
  std::unordered_map<std::u32string, int32_t> ids_;
  int max_len_ = 0;
};

Segmentation unigram_segment(const UnigramModel& model, const std::u32string& word,
                             double unk_logprob = -20.0);

// ---------------------------------------------------------------------------
// BPE

struct BpeModel {
  std::vector<std::pair<std::u32string, std::u32string>> merges;  // acquisition order
  std::set<std::u32string> pieces;  // characters plus merge outputs
};

// Iteratively merges the most frequent adjacent pair (weighted by word
// counts; ties broken lexicographically by (left, right)) until the piece
// inventory reaches vocab_size or no pair occurs twice.
BpeModel train_bpe(const WordTable& table, int64_t vocab_size);

Segmentation bpe_segment(const BpeModel& model, const std::u32string& word);

// ---------------------------------------------------------------------------
// WordPiece

struct WordPieceModel {
  // File forms: word-initial pieces verbatim, continuations with a literal
  // "##" prefix. Both forms of every training character are always present.
  std::set<std::u32string> pieces;
};

// BPE-style merging driven by score = pair count / (count(left)*count(right)).
// Pair counts are adjacency occurrences weighted by word counts; element
// counts are word-presence counts of the marker-stripped piece text (a word
// counts once per distinct piece text it contains). The pair-score trainer is
// the widely used formulation; the procedure itself has no single published
// reference implementation.
WordPieceModel train_wordpiece(const WordTable& table, int64_t vocab_size);

// Greedy longest-prefix match, "##" forms after the first piece. If some
// position has no matching piece the whole word becomes one segment.
Segmentation wordpiece_segment(const WordPieceModel& model, const std::u32string& word);

// ---------------------------------------------------------------------------
// Teacher persistence and uniform access

using TeacherModel = std::variant<UnigramModel, BpeModel, WordPieceModel>;

enum class TeacherKind { unigram, bpe, wordpiece };

const char* teacher_kind_name(TeacherKind k);
TeacherKind teacher_kind_from_name(const std::string& name);
TeacherKind teacher_kind(const TeacherModel& m);

// Unigram file: "piece<TAB>logprob" (9 significant digits), sorted by
// descending logprob then lexicographic piece order.
std::string serialize_unigram(const UnigramModel& m);
UnigramModel parse_unigram(const std::string& text);

// BPE file: "#merges" header, then "left right" lines in merge order.
std::string serialize_bpe(const BpeModel& m);
BpeModel parse_bpe(const std::string& text);

// WordPiece file: one piece per line, "##" prefix literal.
std::string serialize_wordpiece(const WordPieceModel& m);
WordPieceModel parse_wordpiece(const std::string& text);

std::string serialize_teacher(const TeacherModel& m);
// Detects the kind from the content: a "#merges" header means BPE, a TAB in
// the first line means Unigram, otherwise WordPiece.
TeacherModel parse_teacher(const std::string& text);

Segmentation teacher_segment(const TeacherModel& m, const std::u32string& word);

// Closure with a prebuilt index; prefer this when segmenting many words.
SegmentFn make_segment_fn(const TeacherModel& m);

}  // namespace ntk
