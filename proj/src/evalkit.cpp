#include "ntk/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "ntk/format.hpp"
#include "ntk/rng.hpp"
#include "ntk/utf8.hpp"

namespace ntk {

namespace {

// Internal boundary positions of a partition, excluding the final end.
std::set<int32_t> boundary_set(const Segmentation& seg) {
  std::set<int32_t> b;
  for (size_t i = 0; i + 1 < seg.size(); ++i) b.insert(seg[i].end);
  return b;
}

int32_t partition_length(const Segmentation& seg) {
  if (seg.empty()) throw SegmentationError("empty segmentation");
  int32_t expect = 0;
  for (const Span& s : seg) {
    if (s.begin != expect || s.end <= s.begin)
      throw SegmentationError("spans do not form a partition");
    expect = s.end;
  }
  return expect;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Precision/recall/F1 of two boundary sets under the empty-set conventions.
void set_prf(const std::set<int32_t>& pred, const std::set<int32_t>& gold, double* p, double* r,
             double* f1) {
  size_t hit = 0;
  for (int32_t b : pred) hit += gold.count(b);
  *p = pred.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
  *r = gold.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(gold.size());
  *f1 = f1_of(*p, *r);
}

TagSequence partition_tags(const Segmentation& seg, int32_t len) {
  TagSequence tags(static_cast<size_t>(len), Tag::I);
  for (const Span& s : seg) tags[static_cast<size_t>(s.begin)] = Tag::B;
  return tags;
}

}  // namespace

SegMetrics boundary_prf(const Segmentation& pred, const Segmentation& gold) {
  const int32_t np = partition_length(pred);
  const int32_t ng = partition_length(gold);
  if (np != ng) throw SegmentationError("segmentations cover words of different lengths");
  SegMetrics m;
  set_prf(boundary_set(pred), boundary_set(gold), &m.boundary_precision, &m.boundary_recall,
          &m.boundary_f1);
  m.tag_accuracy = tag_accuracy(partition_tags(pred, np), partition_tags(gold, ng));
  return m;
}

double tag_accuracy(const TagSequence& a, const TagSequence& b) {
  if (a.size() != b.size()) throw ShapeError("tag sequences differ in length");
  if (a.empty()) throw EmptyInputError("cannot score empty tag sequences");
  size_t hit = 0;
  for (size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

BatchSegmentFn make_batch_fn(SegmentFn fn) {
  return [fn = std::move(fn)](const std::vector<std::u32string>& words) {
    std::vector<Segmentation> out;
    out.reserve(words.size());
    for (const std::u32string& w : words) out.push_back(fn(w));
    return out;
  };
}

bool is_junk(const Segmentation& seg) {
  if (seg.size() < 2) return false;
  size_t singles = 0;
  for (const Span& s : seg) singles += s.end - s.begin == 1;
  return 2 * singles > seg.size();
}

double junk_rate_of(const std::vector<Segmentation>& segs) {
  if (segs.empty()) throw EmptyInputError("junk rate needs at least one word");
  size_t junk = 0;
  for (const Segmentation& s : segs) junk += is_junk(s);
  return static_cast<double>(junk) / static_cast<double>(segs.size());
}

double junk_rate(const SegmentFn& tokenizer, const std::vector<std::u32string>& words) {
  return junk_rate_of(make_batch_fn(tokenizer)(words));
}

std::map<int, double> histogram_of(const std::vector<Segmentation>& segs) {
  if (segs.empty()) throw EmptyInputError("histogram needs at least one word");
  std::map<int, double> h;
  for (const Segmentation& s : segs) h[static_cast<int>(s.size())] += 1.0;
  for (auto& [count, frac] : h) frac /= static_cast<double>(segs.size());
  return h;
}

std::map<int, double> subword_count_histogram(const SegmentFn& tokenizer,
                                              const std::vector<std::u32string>& words) {
  return histogram_of(make_batch_fn(tokenizer)(words));
}

double avg_subwords(const SegmentFn& tokenizer,
                    const std::vector<std::vector<std::u32string>>& sentences) {
  if (sentences.empty()) throw EmptyInputError("average needs at least one sentence");
  double total = 0.0;
  for (const auto& sentence : sentences) {
    if (sentence.empty()) throw EmptyInputError("empty sentence");
    for (const std::u32string& w : sentence) total += static_cast<double>(tokenizer(w).size());
  }
  return total / static_cast<double>(sentences.size());
}

namespace {

bool swap_applicable(const std::u32string& w) {
  for (size_t i = 0; i + 1 < w.size(); ++i)
    if (w[i] != w[i + 1]) return true;
  return false;
}

bool substitute_applicable(const std::u32string& w, const std::vector<char32_t>& alphabet) {
  for (char32_t a : alphabet)
    for (char32_t c : w)
      if (a != c) return true;
  return false;
}

std::u32string apply_edit(const std::u32string& w, NoiseOp op,
                          const std::vector<char32_t>& alphabet, Rng& rng) {
  std::u32string out = w;
  switch (op) {
    case NoiseOp::swap: {
      std::vector<size_t> spots;
      for (size_t i = 0; i + 1 < w.size(); ++i)
        if (w[i] != w[i + 1]) spots.push_back(i);
      const size_t i = spots[static_cast<size_t>(rng.below(spots.size()))];
      std::swap(out[i], out[i + 1]);
      return out;
    }
    case NoiseOp::erase: {
      const size_t i = static_cast<size_t>(rng.below(w.size()));
      out.erase(i, 1);
      return out;
    }
    case NoiseOp::insert: {
      const size_t i = static_cast<size_t>(rng.below(w.size() + 1));
      const char32_t c = alphabet[static_cast<size_t>(rng.below(alphabet.size()))];
      out.insert(i, 1, c);
      return out;
    }
    case NoiseOp::substitute: {
      // Pick uniformly over (position, replacement) pairs that change the word.
      std::vector<size_t> spots;
      for (size_t i = 0; i < w.size(); ++i) {
        for (char32_t a : alphabet)
          if (a != w[i]) {
            spots.push_back(i);
            break;
          }
      }
      const size_t i = spots[static_cast<size_t>(rng.below(spots.size()))];
      std::vector<char32_t> choices;
      for (char32_t a : alphabet)
        if (a != w[i]) choices.push_back(a);
      out[i] = choices[static_cast<size_t>(rng.below(choices.size()))];
      return out;
    }
  }
  throw ConfigError("unknown noise operation");
}

}  // namespace

std::vector<std::u32string> inject_noise(const std::vector<std::u32string>& words,
                                         const NoiseSpec& spec) {
  if (words.empty()) throw EmptyInputError("cannot perturb an empty word list");
  if (!(spec.word_fraction >= 0.0 && spec.word_fraction <= 1.0))
    throw ConfigError("word_fraction must be in [0, 1]");
  if (spec.ops.empty()) throw ConfigError("noise spec needs at least one operation");
  for (const std::u32string& w : words)
    if (w.empty()) throw EmptyInputError("cannot perturb an empty word");

  std::set<char32_t> chars;
  for (const std::u32string& w : words)
    for (char32_t c : w) chars.insert(c);
  const std::vector<char32_t> alphabet(chars.begin(), chars.end());

  std::vector<std::u32string> out = words;
  const size_t k =
      static_cast<size_t>(std::floor(static_cast<double>(words.size()) * spec.word_fraction));
  if (k == 0) return out;

  Rng rng(spec.seed);
  const std::vector<size_t> picked = rng.sample_without_replacement(words.size(), k);
  for (size_t wi : picked) {
    const std::u32string& w = out[wi];
    std::vector<NoiseOp> usable;
    for (NoiseOp op : spec.ops) {
      const bool ok = (op == NoiseOp::swap && swap_applicable(w)) ||
                      (op == NoiseOp::erase && w.size() >= 2) ||
                      (op == NoiseOp::insert) ||
                      (op == NoiseOp::substitute && substitute_applicable(w, alphabet));
      if (ok) usable.push_back(op);
    }
    if (usable.empty()) continue;  // nothing in spec.ops can change this word
    const NoiseOp op = usable[static_cast<size_t>(rng.below(usable.size()))];
    out[wi] = apply_edit(w, op, alphabet, rng);
  }
  return out;
}

std::set<std::u32string> neural_vocab_build(const TaggerModel& model, const WordTable& table,
                                            int vocab_size) {
  if (table.words.empty()) throw EmptyInputError("cannot build a vocabulary from an empty table");
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  std::vector<std::u32string> words;
  words.reserve(table.words.size());
  for (const auto& [w, c] : table.words) words.push_back(w);
  const std::vector<Segmentation> segs = tokenize_many(model, words);
  std::map<std::u32string, int64_t> counts;
  size_t i = 0;
  for (const auto& [w, c] : table.words) {
    for (const Span& s : segs[i])
      counts[w.substr(static_cast<size_t>(s.begin), static_cast<size_t>(s.end - s.begin))] += c;
    ++i;
  }
  std::vector<std::pair<std::u32string, int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::set<std::u32string> vocab;
  for (size_t j = 0; j < ranked.size() && j < static_cast<size_t>(vocab_size); ++j)
    vocab.insert(ranked[j].first);
  return vocab;
}

std::vector<MarkedSpan> vocab_segment(const std::set<std::u32string>& vocab,
                                      const TaggerModel& model, const std::u32string& word) {
  const Segmentation seg = tokenize(model, word);
  std::vector<MarkedSpan> out;
  out.reserve(seg.size());
  for (const Span& s : seg) {
    MarkedSpan ms;
    ms.span = s;
    ms.unk = vocab.count(word.substr(static_cast<size_t>(s.begin),
                                     static_cast<size_t>(s.end - s.begin))) == 0;
    out.push_back(ms);
  }
  return out;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

// Macro-averaged boundary-set F1; two boundary-free words score 1 via the
// empty-set conventions.
double mean_self_f1(const std::vector<Segmentation>& noisy,
                    const std::vector<Segmentation>& clean) {
  double total = 0.0;
  for (size_t i = 0; i < noisy.size(); ++i) {
    double p, r, f1;
    set_prf(boundary_set(noisy[i]), boundary_set(clean[i]), &p, &r, &f1);
    total += f1;
  }
  return total / static_cast<double>(noisy.size());
}

}  // namespace

std::vector<ReportRow> compare_report(const std::map<std::string, BatchSegmentFn>& tokenizers,
                                      const std::vector<std::u32string>& words,
                                      const std::vector<std::vector<std::u32string>>& sentences,
                                      const std::vector<double>& noise_grid, uint64_t seed) {
  if (tokenizers.empty()) throw EmptyInputError("report needs at least one tokenizer");
  if (words.empty()) throw EmptyInputError("report needs at least one word");
  if (sentences.empty()) throw EmptyInputError("report needs at least one sentence");
  if (noise_grid.empty()) throw EmptyInputError("report needs at least one noise level");

  // Flatten sentences so the exact perturbed-word count applies corpus-wide.
  std::vector<std::u32string> flat;
  for (const auto& s : sentences) {
    if (s.empty()) throw EmptyInputError("empty sentence");
    flat.insert(flat.end(), s.begin(), s.end());
  }

  std::vector<ReportRow> rows;
  for (const auto& [name, segment] : tokenizers) {
    const std::vector<Segmentation> clean_segs = segment(words);
    for (size_t li = 0; li < noise_grid.size(); ++li) {
      NoiseSpec spec;
      spec.word_fraction = noise_grid[li];
      spec.seed = mix_seed(seed, 2 * li);
      const std::vector<std::u32string> noisy_words = inject_noise(words, spec);
      spec.seed = mix_seed(seed, 2 * li + 1);
      const std::vector<std::u32string> noisy_flat = inject_noise(flat, spec);

      const std::vector<Segmentation> noisy_segs = segment(noisy_words);
      const std::vector<Segmentation> flat_segs = segment(noisy_flat);

      ReportRow row;
      row.tokenizer = name;
      row.noise_fraction = noise_grid[li];
      row.junk_rate = junk_rate_of(noisy_segs);
      double pieces = 0.0;
      for (const Segmentation& s : flat_segs) pieces += static_cast<double>(s.size());
      row.avg_subwords = pieces / static_cast<double>(sentences.size());
      row.self_f1 = mean_self_f1(noisy_segs, clean_segs);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string report_to_json(const std::vector<ReportRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ReportRow& r : rows) {
    arr.push_back({{"tokenizer", r.tokenizer},
                   {"noise_fraction", r.noise_fraction},
                   {"junk_rate", r.junk_rate},
                   {"avg_subwords", r.avg_subwords},
                   {"self_f1", r.self_f1}});
  }
  return arr.dump(2) + "\n";
}

std::string report_to_csv(const std::vector<ReportRow>& rows) {
  std::string out = "tokenizer,noise_fraction,junk_rate,avg_subwords,self_f1\n";
  for (const ReportRow& r : rows) {
    out += r.tokenizer;
    out.push_back(',');
    out += fmt_f6(r.noise_fraction);
    out.push_back(',');
    out += fmt_f6(r.junk_rate);
    out.push_back(',');
    out += fmt_f6(r.avg_subwords);
    out.push_back(',');
    out += fmt_f6(r.self_f1);
    out.push_back('\n');
  }
  return out;
}

}  // namespace ntk
