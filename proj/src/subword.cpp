#include "ntk/subword.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "ntk/format.hpp"
#include "ntk/utf8.hpp"

namespace ntk {

namespace {

// ---------------------------------------------------------------------------
// Shared Viterbi over an indexed piece inventory.

struct PieceLookup {
  const std::unordered_map<std::u32string, int32_t>* ids;
  const std::vector<double>* logp;
  int max_len;
};

struct ViterbiCell {
  double score = -std::numeric_limits<double>::infinity();
  int32_t pieces = 0;
  int32_t len = 0;  // length of the piece starting here on the best path
  int32_t piece_id = -1;
};

// Right-to-left DP. Processing suffixes makes the tie rule compositional:
// at each start position a tie on (score, piece count) is resolved toward
// the longest first piece, which yields the leftmost-longest segmentation.
ScoredSegmentation viterbi_indexed(const PieceLookup& lk, const std::u32string& word,
                                   double unk_logprob, std::vector<int32_t>* used_pieces) {
  const int n = static_cast<int>(word.size());
  if (n == 0) throw EmptyInputError("cannot segment an empty word");
  std::vector<ViterbiCell> best(static_cast<size_t>(n) + 1);
  best[n].score = 0.0;
  std::u32string key;
  for (int i = n - 1; i >= 0; --i) {
    const int max_l = std::min(lk.max_len > 0 ? lk.max_len : 1, n - i);
    for (int l = 1; l <= max_l; ++l) {
      const ViterbiCell& nxt = best[i + l];
      if (nxt.pieces == 0 && i + l != n) continue;  // unreachable suffix
      key.assign(word, static_cast<size_t>(i), static_cast<size_t>(l));
      double lp;
      int32_t id = -1;
      const auto it = lk.ids->find(key);
      if (it != lk.ids->end()) {
        id = it->second;
        lp = (*lk.logp)[static_cast<size_t>(id)];
      } else if (l == 1) {
        lp = unk_logprob;
      } else {
        continue;
      }
      const double score = lp + nxt.score;
      const int32_t pieces = 1 + nxt.pieces;
      ViterbiCell& cur = best[i];
      const bool better = score > cur.score ||
                          (score == cur.score &&
                           (pieces < cur.pieces || (pieces == cur.pieces && l > cur.len)));
      if (better) {
        cur.score = score;
        cur.pieces = pieces;
        cur.len = l;
        cur.piece_id = id;
      }
    }
  }
  ScoredSegmentation out;
  out.score = best[0].score;
  int i = 0;
  while (i < n) {
    const ViterbiCell& c = best[i];
    out.seg.push_back({i, i + c.len});
    if (used_pieces && c.piece_id >= 0) used_pieces->push_back(c.piece_id);
    i += c.len;
  }
  return out;
}

uint64_t pair_key(int32_t a, int32_t b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
         static_cast<uint64_t>(static_cast<uint32_t>(b));
}

std::vector<char32_t> distinct_chars(const WordTable& table) {
  std::set<char32_t> chars;
  for (const auto& [word, count] : table.words)
    for (char32_t c : word) chars.insert(c);
  return {chars.begin(), chars.end()};
}

void require_nonempty(const WordTable& table) {
  if (table.words.empty()) throw EmptyInputError("cannot train a tokenizer on an empty table");
}

}  // namespace

// ---------------------------------------------------------------------------
// Unigram

UnigramIndex::UnigramIndex(const UnigramModel& model) {
  logp_.reserve(model.pieces.size());
  for (const auto& [piece, lp] : model.pieces) {
    ids_.emplace(piece, static_cast<int32_t>(logp_.size()));
    logp_.push_back(lp);
    max_len_ = std::max(max_len_, static_cast<int>(piece.size()));
  }
}

ScoredSegmentation UnigramIndex::viterbi(const std::u32string& word, double unk_logprob) const {
  PieceLookup lk{&ids_, &logp_, max_len_};
  return viterbi_indexed(lk, word, unk_logprob, nullptr);
}

Segmentation unigram_segment(const UnigramModel& model, const std::u32string& word,
                             double unk_logprob) {
  return UnigramIndex(model).viterbi(word, unk_logprob).seg;
}

namespace {

// Mutable inventory used by the hard-EM trainer.
struct EmState {
  std::vector<std::u32string> pieces;
  std::vector<double> logp;
  std::vector<int64_t> usage;
  std::unordered_map<std::u32string, int32_t> ids;
  int max_len = 1;

  void rebuild_ids() {
    ids.clear();
    max_len = 1;
    for (size_t i = 0; i < pieces.size(); ++i) {
      ids.emplace(pieces[i], static_cast<int32_t>(i));
      max_len = std::max(max_len, static_cast<int>(pieces[i].size()));
    }
  }
};

void em_round(EmState& st, const WordTable& table, double eps) {
  st.usage.assign(st.pieces.size(), 0);
  PieceLookup lk{&st.ids, &st.logp, st.max_len};
  std::vector<int32_t> used;
  for (const auto& [word, count] : table.words) {
    used.clear();
    viterbi_indexed(lk, word, -1e9, &used);
    for (int32_t id : used) st.usage[static_cast<size_t>(id)] += count;
  }
  double z = 0.0;
  for (int64_t u : st.usage) z += static_cast<double>(u) + eps;
  for (size_t i = 0; i < st.pieces.size(); ++i) {
    st.logp[i] = std::log((static_cast<double>(st.usage[i]) + eps) / z);
  }
}

}  // namespace

UnigramModel train_unigram(const WordTable& table, int64_t vocab_size,
                           const UnigramTrainConfig& cfg) {
  require_nonempty(table);
  if (cfg.max_piece_len < 1 || cfg.seed_multiplier < 1 || cfg.em_rounds < 0 ||
      cfg.min_count < 1 || cfg.shrink_fraction <= 0.0 || cfg.shrink_fraction >= 1.0 ||
      cfg.smoothing_eps <= 0.0)
    throw ConfigError("invalid unigram training config");
  const std::vector<char32_t> chars = distinct_chars(table);
  if (vocab_size < static_cast<int64_t>(chars.size()))
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                      std::to_string(chars.size()) + " distinct characters");

  // Seed inventory: frequent substrings scored by count*length, capped, plus
  // every single character.
  std::unordered_map<std::u32string, int64_t> sub_counts;
  std::unordered_map<char32_t, int64_t> char_counts;
  for (const auto& [word, count] : table.words) {
    const int n = static_cast<int>(word.size());
    for (int i = 0; i < n; ++i) {
      char_counts[word[i]] += count;
      const int max_l = std::min(cfg.max_piece_len, n - i);
      for (int l = 2; l <= max_l; ++l) {
        sub_counts[word.substr(static_cast<size_t>(i), static_cast<size_t>(l))] += count;
      }
    }
  }
  struct Seed {
    std::u32string piece;
    int64_t count;
    int64_t score;
  };
  std::vector<Seed> seeds;
  seeds.reserve(sub_counts.size());
  for (auto& [piece, count] : sub_counts) {
    if (count >= cfg.min_count)
      seeds.push_back({piece, count, count * static_cast<int64_t>(piece.size())});
  }
  std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.piece < b.piece;
  });
  const size_t cap = static_cast<size_t>(cfg.seed_multiplier) * static_cast<size_t>(vocab_size);
  if (seeds.size() > cap) seeds.resize(cap);

  EmState st;
  double z = 0.0;
  for (char32_t c : chars) z += static_cast<double>(char_counts[c]);
  for (const Seed& s : seeds) z += static_cast<double>(s.count);
  for (char32_t c : chars) {
    st.pieces.push_back(std::u32string(1, c));
    st.logp.push_back(std::log(static_cast<double>(char_counts[c]) / z));
  }
  for (const Seed& s : seeds) {
    st.pieces.push_back(s.piece);
    st.logp.push_back(std::log(static_cast<double>(s.count) / z));
  }
  st.rebuild_ids();

  for (int r = 0; r < cfg.em_rounds; ++r) em_round(st, table, cfg.smoothing_eps);
  if (cfg.em_rounds == 0) em_round(st, table, cfg.smoothing_eps);

  // Prune lowest-contribution multi-character pieces until the inventory
  // fits. Contribution is the likelihood advantage of keeping the piece over
  // spelling its occurrences in single characters; Viterbi optimality makes
  // it nonnegative, and unused pieces contribute zero.
  while (static_cast<int64_t>(st.pieces.size()) > vocab_size) {
    struct Cand {
      double contribution;
      int32_t id;
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < st.pieces.size(); ++i) {
      const std::u32string& p = st.pieces[i];
      if (p.size() < 2) continue;
      double char_cost = 0.0;
      for (char32_t c : p) {
        const auto it = st.ids.find(std::u32string(1, c));
        char_cost += st.logp[static_cast<size_t>(it->second)];
      }
      const double gain = st.logp[i] - char_cost;
      cands.push_back({static_cast<double>(st.usage[i]) * gain, static_cast<int32_t>(i)});
    }
    const int64_t excess = static_cast<int64_t>(st.pieces.size()) - vocab_size;
    int64_t n_remove = static_cast<int64_t>(cfg.shrink_fraction *
                                            static_cast<double>(st.pieces.size()));
    n_remove = std::min(std::max<int64_t>(n_remove, 1), excess);
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.contribution != b.contribution) return a.contribution < b.contribution;
      return st.pieces[static_cast<size_t>(a.id)] < st.pieces[static_cast<size_t>(b.id)];
    });
    std::unordered_set<int32_t> drop;
    for (int64_t i = 0; i < n_remove; ++i) drop.insert(cands[static_cast<size_t>(i)].id);
    EmState next;
    for (size_t i = 0; i < st.pieces.size(); ++i) {
      if (drop.count(static_cast<int32_t>(i))) continue;
      next.pieces.push_back(std::move(st.pieces[i]));
      next.logp.push_back(st.logp[i]);
    }
    next.rebuild_ids();
    st = std::move(next);
    em_round(st, table, cfg.smoothing_eps);
  }

  UnigramModel model;
  for (size_t i = 0; i < st.pieces.size(); ++i) {
    model.pieces.emplace(st.pieces[i], quantize_g9(st.logp[i]));
  }
  return model;
}

// ---------------------------------------------------------------------------
// BPE

namespace {

// Symbol interning shared by the BPE and WordPiece trainers.
struct SymbolTable {
  std::vector<std::u32string> text;
  std::unordered_map<std::u32string, int32_t> ids;

  int32_t intern(const std::u32string& s) {
    const auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    const int32_t id = static_cast<int32_t>(text.size());
    ids.emplace(s, id);
    text.push_back(s);
    return id;
  }
};

struct CountedWord {
  std::vector<int32_t> syms;
  int64_t count;
};

struct HeapEntry {
  int64_t count;
  std::u32string left, right;
  uint64_t key;
};

struct HeapLess {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.count != b.count) return a.count < b.count;
    if (a.left != b.left) return a.left > b.left;
    return a.right > b.right;
  }
};

// Applies one merge rule left to right; returns true if anything merged.
bool apply_rule(std::vector<int32_t>& syms, int32_t x, int32_t y, int32_t z) {
  bool merged = false;
  size_t w = 0;
  for (size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == x && syms[r + 1] == y) {
      syms[w++] = z;
      r += 2;
      merged = true;
    } else {
      syms[w++] = syms[r++];
    }
  }
  syms.resize(w);
  return merged;
}

}  // namespace

BpeModel train_bpe(const WordTable& table, int64_t vocab_size) {
  require_nonempty(table);
  const std::vector<char32_t> chars = distinct_chars(table);
  if (vocab_size < static_cast<int64_t>(chars.size()))
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                      std::to_string(chars.size()) + " distinct characters");
  const int64_t merge_budget = vocab_size - static_cast<int64_t>(chars.size());

  BpeModel model;
  for (char32_t c : chars) model.pieces.insert(std::u32string(1, c));

  SymbolTable syms;
  std::vector<CountedWord> words;
  words.reserve(table.words.size());
  std::unordered_map<uint64_t, int64_t> pair_count;
  std::unordered_map<uint64_t, std::vector<int32_t>> pair_words;
  for (const auto& [word, count] : table.words) {
    CountedWord cw;
    cw.count = count;
    cw.syms.reserve(word.size());
    for (char32_t c : word) cw.syms.push_back(syms.intern(std::u32string(1, c)));
    const int32_t wid = static_cast<int32_t>(words.size());
    for (size_t i = 0; i + 1 < cw.syms.size(); ++i) {
      const uint64_t k = pair_key(cw.syms[i], cw.syms[i + 1]);
      pair_count[k] += count;
      pair_words[k].push_back(wid);
    }
    words.push_back(std::move(cw));
  }

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLess> heap;
  for (const auto& [k, cnt] : pair_count) {
    if (cnt >= 2)
      heap.push({cnt, syms.text[static_cast<size_t>(k >> 32)],
                 syms.text[static_cast<size_t>(k & 0xffffffffu)], k});
  }

  while (static_cast<int64_t>(model.merges.size()) < merge_budget && !heap.empty()) {
    const HeapEntry top = heap.top();
    heap.pop();
    const auto it = pair_count.find(top.key);
    if (it == pair_count.end() || it->second != top.count || it->second < 2) continue;

    const int32_t x = static_cast<int32_t>(top.key >> 32);
    const int32_t y = static_cast<int32_t>(top.key & 0xffffffffu);
    const int32_t z = syms.intern(top.left + top.right);
    model.merges.emplace_back(top.left, top.right);
    model.pieces.insert(top.left + top.right);

    std::vector<int32_t> affected = std::move(pair_words[top.key]);
    pair_words.erase(top.key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

    std::unordered_map<uint64_t, int64_t> delta;
    for (int32_t wid : affected) {
      CountedWord& cw = words[static_cast<size_t>(wid)];
      bool has = false;
      for (size_t i = 0; i + 1 < cw.syms.size(); ++i) {
        if (cw.syms[i] == x && cw.syms[i + 1] == y) {
          has = true;
          break;
        }
      }
      if (!has) continue;  // stale index entry
      for (size_t i = 0; i + 1 < cw.syms.size(); ++i)
        delta[pair_key(cw.syms[i], cw.syms[i + 1])] -= cw.count;
      apply_rule(cw.syms, x, y, z);
      for (size_t i = 0; i + 1 < cw.syms.size(); ++i) {
        const uint64_t k = pair_key(cw.syms[i], cw.syms[i + 1]);
        delta[k] += cw.count;
        pair_words[k].push_back(wid);
      }
    }
    for (const auto& [k, d] : delta) {
      if (d == 0) continue;
      const int64_t cnt = (pair_count[k] += d);
      if (cnt <= 0) {
        pair_count.erase(k);
      } else if (cnt >= 2) {
        heap.push({cnt, syms.text[static_cast<size_t>(k >> 32)],
                   syms.text[static_cast<size_t>(k & 0xffffffffu)], k});
      }
    }
  }
  return model;
}

namespace {

struct U32PairHash {
  size_t operator()(const std::pair<std::u32string, std::u32string>& p) const {
    const size_t h1 = std::hash<std::u32string>{}(p.first);
    const size_t h2 = std::hash<std::u32string>{}(p.second);
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ull + (h1 << 6) + (h1 >> 2));
  }
};

using MergeRanks =
    std::unordered_map<std::pair<std::u32string, std::u32string>, int32_t, U32PairHash>;

MergeRanks build_ranks(const BpeModel& model) {
  MergeRanks ranks;
  for (size_t i = 0; i < model.merges.size(); ++i) {
    // The first occurrence wins; a duplicate rule can never fire again.
    ranks.emplace(model.merges[i], static_cast<int32_t>(i));
  }
  return ranks;
}

// Sequential rule application via a rank-min loop. Each adjacency remembers
// the rank of the merge that created it: a rule that was already processed
// when an adjacency appeared (possible when two different rules produce the
// same text) must not fire on it.
Segmentation bpe_segment_indexed(const MergeRanks& ranks, const std::u32string& word) {
  const int n = static_cast<int>(word.size());
  if (n == 0) throw EmptyInputError("cannot segment an empty word");
  struct Sym {
    int32_t begin, end;
  };
  std::vector<Sym> syms;
  syms.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) syms.push_back({i, i + 1});
  std::vector<int32_t> born(static_cast<size_t>(n) > 0 ? static_cast<size_t>(n - 1) : 0, -1);

  auto piece = [&](const Sym& s) {
    return word.substr(static_cast<size_t>(s.begin), static_cast<size_t>(s.end - s.begin));
  };

  while (syms.size() > 1) {
    int32_t best_rank = std::numeric_limits<int32_t>::max();
    int best_gap = -1;
    for (size_t g = 0; g + 1 < syms.size(); ++g) {
      const auto it = ranks.find({piece(syms[g]), piece(syms[g + 1])});
      if (it == ranks.end()) continue;
      if (it->second <= born[g]) continue;  // rule pass predates this adjacency
      if (it->second < best_rank) {
        best_rank = it->second;
        best_gap = static_cast<int>(g);
      }
    }
    if (best_gap < 0) break;
    const size_t g = static_cast<size_t>(best_gap);
    syms[g].end = syms[g + 1].end;
    syms.erase(syms.begin() + static_cast<long>(g) + 1);
    born.erase(born.begin() + static_cast<long>(g));
    if (g > 0) born[g - 1] = best_rank;
    if (g < born.size()) born[g] = best_rank;
  }

  Segmentation out;
  out.reserve(syms.size());
  for (const Sym& s : syms) out.push_back({s.begin, s.end});
  return out;
}

}  // namespace

Segmentation bpe_segment(const BpeModel& model, const std::u32string& word) {
  return bpe_segment_indexed(build_ranks(model), word);
}

// ---------------------------------------------------------------------------
// WordPiece

namespace {

constexpr char32_t kContMarker[] = U"##";

std::u32string wp_file_form(const std::u32string& text, bool cont) {
  return cont ? kContMarker + text : text;
}

}  // namespace

WordPieceModel train_wordpiece(const WordTable& table, int64_t vocab_size) {
  require_nonempty(table);
  const std::vector<char32_t> chars = distinct_chars(table);

  WordPieceModel model;
  for (char32_t c : chars) {
    model.pieces.insert(std::u32string(1, c));
    model.pieces.insert(wp_file_form(std::u32string(1, c), true));
  }
  if (vocab_size < static_cast<int64_t>(model.pieces.size()))
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the " +
                      std::to_string(model.pieces.size()) +
                      " initial character pieces (plain and ## forms)");

  // Symbols are (text, continuation) pairs; texts are interned separately so
  // presence counts pool both forms of the same text.
  SymbolTable texts;
  struct WpSym {
    int32_t text_id;
    bool cont;
  };
  std::vector<WpSym> sym_defs;
  std::map<std::pair<int32_t, bool>, int32_t> sym_ids;
  auto intern_sym = [&](int32_t text_id, bool cont) {
    const auto it = sym_ids.find({text_id, cont});
    if (it != sym_ids.end()) return it->second;
    const int32_t id = static_cast<int32_t>(sym_defs.size());
    sym_ids.emplace(std::make_pair(text_id, cont), id);
    sym_defs.push_back({text_id, cont});
    return id;
  };

  std::vector<CountedWord> words;
  std::vector<int64_t> presence;  // by text id, word-presence weighted by count
  auto bump_presence = [&](int32_t text_id, int64_t d) {
    if (static_cast<size_t>(text_id) >= presence.size())
      presence.resize(static_cast<size_t>(text_id) + 1, 0);
    presence[static_cast<size_t>(text_id)] += d;
  };
  std::unordered_map<uint64_t, int64_t> pair_count;
  std::unordered_map<uint64_t, std::vector<int32_t>> pair_words;

  for (const auto& [word, count] : table.words) {
    CountedWord cw;
    cw.count = count;
    cw.syms.reserve(word.size());
    for (size_t i = 0; i < word.size(); ++i) {
      const int32_t text_id = texts.intern(std::u32string(1, word[i]));
      cw.syms.push_back(intern_sym(text_id, i > 0));
    }
    const int32_t wid = static_cast<int32_t>(words.size());
    std::set<int32_t> seen_texts;
    for (size_t i = 0; i < cw.syms.size(); ++i) {
      seen_texts.insert(sym_defs[static_cast<size_t>(cw.syms[i])].text_id);
      if (i + 1 < cw.syms.size()) {
        const uint64_t k = pair_key(cw.syms[i], cw.syms[i + 1]);
        pair_count[k] += count;
        pair_words[k].push_back(wid);
      }
    }
    for (int32_t t : seen_texts) bump_presence(t, count);
    words.push_back(std::move(cw));
  }

  auto file_form_of_sym = [&](int32_t sym) {
    const WpSym& d = sym_defs[static_cast<size_t>(sym)];
    return wp_file_form(texts.text[static_cast<size_t>(d.text_id)], d.cont);
  };

  while (static_cast<int64_t>(model.pieces.size()) < vocab_size) {
    // Exact integer score comparison: cnt_a/(la*ra) vs cnt_b/(lb*rb) by
    // cross-multiplication, so ranking has no floating-point ties.
    uint64_t best_key = 0;
    int64_t best_cnt = 0;
    __int128 best_num = 0;  // best_cnt
    __int128 best_den = 1;  // presence(left)*presence(right)
    bool have_best = false;
    for (const auto& [k, cnt] : pair_count) {
      if (cnt < 2) continue;
      const WpSym& l = sym_defs[static_cast<size_t>(k >> 32)];
      const WpSym& r = sym_defs[static_cast<size_t>(k & 0xffffffffu)];
      const __int128 den = static_cast<__int128>(presence[static_cast<size_t>(l.text_id)]) *
                           presence[static_cast<size_t>(r.text_id)];
      const __int128 num = cnt;
      bool better = false;
      if (!have_best) {
        better = true;
      } else {
        const __int128 lhs = num * best_den;
        const __int128 rhs = best_num * den;
        if (lhs != rhs) {
          better = lhs > rhs;
        } else {
          const auto lf = file_form_of_sym(static_cast<int32_t>(k >> 32));
          const auto rf = file_form_of_sym(static_cast<int32_t>(k & 0xffffffffu));
          const auto bl = file_form_of_sym(static_cast<int32_t>(best_key >> 32));
          const auto br = file_form_of_sym(static_cast<int32_t>(best_key & 0xffffffffu));
          better = std::tie(lf, rf) < std::tie(bl, br);
        }
      }
      if (better) {
        best_key = k;
        best_cnt = cnt;
        best_num = num;
        best_den = den;
        have_best = true;
      }
    }
    if (!have_best) break;

    const int32_t x = static_cast<int32_t>(best_key >> 32);
    const int32_t y = static_cast<int32_t>(best_key & 0xffffffffu);
    // Copies, not references: intern_sym below may grow sym_defs.
    const WpSym dx = sym_defs[static_cast<size_t>(x)];
    const WpSym dy = sym_defs[static_cast<size_t>(y)];
    const std::u32string z_text = texts.text[static_cast<size_t>(dx.text_id)] +
                                  texts.text[static_cast<size_t>(dy.text_id)];
    const int32_t z_text_id = texts.intern(z_text);
    const int32_t z = intern_sym(z_text_id, dx.cont);
    model.pieces.insert(wp_file_form(z_text, dx.cont));

    std::vector<int32_t> affected = std::move(pair_words[best_key]);
    pair_words.erase(best_key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

    std::unordered_map<uint64_t, int64_t> delta;
    for (int32_t wid : affected) {
      CountedWord& cw = words[static_cast<size_t>(wid)];
      bool has = false;
      for (size_t i = 0; i + 1 < cw.syms.size(); ++i) {
        if (cw.syms[i] == x && cw.syms[i + 1] == y) {
          has = true;
          break;
        }
      }
      if (!has) continue;
      std::set<int32_t> old_texts, new_texts;
      for (size_t i = 0; i + 1 < cw.syms.size(); ++i)
        delta[pair_key(cw.syms[i], cw.syms[i + 1])] -= cw.count;
      for (int32_t s : cw.syms) old_texts.insert(sym_defs[static_cast<size_t>(s)].text_id);
      apply_rule(cw.syms, x, y, z);
      for (size_t i = 0; i + 1 < cw.syms.size(); ++i) {
        const uint64_t k = pair_key(cw.syms[i], cw.syms[i + 1]);
        delta[k] += cw.count;
        pair_words[k].push_back(wid);
      }
      for (int32_t s : cw.syms) new_texts.insert(sym_defs[static_cast<size_t>(s)].text_id);
      for (int32_t t : old_texts)
        if (!new_texts.count(t)) bump_presence(t, -cw.count);
      for (int32_t t : new_texts)
        if (!old_texts.count(t)) bump_presence(t, cw.count);
    }
    for (const auto& [k, d] : delta) {
      if (d == 0) continue;
      const int64_t cnt = (pair_count[k] += d);
      if (cnt <= 0) pair_count.erase(k);
    }
  }
  return model;
}

Segmentation wordpiece_segment(const WordPieceModel& model, const std::u32string& word) {
  const int n = static_cast<int>(word.size());
  if (n == 0) throw EmptyInputError("cannot segment an empty word");
  int max_len = 1;
  for (const auto& p : model.pieces) {
    const int len = static_cast<int>(p.size()) -
                    (p.size() > 2 && p[0] == U'#' && p[1] == U'#' ? 2 : 0);
    max_len = std::max(max_len, len);
  }
  Segmentation out;
  int pos = 0;
  std::u32string key;
  while (pos < n) {
    int match = 0;
    for (int l = std::min(max_len, n - pos); l >= 1; --l) {
      key.assign(pos == 0 ? U"" : kContMarker);
      key.append(word, static_cast<size_t>(pos), static_cast<size_t>(l));
      if (model.pieces.count(key)) {
        match = l;
        break;
      }
    }
    if (match == 0) return {{0, n}};  // unknown content: whole word, one segment
    out.push_back({pos, pos + match});
    pos += match;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

const char* teacher_kind_name(TeacherKind k) {
  switch (k) {
    case TeacherKind::unigram:
      return "unigram";
    case TeacherKind::bpe:
      return "bpe";
    case TeacherKind::wordpiece:
      return "wordpiece";
  }
  return "?";
}

TeacherKind teacher_kind_from_name(const std::string& name) {
  if (name == "unigram") return TeacherKind::unigram;
  if (name == "bpe") return TeacherKind::bpe;
  if (name == "wordpiece") return TeacherKind::wordpiece;
  throw ConfigError("unknown teacher kind '" + name + "'");
}

TeacherKind teacher_kind(const TeacherModel& m) {
  if (std::holds_alternative<UnigramModel>(m)) return TeacherKind::unigram;
  if (std::holds_alternative<BpeModel>(m)) return TeacherKind::bpe;
  return TeacherKind::wordpiece;
}

std::string serialize_unigram(const UnigramModel& m) {
  std::vector<std::pair<std::u32string, double>> rows(m.pieces.begin(), m.pieces.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::string out;
  for (const auto& [piece, lp] : rows) {
    out += utf8_encode(piece);
    out.push_back('\t');
    out += fmt_g9(lp);
    out.push_back('\n');
  }
  return out;
}

UnigramModel parse_unigram(const std::string& text) {
  UnigramModel m;
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("unigram file missing final newline");
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw FormatError("unigram file line " + std::to_string(line_no) +
                        " is not piece<TAB>logprob");
    const std::u32string piece = utf8_decode(line.substr(0, tab));
    const std::string num = line.substr(tab + 1);
    char* end = nullptr;
    const double lp = std::strtod(num.c_str(), &end);
    if (num.empty() || end != num.c_str() + num.size())
      throw FormatError("unigram file line " + std::to_string(line_no) +
                        " has a malformed logprob");
    if (!(lp <= 0.0) || !std::isfinite(lp))
      throw FormatError("unigram file line " + std::to_string(line_no) +
                        " has logprob > 0 or non-finite");
    if (!m.pieces.emplace(piece, lp).second)
      throw FormatError("unigram file line " + std::to_string(line_no) + " repeats a piece");
  }
  if (m.pieces.empty()) throw FormatError("unigram file has no pieces");
  return m;
}

std::string serialize_bpe(const BpeModel& m) {
  std::string out = "#merges\n";
  for (const auto& [l, r] : m.merges) {
    out += utf8_encode(l);
    out.push_back(' ');
    out += utf8_encode(r);
    out.push_back('\n');
  }
  return out;
}

BpeModel parse_bpe(const std::string& text) {
  BpeModel m;
  size_t pos = 0;
  int line_no = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    const size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("bpe file missing final newline");
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!saw_header) {
      if (line != "#merges") throw FormatError("bpe file must start with a #merges header");
      saw_header = true;
      continue;
    }
    const size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw FormatError("bpe file line " + std::to_string(line_no) + " is not left<SPACE>right");
    m.merges.emplace_back(utf8_decode(line.substr(0, sp)), utf8_decode(line.substr(sp + 1)));
  }
  if (!saw_header) throw FormatError("bpe file must start with a #merges header");
  for (const auto& [l, r] : m.merges) {
    for (char32_t c : l) m.pieces.insert(std::u32string(1, c));
    for (char32_t c : r) m.pieces.insert(std::u32string(1, c));
    m.pieces.insert(l + r);
  }
  return m;
}

std::string serialize_wordpiece(const WordPieceModel& m) {
  std::string out;
  for (const auto& p : m.pieces) {
    out += utf8_encode(p);
    out.push_back('\n');
  }
  return out;
}

WordPieceModel parse_wordpiece(const std::string& text) {
  WordPieceModel m;
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("wordpiece file missing final newline");
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty())
      throw FormatError("wordpiece file line " + std::to_string(line_no) + " is empty");
    if (!m.pieces.insert(utf8_decode(line)).second)
      throw FormatError("wordpiece file line " + std::to_string(line_no) + " repeats a piece");
  }
  if (m.pieces.empty()) throw FormatError("wordpiece file has no pieces");
  return m;
}

std::string serialize_teacher(const TeacherModel& m) {
  switch (teacher_kind(m)) {
    case TeacherKind::unigram:
      return serialize_unigram(std::get<UnigramModel>(m));
    case TeacherKind::bpe:
      return serialize_bpe(std::get<BpeModel>(m));
    case TeacherKind::wordpiece:
      return serialize_wordpiece(std::get<WordPieceModel>(m));
  }
  throw StateError("unreachable");
}

TeacherModel parse_teacher(const std::string& text) {
  const size_t nl = text.find('\n');
  const std::string first = nl == std::string::npos ? text : text.substr(0, nl);
  if (first == "#merges") return parse_bpe(text);
  if (first.find('\t') != std::string::npos) return parse_unigram(text);
  return parse_wordpiece(text);
}

Segmentation teacher_segment(const TeacherModel& m, const std::u32string& word) {
  return make_segment_fn(m)(word);
}

SegmentFn make_segment_fn(const TeacherModel& m) {
  switch (teacher_kind(m)) {
    case TeacherKind::unigram: {
      auto idx = std::make_shared<UnigramIndex>(std::get<UnigramModel>(m));
      return [idx](const std::u32string& w) { return idx->viterbi(w).seg; };
    }
    case TeacherKind::bpe: {
      auto ranks = std::make_shared<MergeRanks>(build_ranks(std::get<BpeModel>(m)));
      return [ranks](const std::u32string& w) { return bpe_segment_indexed(*ranks, w); };
    }
    case TeacherKind::wordpiece: {
      auto model = std::make_shared<WordPieceModel>(std::get<WordPieceModel>(m));
      return [model](const std::u32string& w) { return wordpiece_segment(*model, w); };
    }
  }
  throw StateError("unreachable");
}

}  // namespace ntk
