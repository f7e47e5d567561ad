#include "ntk/endtask.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "ntk/evalkit.hpp"
#include "ntk/optim.hpp"
#include "ntk/rng.hpp"
#include "ntk/utf8.hpp"

namespace ntk {

std::vector<std::pair<std::string, Tensor*>> TaskHead::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("proj", &proj);
  for (size_t l = 0; l < lstm.size(); ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    out.emplace_back(p + "fwd.wx", &lstm[l].fwd.wx);
    out.emplace_back(p + "fwd.wh", &lstm[l].fwd.wh);
    out.emplace_back(p + "fwd.b", &lstm[l].fwd.b);
    out.emplace_back(p + "bwd.wx", &lstm[l].bwd.wx);
    out.emplace_back(p + "bwd.wh", &lstm[l].bwd.wh);
    out.emplace_back(p + "bwd.b", &lstm[l].bwd.b);
  }
  out.emplace_back("cls.w", &cls_w);
  out.emplace_back("cls.b", &cls_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> TaskHead::named_params() const {
  auto mutable_view = const_cast<TaskHead*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
  return out;
}

TaskHead init_task_head(int input_dim, int proj_dim, int classes, int layers, uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (proj_dim < 2 || proj_dim % 2 != 0)
    throw ConfigError("proj_dim must be even and >= 2 (two directions)");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  TaskHead head;
  head.input_dim = input_dim;
  head.proj_dim = proj_dim;
  head.classes = classes;
  head.proj = Tensor(input_dim, proj_dim);
  head.lstm.resize(static_cast<size_t>(layers));
  const int h = proj_dim / 2;
  for (auto& layer : head.lstm) {
    for (TaggerModel::Direction* d : {&layer.fwd, &layer.bwd}) {
      d->wx = Tensor(proj_dim, 4 * h);
      d->wh = Tensor(h, 4 * h);
      d->b = Tensor(1, 4 * h);
    }
  }
  head.cls_w = Tensor(proj_dim, classes);
  head.cls_b = Tensor(1, classes);
  Rng rng(seed);
  for (auto& [name, t] : head.named_params()) {
    if (is_bias_param(name)) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(t->rows));
    for (double& x : t->v) x = rng.real(-bound, bound);
    for (double& x : t->v) x = static_cast<double>(static_cast<float>(x));
  }
  return head;
}

Tensor encode_text(const TaggerModel& model, const std::vector<std::u32string>& words,
                   const std::optional<std::string>& lang) {
  if (words.empty()) throw EmptyInputError("cannot encode an empty text");
  std::vector<Tensor> pooled;
  int total = 0;
  for (const std::u32string& w : words) {
    pooled.push_back(pool_representations(model, w, lang).reps);
    total += pooled.back().rows;
  }
  Tensor out(total, model.config.hidden_out_dim);
  int r = 0;
  for (const Tensor& t : pooled) {
    std::copy(t.v.begin(), t.v.end(), out.row(r));
    r += t.rows;
  }
  return out;
}

Tensor char_baseline_encode(const TaggerModel& model,
                            const std::vector<std::u32string>& words) {
  if (words.empty()) throw EmptyInputError("cannot encode an empty text");
  Tensor out(static_cast<int>(words.size()), model.config.embed_dim);
  for (size_t i = 0; i < words.size(); ++i) {
    if (words[i].empty()) throw EmptyInputError("cannot encode an empty word");
    const std::vector<int32_t> ids = model.alphabet.encode(words[i]);
    for (int c = 0; c < model.config.embed_dim; ++c) {
      double best = model.embedding.at(ids[0], c);
      for (size_t k = 1; k < ids.size(); ++k)
        best = std::max(best, model.embedding.at(ids[k], c));
      out.at(static_cast<int>(i), c) = best;
    }
  }
  return out;
}

TaskGraph record_task_graph(Tape& tape, const TaggerModel& model, const TaskHead& head,
                            const std::vector<const LabeledExample*>& batch,
                            const std::vector<std::vector<Segmentation>>& segs,
                            EncoderKind kind, std::optional<int32_t> lang_id, bool with_loss,
                            bool tokenizer_grad, bool head_grad) {
  const int nb = static_cast<int>(batch.size());
  if (nb == 0) throw EmptyInputError("cannot record an empty task batch");
  for (const LabeledExample* ex : batch) {
    if (ex == nullptr || ex->words.empty()) throw EmptyInputError("empty text in task batch");
    for (const std::u32string& w : ex->words)
      if (w.empty()) throw EmptyInputError("empty word in task batch");
    if (with_loss && (ex->label < 0 || ex->label >= head.classes))
      throw ConfigError("label out of range for the task head");
  }
  const bool use_segs = kind == EncoderKind::tokenizer;
  if (use_segs) {
    if (segs.size() != batch.size())
      throw ShapeError("one segmentation list per batch example required");
    for (size_t e = 0; e < batch.size(); ++e)
      if (segs[e].size() != batch[e]->words.size())
        throw ShapeError("one segmentation per word required");
  }
  if (head.input_dim !=
      (use_segs ? model.config.hidden_out_dim : model.config.embed_dim))
    throw ShapeError("task head input width does not match the encoder");

  TaskGraph g;

  // Pooled unit vectors: segment vectors over model hiddens, or word vectors
  // over raw character embeddings.
  Tape::NodeId units = -1;
  std::vector<int> units_per_example(static_cast<size_t>(nb), 0);
  if (use_segs) {
    std::vector<std::vector<int32_t>> ids;
    std::vector<BatchExample> items;
    for (const LabeledExample* ex : batch)
      for (const std::u32string& w : ex->words) {
        ids.push_back(model.alphabet.encode(w));
        items.push_back({});
      }
    for (size_t i = 0; i < ids.size(); ++i) {
      items[i].char_ids = &ids[i];
      items[i].lang_id = lang_id;
    }
    const BatchGraph bg = record_batch(tape, model, items, false, tokenizer_grad);
    g.tokenizer_leaves = bg.param_leaves;

    // Word-major valid rows, then spans over the gathered block.
    const int off = lang_id ? 1 : 0;
    std::vector<int32_t> rows;
    std::vector<Span> spans;
    int word_index = 0;
    int base = 0;
    for (size_t e = 0; e < batch.size(); ++e) {
      for (size_t wi = 0; wi < batch[e]->words.size(); ++wi, ++word_index) {
        const int len = static_cast<int>(batch[e]->words[wi].size());
        const Segmentation& seg = segs[e][wi];
        int expect = 0;
        for (const Span& s : seg) {
          if (s.begin != expect || s.end <= s.begin || s.end > len)
            throw SegmentationError("segmentation does not partition its word");
          spans.push_back({base + s.begin, base + s.end});
          expect = s.end;
        }
        if (expect != len) throw SegmentationError("segmentation does not cover its word");
        units_per_example[e] += static_cast<int>(seg.size());
        for (int k = 0; k < len; ++k)
          rows.push_back(static_cast<int32_t>(bg.row(off + k, word_index)));
        base += len;
      }
    }
    const Tape::NodeId valid = tape.gather_rows(bg.hiddens, std::move(rows));
    units = tape.maxpool_rows(valid, std::move(spans));
  } else {
    for (const auto& [name, t] : model.named_params()) {
      (void)name;
      g.tokenizer_leaves.push_back(tape.leaf(*t, tokenizer_grad));
    }
    const Tape::NodeId emb = g.tokenizer_leaves[0];  // embedding is first
    std::vector<int32_t> flat;
    std::vector<Span> spans;
    int base = 0;
    for (size_t e = 0; e < batch.size(); ++e) {
      for (const std::u32string& w : batch[e]->words) {
        for (int32_t id : model.alphabet.encode(w)) flat.push_back(id);
        const int len = static_cast<int>(w.size());
        spans.push_back({base, base + len});
        base += len;
      }
      units_per_example[e] = static_cast<int>(batch[e]->words.size());
    }
    const Tape::NodeId chars = tape.gather_rows(emb, std::move(flat));
    units = tape.maxpool_rows(chars, std::move(spans));
  }

  for (const auto& [name, t] : head.named_params()) {
    (void)name;
    g.head_leaves.push_back(tape.leaf(*t, head_grad));
  }
  auto head_names = head.named_params();
  std::map<const Tensor*, Tape::NodeId> head_leaf;
  for (size_t i = 0; i < head_names.size(); ++i) head_leaf[head_names[i].second] = g.head_leaves[i];

  // Pad the per-example unit sequences into a step-major block.
  int steps = 0;
  std::vector<int> unit_base(static_cast<size_t>(nb), 0);
  int total_units = 0;
  for (int e = 0; e < nb; ++e) {
    unit_base[static_cast<size_t>(e)] = total_units;
    total_units += units_per_example[static_cast<size_t>(e)];
    steps = std::max(steps, units_per_example[static_cast<size_t>(e)]);
  }
  const Tape::NodeId pad = tape.leaf(Tensor(1, head.input_dim), false);
  const Tape::NodeId padded = tape.stack_rows({units, pad});
  std::vector<int32_t> order(static_cast<size_t>(steps) * static_cast<size_t>(nb),
                             static_cast<int32_t>(total_units));
  std::vector<int32_t> rev(order.size());
  for (int t = 0; t < steps; ++t)
    for (int e = 0; e < nb; ++e) {
      const int s = units_per_example[static_cast<size_t>(e)];
      if (t < s)
        order[static_cast<size_t>(t) * nb + static_cast<size_t>(e)] =
            static_cast<int32_t>(unit_base[static_cast<size_t>(e)] + t);
      const int tt = t < s ? s - 1 - t : t;
      rev[static_cast<size_t>(t) * nb + static_cast<size_t>(e)] =
          static_cast<int32_t>(tt * nb + e);
    }

  Tape::NodeId x = tape.matmul(tape.gather_rows(padded, std::move(order)),
                               head_leaf[&head.proj]);
  const int h = head.proj_dim / 2;
  const Tape::NodeId zero = tape.leaf(Tensor(nb, h), false);
  for (const TaggerModel::Layer& layer : head.lstm) {
    const Tape::NodeId hf = lstm_direction(tape, x, head_leaf[&layer.fwd.wx],
                                           head_leaf[&layer.fwd.wh], head_leaf[&layer.fwd.b],
                                           steps, nb, h, zero);
    const Tape::NodeId xr = tape.gather_rows(x, rev);
    const Tape::NodeId hbr = lstm_direction(tape, xr, head_leaf[&layer.bwd.wx],
                                            head_leaf[&layer.bwd.wh], head_leaf[&layer.bwd.b],
                                            steps, nb, h, zero);
    const Tape::NodeId hb = tape.gather_rows(hbr, rev);
    x = tape.concat_cols(hf, hb);
  }

  // Max-pool each example's valid positions into one sentence vector.
  std::vector<int32_t> sent_rows;
  std::vector<Span> sent_spans;
  int pos = 0;
  for (int e = 0; e < nb; ++e) {
    const int s = units_per_example[static_cast<size_t>(e)];
    sent_spans.push_back({pos, pos + s});
    for (int t = 0; t < s; ++t) sent_rows.push_back(static_cast<int32_t>(t * nb + e));
    pos += s;
  }
  const Tape::NodeId sent =
      tape.maxpool_rows(tape.gather_rows(x, std::move(sent_rows)), std::move(sent_spans));
  g.logits = tape.add_rowvec(tape.matmul(sent, head_leaf[&head.cls_w]),
                             head_leaf[&head.cls_b]);

  if (with_loss) {
    std::vector<int32_t> labels;
    labels.reserve(batch.size());
    for (const LabeledExample* ex : batch) labels.push_back(ex->label);
    g.loss = tape.softmax_nll(g.logits, std::move(labels), 1.0 / nb);
  }
  return g;
}

void FinetuneConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

namespace {

// Current-parameters segmentations for every word of every batch example.
std::vector<std::vector<Segmentation>> segment_batch(const TaggerModel& model,
                                                     const std::vector<const LabeledExample*>& batch,
                                                     const std::optional<std::string>& lang) {
  std::vector<std::u32string> all;
  for (const LabeledExample* ex : batch)
    all.insert(all.end(), ex->words.begin(), ex->words.end());
  const std::vector<Segmentation> flat = tokenize_many(model, all, lang);
  std::vector<std::vector<Segmentation>> segs(batch.size());
  size_t i = 0;
  for (size_t e = 0; e < batch.size(); ++e) {
    segs[e].assign(flat.begin() + static_cast<ptrdiff_t>(i),
                   flat.begin() + static_cast<ptrdiff_t>(i + batch[e]->words.size()));
    i += batch[e]->words.size();
  }
  return segs;
}

}  // namespace

FinetuneResult finetune(TaggerModel& model, TaskHead& head,
                        const std::vector<LabeledExample>& data, const FinetuneConfig& config,
                        EncoderKind kind) {
  config.validate();
  if (data.empty()) throw EmptyInputError("cannot fine-tune on an empty dataset");
  const std::optional<int32_t> lang_id =
      config.lang ? std::optional<int32_t>(model.alphabet.lang_id(*config.lang)) : std::nullopt;

  std::vector<std::pair<std::string, Tensor*>> params;
  if (!config.freeze_tokenizer)
    for (auto& [name, t] : model.named_params()) params.emplace_back("tok." + name, t);
  for (auto& [name, t] : head.named_params()) params.emplace_back("head." + name, t);
  AdamW opt(std::move(params), config.weight_decay);

  Rng rng(config.seed);
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < data.size(); ++i) order[i] = i;

  FinetuneResult result;
  Tape tape;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_nll = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t bn = std::min(static_cast<size_t>(config.batch_size), order.size() - start);
      std::vector<const LabeledExample*> batch;
      for (size_t i = 0; i < bn; ++i) batch.push_back(&data[order[start + i]]);
      std::vector<std::vector<Segmentation>> segs;
      if (kind == EncoderKind::tokenizer) segs = segment_batch(model, batch, config.lang);
      tape.reset();
      const TaskGraph g = record_task_graph(tape, model, head, batch, segs, kind, lang_id,
                                            true, !config.freeze_tokenizer, true);
      const double loss = tape.value(g.loss).v[0];
      if (!std::isfinite(loss))
        throw StateError("non-finite task loss at epoch " + std::to_string(epoch + 1));
      epoch_nll += loss * static_cast<double>(bn);
      tape.backward(g.loss);
      std::vector<const Tensor*> grads;
      if (!config.freeze_tokenizer)
        for (Tape::NodeId id : g.tokenizer_leaves) grads.push_back(&tape.grad(id));
      for (Tape::NodeId id : g.head_leaves) grads.push_back(&tape.grad(id));
      opt.step(grads, config.lr);
    }
    result.epoch_loss.push_back(epoch_nll / static_cast<double>(data.size()));
  }
  if (!config.freeze_tokenizer) quantize_params_f32(model);
  for (auto& [name, t] : head.named_params()) {
    (void)name;
    for (double& x : t->v) x = static_cast<double>(static_cast<float>(x));
  }
  return result;
}

double evaluate_task(const TaggerModel& model, const TaskHead& head,
                     const std::vector<LabeledExample>& data, EncoderKind kind,
                     const std::optional<std::string>& lang) {
  if (data.empty()) throw EmptyInputError("cannot evaluate on an empty dataset");
  const std::optional<int32_t> lang_id =
      lang ? std::optional<int32_t>(model.alphabet.lang_id(*lang)) : std::nullopt;
  size_t correct = 0;
  Tape tape;
  const size_t chunk = 64;
  for (size_t start = 0; start < data.size(); start += chunk) {
    const size_t bn = std::min(chunk, data.size() - start);
    std::vector<const LabeledExample*> batch;
    for (size_t i = 0; i < bn; ++i) batch.push_back(&data[start + i]);
    std::vector<std::vector<Segmentation>> segs;
    if (kind == EncoderKind::tokenizer) segs = segment_batch(model, batch, lang);
    tape.reset();
    const TaskGraph g =
        record_task_graph(tape, model, head, batch, segs, kind, lang_id, false, false, false);
    const Tensor& logits = tape.value(g.logits);
    for (size_t i = 0; i < bn; ++i) {
      int arg = 0;
      for (int c = 1; c < head.classes; ++c)
        if (logits.at(static_cast<int>(i), c) > logits.at(static_cast<int>(i), arg)) arg = c;
      correct += arg == batch[i]->label;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

std::u32string synth_word(Rng& rng) {
  static const std::u32string consonants = U"bdfgklmnprstv";
  static const std::u32string vowels = U"aeiou";
  const int syllables = 2 + static_cast<int>(rng.below(3));
  std::u32string w;
  for (int i = 0; i < syllables; ++i) {
    w.push_back(consonants[static_cast<size_t>(rng.below(consonants.size()))]);
    w.push_back(vowels[static_cast<size_t>(rng.below(vowels.size()))]);
  }
  return w;
}

LabeledExample synth_example(Rng& rng, const std::vector<std::u32string>& fillers,
                             const std::vector<std::u32string>& a,
                             const std::vector<std::u32string>& b) {
  LabeledExample ex;
  const int n_fill = 3 + static_cast<int>(rng.below(5));
  for (int i = 0; i < n_fill; ++i)
    ex.words.push_back(fillers[static_cast<size_t>(rng.below(fillers.size()))]);
  ex.label = static_cast<int>(rng.below(2));
  const auto& markers = ex.label == 0 ? a : b;
  const std::u32string marker = markers[static_cast<size_t>(rng.below(markers.size()))];
  ex.words.insert(ex.words.begin() + static_cast<ptrdiff_t>(rng.below(ex.words.size() + 1)),
                  marker);
  return ex;
}

}  // namespace

TaskData make_task_data(uint64_t seed, int n_train, int n_eval, double typo_fraction) {
  if (n_train < 1 || n_eval < 1) throw ConfigError("need at least one example per split");
  if (!(typo_fraction >= 0.0 && typo_fraction <= 1.0))
    throw ConfigError("typo_fraction must be in [0, 1]");
  TaskData data;
  data.seed = seed;
  Rng rng(seed);
  std::set<std::u32string> seen;
  std::vector<std::u32string> fillers;
  while (fillers.size() < 60) {
    const std::u32string w = synth_word(rng);
    if (seen.insert(w).second) fillers.push_back(w);
  }
  std::vector<std::u32string> a, b;
  while (a.size() < 6) {
    const std::u32string w = synth_word(rng) + U"zol";
    if (seen.insert(w).second) a.push_back(w);
  }
  while (b.size() < 6) {
    const std::u32string w = synth_word(rng) + U"xim";
    if (seen.insert(w).second) b.push_back(w);
  }
  for (int i = 0; i < n_train; ++i) data.train.push_back(synth_example(rng, fillers, a, b));
  for (int i = 0; i < n_eval; ++i) data.eval.push_back(synth_example(rng, fillers, a, b));

  const size_t typos =
      static_cast<size_t>(std::floor(static_cast<double>(n_eval) * typo_fraction));
  const std::vector<size_t> picked = rng.sample_without_replacement(data.eval.size(), typos);
  for (size_t ei : picked) {
    LabeledExample& ex = data.eval[ei];
    const size_t wi = static_cast<size_t>(rng.below(ex.words.size()));
    NoiseSpec spec;
    spec.word_fraction = 1.0;
    spec.seed = rng.next_u64();
    ex.words[wi] = inject_noise({ex.words[wi]}, spec)[0];
  }
  return data;
}

std::string serialize_task_examples(const std::vector<LabeledExample>& examples,
                                    std::optional<uint64_t> seed) {
  std::string out;
  if (seed) out += "#seed=" + std::to_string(*seed) + "\n";
  for (const LabeledExample& ex : examples) {
    for (size_t i = 0; i < ex.words.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += utf8_encode(ex.words[i]);
    }
    out.push_back('\t');
    out += std::to_string(ex.label);
    out.push_back('\n');
  }
  return out;
}

std::vector<LabeledExample> parse_task_examples(const std::string& text) {
  std::vector<LabeledExample> out;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("missing tab separator at line " + std::to_string(lineno));
    const std::string label_str = line.substr(tab + 1);
    if (label_str.empty() ||
        label_str.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError("label must be a non-negative integer at line " + std::to_string(lineno));
    LabeledExample ex;
    ex.label = std::stoi(label_str);
    const std::u32string sentence = utf8_decode(line.substr(0, tab));
    std::u32string word;
    for (char32_t c : sentence) {
      if (c == U' ') {
        if (!word.empty()) ex.words.push_back(std::exchange(word, {}));
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) ex.words.push_back(word);
    if (ex.words.empty())
      throw FormatError("empty text at line " + std::to_string(lineno));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ntk
