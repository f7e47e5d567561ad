#include "ntk/tagger.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "ntk/distill.hpp"
#include "ntk/io.hpp"
#include "ntk/rng.hpp"

namespace ntk {

void TaggerConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (hidden_out_dim < 2 || hidden_out_dim % 2 != 0)
    throw ConfigError("hidden_out_dim must be even and >= 2 (two directions)");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (!(lr_max > 0.0)) throw ConfigError("lr_max must be > 0");
  if (t0_epochs < 1) throw ConfigError("t0_epochs must be >= 1");
  if (t_mult < 1) throw ConfigError("t_mult must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<std::pair<std::string, Tensor*>> TaggerModel::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embedding", &embedding);
  for (size_t l = 0; l < lstm.size(); ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    out.emplace_back(p + "fwd.wx", &lstm[l].fwd.wx);
    out.emplace_back(p + "fwd.wh", &lstm[l].fwd.wh);
    out.emplace_back(p + "fwd.b", &lstm[l].fwd.b);
    out.emplace_back(p + "bwd.wx", &lstm[l].bwd.wx);
    out.emplace_back(p + "bwd.wh", &lstm[l].bwd.wh);
    out.emplace_back(p + "bwd.b", &lstm[l].bwd.b);
  }
  out.emplace_back("head.w", &head_w);
  out.emplace_back("head.b", &head_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> TaggerModel::named_params() const {
  auto mutable_view = const_cast<TaggerModel*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
  return out;
}

bool is_bias_param(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

namespace {

// Allocates every tensor at its config-implied shape, zero-filled.
TaggerModel make_shell(const TaggerConfig& config, const Alphabet& alphabet) {
  config.validate();
  const int h = config.hidden_out_dim / 2;
  TaggerModel m;
  m.config = config;
  m.alphabet = alphabet;
  m.embedding = Tensor(alphabet.size(), config.embed_dim);
  m.lstm.resize(static_cast<size_t>(config.layers));
  for (int l = 0; l < config.layers; ++l) {
    const int in_dim = l == 0 ? config.embed_dim : config.hidden_out_dim;
    for (TaggerModel::Direction* d : {&m.lstm[static_cast<size_t>(l)].fwd,
                                      &m.lstm[static_cast<size_t>(l)].bwd}) {
      d->wx = Tensor(in_dim, 4 * h);
      d->wh = Tensor(h, 4 * h);
      d->b = Tensor(1, 4 * h);
    }
  }
  m.head_w = Tensor(config.hidden_out_dim, 2);
  m.head_b = Tensor(1, 2);
  return m;
}

double f32_grid(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

void quantize_params_f32(TaggerModel& model) {
  for (auto& [name, t] : model.named_params()) {
    (void)name;
    for (double& x : t->v) x = f32_grid(x);
  }
}

TaggerModel init_tagger(const TaggerConfig& config, const Alphabet& alphabet) {
  TaggerModel m = make_shell(config, alphabet);
  Rng rng(config.seed);
  for (auto& [name, t] : m.named_params()) {
    if (is_bias_param(name)) continue;  // biases start at zero
    const int fan_in = name == "embedding" ? t->cols : t->rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : t->v) x = rng.real(-bound, bound);
  }
  quantize_params_f32(m);
  return m;
}

// The input projection for every step is a single GEMM; the recurrence then
// runs per step over step-major rows.
Tape::NodeId lstm_direction(Tape& tape, Tape::NodeId x, Tape::NodeId wx, Tape::NodeId wh,
                            Tape::NodeId b, int steps, int batch, int h, Tape::NodeId zero) {
  const Tape::NodeId gx = tape.matmul(x, wx);
  Tape::NodeId hid = zero;
  Tape::NodeId cell = zero;
  std::vector<Tape::NodeId> hs;
  hs.reserve(static_cast<size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const Tape::NodeId g_t = tape.slice_rows(gx, t * batch, (t + 1) * batch);
    const Tape::NodeId gates = tape.add_rowvec(tape.add(g_t, tape.matmul(hid, wh)), b);
    const Tape::NodeId g_in = tape.sigmoid(tape.slice_cols(gates, 0, h));
    const Tape::NodeId g_forget = tape.sigmoid(tape.slice_cols(gates, h, 2 * h));
    const Tape::NodeId g_cand = tape.tanh(tape.slice_cols(gates, 2 * h, 3 * h));
    const Tape::NodeId g_out = tape.sigmoid(tape.slice_cols(gates, 3 * h, 4 * h));
    cell = tape.add(tape.mul(g_forget, cell), tape.mul(g_in, g_cand));
    hid = tape.mul(g_out, tape.tanh(cell));
    hs.push_back(hid);
  }
  return tape.stack_rows(hs);
}

BatchGraph record_batch(Tape& tape, const TaggerModel& model,
                        const std::vector<BatchExample>& items, bool with_loss,
                        bool needs_grad) {
  const int batch = static_cast<int>(items.size());
  if (batch == 0) {
    // An empty batch contributes nothing: constant-zero loss, zero gradients.
    BatchGraph gb;
    for (const auto& [name, t] : model.named_params()) {
      (void)name;
      gb.param_leaves.push_back(tape.leaf(*t, needs_grad));
    }
    if (with_loss) {
      const Tape::NodeId e00 =
          tape.slice_cols(tape.slice_rows(gb.param_leaves[0], 0, 1), 0, 1);
      gb.loss = tape.mul(e00, tape.leaf(Tensor(1, 1), false));
    }
    return gb;
  }
  const int vocab = model.alphabet.size();
  const int h = model.config.hidden_out_dim / 2;

  std::vector<int> seq_len(static_cast<size_t>(batch));
  std::vector<int> offset(static_cast<size_t>(batch));
  int padded = 0;
  for (int b = 0; b < batch; ++b) {
    const BatchExample& it = items[static_cast<size_t>(b)];
    if (it.char_ids == nullptr || it.char_ids->empty())
      throw EmptyInputError("empty word in batch");
    for (int32_t id : *it.char_ids)
      if (id < 0 || id >= vocab) throw ConfigError("character id out of alphabet range");
    if (it.lang_id && (*it.lang_id < 0 || *it.lang_id >= vocab))
      throw ConfigError("language id out of alphabet range");
    offset[static_cast<size_t>(b)] = it.lang_id ? 1 : 0;
    seq_len[static_cast<size_t>(b)] =
        static_cast<int>(it.char_ids->size()) + offset[static_cast<size_t>(b)];
    padded = std::max(padded, seq_len[static_cast<size_t>(b)]);
  }

  BatchGraph gb;
  gb.batch = batch;
  gb.padded_len = padded;
  std::map<const Tensor*, Tape::NodeId> leaf_of;
  for (const auto& [name, t] : model.named_params()) {
    (void)name;
    const Tape::NodeId id = tape.leaf(*t, needs_grad);
    gb.param_leaves.push_back(id);
    leaf_of[t] = id;
  }

  std::vector<int32_t> flat(static_cast<size_t>(padded) * static_cast<size_t>(batch),
                            Alphabet::kPadId);
  for (int b = 0; b < batch; ++b) {
    const BatchExample& it = items[static_cast<size_t>(b)];
    for (int t = 0; t < seq_len[static_cast<size_t>(b)]; ++t) {
      const int32_t sym = (t == 0 && it.lang_id)
                              ? *it.lang_id
                              : (*it.char_ids)[static_cast<size_t>(
                                    t - offset[static_cast<size_t>(b)])];
      flat[static_cast<size_t>(t) * batch + static_cast<size_t>(b)] = sym;
    }
  }

  // Per-word reversal permutation; an involution, so it maps outputs back too.
  std::vector<int32_t> rev(flat.size());
  for (int t = 0; t < padded; ++t)
    for (int b = 0; b < batch; ++b) {
      const int s = seq_len[static_cast<size_t>(b)];
      const int tt = t < s ? s - 1 - t : t;
      rev[static_cast<size_t>(t) * batch + static_cast<size_t>(b)] =
          static_cast<int32_t>(tt * batch + b);
    }

  Tape::NodeId input = tape.gather_rows(leaf_of[&model.embedding], flat);
  const Tape::NodeId zero = tape.leaf(Tensor(batch, h), false);
  for (const TaggerModel::Layer& layer : model.lstm) {
    const Tape::NodeId hf =
        lstm_direction(tape, input, leaf_of[&layer.fwd.wx], leaf_of[&layer.fwd.wh],
                      leaf_of[&layer.fwd.b], padded, batch, h, zero);
    const Tape::NodeId xr = tape.gather_rows(input, rev);
    const Tape::NodeId hbr =
        lstm_direction(tape, xr, leaf_of[&layer.bwd.wx], leaf_of[&layer.bwd.wh],
                      leaf_of[&layer.bwd.b], padded, batch, h, zero);
    const Tape::NodeId hb = tape.gather_rows(hbr, rev);
    input = tape.concat_cols(hf, hb);
  }
  gb.hiddens = input;
  gb.logits = tape.add_rowvec(tape.matmul(input, leaf_of[&model.head_w]),
                              leaf_of[&model.head_b]);

  if (with_loss) {
    std::vector<int32_t> rows;
    std::vector<int32_t> targets;
    for (int b = 0; b < batch; ++b) {
      const BatchExample& it = items[static_cast<size_t>(b)];
      if (it.tags == nullptr) throw StateError("batch item has no tags to train on");
      if (it.tags->size() != it.char_ids->size())
        throw ShapeError("tag count does not match word length");
      for (size_t k = 0; k < it.tags->size(); ++k) {
        rows.push_back(static_cast<int32_t>(
            (offset[static_cast<size_t>(b)] + static_cast<int>(k)) * batch + b));
        targets.push_back(static_cast<int32_t>((*it.tags)[k]));
      }
    }
    const Tape::NodeId valid = tape.gather_rows(gb.logits, rows);
    gb.loss = tape.softmax_nll(valid, std::move(targets), 1.0 / batch);
  }
  return gb;
}

ForwardResult forward(const TaggerModel& model, const std::vector<int32_t>& char_ids,
                      std::optional<int32_t> lang_id) {
  Tape tape;
  BatchExample item;
  item.char_ids = &char_ids;
  item.lang_id = lang_id;
  const BatchGraph g = record_batch(tape, model, {item}, false, false);
  const int off = lang_id ? 1 : 0;
  const int n = static_cast<int>(char_ids.size());
  const Tensor& lg = tape.value(g.logits);
  const Tensor& hd = tape.value(g.hiddens);
  ForwardResult r;
  r.logits = Tensor(n, 2);
  r.hiddens = Tensor(n, model.config.hidden_out_dim);
  for (int k = 0; k < n; ++k) {
    for (int c = 0; c < 2; ++c) r.logits.at(k, c) = lg.at(off + k, c);
    for (int c = 0; c < model.config.hidden_out_dim; ++c) r.hiddens.at(k, c) = hd.at(off + k, c);
  }
  return r;
}

double nll_loss(const Tensor& logits, const TagSequence& tags) {
  if (static_cast<size_t>(logits.rows) != tags.size() || logits.cols != 2)
    throw ShapeError("logits must be n x 2 with one tag per row");
  double total = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const double a = logits.at(r, 0);
    const double b = logits.at(r, 1);
    const double mx = std::max(a, b);
    const double z = std::exp(a - mx) + std::exp(b - mx);
    const double target = tags[static_cast<size_t>(r)] == Tag::B ? a : b;
    total += std::log(z) - (target - mx);
  }
  return total;
}

std::vector<Segmentation> tokenize_many(const TaggerModel& model,
                                        const std::vector<std::u32string>& words,
                                        const std::optional<std::string>& lang) {
  const std::optional<int32_t> lang_id =
      lang ? std::optional<int32_t>(model.alphabet.lang_id(*lang)) : std::nullopt;
  std::vector<Segmentation> out(words.size());
  const size_t chunk = 64;
  std::vector<std::vector<int32_t>> ids;
  std::vector<BatchExample> items;
  for (size_t start = 0; start < words.size(); start += chunk) {
    const size_t n = std::min(chunk, words.size() - start);
    ids.assign(n, {});
    items.assign(n, {});
    for (size_t i = 0; i < n; ++i) {
      const std::u32string& w = words[start + i];
      if (w.empty()) throw EmptyInputError("cannot tokenize an empty word");
      ids[i] = model.alphabet.encode(w);
      items[i].char_ids = &ids[i];
      items[i].lang_id = lang_id;
    }
    Tape tape;
    const BatchGraph g = record_batch(tape, model, items, false, false);
    const Tensor& lg = tape.value(g.logits);
    const int off = lang_id ? 1 : 0;
    for (size_t i = 0; i < n; ++i) {
      const std::u32string& w = words[start + i];
      TagSequence tags(w.size(), Tag::B);
      for (size_t k = 0; k < w.size(); ++k) {
        const int row = g.row(off + static_cast<int>(k), static_cast<int>(i));
        tags[k] = lg.at(row, 0) >= lg.at(row, 1) ? Tag::B : Tag::I;
      }
      tags[0] = Tag::B;  // decode rule: a word always opens a segment
      out[start + i] = tags_to_segments(w, tags);
    }
  }
  return out;
}

Segmentation tokenize(const TaggerModel& model, const std::u32string& word,
                      const std::optional<std::string>& lang) {
  return tokenize_many(model, {word}, lang)[0];
}

PooledWord pool_representations(const TaggerModel& model, const std::u32string& word,
                                const std::optional<std::string>& lang) {
  if (word.empty()) throw EmptyInputError("cannot pool an empty word");
  const std::optional<int32_t> lang_id =
      lang ? std::optional<int32_t>(model.alphabet.lang_id(*lang)) : std::nullopt;
  const std::vector<int32_t> char_ids = model.alphabet.encode(word);
  const ForwardResult f = forward(model, char_ids, lang_id);
  TagSequence tags(word.size(), Tag::B);
  for (size_t k = 0; k < word.size(); ++k)
    tags[k] = f.logits.at(static_cast<int>(k), 0) >= f.logits.at(static_cast<int>(k), 1)
                  ? Tag::B
                  : Tag::I;
  tags[0] = Tag::B;
  PooledWord pw;
  pw.seg = tags_to_segments(word, tags);
  pw.reps = Tensor(static_cast<int>(pw.seg.size()), model.config.hidden_out_dim);
  for (size_t s = 0; s < pw.seg.size(); ++s) {
    const Span sp = pw.seg[s];
    for (int c = 0; c < model.config.hidden_out_dim; ++c) {
      double best = f.hiddens.at(sp.begin, c);
      for (int r = sp.begin + 1; r < sp.end; ++r) best = std::max(best, f.hiddens.at(r, c));
      pw.reps.at(static_cast<int>(s), c) = best;
    }
  }
  return pw;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& s, size_t pos) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<unsigned char>(s[pos + static_cast<size_t>(i)]))
         << (8 * i);
  return v;
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

constexpr char kMagic[4] = {'N', 'T', 'K', '1'};

}  // namespace

std::string serialize_checkpoint(const TaggerModel& model) {
  model.config.validate();
  const auto params = model.named_params();
  nlohmann::json header;
  header["alphabet_hash"] = hex16(model.alphabet.hash());
  header["config"] = {{"embed_dim", model.config.embed_dim},
                      {"hidden_out_dim", model.config.hidden_out_dim},
                      {"layers", model.config.layers},
                      {"lr_max", model.config.lr_max},
                      {"t0_epochs", model.config.t0_epochs},
                      {"t_mult", model.config.t_mult},
                      {"epochs", model.config.epochs},
                      {"weight_decay", model.config.weight_decay},
                      {"batch_size", model.config.batch_size},
                      {"seed", model.config.seed}};
  nlohmann::json table = nlohmann::json::array();
  uint64_t off = 0;
  for (const auto& [name, t] : params) {
    table.push_back({{"name", name}, {"rows", t->rows}, {"cols", t->cols}, {"offset", off}});
    off += static_cast<uint64_t>(t->size()) * 4;
  }
  header["tensors"] = std::move(table);
  const std::string h = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<uint32_t>(h.size()));
  out += h;
  out.reserve(out.size() + off);
  for (const auto& [name, t] : params) {
    (void)name;
    for (double x : t->v) put_u32(out, std::bit_cast<uint32_t>(static_cast<float>(x)));
  }
  return out;
}

TaggerModel parse_checkpoint(const std::string& bytes, const Alphabet& alphabet) {
  if (bytes.size() < 8 || bytes.compare(0, 4, kMagic, 4) != 0)
    throw FormatError("not a tagger checkpoint (bad magic)");
  const uint32_t hlen = get_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<size_t>(hlen))
    throw FormatError("checkpoint truncated inside the header");
  TaggerConfig config;
  nlohmann::json tensors;
  std::string want_hash;
  try {
    const nlohmann::json header = nlohmann::json::parse(bytes.substr(4 + 4, hlen));
    want_hash = header.at("alphabet_hash").get<std::string>();
    const nlohmann::json& c = header.at("config");
    config.embed_dim = c.at("embed_dim").get<int>();
    config.hidden_out_dim = c.at("hidden_out_dim").get<int>();
    config.layers = c.at("layers").get<int>();
    config.lr_max = c.at("lr_max").get<double>();
    config.t0_epochs = c.at("t0_epochs").get<int>();
    config.t_mult = c.at("t_mult").get<int>();
    config.epochs = c.at("epochs").get<int>();
    config.weight_decay = c.at("weight_decay").get<double>();
    config.batch_size = c.at("batch_size").get<int>();
    config.seed = c.at("seed").get<uint64_t>();
    tensors = header.at("tensors");
    if (!tensors.is_array()) throw FormatError("tensor table must be an array");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  config.validate();
  if (want_hash != hex16(alphabet.hash()))
    throw ConfigError("checkpoint was trained with a different alphabet");

  TaggerModel m = make_shell(config, alphabet);
  const auto params = m.named_params();
  if (tensors.size() != params.size())
    throw FormatError("checkpoint tensor table has the wrong entry count");
  const size_t payload = 8 + static_cast<size_t>(hlen);
  uint64_t off = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    uint64_t got_off = 0;
    try {
      const nlohmann::json& entry = tensors[i];
      if (entry.at("name").get<std::string>() != name ||
          entry.at("rows").get<int>() != t->rows || entry.at("cols").get<int>() != t->cols)
        throw FormatError("checkpoint tensor " + name + " has the wrong shape");
      got_off = entry.at("offset").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad checkpoint tensor entry: ") + e.what());
    }
    if (got_off != off) throw FormatError("checkpoint tensor offsets are not contiguous");
    const size_t begin = payload + off;
    const size_t need = t->size() * 4;
    if (bytes.size() < begin + need) throw FormatError("checkpoint truncated inside a tensor");
    for (size_t j = 0; j < t->size(); ++j)
      t->v[j] =
          static_cast<double>(std::bit_cast<float>(get_u32(bytes, begin + j * 4)));
    off += need;
  }
  if (bytes.size() != payload + off)
    throw FormatError("checkpoint has trailing bytes after the last tensor");
  return m;
}

void save_checkpoint(const TaggerModel& model, const std::string& path) {
  write_file(path, serialize_checkpoint(model));
}

TaggerModel load_checkpoint(const std::string& path, const Alphabet& alphabet) {
  return parse_checkpoint(read_file(path), alphabet);
}

}  // namespace ntk
