#include "ntk/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ntk/common.hpp"
#include "ntk/corpus.hpp"
#include "ntk/distill.hpp"
#include "ntk/endtask.hpp"
#include "ntk/evalkit.hpp"
#include "ntk/io.hpp"
#include "ntk/rng.hpp"
#include "ntk/subword.hpp"
#include "ntk/tagger.hpp"
#include "ntk/trainer.hpp"
#include "ntk/utf8.hpp"

namespace ntk {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// One named parameter: a config-file key tied to a CLI option and the slot
// both write into. Flags win: the config value applies only when the option
// was absent from the command line.
struct Binding {
  std::string key;
  CLI::Option* opt;
  std::function<void(const json&)> apply;
  std::function<json()> dump;
};

class ParamSet {
 public:
  template <class T>
  CLI::Option* bind(const std::string& key, CLI::Option* opt, T* slot) {
    bindings_.push_back({key, opt, [slot](const json& v) { *slot = v.get<T>(); },
                         [slot]() { return json(*slot); }});
    return opt;
  }

  CLI::Option* bind_opt_string(const std::string& key, CLI::Option* opt,
                               std::optional<std::string>* slot) {
    bindings_.push_back({key, opt,
                         [slot](const json& v) {
                           if (v.is_null())
                             slot->reset();
                           else
                             *slot = v.get<std::string>();
                         },
                         [slot]() { return *slot ? json(**slot) : json(nullptr); }});
    return opt;
  }

  void load(const std::string& path) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file " + path + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      const Binding* hit = nullptr;
      for (const auto& b : bindings_)
        if (b.key == key) hit = &b;
      if (!hit) throw ConfigError("config file " + path + ": unknown key \"" + key + "\"");
      if (hit->opt->count() > 0) continue;
      try {
        hit->apply(value);
      } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": key \"" + key + "\": " + e.what());
      }
    }
  }

  json resolved(const std::string& command) const {
    json j;
    j["command"] = command;
    for (const auto& b : bindings_) j[b.key] = b.dump();
    return j;
  }

 private:
  std::vector<Binding> bindings_;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs* c, ParamSet* ps) {
  cmd->add_option("--config", c->config_path,
                  "JSON file of parameter defaults; explicit flags win");
  ps->bind("out_dir", cmd->add_option("--out-dir", c->out_dir, "Output directory"), &c->out_dir);
  ps->bind("seed", cmd->add_option("--seed", c->seed, "Random seed"), &c->seed);
}

// Applies the config file, then records the effective parameters next to the
// outputs. Called first in every command callback.
fs::path finalize_config(const CommonArgs& c, ParamSet& ps, const std::string& command) {
  if (!c.config_path.empty()) ps.load(c.config_path);
  fs::path dir(c.out_dir.empty() ? "." : c.out_dir);
  fs::create_directories(dir);
  write_file((dir / (command + ".config.json")).string(), ps.resolved(command).dump(2) + "\n");
  return dir;
}

// Splits "key=path" at the first '='; both halves must be non-empty.
std::pair<std::string, std::string> split_spec(const std::string& spec, const std::string& what) {
  auto pos = spec.find('=');
  if (pos == std::string::npos || pos == 0 || pos + 1 == spec.size())
    throw ConfigError(what + " must look like name=path, got \"" + spec + "\"");
  return {spec.substr(0, pos), spec.substr(pos + 1)};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("noise grid: bad entry \"" + item + "\"");
    }
    if (used != item.size() || v < 0.0 || v > 1.0)
      throw ConfigError("noise grid: bad entry \"" + item + "\" (want a fraction in [0,1])");
    grid.push_back(v);
  }
  if (grid.empty()) throw ConfigError("noise grid: no entries");
  return grid;
}

std::string join_segments(const std::u32string& word, const Segmentation& seg) {
  std::string out;
  for (size_t i = 0; i < seg.size(); ++i) {
    if (i) out += '/';
    out += utf8_encode(word.substr(seg[i].begin, seg[i].end - seg[i].begin));
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"neural tokenization toolkit"};
  app.name("neurotok");
  app.require_subcommand(1);

  // ----- curate ------------------------------------------------------------
  auto* curate = app.add_subcommand("curate", "Build word tables and an alphabet from text");
  ParamSet curate_ps;
  CommonArgs curate_common;
  std::vector<std::string> curate_inputs;
  int curate_max_len = 30;
  int64_t curate_min_char = 1;
  curate_ps.bind("inputs",
                 curate->add_option("inputs", curate_inputs, "Input text files as lang=path"),
                 &curate_inputs);
  curate_ps.bind("max_len",
                 curate->add_option("--max-len", curate_max_len, "Drop words longer than this"),
                 &curate_max_len);
  curate_ps.bind("min_char_count",
                 curate->add_option("--min-char-count", curate_min_char,
                                    "Alphabet keeps characters seen at least this often"),
                 &curate_min_char);
  add_common(curate, &curate_common, &curate_ps);
  curate->callback([&] {
    fs::path dir = finalize_config(curate_common, curate_ps, "curate");
    if (curate_inputs.empty()) throw ConfigError("curate: no inputs (expected lang=path)");
    std::map<std::string, std::vector<std::u32string>> words_by_lang;
    for (const auto& spec : curate_inputs) {
      auto [lang, path] = split_spec(spec, "curate: input");
      auto words = extract_words(read_file(path), curate_max_len);
      auto& acc = words_by_lang[lang];
      acc.insert(acc.end(), words.begin(), words.end());
    }
    std::vector<WordTable> tables;
    for (auto& [lang, words] : words_by_lang) {
      if (words.empty()) throw EmptyInputError("curate: no words for language " + lang);
      tables.push_back(build_word_table(words, lang));
    }
    Alphabet alphabet = build_alphabet(tables, curate_min_char);
    for (const auto& table : tables) {
      std::string bytes = serialize_word_table(table);
      parse_word_table(bytes);
      write_file((dir / ("words-" + table.lang + ".tsv")).string(), bytes);
    }
    std::string abytes = alphabet.serialize();
    if (!(Alphabet::parse(abytes) == alphabet))
      throw StateError("curate: alphabet failed to round-trip");
    write_file((dir / "alphabet.tsv").string(), abytes);
    out << "curate: " << tables.size() << " word table(s), alphabet of " << alphabet.size()
        << " symbols -> " << dir.string() << "\n";
  });

  // ----- train-teacher -------------------------------------------------------
  auto* teach = app.add_subcommand("train-teacher", "Train a subword tokenizer on a word table");
  ParamSet teach_ps;
  CommonArgs teach_common;
  std::string teach_kind;
  std::string teach_table;
  int64_t teach_vocab = 30000;
  UnigramTrainConfig teach_ucfg;
  teach_ps.bind("kind",
                teach->add_option("--kind", teach_kind, "Tokenizer family")
                    ->check(CLI::IsMember({"unigram", "bpe", "wordpiece"})),
                &teach_kind);
  teach_ps.bind("table", teach->add_option("--table", teach_table, "Word table file"),
                &teach_table);
  teach_ps.bind("vocab_size",
                teach->add_option("--vocab-size", teach_vocab, "Target piece inventory size"),
                &teach_vocab);
  teach_ps.bind("max_piece_len",
                teach->add_option("--max-piece-len", teach_ucfg.max_piece_len,
                                  "Unigram: longest seed substring"),
                &teach_ucfg.max_piece_len);
  teach_ps.bind("min_count",
                teach->add_option("--min-count", teach_ucfg.min_count,
                                  "Unigram: minimum seed substring count"),
                &teach_ucfg.min_count);
  teach_ps.bind("seed_multiplier",
                teach->add_option("--seed-multiplier", teach_ucfg.seed_multiplier,
                                  "Unigram: seed inventory cap, times vocab size"),
                &teach_ucfg.seed_multiplier);
  teach_ps.bind("em_rounds",
                teach->add_option("--em-rounds", teach_ucfg.em_rounds,
                                  "Unigram: EM rounds between prunes"),
                &teach_ucfg.em_rounds);
  teach_ps.bind("shrink_fraction",
                teach->add_option("--shrink-fraction", teach_ucfg.shrink_fraction,
                                  "Unigram: fraction pruned per round"),
                &teach_ucfg.shrink_fraction);
  teach_ps.bind("smoothing_eps",
                teach->add_option("--smoothing-eps", teach_ucfg.smoothing_eps,
                                  "Unigram: add-eps usage smoothing"),
                &teach_ucfg.smoothing_eps);
  add_common(teach, &teach_common, &teach_ps);
  teach->callback([&] {
    fs::path dir = finalize_config(teach_common, teach_ps, "train-teacher");
    if (teach_kind.empty()) throw ConfigError("train-teacher: --kind is required");
    if (teach_table.empty()) throw ConfigError("train-teacher: --table is required");
    WordTable table = parse_word_table(read_file(teach_table));
    TeacherModel teacher;
    if (teach_kind == "unigram")
      teacher = train_unigram(table, teach_vocab, teach_ucfg);
    else if (teach_kind == "bpe")
      teacher = train_bpe(table, teach_vocab);
    else if (teach_kind == "wordpiece")
      teacher = train_wordpiece(table, teach_vocab);
    else
      throw ConfigError("train-teacher: unknown kind \"" + teach_kind + "\"");
    std::string bytes = serialize_teacher(teacher);
    if (serialize_teacher(parse_teacher(bytes)) != bytes)
      throw StateError("train-teacher: teacher failed to round-trip");
    fs::path path = dir / ("teacher-" + table.lang + "-" + teach_kind + ".tsv");
    write_file(path.string(), bytes);
    out << "train-teacher: wrote " << path.string() << "\n";
  });

  // ----- distill -------------------------------------------------------------
  auto* distill = app.add_subcommand("distill", "Build a tagged training set from teachers");
  ParamSet distill_ps;
  CommonArgs distill_common;
  std::string distill_mode = "mono";
  std::string distill_alphabet;
  std::vector<std::string> distill_tables;
  std::vector<std::string> distill_teachers;
  distill_ps.bind("mode",
                  distill->add_option("--mode", distill_mode, "Dataset mode")
                      ->check(CLI::IsMember({"mono", "multi", "mixed"})),
                  &distill_mode);
  distill_ps.bind("alphabet", distill->add_option("--alphabet", distill_alphabet, "Alphabet file"),
                  &distill_alphabet);
  distill_ps.bind("tables", distill->add_option("--table", distill_tables, "Word table file"),
                  &distill_tables);
  distill_ps.bind("teachers",
                  distill->add_option("--teacher", distill_teachers, "Teacher file as lang=path"),
                  &distill_teachers);
  add_common(distill, &distill_common, &distill_ps);
  distill->callback([&] {
    fs::path dir = finalize_config(distill_common, distill_ps, "distill");
    if (distill_alphabet.empty()) throw ConfigError("distill: --alphabet is required");
    if (distill_tables.empty()) throw ConfigError("distill: no --table given");
    if (distill_teachers.empty()) throw ConfigError("distill: no --teacher given");
    std::map<std::string, WordTable> tables;
    for (const auto& path : distill_tables) {
      WordTable t = parse_word_table(read_file(path));
      std::string lang = t.lang;
      if (!tables.emplace(lang, std::move(t)).second)
        throw ConfigError("distill: duplicate table for language " + lang);
    }
    std::map<std::string, TeacherModel> teachers;
    for (const auto& spec : distill_teachers) {
      auto [lang, path] = split_spec(spec, "distill: --teacher");
      if (!teachers.emplace(lang, parse_teacher(read_file(path))).second)
        throw ConfigError("distill: duplicate teacher for language " + lang);
    }
    auto langs_of = [](const auto& m) {
      std::string joined;
      for (const auto& [k, v] : m) joined += (joined.empty() ? "" : ",") + k;
      return joined;
    };
    for (const auto& [lang, t] : tables)
      if (!teachers.count(lang))
        throw ConfigError("distill: table languages {" + langs_of(tables) +
                          "} do not match teacher languages {" + langs_of(teachers) + "}");
    for (const auto& [lang, t] : teachers)
      if (!tables.count(lang))
        throw ConfigError("distill: table languages {" + langs_of(tables) +
                          "} do not match teacher languages {" + langs_of(teachers) + "}");
    Alphabet alphabet = Alphabet::parse(read_file(distill_alphabet));
    DistillDataset ds = build_dataset(tables, teachers, dataset_mode_from_name(distill_mode),
                                      alphabet, distill_common.seed);
    std::string bytes = serialize_dataset(ds);
    parse_dataset(bytes, alphabet);
    write_file((dir / "dataset.jsonl").string(), bytes);
    out << "distill: wrote dataset.jsonl (" << ds.examples.size() << " examples)\n";
  });

  // ----- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train the neural tagger on a distilled dataset");
  ParamSet train_ps;
  CommonArgs train_common;
  std::string train_dataset;
  std::string train_alphabet;
  TaggerConfig train_cfg;
  train_ps.bind("dataset", train->add_option("--dataset", train_dataset, "Distilled JSONL file"),
                &train_dataset);
  train_ps.bind("alphabet", train->add_option("--alphabet", train_alphabet, "Alphabet file"),
                &train_alphabet);
  train_ps.bind("embed_dim",
                train->add_option("--embed-dim", train_cfg.embed_dim, "Character embedding width"),
                &train_cfg.embed_dim);
  train_ps.bind("hidden_out_dim",
                train->add_option("--hidden-out-dim", train_cfg.hidden_out_dim,
                                  "Per-position output width (both directions)"),
                &train_cfg.hidden_out_dim);
  train_ps.bind("layers", train->add_option("--layers", train_cfg.layers, "Recurrent layers"),
                &train_cfg.layers);
  train_ps.bind("lr_max", train->add_option("--lr-max", train_cfg.lr_max, "Peak learning rate"),
                &train_cfg.lr_max);
  train_ps.bind("t0_epochs",
                train->add_option("--t0-epochs", train_cfg.t0_epochs,
                                  "Epochs in the first cosine cycle"),
                &train_cfg.t0_epochs);
  train_ps.bind("t_mult",
                train->add_option("--t-mult", train_cfg.t_mult, "Cycle length multiplier"),
                &train_cfg.t_mult);
  train_ps.bind("epochs", train->add_option("--epochs", train_cfg.epochs, "Training epochs"),
                &train_cfg.epochs);
  train_ps.bind("weight_decay",
                train->add_option("--weight-decay", train_cfg.weight_decay,
                                  "Decoupled weight decay (biases exempt)"),
                &train_cfg.weight_decay);
  train_ps.bind("batch_size", train->add_option("--batch-size", train_cfg.batch_size, "Batch size"),
                &train_cfg.batch_size);
  add_common(train, &train_common, &train_ps);
  train->callback([&] {
    fs::path dir = finalize_config(train_common, train_ps, "train");
    if (train_dataset.empty()) throw ConfigError("train: --dataset is required");
    if (train_alphabet.empty()) throw ConfigError("train: --alphabet is required");
    Alphabet alphabet = Alphabet::parse(read_file(train_alphabet));
    DistillDataset ds = parse_dataset(read_file(train_dataset), alphabet);
    train_cfg.seed = train_common.seed;
    TrainResult result = train_tagger(ds, train_cfg, alphabet);
    std::string bytes = serialize_checkpoint(result.model);
    parse_checkpoint(bytes, alphabet);
    write_file((dir / "model.ckpt").string(), bytes);
    write_file((dir / "train-log.jsonl").string(), serialize_training_log(result.log));
    const auto& last = result.log.back();
    out << "train: wrote model.ckpt and train-log.jsonl (epoch " << last.epoch
        << " train_loss " << last.train_loss << " val_loss " << last.val_loss << ")\n";
  });

  // ----- tokenize ------------------------------------------------------------
  auto* tok = app.add_subcommand("tokenize", "Segment words from stdin, one per line");
  ParamSet tok_ps;
  CommonArgs tok_common;
  std::string tok_checkpoint;
  std::string tok_alphabet;
  std::optional<std::string> tok_lang;
  tok_ps.bind("checkpoint", tok->add_option("--checkpoint", tok_checkpoint, "Model checkpoint"),
              &tok_checkpoint);
  tok_ps.bind("alphabet", tok->add_option("--alphabet", tok_alphabet, "Alphabet file"),
              &tok_alphabet);
  tok_ps.bind_opt_string("lang", tok->add_option("--lang", tok_lang, "Language tag to prepend"),
                         &tok_lang);
  add_common(tok, &tok_common, &tok_ps);
  tok->callback([&] {
    finalize_config(tok_common, tok_ps, "tokenize");
    if (tok_checkpoint.empty()) throw ConfigError("tokenize: --checkpoint is required");
    if (tok_alphabet.empty()) throw ConfigError("tokenize: --alphabet is required");
    Alphabet alphabet = Alphabet::parse(read_file(tok_alphabet));
    TaggerModel model = parse_checkpoint(read_file(tok_checkpoint), alphabet);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    std::vector<std::u32string> words;
    for (const auto& l : lines)
      if (!l.empty()) words.push_back(utf8_decode(l));
    std::vector<Segmentation> segs = tokenize_many(model, words, tok_lang);
    size_t next = 0;
    for (const auto& l : lines) {
      if (l.empty()) {
        out << "\n";
        continue;
      }
      out << join_segments(words[next], segs[next]) << "\n";
      ++next;
    }
  });

  // ----- eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Compare tokenizers under input noise");
  ParamSet eval_ps;
  CommonArgs eval_common;
  std::string eval_checkpoint;
  std::string eval_alphabet;
  std::vector<std::string> eval_teachers;
  std::vector<std::string> eval_corpora;
  std::string eval_grid = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7";
  std::optional<std::string> eval_lang;
  int eval_max_len = 30;
  eval_ps.bind("checkpoint", eval->add_option("--checkpoint", eval_checkpoint, "Model checkpoint"),
               &eval_checkpoint);
  eval_ps.bind("alphabet", eval->add_option("--alphabet", eval_alphabet, "Alphabet file"),
               &eval_alphabet);
  eval_ps.bind("teachers",
               eval->add_option("--teacher", eval_teachers, "Teacher file as name=path"),
               &eval_teachers);
  eval_ps.bind("corpora", eval->add_option("--corpus", eval_corpora, "Evaluation text file"),
               &eval_corpora);
  eval_ps.bind("noise_grid",
               eval->add_option("--noise-grid", eval_grid, "Comma-separated word fractions"),
               &eval_grid);
  eval_ps.bind_opt_string("lang", eval->add_option("--lang", eval_lang, "Language tag to prepend"),
                          &eval_lang);
  eval_ps.bind("max_len",
               eval->add_option("--max-len", eval_max_len, "Drop words longer than this"),
               &eval_max_len);
  add_common(eval, &eval_common, &eval_ps);
  eval->callback([&] {
    fs::path dir = finalize_config(eval_common, eval_ps, "eval");
    if (eval_checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    if (eval_alphabet.empty()) throw ConfigError("eval: --alphabet is required");
    if (eval_corpora.empty()) throw ConfigError("eval: no --corpus given");
    Alphabet alphabet = Alphabet::parse(read_file(eval_alphabet));
    TaggerModel model = parse_checkpoint(read_file(eval_checkpoint), alphabet);
    std::map<std::string, BatchSegmentFn> tokenizers;
    tokenizers["neural"] = [&model, &eval_lang](const std::vector<std::u32string>& ws) {
      return tokenize_many(model, ws, eval_lang);
    };
    for (const auto& spec : eval_teachers) {
      auto [name, path] = split_spec(spec, "eval: --teacher");
      if (tokenizers.count(name))
        throw ConfigError("eval: duplicate tokenizer name \"" + name + "\"");
      tokenizers[name] = make_batch_fn(make_segment_fn(parse_teacher(read_file(path))));
    }
    std::vector<std::vector<std::u32string>> sentences;
    std::vector<std::u32string> words;
    for (const auto& path : eval_corpora) {
      for (const auto& line : split_lines(read_file(path))) {
        auto ws = extract_words(line, eval_max_len);
        if (ws.empty()) continue;
        words.insert(words.end(), ws.begin(), ws.end());
        sentences.push_back(std::move(ws));
      }
    }
    if (words.empty()) throw EmptyInputError("eval: corpora contain no words");
    std::vector<ReportRow> rows =
        compare_report(tokenizers, words, sentences, parse_grid(eval_grid), eval_common.seed);
    std::string jbytes = report_to_json(rows);
    if (!json::parse(jbytes).is_array()) throw StateError("eval: report is not a JSON array");
    write_file((dir / "report.json").string(), jbytes);
    write_file((dir / "report.csv").string(), report_to_csv(rows));
    out << "eval: wrote report.json and report.csv (" << tokenizers.size() << " tokenizers, "
        << parse_grid(eval_grid).size() << " noise levels)\n";
  });

  // ----- finetune-demo ---------------------------------------------------------
  auto* demo = app.add_subcommand("finetune-demo",
                                  "Fine-tune through the tokenizer on a small labeling task");
  ParamSet demo_ps;
  CommonArgs demo_common;
  std::string demo_checkpoint;
  std::string demo_alphabet;
  std::string demo_task;
  bool demo_synthetic = false;
  int demo_train_n = 120;
  int demo_eval_n = 48;
  double demo_typo_fraction = 0.5;
  std::string demo_encoder = "tokenizer";
  int demo_proj_dim = 64;
  int demo_head_layers = 1;
  FinetuneConfig demo_cfg;
  std::optional<std::string> demo_lang;
  demo_ps.bind("checkpoint", demo->add_option("--checkpoint", demo_checkpoint, "Model checkpoint"),
               &demo_checkpoint);
  demo_ps.bind("alphabet", demo->add_option("--alphabet", demo_alphabet, "Alphabet file"),
               &demo_alphabet);
  demo_ps.bind("task", demo->add_option("--task", demo_task, "Labeled examples (text<TAB>label)"),
               &demo_task);
  demo_ps.bind("synthetic",
               demo->add_flag("--synthetic", demo_synthetic, "Generate the task data instead"),
               &demo_synthetic);
  demo_ps.bind("train_n",
               demo->add_option("--train-n", demo_train_n, "Synthetic training examples"),
               &demo_train_n);
  demo_ps.bind("eval_n", demo->add_option("--eval-n", demo_eval_n, "Synthetic eval examples"),
               &demo_eval_n);
  demo_ps.bind("typo_fraction",
               demo->add_option("--typo-fraction", demo_typo_fraction,
                                "Fraction of eval examples given one typo"),
               &demo_typo_fraction);
  demo_ps.bind("encoder",
               demo->add_option("--encoder", demo_encoder, "Sentence encoder")
                   ->check(CLI::IsMember({"tokenizer", "char-baseline"})),
               &demo_encoder);
  demo_ps.bind("proj_dim",
               demo->add_option("--proj-dim", demo_proj_dim, "Task head projection width"),
               &demo_proj_dim);
  demo_ps.bind("head_layers",
               demo->add_option("--head-layers", demo_head_layers, "Task head recurrent layers"),
               &demo_head_layers);
  demo_ps.bind("epochs", demo->add_option("--epochs", demo_cfg.epochs, "Fine-tuning epochs"),
               &demo_cfg.epochs);
  demo_ps.bind("lr", demo->add_option("--lr", demo_cfg.lr, "Learning rate"), &demo_cfg.lr);
  demo_ps.bind("weight_decay",
               demo->add_option("--weight-decay", demo_cfg.weight_decay, "Decoupled weight decay"),
               &demo_cfg.weight_decay);
  demo_ps.bind("batch_size", demo->add_option("--batch-size", demo_cfg.batch_size, "Batch size"),
               &demo_cfg.batch_size);
  demo_ps.bind("freeze_tokenizer",
               demo->add_flag("--freeze-tokenizer", demo_cfg.freeze_tokenizer,
                              "Train the head only; tokenizer parameters stay fixed"),
               &demo_cfg.freeze_tokenizer);
  demo_ps.bind_opt_string("lang", demo->add_option("--lang", demo_lang, "Language tag to prepend"),
                          &demo_lang);
  add_common(demo, &demo_common, &demo_ps);
  demo->callback([&] {
    fs::path dir = finalize_config(demo_common, demo_ps, "finetune-demo");
    if (demo_checkpoint.empty()) throw ConfigError("finetune-demo: --checkpoint is required");
    if (demo_alphabet.empty()) throw ConfigError("finetune-demo: --alphabet is required");
    if (demo_synthetic == !demo_task.empty())
      throw ConfigError("finetune-demo: pass exactly one of --task FILE or --synthetic");
    Alphabet alphabet = Alphabet::parse(read_file(demo_alphabet));
    TaggerModel model = parse_checkpoint(read_file(demo_checkpoint), alphabet);
    std::vector<LabeledExample> train_data, eval_data;
    if (demo_synthetic) {
      TaskData td = make_task_data(demo_common.seed, demo_train_n, demo_eval_n, demo_typo_fraction);
      train_data = std::move(td.train);
      eval_data = std::move(td.eval);
      write_file((dir / "task-train.tsv").string(),
                 serialize_task_examples(train_data, demo_common.seed));
      write_file((dir / "task-eval.tsv").string(),
                 serialize_task_examples(eval_data, demo_common.seed));
    } else {
      std::vector<LabeledExample> all = parse_task_examples(read_file(demo_task));
      if (all.size() < 2) throw EmptyInputError("finetune-demo: need at least 2 task examples");
      Rng rng(demo_common.seed);
      rng.shuffle(all);
      size_t train_n = all.size() - std::max<size_t>(1, all.size() / 5);
      train_data.assign(all.begin(), all.begin() + train_n);
      eval_data.assign(all.begin() + train_n, all.end());
    }
    int classes = 2;
    for (const auto& ex : train_data) classes = std::max(classes, ex.label + 1);
    for (const auto& ex : eval_data) classes = std::max(classes, ex.label + 1);
    EncoderKind kind =
        demo_encoder == "tokenizer" ? EncoderKind::tokenizer : EncoderKind::char_baseline;
    int input_dim = kind == EncoderKind::tokenizer ? model.config.hidden_out_dim
                                                   : model.config.embed_dim;
    TaskHead head = init_task_head(input_dim, demo_proj_dim, classes, demo_head_layers,
                                   demo_common.seed);
    demo_cfg.seed = demo_common.seed;
    demo_cfg.lang = demo_lang;
    double before = evaluate_task(model, head, eval_data, kind, demo_lang);
    FinetuneResult fr = finetune(model, head, train_data, demo_cfg, kind);
    double after = evaluate_task(model, head, eval_data, kind, demo_lang);
    std::string bytes = serialize_checkpoint(model);
    parse_checkpoint(bytes, alphabet);
    write_file((dir / "model-finetuned.ckpt").string(), bytes);
    json metrics;
    metrics["before_accuracy"] = before;
    metrics["after_accuracy"] = after;
    metrics["epoch_loss"] = fr.epoch_loss;
    metrics["train_examples"] = train_data.size();
    metrics["eval_examples"] = eval_data.size();
    write_file((dir / "finetune-metrics.json").string(), metrics.dump(2) + "\n");
    out << "finetune-demo: accuracy " << before << " -> " << after
        << " (metrics in finetune-metrics.json)\n";
  });

  // Build an argv so CLI11 sees the arguments exactly as a shell would pass
  // them.
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("neurotok");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& a : full) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ntk
