#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli_harness.hpp"
#include "ntk/corpus.hpp"
#include "ntk/io.hpp"

using namespace ntk;
using test::CliResult;
using test::TempDir;
using test::dir_contents;
using test::run_cli_capture;
using nlohmann::json;

namespace {

const char* kCorpus =
    "walk walked walking talk talked talking\n"
    "jump jumped jumping walk talk jump\n";

size_t line_count(const std::string& text) {
  size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// Resolved-config audit files record the out dir, so two runs into different
// directories differ there by design; drop them before byte comparisons.
std::map<std::string, std::string> artifacts_of(const std::string& dir) {
  auto files = dir_contents(dir);
  for (auto it = files.begin(); it != files.end();) {
    if (it->first.size() >= 12 &&
        it->first.compare(it->first.size() - 12, 12, ".config.json") == 0) {
      it = files.erase(it);
    } else {
      ++it;
    }
  }
  return files;
}

// curate the fixed corpus into dir, returning the table and alphabet paths.
std::pair<std::string, std::string> curate_corpus(const TempDir& in, const TempDir& out) {
  write_file(in.file("en.txt"), kCorpus);
  const CliResult r = run_cli_capture(
      {"curate", "en=" + in.file("en.txt"), "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  return {out.file("words-en.tsv"), out.file("alphabet.tsv")};
}

// curate + train-teacher, returning {table, alphabet, teacher} paths.
std::vector<std::string> make_teacher(const TempDir& in, const TempDir& out) {
  auto [table, alphabet] = curate_corpus(in, out);
  const CliResult r = run_cli_capture({"train-teacher", "--kind", "unigram", "--table", table,
                                       "--vocab-size", "20", "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  return {table, alphabet, out.file("teacher-en-unigram.tsv")};
}

// Full pipeline through `train`, returning {alphabet, teacher, checkpoint}.
std::vector<std::string> make_model(const TempDir& in, const TempDir& out) {
  auto paths = make_teacher(in, out);
  CliResult r = run_cli_capture({"distill", "--mode", "mono", "--alphabet", paths[1], "--table",
                                 paths[0], "--teacher", "en=" + paths[2], "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  r = run_cli_capture({"train", "--dataset", out.file("dataset.jsonl"), "--alphabet", paths[1],
                       "--embed-dim", "4", "--hidden-out-dim", "8", "--epochs", "2",
                       "--batch-size", "8", "--seed", "7", "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  return {paths[1], paths[2], out.file("model.ckpt")};
}

}  // namespace

TEST_CASE("curate writes word tables and an alphabet deterministically") {
  TempDir in("cli-curate-in");
  write_file(in.file("a.txt"), "ab ab ba\nab cd\n");
  write_file(in.file("b.txt"), "dd ee\n");

  TempDir out1("cli-curate-out1");
  TempDir out2("cli-curate-out2");
  const std::vector<std::string> args{"curate", "en=" + in.file("a.txt"),
                                      "xx=" + in.file("b.txt")};
  auto with_dir = [&](const TempDir& d) {
    auto a = args;
    a.push_back("--out-dir");
    a.push_back(d.str());
    return run_cli_capture(a);
  };

  const CliResult r1 = with_dir(out1);
  INFO(r1.err);
  REQUIRE(r1.code == 0);
  CHECK(r1.out.find("curate: 2 word table(s)") != std::string::npos);

  const auto files = dir_contents(out1.str());
  REQUIRE(files.size() == 4);
  CHECK(files.count("alphabet.tsv") == 1);
  CHECK(files.count("curate.config.json") == 1);
  CHECK(files.count("words-en.tsv") == 1);
  CHECK(files.count("words-xx.tsv") == 1);

  const WordTable en = parse_word_table(files.at("words-en.tsv"));
  CHECK(en.lang == "en");
  CHECK(en.words.at(U"ab") == 3);
  CHECK(en.words.at(U"ba") == 1);
  CHECK(en.words.at(U"cd") == 1);

  REQUIRE(with_dir(out2).code == 0);
  CHECK(artifacts_of(out2.str()) == artifacts_of(out1.str()));

  TempDir out3("cli-curate-out3");
  const CliResult bad =
      run_cli_capture({"curate", "no-equals-here", "--out-dir", out3.str()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("error:") != std::string::npos);

  const CliResult none = run_cli_capture({"curate", "--out-dir", out3.str()});
  CHECK(none.code == 1);
  CHECK(none.err.find("error:") != std::string::npos);
}

TEST_CASE("config files supply defaults and explicit flags win") {
  TempDir in("cli-cfg-in");
  TempDir out("cli-cfg-out");
  auto [table, alphabet] = curate_corpus(in, out);

  write_file(in.file("cfg.json"), "{\"vocab_size\": 16}\n");
  CliResult r = run_cli_capture({"train-teacher", "--config", in.file("cfg.json"), "--kind",
                                 "bpe", "--table", table, "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  json resolved = json::parse(read_file(out.file("train-teacher.config.json")));
  CHECK(resolved["vocab_size"] == 16);
  CHECK(resolved["kind"] == "bpe");
  CHECK(resolved["command"] == "train-teacher");

  r = run_cli_capture({"train-teacher", "--config", in.file("cfg.json"), "--kind", "bpe",
                       "--table", table, "--vocab-size", "15", "--out-dir", out.str()});
  REQUIRE(r.code == 0);
  resolved = json::parse(read_file(out.file("train-teacher.config.json")));
  CHECK(resolved["vocab_size"] == 15);

  write_file(in.file("bad-key.json"), "{\"bogus\": 1}\n");
  r = run_cli_capture({"train-teacher", "--config", in.file("bad-key.json"), "--kind", "bpe",
                       "--table", table, "--out-dir", out.str()});
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown key") != std::string::npos);

  write_file(in.file("bad-type.json"), "{\"vocab_size\": \"big\"}\n");
  r = run_cli_capture({"train-teacher", "--config", in.file("bad-type.json"), "--kind", "bpe",
                       "--table", table, "--out-dir", out.str()});
  CHECK(r.code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("the curate to tokenize pipeline runs end to end") {
  TempDir in("cli-pipe-in");
  TempDir out("cli-pipe-out");
  auto paths = make_teacher(in, out);
  const std::string &table = paths[0], &alphabet = paths[1], &teacher = paths[2];

  // Distillation: one example per unique word in mono mode.
  CliResult r = run_cli_capture({"distill", "--mode", "mono", "--alphabet", alphabet, "--table",
                                 table, "--teacher", "en=" + teacher, "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const size_t unique = parse_word_table(read_file(table)).words.size();
  REQUIRE(unique == 9);
  CHECK(r.out.find("(9 examples)") != std::string::npos);
  CHECK(line_count(read_file(out.file("dataset.jsonl"))) == unique + 1);

  // Mixed mode doubles the record count.
  TempDir mixed("cli-pipe-mixed");
  r = run_cli_capture({"distill", "--mode", "mixed", "--alphabet", alphabet, "--table", table,
                       "--teacher", "en=" + teacher, "--out-dir", mixed.str()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("(18 examples)") != std::string::npos);

  // A teacher for the wrong language is rejected.
  r = run_cli_capture({"distill", "--mode", "mono", "--alphabet", alphabet, "--table", table,
                       "--teacher", "xx=" + teacher, "--out-dir", mixed.str()});
  CHECK(r.code == 1);
  CHECK(r.err.find("do not match") != std::string::npos);

  // Training: one log record per epoch, deterministic checkpoint bytes.
  r = run_cli_capture({"train", "--dataset", out.file("dataset.jsonl"), "--alphabet", alphabet,
                       "--embed-dim", "4", "--hidden-out-dim", "8", "--epochs", "2",
                       "--batch-size", "8", "--seed", "7", "--out-dir", out.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const std::string log = read_file(out.file("train-log.jsonl"));
  REQUIRE(line_count(log) == 2);
  std::istringstream log_in(log);
  std::string line;
  int epoch = 0;
  while (std::getline(log_in, line)) {
    const json rec = json::parse(line);
    CHECK(rec["epoch"] == ++epoch);
    CHECK(rec["train_loss"].is_number());
    CHECK(rec["val_loss"].is_number());
    CHECK(rec["lr"].get<double>() > 0.0);
  }

  TempDir redo("cli-pipe-redo");
  r = run_cli_capture({"train", "--dataset", out.file("dataset.jsonl"), "--alphabet", alphabet,
                       "--embed-dim", "4", "--hidden-out-dim", "8", "--epochs", "2",
                       "--batch-size", "8", "--seed", "7", "--out-dir", redo.str()});
  REQUIRE(r.code == 0);
  CHECK(read_file(redo.file("model.ckpt")) == read_file(out.file("model.ckpt")));

  TempDir other("cli-pipe-other");
  r = run_cli_capture({"train", "--dataset", out.file("dataset.jsonl"), "--alphabet", alphabet,
                       "--embed-dim", "4", "--hidden-out-dim", "8", "--epochs", "2",
                       "--batch-size", "8", "--seed", "8", "--out-dir", other.str()});
  REQUIRE(r.code == 0);
  CHECK(read_file(other.file("model.ckpt")) != read_file(out.file("model.ckpt")));

  // Tokenization: '/'-joined pieces, blank lines pass through, text survives.
  r = run_cli_capture({"tokenize", "--checkpoint", out.file("model.ckpt"), "--alphabet", alphabet,
                       "--out-dir", out.str()},
                      "walking\n\ntalk\n");
  INFO(r.err);
  REQUIRE(r.code == 0);
  std::vector<std::string> lines;
  std::istringstream tok_in(r.out);
  while (std::getline(tok_in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].empty());
  for (size_t i : {size_t(0), size_t(2)}) {
    std::string glued = lines[i];
    glued.erase(std::remove(glued.begin(), glued.end(), '/'), glued.end());
    CHECK(glued == (i == 0 ? "walking" : "talk"));
  }

  // The lang tag is accepted when the alphabet knows it.
  r = run_cli_capture({"tokenize", "--checkpoint", out.file("model.ckpt"), "--alphabet", alphabet,
                       "--lang", "en", "--out-dir", out.str()},
                      "walk\n");
  CHECK(r.code == 0);

  r = run_cli_capture({"train", "--alphabet", alphabet, "--out-dir", out.str()});
  CHECK(r.code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
  r = run_cli_capture({"tokenize", "--alphabet", alphabet, "--out-dir", out.str()}, "x\n");
  CHECK(r.code == 1);
}

TEST_CASE("eval reports every tokenizer at every noise level") {
  TempDir in("cli-eval-in");
  TempDir out("cli-eval-out");
  auto paths = make_model(in, out);
  const std::string &alphabet = paths[0], &teacher = paths[1], &ckpt = paths[2];

  TempDir ev("cli-eval-run");
  CliResult r = run_cli_capture({"eval", "--checkpoint", ckpt, "--alphabet", alphabet,
                                 "--teacher", "uni=" + teacher, "--corpus", in.file("en.txt"),
                                 "--noise-grid", "0,0.3", "--seed", "5", "--out-dir", ev.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2 tokenizers, 2 noise levels") != std::string::npos);

  const std::string csv = read_file(ev.file("report.csv"));
  CHECK(csv.rfind("tokenizer,noise_fraction,junk_rate,avg_subwords,self_f1\n", 0) == 0);
  CHECK(line_count(csv) == 5);  // header + 2 tokenizers x 2 levels

  const json report = json::parse(read_file(ev.file("report.json")));
  REQUIRE(report.is_array());
  REQUIRE(report.size() == 4);
  std::set<std::string> names;
  for (const auto& row : report) {
    names.insert(row["tokenizer"].get<std::string>());
    if (row["noise_fraction"] == 0.0) CHECK(row["self_f1"] == 1.0);
  }
  CHECK(names == std::set<std::string>{"neural", "uni"});

  // The default grid has eight levels.
  TempDir ev2("cli-eval-default");
  r = run_cli_capture({"eval", "--checkpoint", ckpt, "--alphabet", alphabet, "--corpus",
                       in.file("en.txt"), "--seed", "5", "--out-dir", ev2.str()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("1 tokenizers, 8 noise levels") != std::string::npos);
  CHECK(json::parse(read_file(ev2.file("report.json"))).size() == 8);

  r = run_cli_capture({"eval", "--checkpoint", ckpt, "--alphabet", alphabet, "--corpus",
                       in.file("en.txt"), "--noise-grid", "0,2", "--out-dir", ev2.str()});
  CHECK(r.code == 1);
  r = run_cli_capture({"eval", "--checkpoint", ckpt, "--alphabet", alphabet, "--corpus",
                       in.file("en.txt"), "--noise-grid", "abc", "--out-dir", ev2.str()});
  CHECK(r.code == 1);
}

TEST_CASE("the finetune demo trains through or around the tokenizer") {
  TempDir in("cli-demo-in");
  TempDir out("cli-demo-out");
  auto paths = make_model(in, out);
  const std::string &alphabet = paths[0], &ckpt = paths[2];

  const std::vector<std::string> base{"finetune-demo", "--checkpoint", ckpt, "--alphabet",
                                      alphabet, "--synthetic", "--train-n", "24", "--eval-n", "8",
                                      "--epochs", "1", "--proj-dim", "8", "--batch-size", "12",
                                      "--seed", "3"};
  auto with_extra = [&](const TempDir& d, const std::vector<std::string>& extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    a.push_back("--out-dir");
    a.push_back(d.str());
    return run_cli_capture(a);
  };

  TempDir d1("cli-demo-run1");
  CliResult r = with_extra(d1, {});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto files = dir_contents(d1.str());
  CHECK(files.count("task-train.tsv") == 1);
  CHECK(files.count("task-eval.tsv") == 1);
  CHECK(files.count("model-finetuned.ckpt") == 1);
  CHECK(files.count("finetune-metrics.json") == 1);

  const json metrics = json::parse(files.at("finetune-metrics.json"));
  CHECK(metrics["before_accuracy"].get<double>() >= 0.0);
  CHECK(metrics["before_accuracy"].get<double>() <= 1.0);
  CHECK(metrics["after_accuracy"].get<double>() >= 0.0);
  CHECK(metrics["after_accuracy"].get<double>() <= 1.0);
  CHECK(metrics["epoch_loss"].size() == 1);
  CHECK(metrics["train_examples"] == 24);
  CHECK(files.at("model-finetuned.ckpt") != read_file(ckpt));

  // Same seed, same bytes everywhere.
  TempDir d2("cli-demo-run2");
  REQUIRE(with_extra(d2, {}).code == 0);
  CHECK(artifacts_of(d2.str()) == artifacts_of(d1.str()));

  // Freezing the tokenizer keeps the checkpoint bitwise identical.
  TempDir d3("cli-demo-frozen");
  REQUIRE(with_extra(d3, {"--freeze-tokenizer"}).code == 0);
  CHECK(read_file(d3.file("model-finetuned.ckpt")) == read_file(ckpt));

  TempDir d4("cli-demo-chars");
  r = with_extra(d4, {"--encoder", "char-baseline"});
  INFO(r.err);
  CHECK(r.code == 0);

  // A labeled TSV can replace the synthetic generator.
  TempDir d5("cli-demo-task");
  r = run_cli_capture({"finetune-demo", "--checkpoint", ckpt, "--alphabet", alphabet, "--task",
                       d1.file("task-train.tsv"), "--epochs", "1", "--proj-dim", "8", "--seed",
                       "3", "--out-dir", d5.str()});
  INFO(r.err);
  CHECK(r.code == 0);

  TempDir d6("cli-demo-bad");
  r = run_cli_capture({"finetune-demo", "--checkpoint", ckpt, "--alphabet", alphabet,
                       "--synthetic", "--task", d1.file("task-train.tsv"), "--out-dir", d6.str()});
  CHECK(r.code == 1);
  CHECK(r.err.find("exactly one of") != std::string::npos);
  r = run_cli_capture({"finetune-demo", "--checkpoint", ckpt, "--alphabet", alphabet,
                       "--out-dir", d6.str()});
  CHECK(r.code == 1);
}

TEST_CASE("top level parsing reports usage problems without running") {
  CliResult r = run_cli_capture({});
  CHECK(r.code != 0);
  CHECK_FALSE(r.err.empty());

  r = run_cli_capture({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("neurotok") != std::string::npos);

  r = run_cli_capture({"frobnicate"});
  CHECK(r.code != 0);

  TempDir out("cli-usage-out");
  r = run_cli_capture({"train-teacher", "--kind", "bogus", "--table", "x.tsv", "--out-dir",
                       out.str()});
  CHECK(r.code != 0);
  CHECK(r.err.find("bogus") != std::string::npos);
}
