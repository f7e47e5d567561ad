#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntk/common.hpp"
#include "ntk/tagger.hpp"
#include "ntk/tape.hpp"
#include "ntk/tensor.hpp"

namespace ntk {

// Classifier over pooled segment vectors: linear projection, stacked
// bidirectional LSTM over the segment sequence, max-pool over positions,
// linear class head.
struct TaskHead {
  int input_dim = 128;  // width of the incoming segment vectors
  int proj_dim = 256;   // projection width; also the encoder's per-position width
  int classes = 2;

  Tensor proj;  // input_dim x proj_dim
  std::vector<TaggerModel::Layer> lstm;
  Tensor cls_w;  // proj_dim x classes
  Tensor cls_b;  // 1 x classes

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
};

TaskHead init_task_head(int input_dim, int proj_dim, int classes, int layers, uint64_t seed);

struct LabeledExample {
  std::vector<std::u32string> words;
  int label = 0;

  bool operator==(const LabeledExample&) const = default;
};

enum class EncoderKind {
  tokenizer,       // pooled neural-segment vectors (model hiddens)
  char_baseline,   // per-word max over character embeddings, no segmentation
};

// Pooled segment vectors of every word, concatenated in order:
// (total segments) x hidden_out_dim.
Tensor encode_text(const TaggerModel& model, const std::vector<std::u32string>& words,
                   const std::optional<std::string>& lang = std::nullopt);

// One vector per word: elementwise max over its character embedding rows,
// (word count) x embed_dim. Character order does not matter to this baseline.
Tensor char_baseline_encode(const TaggerModel& model,
                            const std::vector<std::u32string>& words);

struct TaskGraph {
  Tape::NodeId loss = -1;    // -1 unless with_loss
  Tape::NodeId logits = -1;  // batch x classes
  std::vector<Tape::NodeId> tokenizer_leaves;  // TaggerModel::named_params order
  std::vector<Tape::NodeId> head_leaves;       // TaskHead::named_params order
};

// Records the composed text classifier. `segs` fixes the segmentation used
// for pooling (tokenizer kind; one Segmentation per word per example), so the
// discrete routing stays constant while gradients flow through the pooled
// values; the char_baseline kind ignores it. Labels feed a batch-mean
// cross-entropy when with_loss.
TaskGraph record_task_graph(Tape& tape, const TaggerModel& model, const TaskHead& head,
                            const std::vector<const LabeledExample*>& batch,
                            const std::vector<std::vector<Segmentation>>& segs,
                            EncoderKind kind, std::optional<int32_t> lang_id, bool with_loss,
                            bool tokenizer_grad, bool head_grad);

struct FinetuneConfig {
  int epochs = 5;
  double lr = 3e-4;
  double weight_decay = 0.01;
  int batch_size = 16;
  uint64_t seed = 0;
  bool freeze_tokenizer = false;
  std::optional<std::string> lang;

  void validate() const;
};

struct FinetuneResult {
  std::vector<double> epoch_loss;
};

// Cross-entropy training of head and (unless frozen) tokenizer together.
// Each batch re-tokenizes with the current parameters, then backpropagates
// through the pooled vectors; tag decisions themselves receive no gradient.
FinetuneResult finetune(TaggerModel& model, TaskHead& head,
                        const std::vector<LabeledExample>& data, const FinetuneConfig& config,
                        EncoderKind kind = EncoderKind::tokenizer);

// Fraction of argmax-correct labels.
double evaluate_task(const TaggerModel& model, const TaskHead& head,
                     const std::vector<LabeledExample>& data,
                     EncoderKind kind = EncoderKind::tokenizer,
                     const std::optional<std::string>& lang = std::nullopt);

struct TaskData {
  uint64_t seed = 0;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> eval;  // includes typo-perturbed examples
};

// Synthetic 2-class task: each text is filler words plus one marker word;
// the label says which marker family it came from. A typo_fraction of the
// held-out texts get one character edit in one word.
TaskData make_task_data(uint64_t seed, int n_train, int n_eval, double typo_fraction = 0.5);

// TSV "text<TAB>label"; an optional "#seed=<n>" comment line leads.
std::string serialize_task_examples(const std::vector<LabeledExample>& examples,
                                    std::optional<uint64_t> seed);
std::vector<LabeledExample> parse_task_examples(const std::string& text);

}  // namespace ntk
