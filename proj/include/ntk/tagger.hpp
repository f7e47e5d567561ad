#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntk/common.hpp"
#include "ntk/corpus.hpp"
#include "ntk/tape.hpp"
#include "ntk/tensor.hpp"

namespace ntk {

struct TaggerConfig {
  int embed_dim = 64;
  int hidden_out_dim = 128;  // concatenated two-direction output, per position
  int layers = 2;
  double lr_max = 3e-4;
  int t0_epochs = 3;
  int t_mult = 2;
  int epochs = 6;
  double weight_decay = 0.01;
  int batch_size = 32;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// Character embedding -> stacked bidirectional LSTM -> 2-class head. All
// parameters live on the f32 grid so checkpoints round-trip bitwise.
struct TaggerModel {
  struct Direction {
    Tensor wx;  // in_dim x 4H, gate order [input, forget, cell, output]
    Tensor wh;  // H x 4H
    Tensor b;   // 1 x 4H
  };
  struct Layer {
    Direction fwd, bwd;
  };

  TaggerConfig config;
  Alphabet alphabet;
  Tensor embedding;  // |alphabet| x embed_dim; row 0 is PAD
  std::vector<Layer> lstm;
  Tensor head_w;  // hidden_out_dim x 2
  Tensor head_b;  // 1 x 2

  // Fixed walk order; checkpoints and optimizer state follow it.
  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
};

// True for the bias tensors, which are exempt from weight decay.
bool is_bias_param(const std::string& name);

// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
TaggerModel init_tagger(const TaggerConfig& config, const Alphabet& alphabet);

// One gated recurrent direction over a step-major (steps * batch) x in block;
// shared by the tagger and the task head. zero is a batch x h zero leaf.
Tape::NodeId lstm_direction(Tape& tape, Tape::NodeId x, Tape::NodeId wx, Tape::NodeId wh,
                            Tape::NodeId b, int steps, int batch, int h, Tape::NodeId zero);

struct BatchExample {
  const std::vector<int32_t>* char_ids = nullptr;
  const TagSequence* tags = nullptr;  // required only when recording the loss
  std::optional<int32_t> lang_id;
};

struct BatchGraph {
  Tape::NodeId loss = -1;     // scalar; -1 unless with_loss
  Tape::NodeId logits = -1;   // (padded_len * batch) x 2
  Tape::NodeId hiddens = -1;  // (padded_len * batch) x hidden_out_dim
  int batch = 0;
  int padded_len = 0;
  // Leaves in named_params() order; grads align with the model's tensors.
  std::vector<Tape::NodeId> param_leaves;

  // Step-major row of word b's sequence position t (language tag included).
  int row(int t, int b) const { return t * batch + b; }
};

// Records the batched forward pass. Rows are step-major; positions past a
// word's end hold values that must not be read. Each valid row is bitwise
// independent of the rest of the batch, so batching never changes outputs.
// Loss is the per-word tag NLL summed over characters, averaged over words;
// language-tag positions are excluded. An empty item list records a
// constant-zero loss whose gradients are zero everywhere.
BatchGraph record_batch(Tape& tape, const TaggerModel& model,
                        const std::vector<BatchExample>& items, bool with_loss,
                        bool needs_grad);

struct ForwardResult {
  Tensor logits;   // n x 2, one row per word character
  Tensor hiddens;  // n x hidden_out_dim
};

// Single-sequence forward. The language tag, when given, is prepended before
// encoding and its position is dropped from the outputs.
ForwardResult forward(const TaggerModel& model, const std::vector<int32_t>& char_ids,
                      std::optional<int32_t> lang_id);

// Sum over positions of -log softmax(logits_i)[tags_i].
double nll_loss(const Tensor& logits, const TagSequence& tags);

// Argmax tags (ties pick B), position 0 forced to B, then cut before each B.
Segmentation tokenize(const TaggerModel& model, const std::u32string& word,
                      const std::optional<std::string>& lang = std::nullopt);

// Batched tokenize; same results as word-by-word calls, faster.
std::vector<Segmentation> tokenize_many(const TaggerModel& model,
                                        const std::vector<std::u32string>& words,
                                        const std::optional<std::string>& lang = std::nullopt);

struct PooledWord {
  Segmentation seg;
  Tensor reps;  // |seg| x hidden_out_dim, elementwise max over each segment
};

PooledWord pool_representations(const TaggerModel& model, const std::u32string& word,
                                const std::optional<std::string>& lang = std::nullopt);

// Binary checkpoint: magic NTK1, u32 little-endian header length, JSON header
// (config, alphabet hash, tensor table), then f32 little-endian payloads.
std::string serialize_checkpoint(const TaggerModel& model);
TaggerModel parse_checkpoint(const std::string& bytes, const Alphabet& alphabet);
void save_checkpoint(const TaggerModel& model, const std::string& path);
TaggerModel load_checkpoint(const std::string& path, const Alphabet& alphabet);

// Nearest-f32 rounding; parameters stay on this grid so that checkpoint
// save/load is lossless.
void quantize_params_f32(TaggerModel& model);

}  // namespace ntk
