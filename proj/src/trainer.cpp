#include "ntk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <json.hpp>

#include "ntk/optim.hpp"
#include "ntk/rng.hpp"
#include "ntk/tape.hpp"

namespace ntk {

namespace {

BatchExample to_batch_example(const DistillExample& ex) {
  BatchExample it;
  it.char_ids = &ex.char_ids;
  it.tags = &ex.tags;
  it.lang_id = ex.lang_id;
  return it;
}

// Mean per-word loss over an index range, forward only.
double eval_loss(const TaggerModel& model, const DistillDataset& ds,
                 const std::vector<size_t>& idx, int batch_size, Tape& tape) {
  double total = 0.0;
  size_t words = 0;
  std::vector<BatchExample> items;
  for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch_size)) {
    const size_t n = std::min(static_cast<size_t>(batch_size), idx.size() - start);
    items.clear();
    for (size_t i = 0; i < n; ++i)
      items.push_back(to_batch_example(ds.examples[idx[start + i]]));
    tape.reset();
    const BatchGraph g = record_batch(tape, model, items, true, false);
    total += tape.value(g.loss).v[0] * static_cast<double>(n);
    words += n;
  }
  return total / static_cast<double>(words);
}

}  // namespace

TrainResult train_tagger(const DistillDataset& dataset, const TaggerConfig& config,
                         const Alphabet& alphabet) {
  config.validate();
  const size_t n = dataset.examples.size();
  if (n == 0) throw EmptyInputError("cannot train on an empty dataset");

  TaggerModel model = init_tagger(config, alphabet);
  AdamW opt(model.named_params(), config.weight_decay);

  Rng rng(config.seed);
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const size_t train_n = std::max<size_t>(1, n * 19 / 20);
  std::vector<size_t> train_idx(order.begin(), order.begin() + static_cast<ptrdiff_t>(train_n));
  std::vector<size_t> val_idx(order.begin() + static_cast<ptrdiff_t>(train_n), order.end());
  // A dataset too small to hold out 5% is validated on its training words.
  if (val_idx.empty()) val_idx = train_idx;

  const size_t batches_per_epoch =
      (train_idx.size() + static_cast<size_t>(config.batch_size) - 1) /
      static_cast<size_t>(config.batch_size);

  TrainResult result;
  result.model = model;
  double best_val = std::numeric_limits<double>::infinity();

  Tape tape;
  std::vector<BatchExample> items;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_nll = 0.0;
    double first_lr = 0.0;
    size_t batch_index = 0;
    for (size_t start = 0; start < train_idx.size();
         start += static_cast<size_t>(config.batch_size), ++batch_index) {
      const size_t bn =
          std::min(static_cast<size_t>(config.batch_size), train_idx.size() - start);
      items.clear();
      for (size_t i = 0; i < bn; ++i)
        items.push_back(to_batch_example(dataset.examples[train_idx[start + i]]));
      const double lr = lr_schedule(
          static_cast<double>(epoch) + static_cast<double>(batch_index) /
                                           static_cast<double>(batches_per_epoch),
          config);
      if (batch_index == 0) first_lr = lr;
      tape.reset();
      const BatchGraph g = record_batch(tape, model, items, true, true);
      const double loss = tape.value(g.loss).v[0];
      if (!std::isfinite(loss))
        throw StateError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                         std::to_string(batch_index + 1));
      epoch_nll += loss * static_cast<double>(bn);
      tape.backward(g.loss);
      std::vector<const Tensor*> grads;
      grads.reserve(g.param_leaves.size());
      for (Tape::NodeId id : g.param_leaves) grads.push_back(&tape.grad(id));
      opt.step(grads, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = epoch_nll / static_cast<double>(train_idx.size());
    rec.val_loss = eval_loss(model, dataset, val_idx, config.batch_size, tape);
    rec.lr = first_lr;
    result.log.push_back(rec);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.model = model;
    }
  }
  // Land the selected parameters on the f32 grid so the in-memory model and
  // its checkpoint behave identically.
  quantize_params_f32(result.model);
  return result;
}

std::string serialize_training_log(const std::vector<EpochRecord>& log) {
  std::string out;
  for (const EpochRecord& r : log) {
    nlohmann::json rec;
    rec["epoch"] = r.epoch;
    rec["train_loss"] = r.train_loss;
    rec["val_loss"] = r.val_loss;
    rec["lr"] = r.lr;
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace ntk
