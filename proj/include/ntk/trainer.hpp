#pragma once

#include <string>
#include <vector>

#include "ntk/distill.hpp"
#include "ntk/tagger.hpp"

namespace ntk {

struct EpochRecord {
  int epoch = 0;        // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;      // rate at the first step of the epoch
};

struct TrainResult {
  TaggerModel model;  // parameters from the epoch with the lowest val loss
  std::vector<EpochRecord> log;
};

// Trains from a seeded init: 95/5 train/validation split, per-epoch shuffle,
// per-step cosine warm-restart rate, AdamW. Losses are per-word character
// NLL sums averaged over words.
TrainResult train_tagger(const DistillDataset& dataset, const TaggerConfig& config,
                         const Alphabet& alphabet);

// JSON lines, one {"epoch","train_loss","val_loss","lr"} record per epoch.
std::string serialize_training_log(const std::vector<EpochRecord>& log);

}  // namespace ntk
