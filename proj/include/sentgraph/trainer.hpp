#ifndef SENTGRAPH_TRAINER_HPP
#define SENTGRAPH_TRAINER_HPP

#include <functional>
#include <vector>

#include "sentgraph/eval.hpp"
#include "sentgraph/model.hpp"

namespace sentgraph::model {

// Learning-rate multiplier at `step` (0-based optimizer steps): linear warmup
// from 0 over the first `warmup_proportion` of `total_steps`, then cosine
// decay to 0 at the final step.
double lr_scale(int step, int total_steps, double warmup_proportion);

struct EpochStats {
  int epoch = 0;          // 1-based
  double mean_loss = 0.0; // mean per-sentence loss this epoch
  double train_sf1 = -1.0;
  double dev_sf1 = -1.0;  // -1 when no dev set was given
  double lr_multiplier = 0.0;
  int truncated_nodes = 0;
};

struct TrainResult {
  ModelState best;  // snapshot with the best selection score
  double best_sf1 = -1.0;
  int best_epoch = -1;
  std::vector<EpochStats> history;
};

struct TrainOptions {
  const Dataset* dev = nullptr;  // selection uses dev SF1 when given, else train SF1
  std::function<void(const EpochStats&)> on_epoch;
};

// Sentiment-graph F1 of the model's predictions against `gold`.
double dataset_sf1(const ModelState& state, const Dataset& gold);

// Full predictions for a dataset (gold sentences, predicted opinions).
Dataset predict_dataset(const ModelState& state, const Dataset& gold,
                        PredictStats* stats = nullptr);

// AdamW with decoupled weight decay, separate encoder/decoder groups, seeded
// shuffling, batch-mean gradients. Deterministic: same config + data →
// bit-identical parameters. Throws std::runtime_error with a diagnostic if
// the loss goes non-finite.
TrainResult train(const ModelConfig& config, const Dataset& train_data,
                  const TrainOptions& options = {});

}  // namespace sentgraph::model

#endif  // SENTGRAPH_TRAINER_HPP
