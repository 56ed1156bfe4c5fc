#include "sentgraph/trainer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sentgraph::model {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kAdamEps = 1e-8;
}  // namespace

double lr_scale(int step, int total_steps, double warmup_proportion) {
  if (total_steps <= 0) return 0.0;
  int warmup = static_cast<int>(std::llround(warmup_proportion * total_steps));
  if (warmup > 0 && step < warmup) return static_cast<double>(step) / warmup;
  if (step >= total_steps) return 0.0;
  double progress = total_steps == warmup
                        ? 1.0
                        : static_cast<double>(step - warmup) / (total_steps - warmup);
  return 0.5 * (1.0 + std::cos(kPi * progress));
}

Dataset predict_dataset(const ModelState& state, const Dataset& gold, PredictStats* stats) {
  Dataset out;
  out.reserve(gold.size());
  for (const SentimentGraph& g : gold) {
    PredictStats local;
    out.push_back(predict(state, g.sentence, &local));
    if (stats) *stats += local;
  }
  return out;
}

double dataset_sf1(const ModelState& state, const Dataset& gold) {
  if (gold.empty()) return 0.0;
  Dataset pred = predict_dataset(state, gold);
  return sent_graph_f1(gold, pred, /*require_polarity=*/true).f1;
}

TrainResult train(const ModelConfig& config, const Dataset& train_data,
                  const TrainOptions& options) {
  config.validate();
  if (train_data.empty()) throw std::invalid_argument("train: empty training set");

  ModelState state = ModelState::init(config, Vocabulary::build(train_data));

  std::vector<GeneralGraph> golds;
  golds.reserve(train_data.size());
  for (const SentimentGraph& g : train_data) golds.push_back(encode_graph(g, config.encoding));

  const int n = static_cast<int>(train_data.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = steps_per_epoch * config.epochs;
  const bool freeze_encoder = config.freeze_bert || config.encoder_freeze_embedding;

  // Optimizer state, parallel to the parameter tensors.
  std::vector<nn::Mat> adam_m, adam_v;
  for (const nn::Mat& v : state.values) {
    adam_m.emplace_back(v.rows, v.cols);
    adam_v.emplace_back(v.rows, v.cols);
  }

  nn::Rng rng(config.seed ^ 0x5eed5eed5eed5eedULL);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  int step = 0;
  int adam_t = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    }

    double loss_sum = 0.0;
    int loss_count = 0;
    int truncated = 0;

    for (int start = 0; start < n; start += config.batch_size) {
      int count = std::min(config.batch_size, n - start);
      state.zero_grads();
      for (int b = 0; b < count; ++b) {
        const GeneralGraph& gold = golds[order[start + b]];
        try {
          nn::Tape tape;
          LossBreakdown loss = sentence_loss(tape, state, gold, /*training=*/true, rng);
          tape.backward(loss.loss_node, 1.0 / count);  // batch-mean gradients
          loss_sum += loss.total;
          truncated += loss.truncated_nodes;
          ++loss_count;
        } catch (const nn::NumericError& e) {
          std::ostringstream os;
          os << "training diverged (" << e.what() << ") at epoch " << epoch << ", step "
             << step << ", sentence '" << gold.sentence.sent_id << "'";
          throw std::runtime_error(os.str());
        }
      }

      double scale = lr_scale(step, total_steps, config.warmup_proportion);
      ++adam_t;
      double bc1 = 1.0 - std::pow(config.beta_1, adam_t);
      double bc2 = 1.0 - std::pow(config.beta_2, adam_t);
      for (size_t t = 0; t < state.values.size(); ++t) {
        bool enc = state.encoder_group[t] != 0;
        if (enc && freeze_encoder) continue;  // frozen: bit-identical forever
        double lr = scale * (enc ? config.encoder_learning_rate : config.decoder_learning_rate);
        double wd = enc ? config.encoder_weight_decay : config.decoder_weight_decay;
        nn::Mat& theta = state.values[t];
        nn::Mat& g = state.grads[t];
        nn::Mat& m = adam_m[t];
        nn::Mat& v = adam_v[t];
        for (int i = 0; i < theta.size(); ++i) {
          m.data[i] = config.beta_1 * m.data[i] + (1.0 - config.beta_1) * g.data[i];
          v.data[i] = config.beta_2 * v.data[i] + (1.0 - config.beta_2) * g.data[i] * g.data[i];
          double mhat = m.data[i] / bc1;
          double vhat = v.data[i] / bc2;
          theta.data[i] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + wd * theta.data[i]);
        }
      }
      ++step;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    stats.lr_multiplier = lr_scale(step, total_steps, config.warmup_proportion);
    stats.truncated_nodes = truncated;
    stats.train_sf1 = dataset_sf1(state, train_data);
    if (options.dev) stats.dev_sf1 = dataset_sf1(state, *options.dev);
    double selection = options.dev ? stats.dev_sf1 : stats.train_sf1;
    if (selection > result.best_sf1) {
      result.best_sf1 = selection;
      result.best_epoch = epoch;
      result.best = state;
    }
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }

  if (result.best_epoch < 0) {
    result.best = state;
  }
  return result;
}

}  // namespace sentgraph::model
