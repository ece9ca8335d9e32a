#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pat/config.hpp"
#include "pat/data.hpp"
#include "pat/model.hpp"

namespace pat {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // per parameter, lazily sized
};

// One bias-corrected Adam update over every non-frozen parameter:
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
//   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// Parameters without a gradient buffer are treated as g = 0. Throws
// NumericError naming the parameter on a non-finite gradient.
void adam_step(std::span<Parameter> params, AdamState& state, const TrainConfig& config);

void zero_grads(std::span<Parameter> params);

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Parameter> params, double max_norm);

// Mean over questions of the fraction of ground-truth answers equal to the
// prediction, after normalize_answer on both sides.
double em_metric(const std::vector<std::string>& predictions,
                 const std::vector<std::vector<std::string>>& ground_truths);

struct EvalRecord {
  std::string id;
  std::string predicted;
  std::vector<std::string> ground_truths;
  std::vector<int> alphas;  // 0 on match, 1 otherwise
  double score = 0.0;       // mean of (1 - alpha)
};

struct EvalReport {
  double em = 0.0;
  std::vector<EvalRecord> records;
};

struct Vocabularies {
  TokenVocab tokens;
  AnswerVocab answers;
};

// Dropout off, no graph recording; examples are scored in parallel.
EvalReport evaluate(const PatModel& model, const Vocabularies& vocab, const Dataset& dataset,
                    const FeatureStore& features);

std::string format_eval_report(const EvalReport& report);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_em;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::optional<double> best_dev_em;
  std::size_t steps = 0;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  // Checked after each epoch; returning true ends training.
  std::function<bool(const EpochLog&, const PatModel&)> stop;
};

// Mini-batch training with cross-entropy, optional gradient clipping and
// Adam. With a dev set the model is left holding the parameters of the epoch
// with the best dev EM (earliest on ties); otherwise the final parameters.
// Throws DivergenceError on a non-finite loss.
TrainResult train(PatModel& model, const Vocabularies& vocab, const Dataset& train_set,
                  const Dataset* dev_set, const FeatureStore& features,
                  const TrainConfig& config, const TrainHooks& hooks = {});

// Mean cross-entropy of one batch, recorded on the tape.
Tensor batch_loss(const PatModel& model, const Batch& batch, ForwardContext& ctx);

}  // namespace pat
