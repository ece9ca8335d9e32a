#include "pat/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <exception>

#include "pat/error.hpp"
#include "pat/ops.hpp"
#include "pat/rng.hpp"

namespace pat {

void zero_grads(std::span<Parameter> params) {
  for (auto& p : params) p.value.zero_grad();
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.value.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params)
      if (p.value.has_grad())
        for (double& g : p.value.mutable_grad()) g *= factor;
  }
  return norm;
}

void adam_step(std::span<Parameter> params, AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.frozen) continue;
    const std::size_t n = p.value.numel();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    const auto grad = p.value.grad();
    auto data = p.value.mutable_data();
    const std::size_t row = p.value.rank() == 2 ? p.value.dim(1) : n;
    const std::size_t first = std::min(n, p.frozen_rows * row);
    for (std::size_t j = first; j < n; ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter " + p.name + " at element " +
                           std::to_string(j));
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      data[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

double em_metric(const std::vector<std::string>& predictions,
                 const std::vector<std::vector<std::string>>& ground_truths) {
  if (predictions.size() != ground_truths.size())
    throw ContractError("em_metric: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(ground_truths.size()) + " questions");
  if (predictions.empty()) throw ContractError("em_metric: undefined for zero questions");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& answers = ground_truths[i];
    if (answers.empty())
      throw ContractError("em_metric: question " + std::to_string(i) + " has no ground truth");
    const std::string predicted = normalize_answer(predictions[i]);
    std::size_t matches = 0;
    for (const auto& a : answers) matches += normalize_answer(a) == predicted ? 1 : 0;
    total += static_cast<double>(matches) / static_cast<double>(answers.size());
  }
  return total / static_cast<double>(predictions.size());
}

EvalReport evaluate(const PatModel& model, const Vocabularies& vocab, const Dataset& dataset,
                    const FeatureStore& features) {
  const auto& cfg = model.config();
  if (cfg.n_answers != vocab.answers.size())
    throw ConfigError("model scores " + std::to_string(cfg.n_answers) +
                      " answers but the answer vocabulary holds " +
                      std::to_string(vocab.answers.size()));
  if (cfg.vocab_size != vocab.tokens.size())
    throw ConfigError("model embeds " + std::to_string(cfg.vocab_size) +
                      " tokens but the token vocabulary holds " +
                      std::to_string(vocab.tokens.size()));
  if (dataset.empty()) throw ContractError("evaluate: empty dataset");

  const std::size_t n = dataset.size();
  std::vector<std::int32_t> predicted(n, 0);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      const auto& ex = dataset.examples[static_cast<std::size_t>(i)];
      const auto tokens = vocab.tokens.encode(ex.question, cfg.max_question_len);
      const auto& regions = features.get(ex.image_id);
      predicted[static_cast<std::size_t>(i)] =
          model.predict({tokens, {}, regions.features, {}});
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport report;
  std::vector<std::string> predictions;
  std::vector<std::vector<std::string>> truths;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = dataset.examples[i];
    EvalRecord r{ex.id, vocab.answers.answer(predicted[i]), ex.answers, {}, 0.0};
    const std::string norm_pred = normalize_answer(r.predicted);
    std::size_t matches = 0;
    for (const auto& a : ex.answers) {
      const int alpha = normalize_answer(a) == norm_pred ? 0 : 1;
      r.alphas.push_back(alpha);
      matches += 1 - static_cast<std::size_t>(alpha);
    }
    r.score = static_cast<double>(matches) / static_cast<double>(ex.answers.size());
    predictions.push_back(r.predicted);
    truths.push_back(ex.answers);
    report.records.push_back(std::move(r));
  }
  report.em = em_metric(predictions, truths);
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::string out = "id\tpredicted\tground_truths\talphas\tscore\n";
  char buf[64];
  for (const auto& r : report.records) {
    out += r.id + '\t' + r.predicted + '\t';
    for (std::size_t j = 0; j < r.ground_truths.size(); ++j)
      out += (j ? "|" : "") + r.ground_truths[j];
    out += '\t';
    for (std::size_t j = 0; j < r.alphas.size(); ++j)
      out += (j ? "," : "") + std::to_string(r.alphas[j]);
    std::snprintf(buf, sizeof buf, "\t%.17g\n", r.score);
    out += buf;
  }
  return out;
}

Tensor batch_loss(const PatModel& model, const Batch& batch, ForwardContext& ctx) {
  std::vector<Tensor> rows;
  rows.reserve(batch.size);
  for (std::size_t b = 0; b < batch.size; ++b) {
    const Tensor scores = model.forward(batch.input(b), ctx);
    rows.push_back(reshape(scores, {1, scores.numel()}));
  }
  return cross_entropy(concat_rows(rows), batch.answer_ids);
}

namespace {

std::vector<std::vector<double>> snapshot(std::span<const Parameter> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void restore(std::span<Parameter> params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::ranges::copy(values[i], params[i].value.mutable_data().begin());
}

}  // namespace

TrainResult train(PatModel& model, const Vocabularies& vocab, const Dataset& train_set,
                  const Dataset* dev_set, const FeatureStore& features,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  const auto encoded = encode_examples(train_set, vocab.tokens, model.config().max_question_len);
  for (const auto& ex : encoded)
    if (ex.answer_id == kNoAnswer)
      throw ConfigError("training example " + train_set.examples[ex.index].id +
                        " has an answer outside the answer vocabulary");
  const bool use_dev = dev_set != nullptr && !dev_set->empty();

  TrainResult result;
  Rng master(config.seed);
  Rng dropout_rng = master.split();
  AdamState adam;
  auto params = model.parameters();
  std::vector<std::vector<double>> best;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t shuffle_seed = master.next();
    const auto batches =
        make_batches(encoded, features, config.batch_size,
                     config.shuffle ? std::optional<std::uint64_t>(shuffle_seed) : std::nullopt);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      ForwardContext ctx{true, config.dropout, &dropout_rng, nullptr};
      zero_grads(params);
      const Tensor loss = batch_loss(model, batch, ctx);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(bi));
      loss.backward();
      if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
      adam_step(params, adam, config);
      loss_sum += value * static_cast<double>(batch.size);
      ++result.steps;
    }

    EpochLog entry{epoch, loss_sum / static_cast<double>(encoded.size()), std::nullopt};
    if (use_dev) {
      entry.dev_em = evaluate(model, vocab, *dev_set, features).em;
      if (!result.best_dev_em || *entry.dev_em > *result.best_dev_em) {
        result.best_dev_em = entry.dev_em;
        result.best_epoch = epoch;
        best = snapshot(params);
      }
    } else {
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);
    if (hooks.stop && hooks.stop(entry, model)) break;
  }
  if (use_dev && !best.empty()) restore(params, best);
  return result;
}

}  // namespace pat
