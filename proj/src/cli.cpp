#include "pat/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "pat/checkpoint.hpp"
#include "pat/error.hpp"
#include "pat/grad_check.hpp"
#include "pat/ops.hpp"
#include "pat/synthetic.hpp"
#include "pat/trainer.hpp"

namespace pat::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// ---- gen-synth ------------------------------------------------------------

int gen_synth(const SynthSpec& spec, const fs::path& out_dir, std::ostream& out) {
  spec.validate();
  const SyntheticData data = generate_synthetic(spec);
  write_synthetic(data, out_dir);
  out << describe(spec) << "\n"
      << "wrote " << data.train.size() << " train, " << data.dev.size() << " dev, "
      << data.test.size() << " test examples and " << data.features.size()
      << " feature files to " << out_dir.string() << "\n";
  return kOk;
}

// ---- train ------------------------------------------------------------------

std::string format_train_log(const TrainResult& result) {
  std::string log = "epoch\ttrain_loss\tdev_em\n";
  for (const auto& e : result.log)
    log += std::to_string(e.epoch) + '\t' + fmt(e.train_loss) + '\t' +
           (e.dev_em ? fmt(*e.dev_em) : "-") + '\n';
  log += "best\t" + std::to_string(result.best_epoch) + '\t' +
         (result.best_dev_em ? fmt(*result.best_dev_em) : "-") + '\n';
  return log;
}

int train_cmd(const fs::path& config_path, const fs::path& data_root, const fs::path& out_dir,
              std::ostream& out) {
  RunConfig run = load_run_config(config_path);
  run.train.validate();

  const fs::path train_path = data_root / "data" / "train.tsv";
  if (!fs::is_regular_file(train_path))
    throw IoError("missing training split " + train_path.string());
  const fs::path answers_path = data_root / "data" / "answers.txt";
  const Dataset train_set =
      fs::exists(answers_path) ? load_dataset(train_path, answers_path) : load_dataset(train_path);

  std::optional<Dataset> dev_set;
  const fs::path dev_path = data_root / "data" / "dev.tsv";
  if (fs::is_regular_file(dev_path)) dev_set = load_dataset(dev_path, train_set.answers);

  std::vector<const Dataset*> splits{&train_set};
  if (dev_set) splits.push_back(&*dev_set);
  const FeatureStore features = FeatureStore::load(data_root / "features", splits,
                                                   run.model.feature_dim, run.model.max_regions);

  Vocabularies vocab{TokenVocab::build(train_set.examples), train_set.answers};
  ModelConfig cfg = run.model;
  cfg.vocab_size = vocab.tokens.size();
  cfg.n_answers = vocab.answers.size();
  cfg.feature_dim = features.feature_dim();
  cfg.validate();

  PatModel model(cfg, run.train.seed, run.freeze_embeddings);
  if (!run.pretrained_vectors.empty()) {
    const std::size_t filled =
        load_pretrained_vectors(run.pretrained_vectors, vocab.tokens, model.text.embedding.weights);
    out << "loaded " << filled << " pretrained vectors\n";
  }
  out << "model: " << model.parameter_count() << " parameters, text mode "
      << to_string(cfg.text_mode) << "\n";

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " loss " << fmt(e.train_loss);
    if (e.dev_em) out << " dev_em " << fmt(*e.dev_em);
    out << "\n";
  };
  const TrainResult result =
      train(model, vocab, train_set, dev_set ? &*dev_set : nullptr, features, run.train, hooks);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  save_checkpoint(model, vocab, out_dir / "checkpoint.pat");
  write_text(out_dir / "train_log.txt", format_train_log(result));
  vocab.answers.save(out_dir / "answers.txt");

  if (!result.log.empty()) out << "final train_loss " << fmt(result.log.back().train_loss) << "\n";
  if (result.best_dev_em)
    out << "best epoch " << result.best_epoch << " dev_em " << fmt(*result.best_dev_em) << "\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

int eval_cmd(const fs::path& checkpoint, const fs::path& data_root, const std::string& split,
             std::optional<fs::path> out_dir, std::ostream& out) {
  LoadedModel loaded = load_checkpoint(checkpoint);
  const ModelConfig& cfg = loaded.model.config();

  const fs::path answers_path = data_root / "data" / "answers.txt";
  if (fs::exists(answers_path) && !(AnswerVocab::load(answers_path) == loaded.vocab.answers))
    throw ConfigError(answers_path.string() + " does not match the checkpoint's answer vocabulary");

  const fs::path split_path = data_root / "data" / (split + ".tsv");
  if (!fs::is_regular_file(split_path)) throw IoError("missing split " + split_path.string());
  const Dataset dataset = load_dataset(split_path, loaded.vocab.answers);
  if (dataset.empty()) throw ConfigError("split " + split + " is empty; EM is undefined");

  const FeatureStore features =
      FeatureStore::load(data_root / "features", {&dataset}, cfg.feature_dim, cfg.max_regions);
  const EvalReport report = evaluate(loaded.model, loaded.vocab, dataset, features);

  const fs::path dir = out_dir ? *out_dir : checkpoint.parent_path();
  std::error_code ec;
  if (!dir.empty()) fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "eval_report.tsv", format_eval_report(report));
  out << "split " << split << " n " << dataset.size() << " em " << fmt(report.em) << "\n";
  return kOk;
}

// ---- gradcheck --------------------------------------------------------------

struct Variant {
  std::string label;
  TextMode mode;
  bool unigram_projection;
};

int gradcheck_cmd(const std::optional<fs::path>& config_path, double tol, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig run;
  if (config_path) run = load_run_config(*config_path);
  if (run.train.dropout > 0.0)
    out << "note: dropout " << fmt(run.train.dropout)
        << " from the config is disabled for the check\n";

  SynthSpec spec;
  spec.n_examples = 4;
  spec.n_images = 2;
  spec.vocab_size = 12;
  spec.n_answers = 4;
  spec.n_regions = 5;
  spec.feature_dim = 8;
  spec.seed = run.train.seed;
  const SyntheticData data = generate_synthetic(spec);
  Dataset toy{data.train, AnswerVocab::build(data.train)};
  const TokenVocab tokens = TokenVocab::build(toy.examples);
  FeatureStore features;
  for (const auto& [id, f] : data.features) features.insert({id, f});

  ModelConfig base = run.model;
  base.hidden_dim = 16;
  base.n_layers = 2;
  base.n_heads = 2;
  base.embed_dim = base.ffn_dim = base.fused_dim = 0;
  base.vocab_size = tokens.size();
  base.n_answers = toy.answers.size();
  base.feature_dim = spec.feature_dim;

  // Two examples of different lengths so padding masks are exercised.
  auto encoded = encode_examples(toy, tokens, base.max_question_len);
  encoded.resize(2);
  const Batch batch = make_batches(encoded, features, 2).front();

  std::vector<Variant> variants{
      {"text[" + std::string(to_string(base.text_mode)) +
           (base.use_unigram_projection ? "" : ",no-projection") + "]",
       base.text_mode, base.use_unigram_projection}};
  for (TextMode m : {TextMode::hierarchical, TextMode::embedding_only, TextMode::recurrent})
    if (m != base.text_mode) variants.push_back({"text[" + std::string(to_string(m)) + "]", m, true});
  if (base.text_mode != TextMode::hierarchical || base.use_unigram_projection)
    variants.push_back({"text[hierarchical,no-projection]", TextMode::hierarchical, false});

  GradCheckOptions options;
  options.tol = tol;
  options.seed = run.train.seed;

  std::map<std::string, double> module_error;
  std::vector<std::string> module_order;
  std::vector<ParamCheck> all;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const Variant& v = variants[vi];
    ModelConfig cfg = base;
    cfg.text_mode = v.mode;
    cfg.use_unigram_projection = v.unigram_projection;
    cfg.validate();
    PatModel model(cfg, run.train.seed);

    // The first variant checks every parameter; the others only add text
    // encoder coverage.
    std::vector<Parameter> selected;
    for (const auto& p : model.parameters())
      if (vi == 0 || parameter_module(p.name) == "text") selected.push_back(p);

    ForwardContext ctx{};
    const auto loss = [&] { return batch_loss(model, batch, ctx); };
    const GradCheckReport report = grad_check(loss, selected, options);
    for (const auto& c : report.params) {
      std::string module(parameter_module(c.name));
      if (module == "text") module = v.label;
      if (!module_error.contains(module)) module_order.push_back(module);
      module_error[module] = std::max(module_error[module], c.max_rel_error);
      ParamCheck named = c;
      named.name = v.label + " " + c.name;
      all.push_back(std::move(named));
    }
  }

  double worst = 0.0;
  for (const auto& m : module_order) {
    out << m << " max_rel_error " << fmt(module_error[m]) << "\n";
    worst = std::max(worst, module_error[m]);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "checked " << all.size() << " tensors in " << fmt(seconds) << " s, max_rel_error "
      << fmt(worst) << ", tol " << fmt(tol) << "\n";
  if (worst <= tol) {
    out << "gradcheck passed\n";
    return kOk;
  }
  std::ranges::sort(all, [](const ParamCheck& a, const ParamCheck& b) {
    return a.max_rel_error > b.max_rel_error;
  });
  out << "gradcheck FAILED; worst parameters:\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, all.size()); ++i) {
    const auto& c = all[i];
    if (c.max_rel_error <= tol) break;
    out << "  " << c.name << "[" << c.worst_index << "] rel " << fmt(c.max_rel_error)
        << " analytic " << fmt(c.worst_analytic) << " numeric " << fmt(c.worst_numeric) << "\n";
  }
  return kVerifyFailed;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel attention transformer for visual question answering"};
  app.require_subcommand(1);

  SynthSpec spec;
  fs::path synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset and region features");
  gen->add_option("--n-examples", spec.n_examples, "Training examples")->capture_default_str();
  gen->add_option("--n-images", spec.n_images, "Distinct images")->capture_default_str();
  gen->add_option("--vocab-size", spec.vocab_size, "Token vocabulary incl. PAD/UNK")
      ->capture_default_str();
  gen->add_option("--n-answers", spec.n_answers, "Answer classes")->capture_default_str();
  gen->add_option("--n-regions", spec.n_regions, "Regions per image")->capture_default_str();
  gen->add_option("--feature-dim", spec.feature_dim, "Region feature width")
      ->capture_default_str();
  gen->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", synth_out, "Output directory")->required();

  fs::path config_path, data_root, train_out;
  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint.pat");
  tr->add_option("--config", config_path, "Run configuration file")->required();
  tr->add_option("--data", data_root, "Dataset root (data/, features/)")->required();
  tr->add_option("--out", train_out, "Output directory")->required();

  fs::path checkpoint, eval_data;
  std::string split = "dev";
  std::optional<fs::path> eval_out;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", eval_data, "Dataset root (data/, features/)")->required();
  ev->add_option("--split", split, "Split name")->capture_default_str();
  ev->add_option("--out", eval_out, "Report directory (default: checkpoint directory)");

  std::optional<fs::path> gc_config;
  double tol = 1e-3;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check on a toy model");
  gc->add_option("--config", gc_config, "Run configuration file");
  gc->add_option("--tol", tol, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  if (gen->parsed()) return guarded(err, [&] { return gen_synth(spec, synth_out, out); });
  if (tr->parsed())
    return guarded(err, [&] { return train_cmd(config_path, data_root, train_out, out); });
  if (ev->parsed())
    return guarded(err, [&] { return eval_cmd(checkpoint, eval_data, split, eval_out, out); });
  return guarded(err, [&] { return gradcheck_cmd(gc_config, tol, out); });
}

}  // namespace pat::cli
