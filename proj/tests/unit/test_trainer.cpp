#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "oracles.hpp"
#include "pat/checkpoint.hpp"
#include "pat/error.hpp"
#include "pat/ops.hpp"
#include "pat/rng.hpp"
#include "pat/synthetic.hpp"
#include "test_util.hpp"

using namespace pat;

namespace {

struct Fixture {
  Dataset train, dev;
  FeatureStore store;
  Vocabularies vocab;
  ModelConfig cfg;

  explicit Fixture(std::size_t hidden = 16) {
    SynthSpec spec;
    spec.n_examples = 24;
    spec.n_images = 4;
    spec.vocab_size = 12;
    spec.n_answers = 4;
    spec.n_regions = 5;
    spec.feature_dim = 8;
    const auto data = generate_synthetic(spec);
    train = {data.train, AnswerVocab::build(data.train)};
    dev = {data.dev, train.answers};
    for (const auto& [id, f] : data.features) store.insert({id, f});
    vocab = {TokenVocab::build(train.examples), train.answers};
    cfg.vocab_size = vocab.tokens.size();
    cfg.n_answers = vocab.answers.size();
    cfg.feature_dim = spec.feature_dim;
    cfg.hidden_dim = hidden;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
  }

  TrainConfig train_config(std::size_t epochs) const {
    TrainConfig t;
    t.learning_rate = 1e-2;
    t.batch_size = 8;
    t.epochs = epochs;
    t.seed = 5;
    return t;
  }
};

Parameter scalar_param(double value, double grad) {
  Parameter p{"w", Tensor::from({1}, {value}, true)};
  p.value.mutable_grad()[0] = grad;
  return p;
}

std::vector<double> snapshot(const PatModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
  return out;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("adam first step is sign-following") {
    TrainConfig cfg;
    for (double g : {3.0, -0.25, 1e-3}) {
      std::vector<Parameter> ps{scalar_param(0.0, g)};
      AdamState state;
      adam_step(ps, state, cfg);
      const double expected =
          cfg.learning_rate * std::abs(g) / (std::abs(g) + cfg.adam_eps * std::sqrt(1 - cfg.adam_beta2));
      const double step = -ps[0].value.data()[0];
      CHECK(std::signbit(step) == std::signbit(g));
      CHECK(std::abs(std::abs(step) - expected) < 1e-6);
      CHECK(std::abs(std::abs(step) - cfg.learning_rate) < 1e-6);
    }
  }

  TEST_CASE("adam two constant-gradient steps match the hand recurrence") {
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    const double g = 0.7, b1 = cfg.adam_beta1, b2 = cfg.adam_beta2, eps = cfg.adam_eps;
    std::vector<Parameter> ps{scalar_param(1.0, g)};
    AdamState state;
    adam_step(ps, state, cfg);
    adam_step(ps, state, cfg);
    const double m1 = (1 - b1) * g, v1 = (1 - b2) * g * g;
    const double m2 = b1 * m1 + (1 - b1) * g, v2 = b2 * v1 + (1 - b2) * g * g;
    CHECK(std::abs(state.m[0][0] - m2) < 1e-12);
    CHECK(std::abs(state.v[0][0] - v2) < 1e-12);
    double theta = 1.0;
    theta -= cfg.learning_rate * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
    theta -= cfg.learning_rate * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);
    CHECK(std::abs(ps[0].value.data()[0] - theta) < 1e-12);
    CHECK(state.step == 2);
  }

  TEST_CASE("adam edge cases") {
    TrainConfig cfg;
    SUBCASE("zero gradient leaves values and counts the step") {
      std::vector<Parameter> ps{scalar_param(2.5, 0.0)};
      AdamState state;
      adam_step(ps, state, cfg);
      CHECK(ps[0].value.data()[0] == 2.5);
      CHECK(state.step == 1);
    }
    SUBCASE("lr 0 leaves values unchanged") {
      Fixture fx;
      PatModel model(fx.cfg, 1);
      const auto before = snapshot(model);
      const auto enc = encode_examples(fx.train, fx.vocab.tokens, fx.cfg.max_question_len);
      const auto batch = make_batches(enc, fx.store, 8).front();
      ForwardContext ctx;
      batch_loss(model, batch, ctx).backward();
      cfg.learning_rate = 0.0;
      AdamState state;
      adam_step(model.parameters(), state, cfg);
      CHECK(snapshot(model) == before);
    }
    SUBCASE("frozen rows and tensors are untouched") {
      Parameter rows{"t", Tensor::from({2, 2}, {1, 1, 1, 1}, true), 1};
      for (double& g : rows.value.mutable_grad()) g = 1.0;
      Parameter whole = scalar_param(3.0, 1.0);
      whole.frozen = true;
      std::vector<Parameter> ps{rows, whole};
      AdamState state;
      adam_step(ps, state, cfg);
      CHECK(ps[0].value.data()[0] == 1.0);
      CHECK(ps[0].value.data()[1] == 1.0);
      CHECK(ps[0].value.data()[2] < 1.0);
      CHECK(ps[1].value.data()[0] == 3.0);
    }
    SUBCASE("non-finite gradient names the parameter") {
      std::vector<Parameter> ps{scalar_param(0.0, std::numeric_limits<double>::quiet_NaN())};
      ps[0].name = "encoder.bad";
      AdamState state;
      try {
        adam_step(ps, state, cfg);
        FAIL("expected NumericError");
      } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("encoder.bad") != std::string::npos);
      }
    }
  }

  TEST_CASE("gradient clipping") {
    std::vector<Parameter> ps{scalar_param(0, 3.0), scalar_param(0, 4.0)};
    CHECK(clip_grad_norm(ps, 10.0) == 5.0);
    CHECK(ps[0].value.grad()[0] == 3.0);
    CHECK(clip_grad_norm(ps, 1.0) == 5.0);
    CHECK(std::abs(ps[0].value.grad()[0] - 0.6) < 1e-15);
    CHECK(std::abs(ps[1].value.grad()[0] - 0.8) < 1e-15);
  }

  TEST_CASE("exact match") {
    CHECK(em_metric({"a", "b"}, {{"a"}, {"b", "c"}}) == 0.75);
    CHECK(em_metric({"Red ", "two  dogs"}, {{"red"}, {"Two Dogs"}}) == 1.0);
    CHECK(em_metric({"x", "y"}, {{"a"}, {"b"}}) == 0.0);
    CHECK(em_metric({"a"}, {{"a", "a", "b", "c"}}) == 0.5);
    CHECK_THROWS_AS(em_metric({"a"}, {{"a"}, {"b"}}), ContractError);
    CHECK_THROWS_AS(em_metric({}, {}), ContractError);
    CHECK_THROWS_AS(em_metric({"a"}, {{}}), ContractError);
  }

  TEST_CASE("exact match agrees with the brute-force scorer") {
    Rng rng(17);
    const std::vector<std::string> pool{"a", "A", " a", "b", "b c", "B  C", "c"};
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng.below(6);
      std::vector<std::string> preds;
      std::vector<std::vector<std::string>> gts(n);
      for (std::size_t i = 0; i < n; ++i) {
        preds.push_back(pool[rng.below(pool.size())]);
        for (std::size_t j = 0, m = 1 + rng.below(4); j < m; ++j)
          gts[i].push_back(pool[rng.below(pool.size())]);
      }
      CHECK(std::abs(em_metric(preds, gts) - oracle::exact_match(preds, gts)) <= 1e-12);
    }
  }

  TEST_CASE("cross entropy of uniform scores is ln C") {
    const std::vector<std::int32_t> targets{0, 3};
    const Tensor loss = cross_entropy(Tensor::zeros({2, 5}), targets);
    CHECK(std::abs(loss.item() - std::log(5.0)) < 1e-12);
  }

  TEST_CASE("evaluate is pure and self-consistent") {
    Fixture fx;
    const PatModel model(fx.cfg, 3);
    const auto a = evaluate(model, fx.vocab, fx.dev, fx.store);
    const auto b = evaluate(model, fx.vocab, fx.dev, fx.store);
    CHECK(format_eval_report(a) == format_eval_report(b));
    CHECK(a.em == b.em);
    REQUIRE(a.records.size() == fx.dev.size());
    std::vector<std::string> preds;
    std::vector<std::vector<std::string>> gts;
    double mean = 0.0;
    for (const auto& r : a.records) {
      preds.push_back(r.predicted);
      gts.push_back(r.ground_truths);
      mean += r.score;
    }
    CHECK(a.em == em_metric(preds, gts));
    CHECK(std::abs(a.em - mean / a.records.size()) < 1e-15);
    const std::string report = format_eval_report(a);
    CHECK(report.rfind("id\tpredicted\tground_truths\talphas\tscore\n", 0) == 0);
  }

  TEST_CASE("evaluate rejects mismatched vocabularies") {
    Fixture fx;
    const PatModel model(fx.cfg, 3);
    Vocabularies wrong = fx.vocab;
    wrong.answers = AnswerVocab::from_list({"x", "y"});
    CHECK_THROWS_AS(evaluate(model, wrong, fx.dev, fx.store), ConfigError);
    wrong = fx.vocab;
    wrong.tokens = TokenVocab::from_tokens({"only"});
    CHECK_THROWS_AS(evaluate(model, wrong, fx.dev, fx.store), ConfigError);
    CHECK_THROWS_AS(evaluate(model, fx.vocab, Dataset{}, fx.store), ContractError);
  }

  TEST_CASE("a forced-correct single example scores 1") {
    Fixture fx;
    const PatModel model(fx.cfg, 3);
    Dataset one{{fx.dev.examples[0]}, fx.train.answers};
    const auto& ex = one.examples[0];
    const auto tokens = fx.vocab.tokens.encode(ex.question, fx.cfg.max_question_len);
    one.examples[0].answers = {fx.vocab.answers.answer(
        model.predict({tokens, {}, fx.store.get(ex.image_id).features, {}}))};
    CHECK(evaluate(model, fx.vocab, one, fx.store).em == 1.0);
  }

  TEST_CASE("zero epochs leave the model unchanged") {
    Fixture fx;
    PatModel model(fx.cfg, 2);
    const auto before = snapshot(model);
    const auto result = train(model, fx.vocab, fx.train, &fx.dev, fx.store, fx.train_config(0));
    CHECK(result.log.empty());
    CHECK(result.steps == 0);
    CHECK(snapshot(model) == before);
  }

  TEST_CASE("loss on a fixed batch decreases over five steps") {
    Fixture fx;
    PatModel model(fx.cfg, 2);
    const auto enc = encode_examples(fx.train, fx.vocab.tokens, fx.cfg.max_question_len);
    const auto batch = make_batches(enc, fx.store, 16).front();
    TrainConfig cfg = fx.train_config(1);
    cfg.learning_rate = 1e-3;
    AdamState state;
    double previous = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 5; ++step) {
      zero_grads(model.parameters());
      ForwardContext ctx;
      Tensor loss = batch_loss(model, batch, ctx);
      CHECK(loss.item() < previous);
      previous = loss.item();
      loss.backward();
      adam_step(model.parameters(), state, cfg);
    }
  }

  TEST_CASE("training is deterministic and keeps the best dev epoch") {
    Fixture fx;
    const auto run = [&] {
      PatModel model(fx.cfg, 4);
      auto result = train(model, fx.vocab, fx.train, &fx.dev, fx.store, fx.train_config(4));
      return std::pair{std::move(result), snapshot(model)};
    };
    const auto [a, pa] = run();
    const auto [b, pb] = run();
    REQUIRE(a.log.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.log[i].train_loss == b.log[i].train_loss);
      CHECK(a.log[i].dev_em == b.log[i].dev_em);
    }
    CHECK(pa == pb);
    CHECK(a.steps == 4 * 3);
    double best = -1;
    std::size_t best_epoch = 0;
    for (const auto& e : a.log)
      if (*e.dev_em > best) best = *e.dev_em, best_epoch = e.epoch;
    CHECK(a.best_epoch == best_epoch);
    CHECK(*a.best_dev_em == best);
  }

  TEST_CASE("hooks stop training early") {
    Fixture fx;
    PatModel model(fx.cfg, 4);
    std::size_t seen = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog&) { ++seen; };
    hooks.stop = [](const EpochLog& e, const PatModel&) { return e.epoch >= 2; };
    const auto result = train(model, fx.vocab, fx.train, nullptr, fx.store, fx.train_config(10), hooks);
    CHECK(result.log.size() == 2);
    CHECK(seen == 2);
    CHECK_FALSE(result.best_dev_em.has_value());
  }

  TEST_CASE("training rejects empty or unlabelled data") {
    Fixture fx;
    PatModel model(fx.cfg, 4);
    CHECK_THROWS(train(model, fx.vocab, Dataset{{}, fx.train.answers}, nullptr, fx.store,
                       fx.train_config(1)));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact") {
    Fixture fx;
    PatModel model(fx.cfg, 8);
    train(model, fx.vocab, fx.train, &fx.dev, fx.store, fx.train_config(2));
    const auto dir = testutil::temp_dir("ckpt");
    save_checkpoint(model, fx.vocab, dir / "m.pat");
    const LoadedModel loaded = load_checkpoint(dir / "m.pat");
    CHECK(format_model_config(loaded.model.config()) == format_model_config(model.config()));
    CHECK(snapshot(loaded.model) == snapshot(model));
    CHECK(loaded.vocab.answers == fx.vocab.answers);
    CHECK(loaded.vocab.tokens.real_tokens() == fx.vocab.tokens.real_tokens());
    CHECK(evaluate(loaded.model, loaded.vocab, fx.dev, fx.store).em ==
          evaluate(model, fx.vocab, fx.dev, fx.store).em);

    PatModel target(fx.cfg, 99);
    load_checkpoint_into(target, dir / "m.pat");
    CHECK(snapshot(target) == snapshot(model));
  }

  TEST_CASE("malformed files are rejected") {
    Fixture fx;
    PatModel model(fx.cfg, 8);
    const auto dir = testutil::temp_dir("ckpt-bad");
    save_checkpoint(model, fx.vocab, dir / "m.pat");
    std::string bytes;
    {
      std::ifstream in(dir / "m.pat", std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto write = [&](const std::string& name, const std::string& content) {
      std::ofstream(dir / name, std::ios::binary) << content;
      return dir / name;
    };
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1})
      CHECK_THROWS_AS(load_checkpoint(write("cut.pat", bytes.substr(0, cut))), FormatError);
    CHECK_THROWS_AS(load_checkpoint(write("tail.pat", bytes + "x")), FormatError);
    std::string magic = bytes;
    magic[0] = 'Q';
    CHECK_THROWS_AS(load_checkpoint(write("magic.pat", magic)), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.pat"), IoError);
  }

  TEST_CASE("loading into a different shape names the parameter") {
    Fixture fx;
    PatModel model(fx.cfg, 8);
    const auto dir = testutil::temp_dir("ckpt-shape");
    save_checkpoint(model, fx.vocab, dir / "m.pat");
    ModelConfig wider = fx.cfg;
    wider.hidden_dim = 32;
    PatModel other(wider, 8);
    const auto before = snapshot(other);
    try {
      load_checkpoint_into(other, dir / "m.pat");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("text.") != std::string::npos);
      CHECK(msg.find("32") != std::string::npos);
    }
    CHECK(snapshot(other) == before);
  }
}
