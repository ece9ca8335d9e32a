#include <doctest.h>

#include <fstream>

#include "pat/config.hpp"
#include "pat/error.hpp"
#include "test_util.hpp"

using namespace pat;

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const RunConfig c = parse_run_config("");
    CHECK(c.model.hidden_dim == 512);
    CHECK(c.model.n_layers == 4);
    CHECK(c.model.n_heads == 8);
    CHECK(c.model.kernel_sizes == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(c.train.learning_rate == 0.01);
    CHECK(c.train.batch_size == 64);
    CHECK(c.train.dropout == 0.1);
    CHECK(c.model.resolved_ffn_dim() == 2048);
  }

  TEST_CASE("sections, comments and values") {
    const RunConfig c = parse_run_config(
        "# toy\n"
        "[model]\n"
        "hidden_dim = 64   # width\n"
        "n_heads=4\n"
        "use_residual = false\n"
        "[text]\n"
        "mode = recurrent\n"
        "kernel_sizes = 1, 3\n"
        "freeze_embeddings = true\n"
        "[train]\n"
        "learning_rate = 1e-3\n"
        "seed = 18446744073709551615\n"
        "shuffle = false\n");
    CHECK(c.model.hidden_dim == 64);
    CHECK(c.model.n_heads == 4);
    CHECK_FALSE(c.model.use_residual);
    CHECK(c.model.text_mode == TextMode::recurrent);
    CHECK(c.model.kernel_sizes == std::vector<std::size_t>{1, 3});
    CHECK(c.freeze_embeddings);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK(c.train.seed == 18446744073709551615ULL);
    CHECK_FALSE(c.train.shuffle);
  }

  TEST_CASE("errors carry line numbers") {
    const auto line_of = [](const char* text) {
      try {
        parse_run_config(text);
      } catch (const ParseError& e) {
        return e.line();
      }
      return std::size_t{0};
    };
    CHECK(line_of("[model]\nhidden_dim = 4\nbogus = 1\n") == 3);
    CHECK(line_of("[nope]\n") == 1);
    CHECK(line_of("hidden_dim = 4\n") == 1);
    CHECK(line_of("[model]\n\nhidden_dim 4\n") == 3);
    CHECK(line_of("[model]\nhidden_dim = -4\n") == 2);
    CHECK(line_of("[text]\nmode = bag\n") == 2);
    CHECK(line_of("[train]\nshuffle = maybe\n") == 2);
    CHECK(line_of("[model\n") == 1);
  }

  TEST_CASE("round trip") {
    RunConfig c;
    c.model.hidden_dim = 48;
    c.model.n_heads = 3;
    c.model.text_mode = TextMode::embedding_only;
    c.model.use_unigram_projection = false;
    c.model.layer_norm_eps = 1.2345678901234567e-7;
    c.train.learning_rate = 0.1 + 0.2;
    c.train.seed = 99;
    c.pretrained_vectors = "vectors.txt";
    const RunConfig back = parse_run_config(format_run_config(c));
    CHECK(format_run_config(back) == format_run_config(c));
    CHECK(back.model.layer_norm_eps == c.model.layer_norm_eps);
    CHECK(back.train.learning_rate == c.train.learning_rate);
    CHECK(back.pretrained_vectors == "vectors.txt");
    const ModelConfig m = parse_model_config(format_model_config(c.model));
    CHECK(format_model_config(m) == format_model_config(c.model));
  }

  TEST_CASE("model validation") {
    ModelConfig m;
    m.vocab_size = 10;
    m.n_answers = 3;
    m.feature_dim = 4;
    CHECK_NOTHROW(m.validate());
    m.n_heads = 7;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.n_heads = 8;
    m.kernel_sizes = {2, 1};
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.kernel_sizes = {1, 2};
    m.use_unigram_projection = false;
    m.embed_dim = 100;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.embed_dim = 0;
    CHECK_NOTHROW(m.validate());
    m.n_answers = 1;
    CHECK_THROWS_AS(m.validate(), ConfigError);
  }

  TEST_CASE("train validation") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.dropout = 1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.learning_rate = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.adam_beta2 = 1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
  }

  TEST_CASE("config files") {
    const auto dir = testutil::temp_dir("config");
    std::ofstream(dir / "run.ini") << "[model]\nhidden_dim = 32\n";
    CHECK(load_run_config(dir / "run.ini").model.hidden_dim == 32);
    CHECK_THROWS_AS(load_run_config(dir / "missing.ini"), IoError);
    CHECK(parse_text_mode("embedding_only") == TextMode::embedding_only);
    CHECK(to_string(TextMode::hierarchical) == "hierarchical");
  }
}
