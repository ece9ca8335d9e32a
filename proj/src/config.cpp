#include "pat/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "pat/error.hpp"

namespace pat {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected true/false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> parse_size_list(std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_size(trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::string_view section;
  std::string_view key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

#define PAT_SIZE(sec, obj, name)                                 \
  Field{sec, #name, [&] { return std::to_string(obj.name); },    \
        [&](std::string_view v) { obj.name = parse_size(v); }}
#define PAT_DOUBLE(sec, obj, name)                               \
  Field{sec, #name, [&] { return format_double(obj.name); },     \
        [&](std::string_view v) { obj.name = parse_double(v); }}
#define PAT_BOOL(sec, obj, name)                                 \
  Field{sec, #name, [&] { return format_bool(obj.name); },       \
        [&](std::string_view v) { obj.name = parse_bool(v); }}

std::vector<Field> model_fields(ModelConfig& m) {
  return {
      PAT_SIZE("model", m, vocab_size),
      PAT_SIZE("model", m, n_answers),
      PAT_SIZE("model", m, feature_dim),
      PAT_SIZE("model", m, embed_dim),
      PAT_SIZE("model", m, hidden_dim),
      PAT_SIZE("model", m, n_layers),
      PAT_SIZE("model", m, n_heads),
      PAT_SIZE("model", m, ffn_dim),
      PAT_SIZE("model", m, fused_dim),
      PAT_SIZE("model", m, max_regions),
      PAT_SIZE("model", m, max_question_len),
      PAT_BOOL("model", m, use_residual),
      PAT_BOOL("model", m, normalize_visual),
      PAT_BOOL("model", m, fuse_norm),
      PAT_BOOL("model", m, fusion_bias),
      PAT_DOUBLE("model", m, layer_norm_eps),
      Field{"text", "mode", [&] { return std::string(to_string(m.text_mode)); },
            [&](std::string_view v) { m.text_mode = parse_text_mode(v); }},
      Field{"text", "kernel_sizes", [&] { return format_size_list(m.kernel_sizes); },
            [&](std::string_view v) { m.kernel_sizes = parse_size_list(v); }},
      PAT_BOOL("text", m, use_unigram_projection),
  };
}

std::vector<Field> run_fields(RunConfig& r) {
  auto fields = model_fields(r.model);
  auto& t = r.train;
  std::vector<Field> extra{
      Field{"text", "pretrained_vectors", [&] { return r.pretrained_vectors; },
            [&](std::string_view v) { r.pretrained_vectors = std::string(v); }},
      PAT_BOOL("text", r, freeze_embeddings),
      PAT_DOUBLE("train", t, learning_rate),
      PAT_SIZE("train", t, batch_size),
      PAT_SIZE("train", t, epochs),
      PAT_DOUBLE("train", t, adam_beta1),
      PAT_DOUBLE("train", t, adam_beta2),
      PAT_DOUBLE("train", t, adam_eps),
      Field{"train", "seed", [&] { return std::to_string(t.seed); },
            [&](std::string_view v) { t.seed = parse_size(v); }},
      PAT_DOUBLE("train", t, dropout),
      PAT_DOUBLE("train", t, clip_norm),
      PAT_BOOL("train", t, shuffle),
  };
  fields.insert(fields.end(), extra.begin(), extra.end());
  return fields;
}

#undef PAT_SIZE
#undef PAT_DOUBLE
#undef PAT_BOOL

void apply(std::vector<Field>& fields, std::string_view text) {
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "model" && section != "text" && section != "train")
        throw ParseError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    if (section.empty()) throw ParseError("key outside of a section", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    bool found = false;
    for (auto& f : fields) {
      if (f.section == section && f.key == key) {
        try {
          f.set(value);
        } catch (const ConfigError& e) {
          throw ParseError(std::string(key) + ": " + e.what(), line_no);
        }
        found = true;
        break;
      }
    }
    if (!found)
      throw ParseError("unknown key '" + std::string(key) + "' in [" + section + "]", line_no);
  }
}

std::string render(std::vector<Field>& fields) {
  std::string out;
  std::string_view current;
  for (auto& f : fields) {
    if (f.section != current) {
      out += (out.empty() ? "[" : "\n[") + std::string(f.section) + "]\n";
      current = f.section;
    }
    out += std::string(f.key) + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace

std::string_view to_string(TextMode mode) {
  switch (mode) {
    case TextMode::hierarchical: return "hierarchical";
    case TextMode::embedding_only: return "embedding_only";
    case TextMode::recurrent: return "recurrent";
  }
  return "?";
}

TextMode parse_text_mode(std::string_view text) {
  if (text == "hierarchical") return TextMode::hierarchical;
  if (text == "embedding_only") return TextMode::embedding_only;
  if (text == "recurrent") return TextMode::recurrent;
  throw ConfigError("unknown text encoder mode '" + std::string(text) +
                    "' (hierarchical | embedding_only | recurrent)");
}

void TextEncoderConfig::validate() const {
  if (hidden_dim == 0) throw ConfigError("text encoder hidden_dim must be positive");
  if (embed_dim == 0) throw ConfigError("text encoder embed_dim must be positive");
  if (mode == TextMode::hierarchical) {
    if (kernel_sizes.empty()) throw ConfigError("kernel_sizes must be nonempty");
    for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
      if (kernel_sizes[i] == 0) throw ConfigError("kernel sizes must be >= 1");
      if (i > 0 && kernel_sizes[i] <= kernel_sizes[i - 1])
        throw ConfigError("kernel_sizes must be strictly increasing");
    }
    if (!use_unigram_projection && kernel_sizes.front() == 1 && embed_dim != hidden_dim)
      throw ConfigError("use_unigram_projection = false needs embed_dim == hidden_dim (got " +
                        std::to_string(embed_dim) + " vs " + std::to_string(hidden_dim) + ")");
  }
}

TextEncoderConfig ModelConfig::text() const {
  return {text_mode, kernel_sizes, use_unigram_projection, resolved_embed_dim(), hidden_dim};
}

void ModelConfig::validate() const {
  if (hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  if (n_layers == 0) throw ConfigError("n_layers must be at least 1");
  if (n_heads == 0 || hidden_dim % n_heads != 0)
    throw ConfigError("n_heads (" + std::to_string(n_heads) + ") must divide hidden_dim (" +
                      std::to_string(hidden_dim) + ")");
  if (vocab_size < 3) throw ConfigError("vocab_size must be >= 3 (PAD, UNK, one token)");
  if (n_answers < 2) throw ConfigError("n_answers must be >= 2");
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (max_regions == 0) throw ConfigError("max_regions must be positive");
  if (max_question_len == 0) throw ConfigError("max_question_len must be positive");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  text().validate();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in (0,1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in (0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  auto fields = run_fields(config);
  apply(fields, text);
  config.train.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string format_run_config(const RunConfig& config) {
  RunConfig copy = config;
  auto fields = run_fields(copy);
  return render(fields);
}

std::string format_model_config(const ModelConfig& config) {
  ModelConfig copy = config;
  auto fields = model_fields(copy);
  return render(fields);
}

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig config;
  auto fields = model_fields(config);
  apply(fields, text);
  return config;
}

}  // namespace pat
