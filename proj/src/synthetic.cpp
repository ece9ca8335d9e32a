#include "pat/synthetic.hpp"

#include <array>
#include <cstdio>
#include <sstream>

#include "pat/error.hpp"
#include "pat/rng.hpp"

namespace pat {
namespace fs = std::filesystem;

namespace {

std::string padded(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

struct Lexicon {
  std::vector<std::vector<std::string>> keywords;  // per attribute, synonyms
  std::vector<std::string> fillers;
};

Lexicon make_lexicon(const SynthSpec& spec) {
  const std::size_t words = spec.vocab_size - 2;
  // Two synonyms per attribute when the vocabulary leaves room for four fillers.
  const std::size_t synonyms = words >= 2 * kSynthAttributes + 4 ? 2 : 1;
  Lexicon lex;
  lex.keywords.resize(kSynthAttributes);
  std::size_t w = 0;
  for (std::size_t s = 0; s < synonyms; ++s)
    for (std::size_t q = 0; q < kSynthAttributes; ++q)
      lex.keywords[q].push_back("w" + std::to_string(w++));
  for (; w < words; ++w) lex.fillers.push_back("w" + std::to_string(w));
  return lex;
}

using Attributes = std::vector<std::array<std::size_t, kSynthAttributes>>;

std::vector<VqaExample> make_split(const SynthSpec& spec, const Lexicon& lex,
                                   const Attributes& attributes, std::size_t n_values,
                                   std::size_t count, const char* prefix, Rng& rng) {
  std::vector<std::size_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = i % n_values;
  rng.shuffle(std::span<std::size_t>(labels));

  std::vector<VqaExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t answer = labels[i];
    // Every value occurs for every attribute, so any query can be paired
    // with an image that answers it.
    const std::size_t query = rng.below(kSynthAttributes);
    std::vector<std::size_t> candidates;
    for (std::size_t img = 0; img < attributes.size(); ++img)
      if (attributes[img][query] == answer) candidates.push_back(img);
    const std::size_t image = candidates[rng.below(candidates.size())];

    const std::size_t length = 3 + rng.below(6);  // 3..8 tokens
    std::vector<std::string> words;
    for (std::size_t t = 0; t + 1 < length; ++t)
      words.push_back(lex.fillers[rng.below(lex.fillers.size())]);
    const auto& syn = lex.keywords[query];
    const auto keyword = syn[rng.below(syn.size())];
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)), keyword);

    std::string question;
    for (std::size_t t = 0; t < words.size(); ++t) question += (t ? " " : "") + words[t];
    out.push_back({padded(prefix, i), padded("img-", image), question,
                   {"ans" + std::to_string(answer)}});
  }
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_examples == 0 || n_images == 0 || vocab_size == 0 || n_answers == 0 || n_regions == 0 ||
      feature_dim == 0)
    throw ConfigError("synthetic spec fields must all be positive");
  if (n_answers < 2) throw ConfigError("synthetic spec needs n_answers >= 2");
  if (vocab_size < kSynthAttributes + 3)
    throw ConfigError("synthetic spec needs vocab_size >= " + std::to_string(kSynthAttributes + 3) +
                      " (PAD, UNK, one keyword per attribute, one filler)");
}

SyntheticData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng feature_rng = root.split();
  Rng split_rng = root.split();

  // Per attribute, values cycle over the images and are shuffled
  // independently, so each value is carried by at least one image.
  const std::size_t n_values = std::min(spec.n_answers, spec.n_images);
  Attributes attributes(spec.n_images);
  for (std::size_t a = 0; a < kSynthAttributes; ++a) {
    std::vector<std::size_t> column(spec.n_images);
    for (std::size_t i = 0; i < spec.n_images; ++i) column[i] = i % n_values;
    feature_rng.shuffle(std::span<std::size_t>(column));
    for (std::size_t i = 0; i < spec.n_images; ++i) attributes[i][a] = column[i];
  }

  const auto random_vector = [&] {
    std::vector<double> v(spec.feature_dim);
    for (auto& x : v) x = feature_rng.normal();
    return v;
  };
  std::vector<std::vector<std::vector<double>>> prototypes(kSynthAttributes);
  for (auto& per_attribute : prototypes)
    for (std::size_t v = 0; v < n_values; ++v) per_attribute.push_back(random_vector());
  std::vector<std::vector<double>> distractors;
  for (std::size_t c = 0; c < 2 * n_values; ++c) distractors.push_back(random_vector());

  SyntheticData data;
  const std::size_t per_attribute =
      std::max<std::size_t>(1, spec.n_regions / (3 * kSynthAttributes) + 1);
  const std::size_t signal_regions = std::min(spec.n_regions, per_attribute * kSynthAttributes);
  for (std::size_t i = 0; i < spec.n_images; ++i) {
    std::vector<std::size_t> slots(spec.n_regions);
    for (std::size_t r = 0; r < spec.n_regions; ++r) slots[r] = r;
    feature_rng.shuffle(std::span<std::size_t>(slots));
    std::vector<double> values(spec.n_regions * spec.feature_dim);
    for (std::size_t r = 0; r < spec.n_regions; ++r) {
      const std::size_t a = r % kSynthAttributes;
      const auto& base = r < signal_regions ? prototypes[a][attributes[i][a]]
                                            : distractors[feature_rng.below(distractors.size())];
      for (std::size_t j = 0; j < spec.feature_dim; ++j) {
        const double v = base[j] + 0.3 * feature_rng.normal();
        // Stored values are float32-exact so files round-trip bit-identically.
        values[slots[r] * spec.feature_dim + j] = static_cast<float>(v);
      }
    }
    const auto id = padded("img-", i);
    data.features.emplace(id, Tensor::from({spec.n_regions, spec.feature_dim}, std::move(values)));
    data.image_attributes.emplace(id, attributes[i]);
  }

  const Lexicon lex = make_lexicon(spec);
  const std::size_t held_out = std::max<std::size_t>(1, spec.n_examples / 4);
  data.train = make_split(spec, lex, attributes, n_values, spec.n_examples, "train-", split_rng);
  data.dev = make_split(spec, lex, attributes, n_values, held_out, "dev-", split_rng);
  data.test = make_split(spec, lex, attributes, n_values, held_out, "test-", split_rng);
  return data;
}

void write_synthetic(const SyntheticData& data, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "data", ec);
  if (!ec) fs::create_directories(root / "features", ec);
  if (ec) throw IoError("cannot create output directory " + root.string() + ": " + ec.message());
  write_examples(root / "data" / "train.tsv", data.train);
  write_examples(root / "data" / "dev.tsv", data.dev);
  write_examples(root / "data" / "test.tsv", data.test);
  for (const auto& [id, features] : data.features)
    write_region_features(root / "features" / (id + ".patf"), features);
}

std::string describe(const SynthSpec& spec) {
  std::ostringstream os;
  os << "n_examples=" << spec.n_examples << " n_images=" << spec.n_images
     << " vocab_size=" << spec.vocab_size << " n_answers=" << spec.n_answers
     << " n_regions=" << spec.n_regions << " feature_dim=" << spec.feature_dim
     << " seed=" << spec.seed;
  return os.str();
}

}  // namespace pat
