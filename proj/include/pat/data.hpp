#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pat/model.hpp"
#include "pat/tensor.hpp"
#include "pat/vision_embed.hpp"

namespace pat {

struct VqaExample {
  std::string id;
  std::string image_id;
  std::string question;
  std::vector<std::string> answers;  // nonempty
};

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view answer);
// Lowercased whitespace-separated tokens.
std::vector<std::string> tokenize(std::string_view question);

// Question vocabulary: id 0 PAD, id 1 UNK, then tokens in first-seen order.
class TokenVocab {
 public:
  TokenVocab();
  static TokenVocab build(const std::vector<VqaExample>& examples);
  static TokenVocab from_tokens(const std::vector<std::string>& tokens);

  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }
  // Drops the PAD/UNK entries; from_tokens() restores them.
  std::vector<std::string> real_tokens() const;

  // Truncated to max_len; an empty question becomes [UNK].
  std::vector<std::int32_t> encode(std::string_view question, std::size_t max_len) const;

 private:
  void insert(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Word-vector text: "token v1 ... v_d" per line. Rows of `table` whose token
// appears are overwritten; PAD and UNK rows are never touched. Returns the
// number of rows filled. ParseError on a line whose width is not
// table.dim(1).
std::size_t parse_pretrained_vectors(std::string_view text, const TokenVocab& vocab, Tensor& table);
std::size_t load_pretrained_vectors(const std::filesystem::path& path, const TokenVocab& vocab,
                                    Tensor& table);

inline constexpr std::int32_t kNoAnswer = -1;

// Distinct normalised answers; line index is the answer id.
class AnswerVocab {
 public:
  static AnswerVocab build(const std::vector<VqaExample>& examples);
  static AnswerVocab from_list(const std::vector<std::string>& answers);
  static AnswerVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // kNoAnswer for answers outside the vocabulary.
  std::int32_t id(std::string_view answer) const;
  const std::string& answer(std::int32_t id) const;
  std::size_t size() const { return answers_.size(); }
  const std::vector<std::string>& answers() const { return answers_; }
  bool operator==(const AnswerVocab& other) const { return answers_ == other.answers_; }

 private:
  void insert(const std::string& normalized);
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct Dataset {
  std::vector<VqaExample> examples;
  AnswerVocab answers;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

// Tab-separated records: id, image_id, question, answers joined by '|'.
// Blank lines are skipped. Throws ParseError with the line number.
std::vector<VqaExample> parse_examples(std::string_view text);
std::string format_examples(const std::vector<VqaExample>& examples);
void write_examples(const std::filesystem::path& path, const std::vector<VqaExample>& examples);

// Builds the answer vocabulary from the file itself unless one is given.
Dataset load_dataset(const std::filesystem::path& questions_path,
                     const std::optional<std::filesystem::path>& answers_vocab_path = std::nullopt);
Dataset load_dataset(const std::filesystem::path& questions_path, const AnswerVocab& vocab);

// PATF region feature files: "PATF", u32 version (1), u32 n_regions,
// u32 feature_dim, then float32 values row-major; all little-endian.
inline constexpr std::uint32_t kPatfVersion = 1;
std::string encode_region_features(const Tensor& features);
Tensor decode_region_features(std::string_view bytes);
void write_region_features(const std::filesystem::path& path, const Tensor& features);
// Reads <dir>/<image_id>.patf. expected_dim 0 accepts any width.
RegionFeatures load_region_features(const std::filesystem::path& dir, const std::string& image_id,
                                    std::size_t expected_dim = 0, std::size_t max_regions = 0);

// Region features for every image a dataset references, loaded once.
class FeatureStore {
 public:
  static FeatureStore load(const std::filesystem::path& dir,
                           const std::vector<const Dataset*>& datasets, std::size_t expected_dim,
                           std::size_t max_regions);
  void insert(RegionFeatures features);
  const RegionFeatures& get(const std::string& image_id) const;
  bool contains(const std::string& image_id) const { return features_.contains(image_id); }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t size() const { return features_.size(); }

 private:
  std::map<std::string, RegionFeatures> features_;
  std::size_t feature_dim_ = 0;
};

// Question tokens plus classification target (first answer).
struct EncodedExample {
  std::vector<std::int32_t> tokens;
  std::int32_t answer_id = kNoAnswer;
  std::string image_id;
  std::size_t index = 0;  // position in the source dataset
};

std::vector<EncodedExample> encode_examples(const Dataset& dataset, const TokenVocab& tokens,
                                            std::size_t max_question_len);

// Padded mini-batch. Tokens pad with kPadId, regions with zero rows.
struct Batch {
  std::size_t size = 0;
  std::size_t max_seq = 0;
  std::size_t max_regions = 0;
  std::size_t feature_dim = 0;
  std::vector<std::int32_t> token_ids;      // size x max_seq
  std::vector<std::uint8_t> question_mask;  // size x max_seq
  Tensor region_features;                   // [size x max_regions x feature_dim]
  std::vector<std::uint8_t> region_mask;    // size x max_regions
  std::vector<std::int32_t> answer_ids;     // size
  std::vector<std::size_t> example_indices;

  std::span<const std::int32_t> tokens(std::size_t b) const;
  SeqMask text_mask(std::size_t b) const;
  SeqMask regions_mask(std::size_t b) const;
  Tensor regions(std::size_t b) const;
  ModelInput input(std::size_t b) const;
};

// Deterministic given the seed; no seed keeps insertion order.
std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples,
                                const FeatureStore& features, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace pat
