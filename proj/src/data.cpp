#include "pat/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pat/error.hpp"
#include "pat/rng.hpp"
#include "pat/text_encoder.hpp"

namespace pat {
namespace fs = std::filesystem;

namespace {

char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
  std::string out;
  bool pending_space = false;
  for (char c : answer) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ascii_lower(c));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view question) {
  std::vector<std::string> out;
  std::string current;
  for (char c : question) {
    if (is_space(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ascii_lower(c));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

TokenVocab::TokenVocab() {
  insert("<pad>");
  insert("<unk>");
}

void TokenVocab::insert(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(token);
}

TokenVocab TokenVocab::build(const std::vector<VqaExample>& examples) {
  TokenVocab v;
  for (const auto& ex : examples)
    for (const auto& t : tokenize(ex.question)) v.insert(t);
  return v;
}

TokenVocab TokenVocab::from_tokens(const std::vector<std::string>& tokens) {
  TokenVocab v;
  for (const auto& t : tokens) v.insert(t);
  return v;
}

std::int32_t TokenVocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& TokenVocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw LookupError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> TokenVocab::real_tokens() const {
  return {tokens_.begin() + 2, tokens_.end()};
}

std::vector<std::int32_t> TokenVocab::encode(std::string_view question, std::size_t max_len) const {
  std::vector<std::int32_t> ids;
  for (const auto& t : tokenize(question)) {
    if (ids.size() == max_len) break;
    ids.push_back(id(t));
  }
  if (ids.empty()) ids.push_back(kUnkId);
  return ids;
}

void AnswerVocab::insert(const std::string& normalized) {
  if (index_.contains(normalized)) return;
  index_.emplace(normalized, static_cast<std::int32_t>(answers_.size()));
  answers_.push_back(normalized);
}

AnswerVocab AnswerVocab::build(const std::vector<VqaExample>& examples) {
  AnswerVocab v;
  for (const auto& ex : examples)
    for (const auto& a : ex.answers) v.insert(normalize_answer(a));
  return v;
}

AnswerVocab AnswerVocab::from_list(const std::vector<std::string>& answers) {
  AnswerVocab v;
  for (const auto& a : answers) v.insert(normalize_answer(a));
  return v;
}

AnswerVocab AnswerVocab::load(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> answers;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    answers.push_back(line);
  }
  return from_list(answers);
}

void AnswerVocab::save(const fs::path& path) const {
  std::string out;
  for (const auto& a : answers_) out += a + "\n";
  write_file(path, out);
}

std::int32_t AnswerVocab::id(std::string_view answer) const {
  const auto it = index_.find(normalize_answer(answer));
  return it == index_.end() ? kNoAnswer : it->second;
}

const std::string& AnswerVocab::answer(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= answers_.size())
    throw LookupError("answer id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(answers_.size()));
  return answers_[static_cast<std::size_t>(id)];
}

std::vector<VqaExample> parse_examples(std::string_view text) {
  std::vector<VqaExample> out;
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4)
      throw ParseError("expected 4 tab-separated fields, found " + std::to_string(fields.size()),
                       line_no);
    if (fields[0].empty()) throw ParseError("empty example id", line_no);
    if (fields[1].empty()) throw ParseError("empty image id", line_no);
    VqaExample ex{std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), {}};
    for (auto a : split(fields[3], '|'))
      if (!normalize_answer(a).empty()) ex.answers.emplace_back(a);
    if (ex.answers.empty()) throw ParseError("record has no answers", line_no);
    out.push_back(std::move(ex));
  }
  return out;
}

std::string format_examples(const std::vector<VqaExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += ex.id + '\t' + ex.image_id + '\t' + ex.question + '\t';
    for (std::size_t i = 0; i < ex.answers.size(); ++i) out += (i ? "|" : "") + ex.answers[i];
    out += '\n';
  }
  return out;
}

void write_examples(const fs::path& path, const std::vector<VqaExample>& examples) {
  write_file(path, format_examples(examples));
}

Dataset load_dataset(const fs::path& questions_path,
                     const std::optional<fs::path>& answers_vocab_path) {
  Dataset d;
  d.examples = parse_examples(read_file(questions_path));
  d.answers = answers_vocab_path ? AnswerVocab::load(*answers_vocab_path)
                                 : AnswerVocab::build(d.examples);
  return d;
}

Dataset load_dataset(const fs::path& questions_path, const AnswerVocab& vocab) {
  return {parse_examples(read_file(questions_path)), vocab};
}

std::string encode_region_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("region features must be a matrix");
  std::string out = "PATF";
  put_u32(out, kPatfVersion);
  put_u32(out, static_cast<std::uint32_t>(features.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(features.dim(1)));
  out.reserve(out.size() + 4 * features.numel());
  for (double v : features.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_region_features(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 4) != "PATF")
    throw FormatError("not a PATF feature file (bad magic)");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kPatfVersion)
    throw FormatError("unsupported PATF version " + std::to_string(version));
  const std::size_t n = get_u32(bytes, 8), d = get_u32(bytes, 12);
  if (n == 0 || d == 0) throw FormatError("PATF header declares an empty matrix");
  const std::size_t expected = 16 + 4 * n * d;
  if (bytes.size() < expected)
    throw FormatError("truncated PATF payload: header declares " + std::to_string(n) + "x" +
                      std::to_string(d) + " floats, file holds " +
                      std::to_string((bytes.size() - 16) / 4));
  if (bytes.size() > expected) throw FormatError("trailing bytes after PATF payload");
  std::vector<double> values(n * d);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  return Tensor::from({n, d}, std::move(values));
}

void write_region_features(const fs::path& path, const Tensor& features) {
  write_file(path, encode_region_features(features));
}

RegionFeatures load_region_features(const fs::path& dir, const std::string& image_id,
                                    std::size_t expected_dim, std::size_t max_regions) {
  const fs::path path = dir / (image_id + ".patf");
  RegionFeatures r{image_id, decode_region_features(read_file(path))};
  if (expected_dim != 0 && r.feature_dim() != expected_dim)
    throw ConfigError("feature file " + path.string() + " has feature_dim " +
                      std::to_string(r.feature_dim()) + ", expected " +
                      std::to_string(expected_dim));
  if (max_regions != 0 && r.n_regions() > max_regions)
    throw ConfigError("feature file " + path.string() + " has " + std::to_string(r.n_regions()) +
                      " regions, more than max_regions " + std::to_string(max_regions));
  return r;
}

FeatureStore FeatureStore::load(const fs::path& dir, const std::vector<const Dataset*>& datasets,
                                std::size_t expected_dim, std::size_t max_regions) {
  FeatureStore store;
  store.feature_dim_ = expected_dim;
  for (const Dataset* d : datasets)
    for (const auto& ex : d->examples) {
      if (store.contains(ex.image_id)) continue;
      store.insert(load_region_features(dir, ex.image_id, store.feature_dim_, max_regions));
    }
  return store;
}

void FeatureStore::insert(RegionFeatures features) {
  if (feature_dim_ == 0) feature_dim_ = features.feature_dim();
  if (features.feature_dim() != feature_dim_)
    throw ConfigError("image " + features.image_id + " has feature_dim " +
                      std::to_string(features.feature_dim()) + ", store holds " +
                      std::to_string(feature_dim_));
  auto id = features.image_id;
  features_.insert_or_assign(std::move(id), std::move(features));
}

const RegionFeatures& FeatureStore::get(const std::string& image_id) const {
  const auto it = features_.find(image_id);
  if (it == features_.end()) throw LookupError("no region features for image " + image_id);
  return it->second;
}

std::vector<EncodedExample> encode_examples(const Dataset& dataset, const TokenVocab& tokens,
                                            std::size_t max_question_len) {
  std::vector<EncodedExample> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& ex = dataset.examples[i];
    out.push_back({tokens.encode(ex.question, max_question_len),
                   dataset.answers.id(ex.answers.front()), ex.image_id, i});
  }
  return out;
}

std::span<const std::int32_t> Batch::tokens(std::size_t b) const {
  return std::span<const std::int32_t>(token_ids).subspan(b * max_seq, max_seq);
}

SeqMask Batch::text_mask(std::size_t b) const {
  return {{question_mask.begin() + static_cast<std::ptrdiff_t>(b * max_seq),
           question_mask.begin() + static_cast<std::ptrdiff_t>((b + 1) * max_seq)}};
}

SeqMask Batch::regions_mask(std::size_t b) const {
  return {{region_mask.begin() + static_cast<std::ptrdiff_t>(b * max_regions),
           region_mask.begin() + static_cast<std::ptrdiff_t>((b + 1) * max_regions)}};
}

Tensor Batch::regions(std::size_t b) const {
  const std::size_t block = max_regions * feature_dim;
  const auto d = region_features.data().subspan(b * block, block);
  return Tensor::from({max_regions, feature_dim}, {d.begin(), d.end()});
}

ModelInput Batch::input(std::size_t b) const {
  return {tokens(b), text_mask(b), regions(b), regions_mask(b)};
}

std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples,
                                const FeatureStore& features, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (examples.empty()) throw ContractError("make_batches: empty dataset");
  if (batch_size == 0) throw ContractError("make_batches: batch_size must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(std::span<std::size_t>(order));
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch batch;
    batch.size = end - start;
    batch.feature_dim = features.feature_dim();
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = examples[order[i]];
      batch.max_seq = std::max(batch.max_seq, ex.tokens.size());
      batch.max_regions = std::max(batch.max_regions, features.get(ex.image_id).n_regions());
    }
    batch.token_ids.assign(batch.size * batch.max_seq, kPadId);
    batch.question_mask.assign(batch.size * batch.max_seq, 0);
    batch.region_mask.assign(batch.size * batch.max_regions, 0);
    std::vector<double> regions(batch.size * batch.max_regions * batch.feature_dim, 0.0);
    for (std::size_t b = 0; b < batch.size; ++b) {
      const auto& ex = examples[order[start + b]];
      for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
        batch.token_ids[b * batch.max_seq + t] = ex.tokens[t];
        batch.question_mask[b * batch.max_seq + t] = 1;
      }
      const auto& r = features.get(ex.image_id);
      const auto src = r.features.data();
      std::copy(src.begin(), src.end(),
                regions.begin() +
                    static_cast<std::ptrdiff_t>(b * batch.max_regions * batch.feature_dim));
      for (std::size_t k = 0; k < r.n_regions(); ++k)
        batch.region_mask[b * batch.max_regions + k] = 1;
      batch.answer_ids.push_back(ex.answer_id);
      batch.example_indices.push_back(ex.index);
    }
    batch.region_features =
        Tensor::from({batch.size, batch.max_regions, batch.feature_dim}, std::move(regions));
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::size_t parse_pretrained_vectors(std::string_view text, const TokenVocab& vocab,
                                     Tensor& table) {
  const std::size_t dim = table.dim(1);
  auto data = table.mutable_data();
  std::size_t filled = 0, line_no = 0;
  std::vector<double> row;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      const auto end = std::min(line.find(' ', pos), line.size());
      if (end > pos) fields.push_back(line.substr(pos, end - pos));
      pos = end;
    }
    if (fields.empty()) continue;
    if (fields.size() != dim + 1)
      throw ParseError("expected a token and " + std::to_string(dim) + " values, found " +
                       std::to_string(fields.size() - 1) + " values", line_no);
    row.clear();
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      const auto f = fields[j];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || ptr != f.data() + f.size())
        throw ParseError("invalid number '" + std::string(f) + "'", line_no);
      row.push_back(v);
    }
    const std::int32_t id = vocab.id(fields[0]);
    if (id == kPadId || id == kUnkId) continue;
    std::ranges::copy(row, data.begin() + static_cast<std::ptrdiff_t>(id) * dim);
    ++filled;
  }
  return filled;
}

std::size_t load_pretrained_vectors(const fs::path& path, const TokenVocab& vocab, Tensor& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open word vectors " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pretrained_vectors(buf.str(), vocab, table);
}

}  // namespace pat
