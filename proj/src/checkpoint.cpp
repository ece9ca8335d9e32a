#include "pat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pat/error.hpp"

namespace pat {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr char kTrailer[8] = {'P', 'A', 'T', 'E', 'N', 'D', '\0', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes little-endian");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void text(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  void bytes(void* out, std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, sizeof v, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(&v, sizeof v, what);
    return v;
  }
  std::string text(const char* what) {
    const std::uint64_t n = u64(what);
    if (n > data_.size() - pos_)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += s + '\n';
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string::npos) {
      out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

struct StoredParam {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Contents {
  ModelConfig config;
  Vocabularies vocab;
  std::vector<StoredParam> params;
};

Contents read_contents(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  char magic[8];
  r.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");

  Contents c;
  try {
    c.config = parse_model_config(r.text("model config"));
  } catch (const ParseError& e) {
    throw FormatError(std::string("checkpoint config block: ") + e.what());
  }
  c.vocab.answers = AnswerVocab::from_list(split_lines(r.text("answer vocabulary")));
  c.vocab.tokens = TokenVocab::from_tokens(split_lines(r.text("token vocabulary")));

  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredParam p;
    p.name.resize(r.u32("parameter name"));
    r.bytes(p.name.data(), p.name.size(), "parameter name");
    const std::uint32_t rank = r.u32("parameter rank");
    if (rank > 4) throw FormatError("parameter " + p.name + " has rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) p.shape.push_back(r.u32("parameter extent"));
    p.values.resize(element_count(p.shape));
    r.bytes(p.values.data(), p.values.size() * sizeof(double), "parameter payload");
    c.params.push_back(std::move(p));
  }
  char trailer[8];
  r.bytes(trailer, sizeof trailer, "trailer");
  if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0)
    throw FormatError("checkpoint trailer missing");
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint trailer");
  return c;
}

void apply_params(PatModel& model, const std::vector<StoredParam>& stored) {
  auto params = model.parameters();
  if (stored.size() != params.size())
    throw ConfigError("checkpoint holds " + std::to_string(stored.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].name != params[i].name)
      throw ConfigError("checkpoint parameter " + stored[i].name + " where model expects " +
                        params[i].name);
    if (stored[i].shape != params[i].value.shape())
      throw ConfigError("parameter " + params[i].name + " has shape " +
                        shape_string(stored[i].shape) + " in checkpoint, model expects " +
                        shape_string(params[i].value.shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    std::ranges::copy(stored[i].values, params[i].value.mutable_data().begin());
}

}  // namespace

void save_checkpoint(const PatModel& model, const Vocabularies& vocab,
                     const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.text(format_model_config(model.config()));
  w.text(join_lines(vocab.answers.answers()));
  w.text(join_lines(vocab.tokens.real_tokens()));
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(p.value.data().data(), p.value.numel() * sizeof(double));
  }
  w.bytes(kTrailer, sizeof kTrailer);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  Contents c = read_contents(path);
  PatModel model(c.config, 0);
  try {
    apply_params(model, c.params);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint inconsistent with its own config: ") + e.what());
  }
  return {std::move(model), std::move(c.vocab)};
}

Vocabularies load_checkpoint_into(PatModel& model, const std::filesystem::path& path) {
  Contents c = read_contents(path);
  apply_params(model, c.params);
  return std::move(c.vocab);
}

}  // namespace pat
