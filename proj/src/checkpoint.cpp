#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "icg/model.hpp"

namespace icg {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'G', 'W'};
constexpr const char* kAdamM = "adam.m:";
constexpr const char* kAdamV = "adam.v:";

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
      bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
    } else {
      bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void tensor(const std::string& name, const Tensor2& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    put<std::uint64_t>(t.rows());
    put<std::uint64_t>(t.cols());
    for (double v : t.values()) put<double>(v);
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    if constexpr (std::is_floating_point_v<T>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.put<std::uint32_t>(c.depth);
  w.put<std::uint32_t>(c.sa_blocks);
  w.put<std::uint32_t>(c.num_latents);
  w.put<std::uint32_t>(c.latent_dim);
  w.put<std::uint32_t>(c.cross_heads);
  w.put<std::uint32_t>(c.sa_heads);
  w.put<std::uint32_t>(c.ffn_mult);
  w.put<std::uint32_t>(c.fourier_bands);
  w.put<double>(c.max_freq);
  w.put<std::uint32_t>(c.source_dim);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.task));
  w.put<std::uint32_t>(c.sentence_dim);
  w.put<std::uint32_t>(c.word_dim);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.depth = r.get<std::uint32_t>("config");
  c.sa_blocks = r.get<std::uint32_t>("config");
  c.num_latents = r.get<std::uint32_t>("config");
  c.latent_dim = r.get<std::uint32_t>("config");
  c.cross_heads = r.get<std::uint32_t>("config");
  c.sa_heads = r.get<std::uint32_t>("config");
  c.ffn_mult = r.get<std::uint32_t>("config");
  c.fourier_bands = r.get<std::uint32_t>("config");
  c.max_freq = r.get<double>("config");
  c.source_dim = r.get<std::uint32_t>("config");
  c.task = static_cast<Task>(r.get<std::uint32_t>("config"));
  c.sentence_dim = r.get<std::uint32_t>("config");
  c.word_dim = r.get<std::uint32_t>("config");
  return c;
}

[[noreturn]] void integrity(const std::string& msg) {
  throw CheckpointError(CheckpointError::Kind::integrity, "checkpoint integrity: " + msg);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto params = ckpt.params.all();
  if (!ckpt.optimizer.empty() && ckpt.optimizer.size() != params.size()) {
    integrity("optimizer state count does not match parameter count");
  }
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  write_config(w, ckpt.config);
  w.put<std::uint64_t>(ckpt.step_count);
  const std::size_t count = params.size() * (ckpt.optimizer.empty() ? 1 : 3);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(count));
  for (const Parameter* p : params) w.tensor(p->name, p->value);
  for (std::size_t i = 0; i < ckpt.optimizer.size(); ++i) {
    w.tensor(kAdamM + params[i]->name, ckpt.optimizer[i].m);
    w.tensor(kAdamV + params[i]->name, ckpt.optimizer[i].v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint " + path.string());
  }
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot read checkpoint " + path.string());
  }
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (r.remaining() < sizeof(kMagic)) {
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated in magic");
  }
  if (std::memcmp(r.str(sizeof(kMagic), "magic").data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.config = read_config(r);
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    integrity(std::string("invalid config header: ") + e.what());
  }
  ckpt.step_count = r.get<std::uint64_t>("step count");
  ckpt.params = make_params(ckpt.config);
  auto params = ckpt.params.all();

  std::unordered_map<std::string, Tensor2*> slots;
  for (Parameter* p : params) slots.emplace(p->name, &p->value);

  const auto count = r.get<std::uint32_t>("tensor count");
  const bool has_optimizer = count == 3 * params.size();
  if (count != params.size() && !has_optimizer) {
    integrity("file holds " + std::to_string(count) + " tensors, config implies " +
              std::to_string(params.size()));
  }
  if (has_optimizer) {
    ckpt.optimizer = make_adam_state(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.optimizer[i].step_count = ckpt.step_count;
      slots.emplace(kAdamM + params[i]->name, &ckpt.optimizer[i].m);
      slots.emplace(kAdamV + params[i]->name, &ckpt.optimizer[i].v);
    }
  }

  std::size_t filled = 0;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    if (name_len > r.remaining()) {
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated in name");
    }
    const std::string name = r.str(name_len, "tensor name");
    const auto rows = r.get<std::uint64_t>("tensor rows");
    const auto cols = r.get<std::uint64_t>("tensor cols");
    auto it = slots.find(name);
    if (it == slots.end()) integrity("unexpected tensor '" + name + "'");
    Tensor2& dst = *it->second;
    if (dst.rows() != rows || dst.cols() != cols) {
      integrity("tensor '" + name + "' has shape (" + std::to_string(rows) + "x" +
                std::to_string(cols) + "), config implies " + dst.shape_string());
    }
    for (double& v : dst.values()) v = r.get<double>("tensor values");
    slots.erase(it);
    ++filled;
  }
  if (filled != count || !slots.empty()) integrity("missing tensors");
  if (!r.at_end()) integrity("trailing bytes after last tensor");
  return ckpt;
}

}  // namespace icg
