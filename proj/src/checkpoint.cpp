#include "ic/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ic {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

class Writer {
 public:
  template <class T>
  void pod(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void tensors(const ModelParams& params) {
    auto all = ic::tensors(params);
    pod<std::uint64_t>(all.size());
    for (const auto& t : all) {
      str(t.name);
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.value->rows()));
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.value->cols()));
      for (Index r = 0; r < t.value->rows(); ++r)
        for (Index c = 0; c < t.value->cols(); ++c) pod<double>((*t.value)(r, c));
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void tensors(ModelParams& params) {
    auto all = ic::tensors(params);
    const auto count = pod<std::uint64_t>();
    if (count != all.size()) throw CheckpointError("checkpoint: tensor count does not match config");
    for (auto& t : all) {
      const std::string name = str();
      if (name != t.name) throw CheckpointError("checkpoint: expected tensor '" + t.name + "', found '" + name + "'");
      const auto rows = pod<std::uint64_t>();
      const auto cols = pod<std::uint64_t>();
      if (rows != static_cast<std::uint64_t>(t.value->rows()) || cols != static_cast<std::uint64_t>(t.value->cols()))
        throw CheckpointError("checkpoint: shape mismatch for '" + name + "'");
      for (Index r = 0; r < t.value->rows(); ++r)
        for (Index c = 0; c < t.value->cols(); ++c) (*t.value)(r, c) = pod<double>();
    }
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated data");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_trainer(const Trainer& trainer) {
  Writer w;
  for (char c : std::string_view("ICKP")) w.pod<char>(c);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(nlohmann::json(trainer.config()).dump());
  w.pod<std::uint64_t>(trainer.epoch());
  w.tensors(trainer.params());
  w.pod<std::uint64_t>(trainer.optimizer().step);
  w.tensors(trainer.optimizer().m);
  w.tensors(trainer.optimizer().v);
  w.str(trainer.rng().serialize());
  return w.take();
}

Trainer deserialize_trainer(std::string_view bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = r.pod<char>();
  if (std::string_view(magic, 4) != "ICKP") throw CheckpointError("checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig config;
  try {
    config = nlohmann::json::parse(r.str()).get<ModelConfig>();
    config.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad config: ") + e.what());
  }
  const auto epoch = r.pod<std::uint64_t>();
  ModelParams params = ModelParams::zeros(config);
  r.tensors(params);
  AdamState adam = AdamState::zeros(config);
  adam.step = r.pod<std::uint64_t>();
  r.tensors(adam.m);
  r.tensors(adam.v);
  Rng rng = Rng::deserialize(r.str());
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return Trainer(config, std::move(params), std::move(adam), rng, epoch);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const Trainer& trainer, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_trainer(trainer));
}

Trainer load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  return deserialize_trainer(bytes);
}

}  // namespace ic
