#include "mkdm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "mkdm/error.hpp"

namespace mkdm {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

constexpr char kMagic[4] = {'M', 'K', 'D', 'M'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::size_t kMaxRank = 8;

using Code = CheckpointError::Code;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename U>
  U get(const char* what) {
    U v;
    get_bytes(&v, sizeof(U), what);
    return v;
  }
  void get_bytes(void* out, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(Code::truncated, std::string("checkpoint truncated while reading ") + what);
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& Checkpoint::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw CheckpointError(Code::mismatch, "checkpoint has no tensor '" + name + "'");
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::set<std::string> names;
  for (const auto& t : ckpt.tensors) {
    if (t.name.empty() || t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError(Code::malformed, "tensor name length out of range");
    }
    if (!names.insert(t.name).second) throw CheckpointError(Code::malformed, "duplicate tensor '" + t.name + "'");
    if (t.value.rank() > kMaxRank) throw CheckpointError(Code::malformed, "tensor '" + t.name + "' rank too large");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.put<std::uint8_t>(kDtypeF32);
    w.put_bytes(t.value.data(), t.value.size() * sizeof(float));
  }
  const std::string config = ckpt.config.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
  w.put_bytes(config.data(), config.size());
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  if (bytes.size() < sizeof magic) throw CheckpointError(Code::truncated, "checkpoint shorter than its magic");
  r.get_bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError(Code::bad_magic, "not a checkpoint file");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Code::unsupported_version, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("name length");
    std::string name(name_len, '\0');
    r.get_bytes(name.data(), name_len, "tensor name");
    if (name.empty() || !names.insert(name).second) {
      throw CheckpointError(Code::malformed, "empty or duplicate tensor name '" + name + "'");
    }
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank > kMaxRank) throw CheckpointError(Code::malformed, "tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint64_t>("dimension");
      if (dim == 0 || dim > (std::uint64_t{1} << 40) || elements > (std::uint64_t{1} << 40) / dim) {
        throw CheckpointError(Code::malformed, "tensor '" + name + "' has an invalid dimension");
      }
      elements *= dim;
      shape.push_back(static_cast<std::int64_t>(dim));
    }
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF32) {
      throw CheckpointError(Code::bad_dtype, "tensor '" + name + "' has dtype code " + std::to_string(dtype));
    }
    if (r.remaining() / sizeof(float) < elements) {
      throw CheckpointError(Code::truncated, "checkpoint truncated inside tensor '" + name + "'");
    }
    std::vector<float> data(static_cast<std::size_t>(elements));
    r.get_bytes(data.data(), data.size() * sizeof(float), "payload");
    ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  const auto config_len = r.get<std::uint32_t>("config length");
  std::string config(config_len, '\0');
  r.get_bytes(config.data(), config_len, "config");
  if (r.remaining() != 0) throw CheckpointError(Code::malformed, "trailing bytes after checkpoint config");
  try {
    ckpt.config = nlohmann::json::parse(config);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Code::malformed, std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Code::io, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Code::io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Code::io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace mkdm
