#include "facemat/distill/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "facemat/core/rng.hpp"

namespace facemat::distill {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'M', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = sizeof kMagic + 4 + 8;

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& s, std::size_t begin, std::size_t end) : s_(s), pos_(begin), end_(end) {}
  template <class T>
  T pod() {
    T v;
    need(sizeof v);
    std::memcpy(&v, s_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, s_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CheckpointError("checkpoint payload is truncated");
  }
  const std::string& s_;
  std::size_t pos_, end_;
};

std::uint32_t crc(const char* p, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : blobs) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& c) {
  Writer p;
  p.pod(static_cast<std::int32_t>(c.model.levels));
  p.pod(static_cast<std::int32_t>(c.model.width));
  for (bool h : c.model.heads) p.pod(static_cast<std::uint8_t>(h));
  p.pod(c.step);
  p.str(c.rng_state);
  p.str(c.meta);
  p.pod(static_cast<std::uint32_t>(c.blobs.size()));
  for (const auto& [name, t] : c.blobs) {
    p.str(name);
    p.pod(static_cast<std::int32_t>(t.channels()));
    p.pod(static_cast<std::int32_t>(t.height()));
    p.pod(static_cast<std::int32_t>(t.width()));
    p.raw(t.data(), t.size() * sizeof(float));
  }
  const std::string& payload = p.bytes();

  Writer out;
  out.raw(kMagic, sizeof kMagic);
  out.pod(kCheckpointVersion);
  out.pod(static_cast<std::uint64_t>(payload.size()));
  out.raw(payload.data(), payload.size());
  out.pod(crc(payload.data(), payload.size()));
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a facemat checkpoint (bad magic or truncated header)");
  }
  Reader h(bytes, sizeof kMagic, kHeaderSize);
  const auto version = h.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto size = h.pod<std::uint64_t>();
  if (bytes.size() - kHeaderSize < size || bytes.size() - kHeaderSize - size != 4) {
    throw CheckpointError("checkpoint is truncated or has trailing bytes");
  }
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + kHeaderSize + size, 4);
  if (stored != crc(bytes.data() + kHeaderSize, size)) throw CheckpointError("checkpoint checksum mismatch");

  Reader p(bytes, kHeaderSize, kHeaderSize + size);
  Checkpoint c;
  c.model.levels = p.pod<std::int32_t>();
  c.model.width = p.pod<std::int32_t>();
  for (auto& hd : c.model.heads) hd = p.pod<std::uint8_t>() != 0;
  c.step = p.pod<std::uint64_t>();
  c.rng_state = p.str();
  c.meta = p.str();
  const auto count = p.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = p.str();
    const auto ch = p.pod<std::int32_t>(), ht = p.pod<std::int32_t>(), wd = p.pod<std::int32_t>();
    if (ch < 0 || ht < 0 || wd < 0) throw CheckpointError("checkpoint blob '" + name + "' has a negative dimension");
    nn::Tensor t(ch, ht, wd);
    p.raw(t.data(), t.size() * sizeof(float));
    c.blobs.emplace_back(std::move(name), std::move(t));
  }
  if (!p.done()) throw CheckpointError("checkpoint payload has unread bytes");
  if (auto e = c.model.validate(); !e.empty()) throw CheckpointError("checkpoint holds an invalid model config: " + e[0]);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string bytes = encode_checkpoint(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void append_params(Checkpoint& c, const model::MattingNet& net, const std::string& prefix) {
  for (const auto& p : net.params()) c.blobs.emplace_back(prefix + p.name, p.var->value);
}

void restore_params(model::MattingNet& net, const Checkpoint& c, const std::string& prefix) {
  // Validate everything before touching the network.
  for (const auto& p : net.params()) {
    const nn::Tensor* t = c.find(prefix + p.name);
    if (!t) throw CheckpointError("checkpoint lacks parameter '" + prefix + p.name + "'");
    if (!t->same_shape(p.var->value)) throw CheckpointError("checkpoint parameter '" + prefix + p.name + "' has the wrong shape");
  }
  for (auto& p : net.params()) p.var->value = *c.find(prefix + p.name);
}

model::MattingNet model_from_checkpoint(const Checkpoint& c, const std::string& prefix) {
  model::MattingNet net(c.model, 0);
  restore_params(net, c, prefix);
  return net;
}

model::MattingNet load_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

}  // namespace facemat::distill
