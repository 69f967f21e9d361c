#include "latentdialog/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace ld {
namespace {

constexpr std::array<char, 8> kMagic = {'L', 'D', 'C', 'K', 'P', 'T', '\0', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(std::string_view s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  void raw(void* p, std::size_t n) {
    if (n > in_.size() - pos_) throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > in_.size() - pos_) throw std::runtime_error("checkpoint string overruns the file");
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

const ad::ParamSet& Checkpoint::group(std::string_view name) const {
  for (const auto& [n, p] : groups) {
    if (n == name) return p;
  }
  throw std::out_of_range("checkpoint has no parameter group '" + std::string(name) + "'");
}

bool Checkpoint::has_group(std::string_view name) const {
  for (const auto& g : groups) {
    if (g.first == name) return true;
  }
  return false;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.kind));
  w.u64(ckpt.seed);
  w.str(ckpt.config_json);
  w.str(ckpt.vocab_hash);
  w.str(ckpt.parent_hash);
  w.u64(ckpt.groups.size());
  for (const auto& [name, params] : ckpt.groups) {
    w.str(name);
    w.u64(params.size());
    for (const auto& e : params.entries()) {
      w.str(e.name);
      w.u8(e.trainable ? 1 : 0);
      w.u64(e.value.rows());
      w.u64(e.value.cols());
      for (double v : e.value.data()) w.f64(v);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kMagic) throw std::runtime_error("not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const std::uint32_t kind = r.u32();
  if (kind != 1 && kind != 2) throw std::runtime_error("unknown checkpoint kind " + std::to_string(kind));
  c.kind = static_cast<CheckpointKind>(kind);
  c.seed = r.u64();
  c.config_json = r.str();
  c.vocab_hash = r.str();
  c.parent_hash = r.str();
  const std::uint64_t groups = r.u64();
  for (std::uint64_t g = 0; g < groups; ++g) {
    std::string gname = r.str();
    ad::ParamSet params;
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name = r.str();
      const bool trainable = r.u8() != 0;
      const std::uint64_t rows = r.u64();
      const std::uint64_t cols = r.u64();
      if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
        throw std::runtime_error("checkpoint tensor '" + name + "' has invalid shape");
      }
      if (rows > r.remaining() / 8 / cols) throw std::runtime_error("checkpoint tensor '" + name + "' overruns the file");
      std::vector<double> data(rows * cols);
      for (double& v : data) v = r.f64();
      params.add(std::move(name), ad::Tensor(rows, cols, std::move(data)), trainable);
    }
    c.groups.emplace_back(std::move(gname), std::move(params));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint payload");
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  write_file(path, bytes);
  return sha256_hex(bytes);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  const std::string bytes = read_file(path);
  return {decode_checkpoint(bytes), sha256_hex(bytes)};
}

}  // namespace ld
