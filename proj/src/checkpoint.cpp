#include "checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

namespace biqe {
namespace {

constexpr char kMagic[8] = {'B', 'I', 'Q', 'E', 'C', 'K', 'P', 'T'};

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    buf.insert(buf.end(), b, b + sizeof(U));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  std::vector<unsigned char> buf;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t n) : data_(data), n_(n) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string get_string(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }
  void get_bytes(std::vector<unsigned char>& out, std::size_t len) {
    need(len);
    out.assign(data_ + pos_, data_ + pos_ + len);
    pos_ += len;
  }
  bool done() const { return pos_ == n_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) fail(ErrorCode::parse, "checkpoint ends unexpectedly");
  }
  const unsigned char* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.kind.size()));
  w.put_bytes(file.kind.data(), file.kind.size());
  const std::string config = file.config.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
  w.put_bytes(config.data(), config.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.arrays.size()));
  for (const auto& a : file.arrays) {
    const std::size_t elem = a.dtype == DType::f32 ? 4 : 8;
    if (a.bytes.size() != a.rows * a.cols * elem)
      fail(ErrorCode::internal, "array '" + a.name + "' byte size disagrees with its shape");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(a.name.size()));
    w.put_bytes(a.name.data(), a.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(a.dtype));
    w.put<std::uint64_t>(a.rows);
    w.put<std::uint64_t>(a.cols);
    w.put_bytes(a.bytes.data(), a.bytes.size());
  }
  w.put<std::uint32_t>(crc_of(w.buf.data(), w.buf.size()));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!out) fail(ErrorCode::io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    fail(ErrorCode::parse, path.string() + " is not a checkpoint file");
  if (bytes.size() < sizeof kMagic + 8)
    fail(ErrorCode::parse, "checksum mismatch in " + path.string() + " (file truncated)");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.data() + body, 4);
  if (tail.get<std::uint32_t>() != crc_of(bytes.data(), body))
    fail(ErrorCode::parse, "checksum mismatch in " + path.string());

  Reader r(bytes.data() + sizeof kMagic, body - sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    fail(ErrorCode::parse, "checkpoint format version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  CheckpointFile file;
  file.kind = r.get_string(r.get<std::uint32_t>());
  try {
    file.config = nlohmann::json::parse(r.get_string(r.get<std::uint32_t>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("checkpoint config block: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_string(r.get<std::uint16_t>());
    const auto dt = r.get<std::uint8_t>();
    if (dt > 1) fail(ErrorCode::parse, "unknown dtype in array '" + a.name + "'");
    a.dtype = static_cast<DType>(dt);
    a.rows = r.get<std::uint64_t>();
    a.cols = r.get<std::uint64_t>();
    r.get_bytes(a.bytes, static_cast<std::size_t>(a.rows * a.cols * (dt == 0 ? 4 : 8)));
    file.arrays.push_back(std::move(a));
  }
  if (!r.done()) fail(ErrorCode::parse, "trailing bytes in checkpoint");
  return file;
}

namespace {

// 64-bit FNV-1a. Unlike a CRC, it does not collapse on files that end in their
// own CRC.
std::string fingerprint(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string string_checksum(const std::string& s) {
  return fingerprint(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

std::string file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  return fingerprint(bytes.data(), bytes.size());
}

}  // namespace biqe
