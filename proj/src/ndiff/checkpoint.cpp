#include "tap/ndiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tap/errors.hpp"

namespace tap::nd {
namespace {

constexpr char kMagic[8] = {'T', 'A', 'P', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw SchemaError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::from_store(const ParameterStore& store, std::string metadata) {
  Checkpoint c;
  c.metadata = std::move(metadata);
  for (const Parameter* p : store.all()) c.arrays.emplace_back(p->name, p->value);
  return c;
}

void Checkpoint::load_into(ParameterStore& store) const {
  for (Parameter* p : store.all()) {
    const Matrix* found = nullptr;
    for (const auto& [name, m] : arrays)
      if (name == p->name) found = &m;
    if (found == nullptr) throw SchemaError("checkpoint lacks parameter " + p->name);
    if (found->rows() != p->value.rows() || found->cols() != p->value.cols()) {
      throw SchemaError("checkpoint parameter " + p->name + " has shape " + shape_str(*found) + ", model expects " +
                        shape_str(p->value));
    }
    p->value = *found;
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  out += ckpt.metadata;
  put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, m] : ckpt.arrays) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, 2);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw SchemaError("not a checkpoint file");
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kCheckpointVersion) {
    throw SchemaError("checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.metadata = r.raw(r.uint(4));
  const auto count = r.uint(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.raw(r.uint(4));
    const auto rank = r.uint(4);
    if (rank != 2) throw SchemaError("array " + name + " has rank " + std::to_string(rank) + ", expected 2");
    const auto rows = static_cast<Eigen::Index>(r.uint(8));
    const auto cols = static_cast<Eigen::Index>(r.uint(8));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(r.uint(8));
    c.arrays.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw SchemaError("trailing bytes after checkpoint arrays");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot write " + path);
  const std::string bytes = encode_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace tap::nd
