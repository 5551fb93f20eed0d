#include "morphoglot/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/sha.h>

namespace morphoglot::nn {

namespace wire {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(out, bits);
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void Reader::need(std::size_t n) const {
  if (pos_ + n > bytes_.size()) throw FormatError("truncated file");
}

std::uint8_t Reader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[pos_++]);
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

float Reader::f32() {
  const std::uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string Reader::string() {
  const std::uint32_t n = u32();
  return raw(n);
}

std::string Reader::raw(std::size_t n) {
  need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

}  // namespace wire

std::string serialize_checkpoint(const ParameterSet<float>& params,
                                 const std::string& metadata) {
  std::string out = "MGLT";
  wire::put_u32(out, kCheckpointVersion);
  wire::put_string(out, metadata);
  wire::put_u32(out, static_cast<std::uint32_t>(params.all().size()));
  std::uint64_t offset = 0;
  for (const auto& p : params.all()) {
    wire::put_string(out, p.name);
    wire::put_u8(out, p.decay ? 1 : 0);
    wire::put_u32(out, 2);
    wire::put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    wire::put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    wire::put_u64(out, offset);
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  for (const auto& p : params.all())
    for (Index i = 0; i < p.value.size(); ++i) wire::put_f32(out, p.value.data()[i]);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "MGLT") != 0)
    throw FormatError("not a parameter checkpoint (bad magic)");
  wire::Reader in(bytes);
  in.raw(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.metadata = in.string();
  const std::uint32_t count = in.u32();
  struct Entry {
    std::string name;
    bool decay;
    Index rows, cols;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = in.string();
    e.decay = in.u8() != 0;
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 2) throw FormatError("unsupported tensor rank in " + e.name);
    e.rows = in.u32();
    e.cols = rank == 2 ? static_cast<Index>(in.u32()) : 1;
    e.offset = in.u64();
    entries.push_back(e);
  }
  const std::size_t data_start = in.position();
  for (const auto& e : entries) {
    auto& p = ckpt.params.add(e.name, e.rows, e.cols, e.decay);
    const std::size_t byte_offset = data_start + 4 * static_cast<std::size_t>(e.offset);
    if (byte_offset + 4 * static_cast<std::size_t>(p.value.size()) > bytes.size())
      throw FormatError("truncated file");
    for (Index i = 0; i < p.value.size(); ++i) {
      float v;
      std::memcpy(&v, bytes.data() + byte_offset + 4 * static_cast<std::size_t>(i), 4);
      p.value.data()[i] = v;
    }
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const ParameterSet<float>& params,
                     const std::string& metadata) {
  write_file(path, serialize_checkpoint(params, metadata));
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

// Values may span lines; backslash and newline are escaped.
std::string format_metadata(const Metadata& entries) {
  std::string out;
  for (const auto& [k, v] : entries) {
    out += k + "=";
    for (char c : v) {
      if (c == '\\') out += "\\\\";
      else if (c == '\n') out += "\\n";
      else out += c;
    }
    out += "\n";
  }
  return out;
}

Metadata parse_metadata(const std::string& text) {
  Metadata out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string value;
    for (std::size_t i = eq + 1; i < line.size(); ++i) {
      if (line[i] == '\\' && i + 1 < line.size()) {
        value += line[i + 1] == 'n' ? '\n' : line[i + 1];
        ++i;
      } else {
        value += line[i];
      }
    }
    out[line.substr(0, eq)] = std::move(value);
  }
  return out;
}

Fingerprint sha256(const std::string& bytes) {
  Fingerprint fp;
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), fp.data());
  return fp;
}

std::string to_hex(const Fingerprint& fp) {
  std::ostringstream out;
  for (auto b : fp) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(b);
  return out.str();
}

Fingerprint from_hex(const std::string& hex) {
  if (hex.size() != 64) throw FormatError("fingerprint must be 64 hex digits");
  Fingerprint fp;
  for (std::size_t i = 0; i < 32; ++i)
    fp[i] = static_cast<std::uint8_t>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
  return fp;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace morphoglot::nn
