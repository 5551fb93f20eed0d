#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "morphoglot/nn/tape.hpp"

namespace morphoglot::nn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Parameter file layout (little-endian):
//   "MGLT" | u32 version | u32 metadata bytes | metadata (UTF-8 key=value
//   lines) | u32 parameter count | per parameter: u32 name bytes, name,
//   u8 decay flag, u32 rank, u32 extents[rank], u64 offset (in values) |
//   raw f32 values.
struct Checkpoint {
  std::string metadata;
  ParameterSet<float> params;
};

std::string serialize_checkpoint(const ParameterSet<float>& params,
                                 const std::string& metadata);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ParameterSet<float>& params,
                     const std::string& metadata);
Checkpoint load_checkpoint(const std::string& path);

using Metadata = std::map<std::string, std::string>;
std::string format_metadata(const Metadata& entries);
Metadata parse_metadata(const std::string& text);

using Fingerprint = std::array<std::uint8_t, 32>;
Fingerprint sha256(const std::string& bytes);
std::string to_hex(const Fingerprint& fp);
Fingerprint from_hex(const std::string& hex);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// Little-endian primitives shared by the binary formats.
namespace wire {
void put_u8(std::string& out, std::uint8_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_string(std::string& out, const std::string& s);

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string string();
  std::string raw(std::size_t n);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  const std::string& bytes_;
  std::size_t pos_ = 0;
};
}  // namespace wire

}  // namespace morphoglot::nn
