#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace simhand {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

/// Thin binary writer for the little-endian cache/archive formats.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);
  void magic(const char tag[4]);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, std::size_t n);
  void str(const std::string& s);  // u32 length + UTF-8 bytes
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);
  void expect_magic(const char tag[4], const std::string& what);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void bytes(void* data, std::size_t n);
  std::string str();

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  void fail(const std::string& msg) const;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// FNV-1a over the raw bytes of a file; used for artifact identity checks.
std::uint64_t fnv1a_file(const std::filesystem::path& path);

}  // namespace simhand
