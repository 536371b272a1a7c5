#include "simhand/io.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

namespace simhand {

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
}

void BinaryWriter::magic(const char tag[4]) { bytes(tag, 4); }
void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void BinaryWriter::f32(float v) { bytes(&v, sizeof v); }
void BinaryWriter::f64(double v) { bytes(&v, sizeof v); }

void BinaryWriter::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw std::runtime_error("close failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw std::runtime_error("cannot open for reading: " + path.string());
}

void BinaryReader::fail(const std::string& msg) const {
  throw std::runtime_error(msg + ": " + path_.string());
}

void BinaryReader::expect_magic(const char tag[4], const std::string& what) {
  char got[4];
  bytes(got, 4);
  if (std::memcmp(got, tag, 4) != 0) fail("bad magic, not a " + what + " file");
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}

float BinaryReader::f32() {
  float v;
  bytes(&v, sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  bytes(&v, sizeof v);
  return v;
}

void BinaryReader::bytes(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n > 0) bytes(s.data(), n);
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace simhand
