#pragma once

#include "scuf/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace scuf {

// Incremental SHA-256 used for config hashes and weight/dataset fingerprints.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t size);
  Sha256& update(std::string_view text) { return update(text.data(), text.size()); }
  Sha256& update(const Matrix& m);
  std::array<std::uint8_t, 32> digest();
  std::string hex_digest();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

// First 8 digest bytes as an integer; stable across platforms.
std::uint64_t stable_hash64(std::string_view text);

}  // namespace scuf
