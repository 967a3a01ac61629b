#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lorapatch {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(const void* data, std::size_t len);
Digest sha256(const std::vector<std::uint8_t>& bytes);
std::string to_hex(const Digest& d);
std::string sha256_hex(const void* data, std::size_t len);

/// Incremental hasher for streaming larger payloads (model weights etc).
class Sha256Stream {
 public:
  Sha256Stream();
  ~Sha256Stream();
  Sha256Stream(const Sha256Stream&) = delete;
  Sha256Stream& operator=(const Sha256Stream&) = delete;
  void update(const void* data, std::size_t len);
  Digest finish();

 private:
  void* ctx_;
};

}  // namespace lorapatch
