#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace srp {

/// 64-bit FNV-1a; stable across platforms, used for artifact cache keys.
class Fnv1a {
  public:
    Fnv1a& update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a& update(std::uint64_t v) noexcept {
        for (int i = 0; i < 8; ++i) {
            state_ ^= (v >> (8 * i)) & 0xffU;
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const;

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Hash of a file's bytes; throws DataError when unreadable.
std::uint64_t hash_file(const std::filesystem::path& path);

std::string to_hex(std::uint64_t v);

}  // namespace srp
