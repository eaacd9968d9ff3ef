#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cdupatch {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = kFnvOffset);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = kFnvOffset);

template <typename T>
std::uint64_t fnv1a_values(std::span<const T> values, std::uint64_t seed = kFnvOffset) {
  return fnv1a(std::as_bytes(values), seed);
}

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

/// Hash of a whole file's bytes. Throws IoError if unreadable.
std::uint64_t file_checksum(const std::string& path);

}  // namespace cdupatch
