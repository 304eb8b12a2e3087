#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mudoc::util {

// Number of UTF-8 code points; invalid lead bytes count as one each.
std::size_t utf8_length(std::string_view s);

// Longest prefix of `s` holding at most `max_chars` code points.
std::string_view utf8_prefix(std::string_view s, std::size_t max_chars);

std::string base64_encode(std::span<const std::uint8_t> bytes);

std::uint64_t fnv1a64(std::string_view s);

std::string hex64(std::uint64_t value);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Best-effort MIME type from magic bytes; empty when unrecognized.
std::string sniff_image_type(std::span<const std::uint8_t> bytes);

}  // namespace mudoc::util
