#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sps {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = kFnvOffset);
std::uint64_t fnv1a(const std::string& text, std::uint64_t seed = kFnvOffset);
std::string hex64(std::uint64_t v);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

/// Parses "key=value" lines; blank lines and lines starting with '#' are
/// skipped. Order is preserved.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

int parse_int(const std::string& s, const std::string& what);
double parse_double(const std::string& s, const std::string& what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

/// Lossless shortest round-trip text for a double.
std::string format_double(double v);

}  // namespace sps
