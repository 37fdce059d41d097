#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ideo {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// 64-bit FNV-1a, for seeding RNG streams from labels.
std::uint64_t fnv1a64(std::string_view data);

// Atomic whole-file write (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace ideo
