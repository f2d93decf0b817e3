#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stic {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace stic
