#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace pll {

std::string sha1_hex(std::string_view data);

/// Same id `git hash-object` prints: SHA-1 of "blob <size>\0" + content.
std::string git_blob_hash(const std::filesystem::path& path);

}  // namespace pll
