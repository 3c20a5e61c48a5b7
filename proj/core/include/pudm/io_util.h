#pragma once

#include <string>

namespace pudm {

// Write-to-temp + rename so a failure never leaves a partial file at
// `path`. Content is written byte-for-byte.
void write_text_atomic(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

}  // namespace pudm
