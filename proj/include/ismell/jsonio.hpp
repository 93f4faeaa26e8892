#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ismell/result.hpp"

namespace ismell::jsonio {

using Json = nlohmann::ordered_json;

Result<std::string> read_file(const std::filesystem::path& path);

// Whole-file write through a temp file + rename, so readers never see a
// partial file and identical content produces identical bytes.
std::optional<Error> atomic_write(const std::filesystem::path& path, const std::string& content);

// Splits on '\n', dropping blank lines; pairs each line with its 1-based
// number in the original file.
std::vector<std::pair<std::size_t, std::string>> split_jsonl(const std::string& text);

Result<Json> parse_json(std::string_view text, const std::string& what);

}  // namespace ismell::jsonio
