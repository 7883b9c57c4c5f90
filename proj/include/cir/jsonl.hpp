#pragma once

#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace cir {

using json = nlohmann::json;

/// Calls fn(record, line_number) for each non-blank line. Parse failures and
/// exceptions thrown by fn are rethrown as DataError carrying "path:line".
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const json&, std::size_t)>& fn);

/// Writes one compact JSON document per line, '\n' terminated.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

/// Typed field access with a readable error on missing/mistyped keys.
std::string require_string(const json& record, const char* key);
const json& require_field(const json& record, const char* key);

}  // namespace cir
