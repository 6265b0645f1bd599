#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace deirank::io {

std::string read_text_file(std::filesystem::path const & path);

/// Writes through a temporary sibling and renames it into place.
void write_text_file(std::filesystem::path const & path, std::string_view content);

nlohmann::json read_json_file(std::filesystem::path const & path);

/// Calls `fn(object, line_number)` for every non-blank line. Line numbers are 1-based.
void for_each_jsonl(
    std::filesystem::path const & path,
    std::function<void(nlohmann::json const &, std::size_t)> const & fn);

/// Splits on '\n'. A single trailing newline does not produce an empty last line.
std::vector<std::string> split_lines(std::string_view text);

std::string join_lines(std::vector<std::string> const & lines, bool trailing_newline);

std::string_view trim(std::string_view s);
std::string_view rtrim(std::string_view s);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

} // namespace deirank::io
