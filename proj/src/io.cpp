#include "deirank/io.hpp"

#include "deirank/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace deirank::io {

std::string read_text_file(std::filesystem::path const & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_text_file(std::filesystem::path const & path, std::string_view content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write '" + tmp.string() + "'");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw Error("write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json read_json_file(std::filesystem::path const & path)
{
    auto text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (nlohmann::json::parse_error const & e) {
        throw ParseError(path.string(), 1, e.what());
    }
}

void for_each_jsonl(
    std::filesystem::path const & path,
    std::function<void(nlohmann::json const &, std::size_t)> const & fn)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open '" + path.string() + "'");
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (nlohmann::json::parse_error const & e) {
            throw ParseError(path.string(), line_no, e.what());
        }
        if (!j.is_object()) {
            throw ParseError(path.string(), line_no, "expected a JSON object");
        }
        try {
            fn(j, line_no);
        } catch (nlohmann::json::exception const & e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    }
}

std::vector<std::string> split_lines(std::string_view text)
{
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string join_lines(std::vector<std::string> const & lines, bool trailing_newline)
{
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size() || trailing_newline) {
            out += '\n';
        }
    }
    return out;
}

std::string_view rtrim(std::string_view s)
{
    auto end = s.find_last_not_of(" \t\r\f\v\n");
    return end == std::string_view::npos ? std::string_view{} : s.substr(0, end + 1);
}

std::string_view trim(std::string_view s)
{
    s = rtrim(s);
    auto begin = s.find_first_not_of(" \t\r\f\v\n");
    return begin == std::string_view::npos ? std::string_view{} : s.substr(begin);
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    return fmt::format("{:016x}", value);
}

} // namespace deirank::io
