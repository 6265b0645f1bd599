#include "deirank/diffkit.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <optional>

namespace deirank::diff {
namespace {

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.substr(0, prefix.size()) == prefix;
}

std::string header_path(std::string_view raw)
{
    // "a/foo.py\t2024-01-01 ..." -> "foo.py"
    auto tab = raw.find('\t');
    if (tab != std::string_view::npos) {
        raw = raw.substr(0, tab);
    }
    raw = io::trim(raw);
    if (raw == dev_null) {
        return std::string(raw);
    }
    if (starts_with(raw, "a/") || starts_with(raw, "b/")) {
        raw.remove_prefix(2);
    }
    return std::string(raw);
}

std::optional<std::size_t> parse_number(std::string_view & s)
{
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr == s.data()) {
        return std::nullopt;
    }
    s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
    return value;
}

// "-a[,b]" or "+c[,d]"
bool parse_range(std::string_view & s, char sign, std::size_t & start, std::size_t & len)
{
    if (s.empty() || s.front() != sign) {
        return false;
    }
    s.remove_prefix(1);
    auto a = parse_number(s);
    if (!a) {
        return false;
    }
    start = *a;
    len = 1;
    if (!s.empty() && s.front() == ',') {
        s.remove_prefix(1);
        auto b = parse_number(s);
        if (!b) {
            return false;
        }
        len = *b;
    }
    return true;
}

bool parse_hunk_header(std::string_view line, Hunk & hunk)
{
    if (!starts_with(line, "@@ ")) {
        return false;
    }
    line.remove_prefix(3);
    if (!parse_range(line, '-', hunk.old_start, hunk.old_len)) {
        return false;
    }
    if (line.empty() || line.front() != ' ') {
        return false;
    }
    line.remove_prefix(1);
    if (!parse_range(line, '+', hunk.new_start, hunk.new_len)) {
        return false;
    }
    return starts_with(line, " @@");
}

bool is_file_header(std::vector<std::string> const & lines, std::size_t i)
{
    return i + 1 < lines.size() && starts_with(lines[i], "--- ") && starts_with(lines[i + 1], "+++ ");
}

std::string format_range(std::size_t start, std::size_t len)
{
    return fmt::format("{},{}", start, len);
}

/// Per-file result of applying hunks, with changed line spans on both sides.
struct Region {
    // 1-based inclusive line spans; `first > last` marks "no changed lines"
    // with `first` the 1-based line the insertion/deletion sits before.
    std::size_t old_first = 0, old_last = 0;
    std::size_t new_first = 0, new_last = 0;
};

struct AppliedFile {
    std::vector<std::string> old_lines;
    std::vector<std::string> new_lines;
    bool new_trailing_newline = true;
    std::vector<Region> regions;
};

AppliedFile apply_file(std::string const & original, FilePatch const & patch)
{
    AppliedFile result;
    auto const & file = patch.display_path();
    result.old_lines = io::split_lines(original);
    auto const & old_lines = result.old_lines;
    bool trailing = original.empty() || original.back() == '\n';
    if (patch.is_new_file()) {
        trailing = true;
    }

    auto & out = result.new_lines;
    std::size_t cursor = 0;
    for (std::size_t hi = 0; hi < patch.hunks.size(); ++hi) {
        auto const & hunk = patch.hunks[hi];
        auto pos = hunk.old_offset();
        if (pos < cursor) {
            throw MalformedDiffError(file, hi, "hunk overlaps the previous hunk");
        }
        if (pos > old_lines.size()) {
            throw ApplyConflictError(
                file, hi, pos, fmt::format("file has only {} lines", old_lines.size()));
        }
        out.insert(out.end(), old_lines.begin() + static_cast<std::ptrdiff_t>(cursor),
                   old_lines.begin() + static_cast<std::ptrdiff_t>(pos));

        Region region;
        std::optional<std::size_t> first_rm, last_rm, first_add, last_add;
        std::size_t idx = pos;
        bool new_side_no_newline = false;
        for (auto const & line : hunk.lines) {
            if (line.tag == LineTag::add) {
                out.push_back(line.text);
                if (!first_add) {
                    first_add = out.size();
                }
                last_add = out.size();
                new_side_no_newline = line.no_newline;
                continue;
            }
            if (idx >= old_lines.size()) {
                throw ApplyConflictError(file, hi, idx + 1, "hunk extends past end of file");
            }
            if (io::rtrim(old_lines[idx]) != io::rtrim(line.text)) {
                throw ApplyConflictError(
                    file, hi, idx + 1,
                    fmt::format("expected '{}' but file has '{}'", line.text, old_lines[idx]));
            }
            if (line.tag == LineTag::remove) {
                if (!first_rm) {
                    first_rm = idx + 1;
                }
                last_rm = idx + 1;
            } else {
                out.push_back(old_lines[idx]);
                new_side_no_newline = line.no_newline;
            }
            ++idx;
        }
        cursor = pos + hunk.old_len;

        // Anchor for pure insertions/deletions: the first line after the change point.
        if (first_rm) {
            region.old_first = *first_rm;
            region.old_last = *last_rm;
        } else {
            auto anchor = pos;
            for (auto const & line : hunk.lines) {
                if (line.tag == LineTag::add) {
                    break;
                }
                ++anchor;
            }
            region.old_first = anchor + 1;
            region.old_last = anchor;
        }
        if (first_add) {
            region.new_first = *first_add;
            region.new_last = *last_add;
        } else {
            // Map the deletion point into new coordinates.
            std::size_t new_before = out.size();
            std::size_t trailing_ctx = 0;
            for (auto it = hunk.lines.rbegin(); it != hunk.lines.rend(); ++it) {
                if (it->tag != LineTag::context) {
                    break;
                }
                ++trailing_ctx;
            }
            region.new_first = new_before - trailing_ctx + 1;
            region.new_last = new_before - trailing_ctx;
        }
        result.regions.push_back(region);

        if (cursor == old_lines.size()) {
            trailing = !new_side_no_newline;
        }
    }
    out.insert(out.end(), old_lines.begin() + static_cast<std::ptrdiff_t>(cursor), old_lines.end());
    result.new_trailing_newline = trailing;
    return result;
}

std::string source_content(
    FileBundle const & bundle,
    std::map<std::string, std::string> const & working,
    std::string const & instance_id,
    FilePatch const & patch)
{
    if (patch.is_new_file()) {
        return {};
    }
    if (auto it = working.find(patch.old_path); it != working.end()) {
        return it->second;
    }
    auto content = bundle.find(instance_id, patch.old_path);
    if (!content) {
        throw ApplyConflictError(patch.old_path, 0, 0, "file is not in the bundle for " + instance_id);
    }
    return *content;
}

std::size_t digits(std::size_t n)
{
    std::size_t d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

void append_numbered(std::string & out, std::vector<std::string> const & lines, std::size_t first, std::size_t last, std::size_t width)
{
    for (auto n = first; n <= last; ++n) {
        auto const & text = lines[n - 1];
        if (text.empty()) {
            out += fmt::format("{:>{}} |\n", n, width);
        } else {
            out += fmt::format("{:>{}} | {}\n", n, width, text);
        }
    }
}

// Widen each change span by `margin`, clip to the file, merge touching spans.
std::string render_side(
    std::vector<std::string> const & lines,
    std::vector<std::pair<std::size_t, std::size_t>> const & spans,
    std::size_t margin)
{
    std::vector<std::pair<std::size_t, std::size_t>> regions;
    auto const n = lines.size();
    for (auto [first, last] : spans) {
        std::size_t lo = 0, hi = 0;
        if (first <= last) {
            lo = first > margin ? first - margin : 1;
            hi = last + margin;
        } else {
            // Empty change span sitting before line `first`.
            if (margin == 0) {
                continue;
            }
            lo = first > margin ? first - margin : 1;
            hi = first + margin - 1;
        }
        hi = std::min(hi, n);
        if (lo > hi) {
            continue;
        }
        regions.emplace_back(lo, hi);
    }
    std::sort(regions.begin(), regions.end());
    std::vector<std::pair<std::size_t, std::size_t>> merged;
    for (auto const & r : regions) {
        if (!merged.empty() && r.first <= merged.back().second + 1) {
            merged.back().second = std::max(merged.back().second, r.second);
        } else {
            merged.push_back(r);
        }
    }
    std::string out;
    auto width = digits(n);
    for (std::size_t i = 0; i < merged.size(); ++i) {
        if (i > 0) {
            out += ellipsis_marker;
            out += '\n';
        }
        append_numbered(out, lines, merged[i].first, merged[i].second, width);
    }
    return out;
}

} // namespace

std::vector<FilePatch> parse_unified_diff(std::string_view patch_text)
{
    std::vector<FilePatch> patches;
    auto lines = io::split_lines(patch_text);
    std::size_t i = 0;
    while (i < lines.size()) {
        auto const & line = lines[i];
        if (is_file_header(lines, i)) {
            FilePatch fp;
            fp.old_path = header_path(std::string_view(lines[i]).substr(4));
            fp.new_path = header_path(std::string_view(lines[i + 1]).substr(4));
            patches.push_back(std::move(fp));
            i += 2;
            continue;
        }
        if (line == "-- ") {
            // git format-patch signature; nothing after it belongs to the diff.
            break;
        }
        if (!starts_with(line, "@@")) {
            ++i;
            continue;
        }

        std::string file = patches.empty() ? std::string("<none>") : patches.back().display_path();
        std::size_t hunk_index = patches.empty() ? 0 : patches.back().hunks.size();
        if (patches.empty()) {
            throw MalformedDiffError(file, hunk_index, "hunk header before any file header");
        }
        Hunk hunk;
        if (!parse_hunk_header(line, hunk)) {
            throw MalformedDiffError(file, hunk_index, "bad hunk header '" + line + "'");
        }
        if (hunk.old_len > 0 && hunk.old_start == 0) {
            throw MalformedDiffError(file, hunk_index, "old range starts at line 0");
        }
        ++i;
        std::size_t old_seen = 0, new_seen = 0;
        while (old_seen < hunk.old_len || new_seen < hunk.new_len) {
            if (i >= lines.size()) {
                throw MalformedDiffError(
                    file, hunk_index,
                    fmt::format("body ends early: header declares {} old / {} new lines, found {} / {}",
                                hunk.old_len, hunk.new_len, old_seen, new_seen));
            }
            std::string_view body = lines[i];
            if (!body.empty() && body.front() == '\\') {
                if (!hunk.lines.empty()) {
                    hunk.lines.back().no_newline = true;
                }
                ++i;
                continue;
            }
            char tag = body.empty() ? ' ' : body.front();
            std::string text = body.empty() ? std::string{} : std::string(body.substr(1));
            bool old_full = old_seen >= hunk.old_len;
            bool new_full = new_seen >= hunk.new_len;
            if (tag == ' ' && !old_full && !new_full) {
                hunk.lines.push_back({LineTag::context, std::move(text)});
                ++old_seen;
                ++new_seen;
            } else if (tag == '-' && !old_full) {
                hunk.lines.push_back({LineTag::remove, std::move(text)});
                ++old_seen;
            } else if (tag == '+' && !new_full) {
                hunk.lines.push_back({LineTag::add, std::move(text)});
                ++new_seen;
            } else if (tag == ' ' || tag == '-' || tag == '+') {
                throw MalformedDiffError(
                    file, hunk_index,
                    fmt::format("body disagrees with header: declares {} old / {} new lines",
                                hunk.old_len, hunk.new_len));
            } else {
                throw MalformedDiffError(
                    file, hunk_index,
                    fmt::format("body ends early: header declares {} old / {} new lines, found {} / {}",
                                hunk.old_len, hunk.new_len, old_seen, new_seen));
            }
            ++i;
        }
        if (i < lines.size() && !lines[i].empty() && lines[i].front() == '\\') {
            if (!hunk.lines.empty()) {
                hunk.lines.back().no_newline = true;
            }
            ++i;
        }
        if (i < lines.size() && !is_file_header(lines, i) && lines[i] != "-- ") {
            auto const & next = lines[i];
            if (!next.empty() && (next.front() == '+' || next.front() == '-' || next.front() == ' ')) {
                throw MalformedDiffError(
                    file, hunk_index,
                    fmt::format("body has more lines than the header declares ({} old / {} new)",
                                hunk.old_len, hunk.new_len));
            }
        }

        auto & hunks = patches.back().hunks;
        if (!hunks.empty()) {
            auto const & prev = hunks.back();
            if (hunk.old_offset() < prev.old_offset() + prev.old_len) {
                throw MalformedDiffError(file, hunk_index, "hunks overlap or are out of order");
            }
        }
        hunks.push_back(std::move(hunk));
    }
    return patches;
}

std::string serialize_unified_diff(std::span<FilePatch const> patches)
{
    std::string out;
    for (auto const & fp : patches) {
        out += "--- " + (fp.is_new_file() ? std::string(dev_null) : "a/" + fp.old_path) + "\n";
        out += "+++ " + (fp.is_deleted_file() ? std::string(dev_null) : "b/" + fp.new_path) + "\n";
        for (auto const & h : fp.hunks) {
            out += "@@ -" + format_range(h.old_start, h.old_len) + " +" + format_range(h.new_start, h.new_len) + " @@\n";
            for (auto const & line : h.lines) {
                out += static_cast<char>(line.tag);
                out += line.text;
                out += '\n';
                if (line.no_newline) {
                    out += "\\ No newline at end of file\n";
                }
            }
        }
    }
    return out;
}

std::vector<FilePatch> reverse_patches(std::span<FilePatch const> patches)
{
    std::vector<FilePatch> reversed;
    reversed.reserve(patches.size());
    for (auto const & fp : patches) {
        FilePatch r;
        r.old_path = fp.new_path;
        r.new_path = fp.old_path;
        for (auto const & h : fp.hunks) {
            Hunk rh;
            rh.old_start = h.new_start;
            rh.old_len = h.new_len;
            rh.new_start = h.old_start;
            rh.new_len = h.old_len;
            for (auto const & line : h.lines) {
                auto tag = line.tag == LineTag::add      ? LineTag::remove
                           : line.tag == LineTag::remove ? LineTag::add
                                                         : LineTag::context;
                rh.lines.push_back({tag, line.text, line.no_newline});
            }
            r.hunks.push_back(std::move(rh));
        }
        reversed.push_back(std::move(r));
    }
    return reversed;
}

std::vector<std::string> touched_files(std::span<FilePatch const> patches)
{
    std::vector<std::string> files;
    for (auto const & fp : patches) {
        if (!fp.is_new_file() && std::find(files.begin(), files.end(), fp.old_path) == files.end()) {
            files.push_back(fp.old_path);
        }
    }
    return files;
}

std::map<std::string, std::string> apply_patch(
    FileBundle const & bundle,
    std::string const & instance_id,
    std::span<FilePatch const> patches)
{
    std::map<std::string, std::string> working;
    for (auto const & fp : patches) {
        auto original = source_content(bundle, working, instance_id, fp);
        auto applied = apply_file(original, fp);
        if (fp.is_deleted_file()) {
            working.erase(fp.old_path);
            continue;
        }
        if (fp.old_path != fp.new_path) {
            working.erase(fp.old_path);
        }
        working[fp.new_path] = io::join_lines(applied.new_lines, applied.new_trailing_newline && !applied.new_lines.empty());
    }
    return working;
}

std::vector<BeforeAfterView> render_before_after(
    FileBundle const & bundle,
    std::string const & instance_id,
    std::span<FilePatch const> patches,
    std::size_t margin)
{
    std::vector<BeforeAfterView> views;
    std::map<std::string, std::string> working;
    for (auto const & fp : patches) {
        auto original = source_content(bundle, working, instance_id, fp);
        auto applied = apply_file(original, fp);
        BeforeAfterView view;
        view.file_path = fp.display_path();
        view.context_margin = margin;
        auto width_old = digits(applied.old_lines.size());
        auto width_new = digits(applied.new_lines.size());
        if (fp.is_new_file()) {
            view.before = "(new file)\n";
            view.after = "(new file)\n";
            if (!applied.new_lines.empty()) {
                append_numbered(view.after, applied.new_lines, 1, applied.new_lines.size(), width_new);
            }
        } else if (fp.is_deleted_file()) {
            view.before = "(file deleted)\n";
            if (!applied.old_lines.empty()) {
                append_numbered(view.before, applied.old_lines, 1, applied.old_lines.size(), width_old);
            }
            view.after = "(file deleted)\n";
        } else {
            std::vector<std::pair<std::size_t, std::size_t>> old_spans, new_spans;
            for (auto const & r : applied.regions) {
                old_spans.emplace_back(r.old_first, r.old_last);
                new_spans.emplace_back(r.new_first, r.new_last);
            }
            view.before = render_side(applied.old_lines, old_spans, margin);
            view.after = render_side(applied.new_lines, new_spans, margin);
        }
        if (fp.is_deleted_file()) {
            working.erase(fp.old_path);
        } else {
            if (fp.old_path != fp.new_path) {
                working.erase(fp.old_path);
            }
            working[fp.new_path] = io::join_lines(applied.new_lines, applied.new_trailing_newline && !applied.new_lines.empty());
        }
        views.push_back(std::move(view));
    }
    return views;
}

} // namespace deirank::diff
