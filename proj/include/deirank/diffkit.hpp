#pragma once

#include "deirank/bundle.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deirank::diff {

inline constexpr std::size_t default_margin = 10;
inline constexpr std::string_view dev_null = "/dev/null";
inline constexpr std::string_view ellipsis_marker = "...";

enum class LineTag : char {
    context = ' ',
    remove = '-',
    add = '+',
};

struct HunkLine {
    LineTag tag = LineTag::context;
    std::string text;
    /// Followed by "\ No newline at end of file".
    bool no_newline = false;

    bool operator==(HunkLine const &) const = default;
};

/// One "@@ -a,b +c,d @@" block. Context + remove lines == old_len and
/// context + add lines == new_len.
struct Hunk {
    std::size_t old_start = 0;
    std::size_t old_len = 0;
    std::size_t new_start = 0;
    std::size_t new_len = 0;
    std::vector<HunkLine> lines;

    /// 0-based index into the old file where the hunk begins.
    std::size_t old_offset() const noexcept { return old_len == 0 ? old_start : old_start - 1; }

    bool operator==(Hunk const &) const = default;
};

struct FilePatch {
    /// Paths have their "a/" / "b/" prefixes stripped; absent sides are "/dev/null".
    std::string old_path;
    std::string new_path;
    std::vector<Hunk> hunks;

    bool is_new_file() const noexcept { return old_path == dev_null; }
    bool is_deleted_file() const noexcept { return new_path == dev_null; }
    /// The path a reader would call this file by.
    std::string const & display_path() const noexcept { return is_deleted_file() ? old_path : new_path; }

    bool operator==(FilePatch const &) const = default;
};

/**
 * Parses GNU `diff -u` / `git diff` output. Lines outside file headers and
 * hunks (diff --git, index, mode lines) are ignored. Throws
 * MalformedDiffError when a hunk body disagrees with its header counts or
 * hunks overlap.
 */
std::vector<FilePatch> parse_unified_diff(std::string_view patch_text);

/// Normalized rendering: a/ b/ prefixes, explicit hunk lengths, no trailing header text.
std::string serialize_unified_diff(std::span<FilePatch const> patches);

/// Swaps the old and new sides so applying the result undoes the original.
std::vector<FilePatch> reverse_patches(std::span<FilePatch const> patches);

/// Pre-patch paths that must exist in a bundle for the patches to apply.
std::vector<std::string> touched_files(std::span<FilePatch const> patches);

/**
 * Applies the patches to the instance's bundled files and returns the
 * patched content of every created or modified file. Deleted files are
 * absent from the result. Context and removed lines must match exactly after
 * trailing whitespace is stripped; there is no offset search.
 */
std::map<std::string, std::string> apply_patch(
    FileBundle const & bundle,
    std::string const & instance_id,
    std::span<FilePatch const> patches);

struct BeforeAfterView {
    std::string file_path;
    /// Line-numbered excerpts of the pre-patch file.
    std::string before;
    /// Line-numbered excerpts of the post-patch file.
    std::string after;
    std::size_t context_margin = default_margin;
};

/**
 * Renders the changed regions of every touched file twice, once from the
 * original content and once from the patched content, each widened by
 * `margin` unchanged lines. Disjoint regions are separated by "...".
 */
std::vector<BeforeAfterView> render_before_after(
    FileBundle const & bundle,
    std::string const & instance_id,
    std::span<FilePatch const> patches,
    std::size_t margin = default_margin);

} // namespace deirank::diff
