#pragma once

#include "deirank/bundle.hpp"
#include "deirank/corpus.hpp"
#include "deirank/diffkit.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deirank {

/// An issue-relevant excerpt of repository code, e.g. from a localization tool.
struct CodeSpan {
    std::string file_path;
    std::size_t start_line = 1; ///< 1-based, inclusive
    std::size_t end_line = 1;   ///< 1-based, inclusive
    std::string code;
    std::string origin;

    bool operator==(CodeSpan const &) const = default;
};

using SpanMap = std::map<std::string, std::vector<CodeSpan>>;

/**
 * Reads JSONL of {"instance_id", "spans": [{"file_path", "start_line",
 * "end_line", "code", "origin"?}]}. Several lines may name the same instance;
 * spans are appended in file order.
 */
SpanMap load_spans(std::filesystem::path const & path);

/// Token count proxy: characters / chars_per_token, rounded up.
struct SizeEstimator {
    double chars_per_token = 4.0;

    std::size_t operator()(std::string_view text) const;
};

struct ScoringContext {
    std::string issue_text;
    std::vector<CodeSpan> spans;
    std::vector<diff::BeforeAfterView> views;
    std::size_t token_budget = 0;
    std::optional<std::string> truncation_note;
};

/// The four context sections as they appear in a prompt.
std::string render_issue_section(ScoringContext const & ctx);
std::string render_spans_section(ScoringContext const & ctx);
std::string render_before_section(ScoringContext const & ctx);
std::string render_after_section(ScoringContext const & ctx);
std::string render_context(ScoringContext const & ctx);

struct ContextOptions {
    std::size_t margin = diff::default_margin;
    SizeEstimator estimator{};
};

/**
 * Builds the scoring input for one (instance, candidate) pair: issue text,
 * the instance's spans, and before/after views of the candidate's change.
 *
 * When the rendering exceeds `budget` tokens, spans are dropped from the tail
 * first, then view margins shrink. The issue text and changed lines are never
 * cut; `truncation_note` records what was removed.
 */
ScoringContext assemble_context(
    Instance const & instance,
    CandidatePatch const & candidate,
    std::vector<CodeSpan> const & spans,
    FileBundle const & bundle,
    std::size_t budget,
    ContextOptions const & options = {});

} // namespace deirank
