#include "deirank/context.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <fmt/format.h>

#include <cmath>

namespace deirank {
namespace {

void ensure_newline(std::string & s)
{
    if (!s.empty() && s.back() != '\n') {
        s += '\n';
    }
}

} // namespace

SpanMap load_spans(std::filesystem::path const & path)
{
    SpanMap out;
    io::for_each_jsonl(path, [&](nlohmann::json const & j, std::size_t line) {
        auto id = j.at("instance_id").get<std::string>();
        auto & list = out[id];
        for (auto const & s : j.at("spans")) {
            CodeSpan span;
            span.file_path = s.at("file_path").get<std::string>();
            span.start_line = s.at("start_line").get<std::size_t>();
            span.end_line = s.at("end_line").get<std::size_t>();
            span.code = s.at("code").get<std::string>();
            span.origin = s.value("origin", std::string{});
            if (span.start_line < 1 || span.start_line > span.end_line) {
                throw ValidationError(fmt::format(
                    "{}:{}: span {} has invalid range {}-{}", path.string(), line, span.file_path,
                    span.start_line, span.end_line));
            }
            auto expected = span.end_line - span.start_line + 1;
            auto actual = io::split_lines(span.code).size();
            if (actual != expected) {
                throw ValidationError(fmt::format(
                    "{}:{}: span {}:{}-{} covers {} lines but its code has {}", path.string(), line,
                    span.file_path, span.start_line, span.end_line, expected, actual));
            }
            list.push_back(std::move(span));
        }
    });
    return out;
}

std::size_t SizeEstimator::operator()(std::string_view text) const
{
    return static_cast<std::size_t>(std::ceil(static_cast<double>(text.size()) / chars_per_token));
}

std::string render_issue_section(ScoringContext const & ctx)
{
    std::string out = "## Issue description\n\n" + ctx.issue_text;
    ensure_newline(out);
    return out;
}

std::string render_spans_section(ScoringContext const & ctx)
{
    std::string out = "## Relevant code spans\n";
    if (ctx.spans.empty()) {
        out += "\n(none)\n";
    }
    for (auto const & span : ctx.spans) {
        out += fmt::format("\n### {} (lines {}-{})\n", span.file_path, span.start_line, span.end_line);
        auto lines = io::split_lines(span.code);
        auto width = std::to_string(span.end_line).size();
        for (std::size_t i = 0; i < lines.size(); ++i) {
            auto n = span.start_line + i;
            out += lines[i].empty() ? fmt::format("{:>{}} |\n", n, width)
                                    : fmt::format("{:>{}} | {}\n", n, width, lines[i]);
        }
    }
    if (ctx.truncation_note) {
        out += "\n(" + *ctx.truncation_note + ")\n";
    }
    return out;
}

std::string render_before_section(ScoringContext const & ctx)
{
    std::string out = "## Code before the patch\n";
    if (ctx.views.empty()) {
        out += "\n(no changes proposed)\n";
    }
    for (auto const & v : ctx.views) {
        out += "\n### " + v.file_path + "\n" + v.before;
        ensure_newline(out);
    }
    return out;
}

std::string render_after_section(ScoringContext const & ctx)
{
    std::string out = "## Code after the patch\n";
    if (ctx.views.empty()) {
        out += "\n(no changes proposed)\n";
    }
    for (auto const & v : ctx.views) {
        out += "\n### " + v.file_path + "\n" + v.after;
        ensure_newline(out);
    }
    return out;
}

std::string render_context(ScoringContext const & ctx)
{
    return render_issue_section(ctx) + "\n" + render_spans_section(ctx) + "\n"
           + render_before_section(ctx) + "\n" + render_after_section(ctx);
}

ScoringContext assemble_context(
    Instance const & instance,
    CandidatePatch const & candidate,
    std::vector<CodeSpan> const & spans,
    FileBundle const & bundle,
    std::size_t budget,
    ContextOptions const & options)
{
    if (budget == 0) {
        throw BudgetError("token budget must be positive");
    }
    auto const & bundle_key = instance.bundle_ref.empty() ? instance.instance_id : instance.bundle_ref;
    auto patches = diff::parse_unified_diff(candidate.patch_text);

    ScoringContext ctx;
    ctx.issue_text = instance.issue_text;
    ctx.spans = spans;
    ctx.token_budget = budget;
    ctx.views = diff::render_before_after(bundle, bundle_key, patches, options.margin);

    auto const & size = options.estimator;
    if (size(render_issue_section(ctx)) > budget) {
        throw BudgetError(fmt::format(
            "budget of {} tokens cannot hold the issue text of {} ({} tokens)", budget,
            instance.instance_id, size(render_issue_section(ctx))));
    }
    if (size(render_context(ctx)) <= budget) {
        return ctx;
    }

    std::size_t dropped = 0;
    auto const total_spans = ctx.spans.size();
    auto note = [&](std::size_t margin) {
        std::string text;
        if (dropped > 0) {
            text = fmt::format("{} of {} relevant code spans omitted to fit the token budget", dropped, total_spans);
        }
        if (margin != options.margin) {
            if (!text.empty()) {
                text += "; ";
            }
            text += fmt::format("context margin reduced from {} to {} lines", options.margin, margin);
        }
        return text;
    };

    while (!ctx.spans.empty()) {
        ctx.spans.pop_back();
        ++dropped;
        ctx.truncation_note = note(options.margin);
        if (size(render_context(ctx)) <= budget) {
            return ctx;
        }
    }

    auto margin = options.margin;
    while (margin > 0) {
        margin /= 2;
        ctx.views = diff::render_before_after(bundle, bundle_key, patches, margin);
        ctx.truncation_note = note(margin);
        if (size(render_context(ctx)) <= budget) {
            return ctx;
        }
    }
    ctx.truncation_note = note(margin) + "; changed lines alone exceed the budget";
    if (dropped == 0 && options.margin == 0) {
        ctx.truncation_note = "changed lines alone exceed the budget";
    }
    return ctx;
}

} // namespace deirank
