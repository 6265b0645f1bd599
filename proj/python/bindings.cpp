#include "deirank/committee.hpp"
#include "deirank/context.hpp"
#include "deirank/diffkit.hpp"
#include "deirank/error.hpp"
#include "deirank/metrics.hpp"
#include "deirank/pipeline.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fmt/format.h>

namespace py = pybind11;
using namespace deirank;

namespace {

// Files of a single pseudo instance, keyed by path.
FileBundle bundle_of(std::map<std::string, std::string> const & files)
{
    FileBundle b;
    for (auto const & [path, content] : files) {
        b.add("_", path, content);
    }
    return b;
}

ResolutionMatrix matrix_of(std::vector<std::vector<bool>> const & grid)
{
    std::size_t cols = grid.empty() ? 0 : grid.front().size();
    std::vector<std::string> ids;
    std::vector<CandidateKey> keys;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        ids.push_back(fmt::format("row{}", i));
    }
    for (std::size_t j = 0; j < cols; ++j) {
        keys.push_back({fmt::format("col{}", j), 0});
    }
    return ResolutionMatrix(std::move(ids), std::move(keys), grid);
}

metrics::Selector selector_of(std::string const & name, std::uint64_t seed, std::size_t trials)
{
    if (name == "scores") {
        throw ArgumentError("the scores selector needs a vote ledger; use run() instead");
    }
    return make_selector(name, seed, trials);
}

py::dict hunk_dict(diff::Hunk const & h)
{
    py::list lines;
    for (auto const & l : h.lines) {
        lines.append(py::make_tuple(std::string(1, static_cast<char>(l.tag)), l.text, l.no_newline));
    }
    py::dict d;
    d["old_start"] = h.old_start;
    d["old_len"] = h.old_len;
    d["new_start"] = h.new_start;
    d["new_len"] = h.new_len;
    d["lines"] = lines;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Explain-then-score reranking of candidate patches";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto validation = py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<TransportError>(m, "TransportError", base.ptr());
    // Most specific first: pybind11 tries translators in reverse registration order.
    py::register_exception<MalformedDiffError>(m, "MalformedDiffError", validation.ptr());
    py::register_exception<ApplyConflictError>(m, "ApplyConflictError", validation.ptr());
    py::register_exception<BudgetError>(m, "BudgetError", validation.ptr());

    m.def("parse_score", [](std::string const & raw) { return parse_score(raw); }, py::arg("raw_response"),
          "Score from the last 'Score:' line, or None when missing or outside 1..10.");

    m.def(
        "build_prompt",
        [](std::string const & issue, std::vector<std::tuple<std::string, std::size_t, std::size_t, std::string>> const & spans,
           std::vector<std::tuple<std::string, std::string, std::string>> const & views, bool explanations) {
            ScoringContext ctx;
            ctx.issue_text = issue;
            for (auto const & [path, start, end, code] : spans) {
                ctx.spans.push_back({path, start, end, code, ""});
            }
            for (auto const & [path, before, after] : views) {
                ctx.views.push_back({path, before, after, diff::default_margin});
            }
            CommitteeConfig cfg;
            cfg.explanations_enabled = explanations;
            return build_prompt(ctx, cfg);
        },
        py::arg("issue"), py::arg("spans") = std::vector<std::tuple<std::string, std::size_t, std::size_t, std::string>>{},
        py::arg("views") = std::vector<std::tuple<std::string, std::string, std::string>>{},
        py::arg("explanations") = true,
        "spans: (path, start_line, end_line, code); views: (path, before, after).");

    m.def(
        "parse_diff",
        [](std::string const & text) {
            py::list out;
            for (auto const & fp : diff::parse_unified_diff(text)) {
                py::dict d;
                d["old_path"] = fp.old_path;
                d["new_path"] = fp.new_path;
                py::list hunks;
                for (auto const & h : fp.hunks) {
                    hunks.append(hunk_dict(h));
                }
                d["hunks"] = hunks;
                out.append(d);
            }
            return out;
        },
        py::arg("patch_text"));

    m.def(
        "normalize_diff", [](std::string const & text) { return diff::serialize_unified_diff(diff::parse_unified_diff(text)); },
        py::arg("patch_text"));

    m.def(
        "reverse_diff",
        [](std::string const & text) {
            auto patches = diff::parse_unified_diff(text);
            return diff::serialize_unified_diff(diff::reverse_patches(patches));
        },
        py::arg("patch_text"));

    m.def(
        "apply_patch",
        [](std::map<std::string, std::string> const & files, std::string const & text) {
            auto patches = diff::parse_unified_diff(text);
            return diff::apply_patch(bundle_of(files), "_", patches);
        },
        py::arg("files"), py::arg("patch_text"),
        "Patched contents of every touched file; deleted files are absent.");

    m.def(
        "render_before_after",
        [](std::map<std::string, std::string> const & files, std::string const & text, std::size_t margin) {
            auto patches = diff::parse_unified_diff(text);
            std::vector<std::tuple<std::string, std::string, std::string>> out;
            for (auto const & v : diff::render_before_after(bundle_of(files), "_", patches, margin)) {
                out.emplace_back(v.file_path, v.before, v.after);
            }
            return out;
        },
        py::arg("files"), py::arg("patch_text"), py::arg("margin") = diff::default_margin);

    m.def(
        "union_at_k", [](std::vector<std::vector<bool>> const & grid, std::size_t k) {
            auto mat = matrix_of(grid);
            return metrics::union_at_k(mat, metrics::column_order(mat), k);
        },
        py::arg("grid"), py::arg("k"));
    m.def(
        "intersect_at_k", [](std::vector<std::vector<bool>> const & grid, std::size_t k) {
            auto mat = matrix_of(grid);
            return metrics::intersect_at_k(mat, metrics::column_order(mat), k);
        },
        py::arg("grid"), py::arg("k"));
    m.def(
        "average_at_k", [](std::vector<std::vector<bool>> const & grid, std::size_t k) {
            auto mat = matrix_of(grid);
            return metrics::average_at_k(mat, metrics::column_order(mat), k);
        },
        py::arg("grid"), py::arg("k"));
    m.def(
        "n_at_k",
        [](std::vector<std::vector<bool>> const & grid, std::size_t k, std::size_t n, std::string const & selector,
           std::uint64_t seed, std::size_t trials) {
            auto mat = matrix_of(grid);
            return metrics::n_at_k(mat, metrics::column_order(mat), k, n, selector_of(selector, seed, trials));
        },
        py::arg("grid"), py::arg("k"), py::arg("n") = 1, py::arg("selector") = "oracle", py::arg("seed") = 0,
        py::arg("trials") = 1000, "selector: oracle | adversarial | random");
    m.def(
        "expected_random_n_at_k",
        [](std::vector<std::vector<bool>> const & grid, std::size_t k, std::size_t n) {
            auto mat = matrix_of(grid);
            return metrics::expected_random_n_at_k(mat, metrics::column_order(mat), k, n);
        },
        py::arg("grid"), py::arg("k"), py::arg("n") = 1);
    m.def(
        "metric_series_csv",
        [](std::vector<std::vector<bool>> const & grid, std::size_t n, std::string const & selector, std::size_t max_k,
           std::uint64_t seed, std::size_t trials) {
            auto mat = matrix_of(grid);
            auto k = max_k == 0 ? mat.cols() : max_k;
            return metrics::metric_series(mat, metrics::column_order(mat), selector_of(selector, seed, trials), n, k).to_csv();
        },
        py::arg("grid"), py::arg("n") = 1, py::arg("selector") = "oracle", py::arg("max_k") = 0, py::arg("seed") = 0,
        py::arg("trials") = 1000);
    m.def(
        "synthetic_matrix",
        [](std::size_t instances, std::size_t candidates, double rate, double overlap, std::uint64_t seed) {
            return metrics::generate_synthetic_matrix(instances, candidates, rate, overlap, seed).grid();
        },
        py::arg("instances"), py::arg("candidates"), py::arg("rate"), py::arg("overlap") = 0.0, py::arg("seed") = 0);

    m.def(
        "run",
        [](std::filesystem::path const & config_path) {
            auto cfg = RunConfig::load(config_path);
            PipelineResult r;
            {
                py::gil_scoped_release release;
                r = run_pipeline(cfg);
            }
            py::dict d;
            d["output_dir"] = r.output_dir;
            d["config_hash"] = r.config_hash;
            d["ledger_records"] = r.ledger_records;
            d["reused_records"] = r.reused_records;
            d["backend_requests"] = r.backend_requests;
            d["predictions"] = r.predictions;
            d["warnings"] = r.warnings;
            d["selection_resolved"] = r.selection_resolved ? py::cast(*r.selection_resolved) : py::none();
            return d;
        },
        py::arg("config_path"), "Run the whole pipeline from a config file.");

    m.def(
        "report", [](std::filesystem::path const & dir, std::string const & format) {
            auto r = report(dir);
            return format == "csv" ? r.csv : r.table;
        },
        py::arg("output_dir"), py::arg("format") = "table");
}
