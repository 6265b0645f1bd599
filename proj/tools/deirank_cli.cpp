// deirank: score, rerank and analyse candidate patches from several agents.
//
// Exit codes: 0 success, 1 validation error, 2 transport error, 3 internal error.

#include "deirank/bundle.hpp"
#include "deirank/committee.hpp"
#include "deirank/context.hpp"
#include "deirank/corpus.hpp"
#include "deirank/diffkit.hpp"
#include "deirank/error.hpp"
#include "deirank/io.hpp"
#include "deirank/metrics.hpp"
#include "deirank/pipeline.hpp"
#include "deirank/rerank.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>
#include <set>

namespace {

using namespace deirank;
namespace fs = std::filesystem;

enum ExitCode : int {
    ok = 0,
    validation_failure = 1,
    transport_failure = 2,
    internal_failure = 3,
};

struct IngestOptions {
    fs::path instances;
    fs::path candidates;
    fs::path spans;
    fs::path checkout_root;
    fs::path bundle;
    fs::path bundle_out;
    fs::path reports;
    fs::path order;
    fs::path matrix_out;
};

struct ScoreOptions {
    fs::path instances;
    fs::path candidates;
    fs::path spans;
    fs::path bundle;
    fs::path order;
    fs::path out = "ledger.jsonl";
    fs::path mock_scores;
    std::string backend = "mock";
    std::string endpoint;
    std::string api_key_env;
    std::size_t votes = 10;
    std::size_t budget = 32000;
    std::size_t margin = diff::default_margin;
    std::size_t max_in_flight = 4;
    std::size_t retries = 2;
    std::uint64_t seed = 0;
    double temperature = 0.7;
    std::string model = "mock";
    bool no_explanations = false;
};

struct RerankOptions {
    fs::path ledger;
    fs::path order;
    fs::path candidates;
    fs::path out = "predictions.jsonl";
    fs::path rankings_out;
    std::string label = "DeiBase";
    std::size_t n = 1;
    std::size_t prefix_votes = 0;
};

struct MetricsOptions {
    fs::path matrix;
    fs::path order;
    fs::path ledger;
    fs::path out;
    std::string selector = "oracle";
    std::string format = "table";
    std::size_t n = 1;
    std::size_t max_k = 0;
    std::size_t trials = 1000;
    std::size_t prefix_votes = 0;
    std::uint64_t seed = 0;
};

struct RenderOptions {
    fs::path bundle;
    fs::path patch;
    fs::path predictions;
    std::string instance;
    std::size_t margin = diff::default_margin;
};

void emit(std::string const & text, fs::path const & out)
{
    if (out.empty()) {
        std::cout << text;
    } else {
        io::write_text_file(out, text);
    }
}

int run_ingest(IngestOptions const & o)
{
    auto instances = load_instances(o.instances);
    auto sets = load_candidates_dir(o.candidates);
    auto spans = o.spans.empty() ? SpanMap{} : load_spans(o.spans);
    fmt::print("instances: {}\nprediction sets: {}\n", instances.size(), sets.size());
    for (auto const & s : sets) {
        fmt::print("  {} ({} patches)\n", s.key().to_string(), s.entries.size());
    }

    std::map<std::string, std::vector<std::string>> files;
    for (auto const & s : sets) {
        for (auto const & e : s.entries) {
            auto patches = diff::parse_unified_diff(e.patch_text);
            for (auto const & f : diff::touched_files(patches)) {
                files[e.instance_id].push_back(f);
            }
        }
    }
    for (auto const & [id, list] : spans) {
        for (auto const & span : list) {
            files[id].push_back(span.file_path);
        }
    }
    for (auto & [id, list] : files) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }

    FileBundle bundle;
    if (!o.checkout_root.empty()) {
        bundle = FileBundle::from_checkouts(o.checkout_root, files);
        if (!o.bundle_out.empty()) {
            bundle.save(o.bundle_out);
            fmt::print("bundle: {} files written to {}\n", bundle.size(), o.bundle_out.string());
        }
    } else if (!o.bundle.empty()) {
        bundle = FileBundle::load(o.bundle);
    }

    if (!o.checkout_root.empty() || !o.bundle.empty()) {
        std::size_t applied = 0;
        for (auto const & s : sets) {
            for (auto const & e : s.entries) {
                auto patches = diff::parse_unified_diff(e.patch_text);
                diff::apply_patch(bundle, e.instance_id, patches);
                ++applied;
            }
        }
        for (auto const & [id, list] : files) {
            for (auto const & f : list) {
                if (!bundle.contains(id, f)) {
                    throw ValidationError(fmt::format("bundle lacks {} for {}", f, id));
                }
            }
        }
        fmt::print("patches applied cleanly: {}\n", applied);
    }

    if (!o.reports.empty()) {
        auto reports = load_reports_for(o.candidates, o.reports);
        auto order = resolve_order(sets, o.order);
        std::vector<std::string> ids;
        for (auto const & i : instances) {
            ids.push_back(i.instance_id);
        }
        auto matrix = build_resolution_matrix(sets, reports, order, ids);
        for (std::size_t c = 0; c < matrix.cols(); ++c) {
            fmt::print("  {} resolves {}/{} ({:.1f}%)\n", matrix.candidates()[c].to_string(), matrix.column_count(c),
                       matrix.rows(), 100.0 * matrix.resolve_rate(c));
        }
        if (!o.matrix_out.empty()) {
            matrix.save(o.matrix_out);
            fmt::print("matrix written to {}\n", o.matrix_out.string());
        }
    }
    return ok;
}

int run_score(ScoreOptions const & o)
{
    ScoringJob job;
    job.instances = load_instances(o.instances);
    job.sets = load_candidates_dir(o.candidates);
    job.spans = o.spans.empty() ? SpanMap{} : load_spans(o.spans);
    job.bundle = FileBundle::load(o.bundle);
    job.order = resolve_order(job.sets, o.order);
    job.committee.votes_per_candidate = o.votes;
    job.committee.explanations_enabled = !o.no_explanations;
    job.committee.model_label = o.model;
    job.committee.temperature = o.temperature;
    job.committee.seed = o.seed;
    job.committee.max_parse_retries = o.retries;
    job.context.margin = o.margin;
    job.token_budget = o.budget;

    BackendSpec spec;
    spec.seed = o.seed;
    spec.max_in_flight = o.max_in_flight;
    if (o.backend == "http") {
        spec.kind = BackendSpec::Kind::http_chat;
        if (!o.endpoint.empty()) {
            spec.endpoint = o.endpoint;
        }
        if (!o.api_key_env.empty()) {
            spec.api_key_env = o.api_key_env;
        }
    } else if (!o.mock_scores.empty()) {
        spec.script = MockScript::from_json(io::read_json_file(o.mock_scores));
    }
    auto backend = make_backend(spec);
    ScoringStats stats;
    auto records = score_corpus(job, *backend, o.out, &stats);
    fmt::print("scored {} candidates ({} reused from the ledger, {} backend requests) -> {}\n", records.size(),
               stats.reused_records, stats.backend_requests, o.out.string());
    return ok;
}

int run_rerank(RerankOptions const & o)
{
    auto records = load_ledger(o.ledger);
    std::vector<PredictionSet> sets;
    if (!o.candidates.empty()) {
        sets = load_candidates_dir(o.candidates);
    }
    CandidateOrder order;
    if (!o.order.empty()) {
        order = CandidateOrder::load(o.order);
    } else if (!sets.empty()) {
        order = resolve_order(sets, {});
    } else {
        std::vector<CandidateKey> keys;
        std::set<CandidateKey> seen;
        for (auto const & r : records) {
            if (seen.insert(r.candidate).second) {
                keys.push_back(r.candidate);
            }
        }
        order = CandidateOrder(keys, "ledger order");
    }
    std::optional<std::size_t> prefix;
    if (o.prefix_votes > 0) {
        prefix = o.prefix_votes;
    }
    if (o.n == 0) {
        throw ArgumentError("--n must be at least 1");
    }
    auto result = rerank(records, order, patch_lookup(sets), o.label, prefix);
    emit_predictions(result.selection, o.label, o.out);
    if (!o.rankings_out.empty()) {
        io::write_text_file(o.rankings_out, serialize_rankings(result.rankings, o.n));
    }
    for (auto const & w : result.selection.warnings) {
        fmt::print(stderr, "warning: {}\n", w);
    }
    fmt::print("{} predictions written to {}\n", result.selection.selections.size(), o.out.string());
    return ok;
}

int run_metrics(MetricsOptions const & o)
{
    auto matrix = ResolutionMatrix::load(o.matrix);
    auto order = o.order.empty() ? metrics::column_order(matrix) : CandidateOrder::load(o.order);
    std::vector<ScoreRecord> records;
    if (!o.ledger.empty()) {
        records = load_ledger(o.ledger);
    }
    std::optional<std::size_t> prefix;
    if (o.prefix_votes > 0) {
        prefix = o.prefix_votes;
    }
    auto selector = make_selector(o.selector, o.seed, o.trials, std::move(records), prefix);
    auto max_k = o.max_k == 0 ? matrix.cols() : o.max_k;
    auto series = metrics::metric_series(matrix, order, selector, o.n, max_k);
    if (o.format == "csv") {
        emit(series.to_csv(), o.out);
    } else if (o.format == "table") {
        emit(series.to_table(), o.out);
    } else {
        throw ArgumentError("--format must be csv or table");
    }
    return ok;
}

int run_render(RenderOptions const & o)
{
    auto bundle = FileBundle::load(o.bundle);
    std::string patch_text;
    if (!o.patch.empty()) {
        patch_text = io::read_text_file(o.patch);
    } else if (!o.predictions.empty()) {
        auto set = load_predictions(o.predictions);
        auto const * entry = set.find(o.instance);
        if (!entry) {
            throw ValidationError(fmt::format("{} has no patch for {}", o.predictions.string(), o.instance));
        }
        patch_text = entry->patch_text;
    } else {
        throw ArgumentError("render needs --patch or --predictions");
    }
    auto patches = diff::parse_unified_diff(patch_text);
    for (auto const & view : diff::render_before_after(bundle, o.instance, patches, o.margin)) {
        fmt::print("=== {} (before)\n{}=== {} (after)\n{}\n", view.file_path, view.before, view.file_path, view.after);
    }
    return ok;
}

int run_run(fs::path const & config_path, fs::path const & out_override)
{
    auto config = RunConfig::load(config_path);
    if (!out_override.empty()) {
        config.output_dir = out_override;
    }
    auto result = run_pipeline(config);
    fmt::print("output: {}\nconfig hash: {}\nledger records: {} ({} reused)\nbackend requests: {}\npredictions: {}\n",
               result.output_dir.string(), result.config_hash, result.ledger_records, result.reused_records,
               result.backend_requests, result.predictions);
    if (result.selection_resolved) {
        fmt::print("selected candidates resolve: {}\n", *result.selection_resolved);
    }
    for (auto const & w : result.warnings) {
        fmt::print(stderr, "warning: {}\n", w);
    }
    return ok;
}

template <class Fn>
int guarded(Fn && fn)
{
    try {
        return fn();
    } catch (TransportError const & e) {
        fmt::print(stderr, "transport error: {}\n", e.what());
        return transport_failure;
    } catch (ValidationError const & e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return validation_failure;
    } catch (std::exception const & e) {
        fmt::print(stderr, "internal error: {}\n", e.what());
        return internal_failure;
    }
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Rerank candidate patches from several agents with an explain-then-score committee"};
    app.require_subcommand(1);

    IngestOptions ingest;
    auto * ingest_cmd = app.add_subcommand("ingest", "Validate inputs; optionally build a file bundle and resolution matrix");
    ingest_cmd->add_option("--instances", ingest.instances, "Instances JSONL")->required();
    ingest_cmd->add_option("--candidates", ingest.candidates, "Directory of prediction JSONL files")->required();
    ingest_cmd->add_option("--spans", ingest.spans, "Code spans JSONL");
    ingest_cmd->add_option("--checkout-root", ingest.checkout_root, "Directory holding <instance_id>/ checkouts");
    ingest_cmd->add_option("--bundle-out", ingest.bundle_out, "Write the bundle built from checkouts here");
    ingest_cmd->add_option("--bundle", ingest.bundle, "Existing bundle to check patches against");
    ingest_cmd->add_option("--reports", ingest.reports, "Directory of <prediction stem>.json resolution reports");
    ingest_cmd->add_option("--order", ingest.order, "Candidate order JSON");
    ingest_cmd->add_option("--matrix-out", ingest.matrix_out, "Write the resolution matrix here");

    ScoreOptions score;
    auto * score_cmd = app.add_subcommand("score", "Collect committee votes into a vote ledger");
    score_cmd->add_option("--instances", score.instances, "Instances JSONL")->required();
    score_cmd->add_option("--candidates", score.candidates, "Directory of prediction JSONL files")->required();
    score_cmd->add_option("--spans", score.spans, "Code spans JSONL");
    score_cmd->add_option("--bundle", score.bundle, "File bundle JSONL")->required();
    score_cmd->add_option("--order", score.order, "Candidate order JSON");
    score_cmd->add_option("--votes", score.votes, "Votes per candidate")->capture_default_str();
    score_cmd->add_option("--backend", score.backend, "mock | http")->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
    score_cmd->add_option("--mock-scores", score.mock_scores, "Scripted score table for the mock backend");
    score_cmd->add_option("--endpoint", score.endpoint, "Chat completion URL");
    score_cmd->add_option("--api-key-env", score.api_key_env, "Environment variable holding the credential");
    score_cmd->add_option("--model", score.model, "Model label sent to the backend")->capture_default_str();
    score_cmd->add_option("--temperature", score.temperature)->capture_default_str();
    score_cmd->add_option("--seed", score.seed)->capture_default_str();
    score_cmd->add_option("--retries", score.retries, "Fresh calls after an unparseable reply")->capture_default_str();
    score_cmd->add_option("--budget", score.budget, "Token budget for the scoring context")->capture_default_str();
    score_cmd->add_option("--margin", score.margin, "Unchanged lines shown around each change")->capture_default_str();
    score_cmd->add_option("--max-in-flight", score.max_in_flight)->capture_default_str();
    score_cmd->add_flag("--no-explanations", score.no_explanations, "Ask for a score without explanations");
    score_cmd->add_option("--out", score.out, "Vote ledger JSONL")->capture_default_str();

    RerankOptions rr;
    auto * rerank_cmd = app.add_subcommand("rerank", "Pick the top-scoring candidate per instance from a ledger");
    rerank_cmd->add_option("--ledger", rr.ledger, "Vote ledger JSONL")->required();
    rerank_cmd->add_option("--order", rr.order, "Candidate order JSON (tie-break)");
    rerank_cmd->add_option("--candidates", rr.candidates, "Directory of prediction JSONL files (patch text)");
    rerank_cmd->add_option("--n", rr.n, "Candidates kept per instance in the rankings output")->capture_default_str();
    rerank_cmd->add_option("--label", rr.label, "model_name_or_path of the emitted predictions")->capture_default_str();
    rerank_cmd->add_option("--prefix-votes", rr.prefix_votes, "Rank using only the first m votes");
    rerank_cmd->add_option("--rankings-out", rr.rankings_out, "Write per-instance rankings JSONL");
    rerank_cmd->add_option("--out", rr.out, "Predictions JSONL")->capture_default_str();

    MetricsOptions mo;
    auto * metrics_cmd = app.add_subcommand("metrics", "Union@k / Intersect@k / Average@k / n@k over a resolution matrix");
    metrics_cmd->add_option("--matrix", mo.matrix, "Resolution matrix JSON")->required();
    metrics_cmd->add_option("--order", mo.order, "Candidate order JSON (default: matrix column order)");
    metrics_cmd->add_option("--selector", mo.selector, "oracle | adversarial | random | scores")
        ->check(CLI::IsMember({"oracle", "adversarial", "random", "scores"}))
        ->capture_default_str();
    metrics_cmd->add_option("--ledger", mo.ledger, "Vote ledger for --selector scores");
    metrics_cmd->add_option("--n", mo.n)->capture_default_str();
    metrics_cmd->add_option("--K", mo.max_k, "Largest k (default: every column)");
    metrics_cmd->add_option("--trials", mo.trials, "Monte Carlo trials for the random selector")->capture_default_str();
    metrics_cmd->add_option("--seed", mo.seed)->capture_default_str();
    metrics_cmd->add_option("--prefix-votes", mo.prefix_votes, "Score-based selection from the first m votes");
    metrics_cmd->add_option("--format", mo.format, "csv | table")->capture_default_str();
    metrics_cmd->add_option("--out", mo.out, "Write to a file instead of stdout");

    fs::path report_dir;
    std::string report_format = "table";
    auto * report_cmd = app.add_subcommand("report", "Summarize a finished run directory");
    report_cmd->add_option("--dir", report_dir, "Run output directory")->required();
    report_cmd->add_option("--format", report_format, "csv | table")->capture_default_str();

    fs::path run_config;
    fs::path run_out;
    auto * run_cmd = app.add_subcommand("run", "ingest, score, rerank, metrics and report in one go");
    run_cmd->add_option("--config", run_config, "Run config JSON")->required();
    run_cmd->add_option("--out", run_out, "Override the output directory");

    RenderOptions ro;
    auto * render_cmd = app.add_subcommand("render", "Print the before/after views the committee sees");
    render_cmd->add_option("--bundle", ro.bundle, "File bundle JSONL")->required();
    render_cmd->add_option("--instance", ro.instance, "Instance id")->required();
    render_cmd->add_option("--patch", ro.patch, "Unified diff file");
    render_cmd->add_option("--predictions", ro.predictions, "Prediction JSONL to take the patch from");
    render_cmd->add_option("--margin", ro.margin)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const & e) {
        auto code = app.exit(e);
        return code == 0 ? ok : validation_failure;
    }

    if (*ingest_cmd) {
        return guarded([&] { return run_ingest(ingest); });
    }
    if (*score_cmd) {
        return guarded([&] { return run_score(score); });
    }
    if (*rerank_cmd) {
        return guarded([&] { return run_rerank(rr); });
    }
    if (*metrics_cmd) {
        return guarded([&] { return run_metrics(mo); });
    }
    if (*report_cmd) {
        return guarded([&] {
            auto r = report(report_dir);
            std::cout << (report_format == "csv" ? r.csv : r.table);
            return static_cast<int>(ok);
        });
    }
    if (*run_cmd) {
        return guarded([&] { return run_run(run_config, run_out); });
    }
    if (*render_cmd) {
        return guarded([&] { return run_render(ro); });
    }
    return internal_failure;
}
