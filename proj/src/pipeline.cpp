#include "deirank/pipeline.hpp"

#include "deirank/bundle.hpp"
#include "deirank/context.hpp"
#include "deirank/error.hpp"
#include "deirank/io.hpp"
#include "deirank/rerank.hpp"

#include <fmt/format.h>

#include <map>
#include <set>

namespace deirank {
namespace {

std::filesystem::path resolve(std::filesystem::path const & base, nlohmann::json const & j, char const * key)
{
    if (!j.contains(key) || j.at(key).is_null()) {
        return {};
    }
    std::filesystem::path p = j.at(key).get<std::string>();
    if (p.empty() || p.is_absolute() || base.empty()) {
        return p;
    }
    return base / p;
}

using RecordKey = std::pair<std::string, CandidateKey>;

// Records are appended whole, so only the final record can be incomplete
// (interrupted write). Cut it off; anything else incomplete is an error.
void trim_torn_record(std::filesystem::path const & path, std::size_t votes)
{
    auto text = io::read_text_file(path);
    std::size_t record_start = 0;
    std::size_t count = 0;
    std::optional<std::tuple<std::string, std::string, std::size_t>> current;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            break; // unterminated line
        }
        auto line = std::string_view(text).substr(pos, nl - pos);
        std::tuple<std::string, std::string, std::size_t> key;
        try {
            auto j = nlohmann::json::parse(line);
            key = {j.at("instance_id").get<std::string>(), j.at("agent_id").get<std::string>(),
                   j.at("run_index").get<std::size_t>()};
        } catch (nlohmann::json::exception const &) {
            if (nl + 1 < text.size()) {
                throw ValidationError(fmt::format("ledger '{}' is corrupt at byte {}", path.string(), pos));
            }
            break;
        }
        if (current != key) {
            if (current && count != votes) {
                throw ValidationError(fmt::format(
                    "ledger '{}' holds a record with {} votes; expected {}", path.string(), count, votes));
            }
            current = key;
            count = 0;
            record_start = pos;
        }
        ++count;
        pos = nl + 1;
        if (count == votes) {
            record_start = pos;
        }
    }
    if (record_start < text.size()) {
        std::filesystem::resize_file(path, record_start);
    }
}

} // namespace

nlohmann::ordered_json RunConfig::to_json() const
{
    nlohmann::ordered_json j;
    j["paths"] = {
        {"instances", instances.string()},
        {"candidates_dir", candidates_dir.string()},
        {"spans", spans.string()},
        {"bundle", bundle.string()},
        {"reports_dir", reports_dir.string()},
        {"order_file", order_file.string()},
        {"output_dir", output_dir.string()},
    };
    j["seed"] = seed;
    auto committee_json = committee.to_json();
    committee_json.erase("seed");
    j["committee"] = committee_json;
    auto backend_json = backend.to_json();
    backend_json.erase("seed");
    j["backend"] = backend_json;
    j["context"] = {{"token_budget", token_budget}, {"margin", margin}, {"chars_per_token", chars_per_token}};
    j["label"] = label;
    j["metrics"] = {{"max_k", max_k}, {"n", n}, {"selector", selector}, {"trials", trials}};
    return j;
}

RunConfig RunConfig::from_json(nlohmann::json const & j, std::filesystem::path const & base_dir)
{
    RunConfig cfg;
    try {
        auto const & paths = j.at("paths");
        cfg.instances = resolve(base_dir, paths, "instances");
        cfg.candidates_dir = resolve(base_dir, paths, "candidates_dir");
        cfg.spans = resolve(base_dir, paths, "spans");
        cfg.bundle = resolve(base_dir, paths, "bundle");
        cfg.reports_dir = resolve(base_dir, paths, "reports_dir");
        cfg.order_file = resolve(base_dir, paths, "order_file");
        cfg.output_dir = resolve(base_dir, paths, "output_dir");
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("committee")) {
            cfg.committee = CommitteeConfig::from_json(j.at("committee"));
        }
        if (j.contains("backend")) {
            cfg.backend = BackendSpec::from_json(j.at("backend"));
        }
        if (j.contains("context")) {
            auto const & c = j.at("context");
            cfg.token_budget = c.value("token_budget", cfg.token_budget);
            cfg.margin = c.value("margin", cfg.margin);
            cfg.chars_per_token = c.value("chars_per_token", cfg.chars_per_token);
        }
        cfg.label = j.value("label", cfg.label);
        if (j.contains("metrics")) {
            auto const & m = j.at("metrics");
            cfg.max_k = m.value("max_k", cfg.max_k);
            cfg.n = m.value("n", cfg.n);
            cfg.selector = m.value("selector", cfg.selector);
            cfg.trials = m.value("trials", cfg.trials);
        }
    } catch (nlohmann::json::exception const & e) {
        throw FormatError(std::string("bad run config: ") + e.what());
    }
    cfg.committee.seed = cfg.seed;
    cfg.backend.seed = cfg.seed;
    if (cfg.chars_per_token <= 0.0) {
        throw ArgumentError("chars_per_token must be positive");
    }
    return cfg;
}

RunConfig RunConfig::load(std::filesystem::path const & path)
{
    return from_json(io::read_json_file(path), path.parent_path());
}

std::string RunConfig::hash() const
{
    return io::hex64(io::fnv1a64(to_json().dump()));
}

std::vector<ResolvedSet> load_reports_for(
    std::filesystem::path const & candidates_dir,
    std::filesystem::path const & reports_dir)
{
    std::vector<std::filesystem::path> files;
    for (auto const & entry : std::filesystem::directory_iterator(candidates_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<ResolvedSet> reports;
    for (auto const & f : files) {
        auto report = reports_dir / (f.stem().string() + ".json");
        if (!std::filesystem::exists(report)) {
            throw ValidationError("no resolution report '" + report.string() + "' for " + f.filename().string());
        }
        reports.push_back(load_resolution_report(report));
    }
    return reports;
}

CandidateOrder resolve_order(std::span<PredictionSet const> sets, std::filesystem::path const & order_file)
{
    std::vector<CandidateKey> keys;
    for (auto const & s : sets) {
        keys.push_back(s.key());
    }
    if (!order_file.empty()) {
        auto order = CandidateOrder::load(order_file);
        order.require_covers(keys);
        return order;
    }
    std::set<std::string> agents;
    for (auto const & k : keys) {
        agents.insert(k.agent_id);
    }
    if (agents.size() == 1 && !keys.empty()) {
        auto order = CandidateOrder::generation_order(*agents.begin(), keys.size());
        order.require_covers(keys);
        return order;
    }
    auto fixed = CandidateOrder::default_multi_agent_order();
    if (std::set<CandidateKey>(keys.begin(), keys.end())
        == std::set<CandidateKey>(fixed.keys().begin(), fixed.keys().end())) {
        return fixed;
    }
    return CandidateOrder(keys, "candidates directory order");
}

metrics::Selector make_selector(
    std::string const & name,
    std::uint64_t seed,
    std::size_t trials,
    std::vector<ScoreRecord> records,
    std::optional<std::size_t> prefix_votes)
{
    if (name == "oracle") {
        return metrics::Oracle{};
    }
    if (name == "adversarial") {
        return metrics::Adversarial{};
    }
    if (name == "random") {
        return metrics::UniformRandom{seed, trials};
    }
    if (name == "scores") {
        if (records.empty()) {
            throw ArgumentError("the scores selector needs a vote ledger");
        }
        return metrics::ScoreBased{std::move(records), prefix_votes};
    }
    throw ArgumentError("unknown selector '" + name + "'");
}

std::string vote_prefix_series_csv(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::vector<ScoreRecord> const & records,
    std::size_t max_k,
    std::size_t votes)
{
    auto average = metrics::average_at_k(matrix, order, max_k);
    auto pct = [&](double x) { return matrix.rows() == 0 ? 0.0 : 100.0 * x / static_cast<double>(matrix.rows()); };
    std::string out = "m,k,resolved,resolved_pct,average_pct\n";
    for (std::size_t m = 1; m <= votes; ++m) {
        auto solved = metrics::n_at_k(matrix, order, max_k, 1, metrics::ScoreBased{records, m});
        out += fmt::format("{},{},{},{:.1f},{:.1f}\n", m, max_k, solved, pct(solved), pct(average));
    }
    return out;
}

std::vector<ScoreRecord> score_corpus(
    ScoringJob const & job,
    ScoringBackend & backend,
    std::filesystem::path const & ledger_path,
    ScoringStats * stats)
{
    job.committee.validate();
    std::map<CandidateKey, PredictionSet const *> by_key;
    for (auto const & s : job.sets) {
        by_key[s.key()] = &s;
    }
    job.order.require_covers([&] {
        std::vector<CandidateKey> keys;
        for (auto const & s : job.sets) {
            keys.push_back(s.key());
        }
        return keys;
    }());

    std::map<RecordKey, ScoreRecord> previous;
    if (std::filesystem::exists(ledger_path)) {
        trim_torn_record(ledger_path, job.committee.votes_per_candidate);
        auto [label, rubric] = ledger_provenance(ledger_path);
        if (!label.empty() && (label != job.committee.model_label || rubric != job.committee.rubric_version)) {
            throw ValidationError(fmt::format(
                "existing ledger '{}' was written by {} / {}, not {} / {}", ledger_path.string(), label, rubric,
                job.committee.model_label, job.committee.rubric_version));
        }
        for (auto & r : load_ledger(ledger_path)) {
            previous.emplace(RecordKey{r.instance_id, r.candidate}, std::move(r));
        }
    }

    auto const requests_before = backend.request_count();
    std::size_t reused = 0;
    std::vector<ScoreRecord> records;
    VoteLedger ledger(ledger_path);
    for (auto const & inst : job.instances) {
        auto span_it = job.spans.find(inst.instance_id);
        auto const & inst_spans = span_it == job.spans.end() ? std::vector<CodeSpan>{} : span_it->second;
        for (auto const & key : job.order.keys()) {
            if (auto it = previous.find({inst.instance_id, key}); it != previous.end()) {
                records.push_back(std::move(it->second));
                ++reused;
                continue;
            }
            CandidatePatch candidate{inst.instance_id, key.agent_id, key.run_index, {}};
            if (auto const * entry = by_key.at(key)->find(inst.instance_id)) {
                candidate.patch_text = entry->patch_text;
            }
            try {
                auto ctx = assemble_context(inst, candidate, inst_spans, job.bundle, job.token_budget, job.context);
                records.push_back(score_candidate(ctx, candidate, job.committee, backend, &ledger));
            } catch (ValidationError const & e) {
                throw ValidationError(fmt::format("{} {}: {}", inst.instance_id, key.to_string(), e.what()));
            }
        }
    }
    if (stats) {
        stats->reused_records = reused;
        stats->backend_requests = backend.request_count() - requests_before;
    }
    return records;
}

PipelineResult run_pipeline(RunConfig const & config, ScoringBackend * backend_override)
{
    config.committee.validate();
    PipelineResult result;
    result.output_dir = config.output_dir;
    result.config_hash = config.hash();
    std::filesystem::create_directories(config.output_dir);
    auto out = [&](char const * name) { return config.output_dir / name; };

    // ingest
    auto instances = load_instances(config.instances);
    auto sets = load_candidates_dir(config.candidates_dir);
    auto spans = config.spans.empty() ? SpanMap{} : load_spans(config.spans);
    auto bundle = FileBundle::load(config.bundle);
    auto order = resolve_order(sets, config.order_file);

    auto config_json = config.to_json();
    config_json["config_hash"] = result.config_hash;
    io::write_text_file(out("config.json"), config_json.dump(2) + "\n");
    order.save(out("order.json"));

    std::unique_ptr<ScoringBackend> owned;
    ScoringBackend * backend = backend_override;
    if (!backend) {
        auto spec = config.backend;
        spec.seed = config.seed;
        owned = make_backend(spec);
        backend = owned.get();
    }

    ScoringJob job{instances, sets, std::move(spans), std::move(bundle), order, config.committee, {}, config.token_budget};
    job.committee.seed = config.seed;
    job.context.margin = config.margin;
    job.context.estimator.chars_per_token = config.chars_per_token;

    ScoringStats stats;
    auto records = score_corpus(job, *backend, out("ledger.jsonl"), &stats);
    result.ledger_records = records.size();
    result.reused_records = stats.reused_records;
    result.backend_requests = stats.backend_requests;

    // rerank
    auto reranked = rerank(records, order, patch_lookup(sets), config.label);
    io::write_text_file(out("rankings.jsonl"), serialize_rankings(reranked.rankings));
    emit_predictions(reranked.selection, config.label, out("predictions.jsonl"));
    result.predictions = reranked.selection.selections.size();
    result.warnings = reranked.selection.warnings;

    std::vector<std::string> artifacts = {"config.json", "order.json", "ledger.jsonl", "rankings.jsonl", "predictions.jsonl"};

    // metrics
    if (!config.reports_dir.empty()) {
        auto reports = load_reports_for(config.candidates_dir, config.reports_dir);
        std::vector<std::string> ids;
        for (auto const & inst : instances) {
            ids.push_back(inst.instance_id);
        }
        auto matrix = build_resolution_matrix(sets, reports, order, ids);
        matrix.save(out("matrix.json"));

        auto max_k = config.max_k == 0 ? matrix.cols() : std::min(config.max_k, matrix.cols());
        auto selector = make_selector(config.selector, config.seed, config.trials, records);
        auto series = metrics::metric_series(matrix, order, selector, config.n, max_k);
        io::write_text_file(out("metrics.csv"), series.to_csv());
        io::write_text_file(
            out("metrics.txt"), fmt::format("config_hash {}\norder: {}\n\n{}", result.config_hash,
                                            order.provenance(), series.to_table()));
        io::write_text_file(
            out("votes.csv"),
            vote_prefix_series_csv(matrix, order, records, max_k, config.committee.votes_per_candidate));

        std::size_t solved = 0;
        for (auto const & sel : reranked.selection.selections) {
            solved += matrix.resolved(matrix.row_index(sel.instance_id), matrix.column_index(sel.candidate)) ? 1 : 0;
        }
        result.selection_resolved = solved;
        artifacts.insert(artifacts.end(), {"matrix.json", "metrics.csv", "metrics.txt", "votes.csv"});
    }

    nlohmann::ordered_json manifest;
    manifest["config_hash"] = result.config_hash;
    manifest["artifacts"] = artifacts;
    manifest["ledger_records"] = result.ledger_records;
    manifest["predictions"] = result.predictions;
    if (result.selection_resolved) {
        manifest["selection_resolved"] = *result.selection_resolved;
    }
    manifest["warnings"] = result.warnings;
    io::write_text_file(out("manifest.json"), manifest.dump(2) + "\n");

    if (!config.reports_dir.empty()) {
        auto r = report(config.output_dir);
        io::write_text_file(out("report.txt"), r.table);
    }
    return result;
}

Report report(std::filesystem::path const & output_dir)
{
    auto metrics_csv = output_dir / "metrics.csv";
    if (!std::filesystem::exists(metrics_csv)) {
        throw Error(fmt::format(
            "'{}' has no metrics.csv; rerun with resolution reports (--reports) to compute metrics",
            output_dir.string()));
    }
    std::string hash = "unknown";
    if (std::filesystem::exists(output_dir / "manifest.json")) {
        hash = io::read_json_file(output_dir / "manifest.json").value("config_hash", hash);
    }
    auto csv = io::read_text_file(metrics_csv);
    auto series = metrics::MetricSeries::from_csv(csv);
    series.selector = "scores";
    if (std::filesystem::exists(output_dir / "config.json")) {
        auto cfg = io::read_json_file(output_dir / "config.json");
        if (cfg.contains("metrics")) {
            series.n = cfg.at("metrics").value("n", std::size_t{1});
            series.selector = cfg.at("metrics").value("selector", series.selector);
        }
    }

    Report r;
    r.csv = series.to_csv();
    r.table = fmt::format("config_hash {}\ninstances {}\n\n{}", hash, series.instances, series.to_table());
    if (std::filesystem::exists(output_dir / "votes.csv")) {
        r.table += "\nResolve rate by number of votes (1@K, first m votes)\n";
        r.table += fmt::format("{:>3}  {:>8}  {:>7}  {:>9}\n", "m", "resolved", "percent", "Average@K");
        auto lines = io::split_lines(io::read_text_file(output_dir / "votes.csv"));
        for (std::size_t i = 1; i < lines.size(); ++i) {
            std::vector<std::string> cells;
            std::string cell;
            for (char c : lines[i] + ",") {
                if (c == ',') {
                    cells.push_back(cell);
                    cell.clear();
                } else {
                    cell += c;
                }
            }
            if (cells.size() >= 5) {
                r.table += fmt::format("{:>3}  {:>8}  {:>7}  {:>9}\n", cells[0], cells[2], cells[3], cells[4]);
            }
        }
    }
    return r;
}

} // namespace deirank
