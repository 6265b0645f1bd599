#pragma once

#include "deirank/backend.hpp"
#include "deirank/bundle.hpp"
#include "deirank/committee.hpp"
#include "deirank/context.hpp"
#include "deirank/corpus.hpp"
#include "deirank/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deirank {

/// Everything a `run` needs. Serialized into the output directory next to the results.
struct RunConfig {
    std::filesystem::path instances;
    std::filesystem::path candidates_dir;
    std::filesystem::path spans;        ///< optional
    std::filesystem::path bundle;
    std::filesystem::path reports_dir;  ///< optional; enables metrics
    std::filesystem::path order_file;   ///< optional
    std::filesystem::path output_dir;

    /// Single source of randomness: committee sampling, mock scores, random selector.
    std::uint64_t seed = 0;
    CommitteeConfig committee;
    BackendSpec backend;

    std::size_t token_budget = 32000;
    std::size_t margin = 10;
    double chars_per_token = 4.0;
    std::string label = "DeiBase";

    std::size_t max_k = 0; ///< 0: every candidate
    std::size_t n = 1;
    std::string selector = "scores";
    std::size_t trials = 1000;

    nlohmann::ordered_json to_json() const;
    /// Relative paths resolve against `base_dir`.
    static RunConfig from_json(nlohmann::json const & j, std::filesystem::path const & base_dir = {});
    static RunConfig load(std::filesystem::path const & path);

    /// FNV-1a of the canonical JSON, hex.
    std::string hash() const;
};

/// Reports for each prediction file, matched by file stem: `<dir>/<stem>.json`.
std::vector<ResolvedSet> load_reports_for(
    std::filesystem::path const & candidates_dir,
    std::filesystem::path const & reports_dir);

/**
 * Order from `order_file` when given; otherwise generation order for a single
 * agent, the default ten-agent order when the agents match it, and
 * candidates-directory order for anything else.
 */
CandidateOrder resolve_order(std::span<PredictionSet const> sets, std::filesystem::path const & order_file);

/// Builds a metrics selector by name: oracle | adversarial | random | scores.
metrics::Selector make_selector(
    std::string const & name,
    std::uint64_t seed,
    std::size_t trials,
    std::vector<ScoreRecord> records = {},
    std::optional<std::size_t> prefix_votes = std::nullopt);

/// Resolve count of score-based 1@K for every vote prefix m = 1..votes.
std::string vote_prefix_series_csv(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::vector<ScoreRecord> const & records,
    std::size_t max_k,
    std::size_t votes);

struct ScoringJob {
    std::vector<Instance> instances;
    std::vector<PredictionSet> sets;
    SpanMap spans;
    FileBundle bundle;
    CandidateOrder order;
    CommitteeConfig committee;
    ContextOptions context;
    std::size_t token_budget = 32000;
};

struct ScoringStats {
    std::size_t reused_records = 0;
    std::size_t backend_requests = 0;
};

/**
 * Scores every (instance, candidate) pair in instance-file order, candidates
 * in `order`. A candidate without an entry for an instance is scored as an
 * empty patch. Complete records already in `ledger_path` are carried over
 * instead of rescored; the ledger is rewritten in canonical order.
 */
std::vector<ScoreRecord> score_corpus(
    ScoringJob const & job,
    ScoringBackend & backend,
    std::filesystem::path const & ledger_path,
    ScoringStats * stats = nullptr);

struct PipelineResult {
    std::filesystem::path output_dir;
    std::string config_hash;
    std::size_t ledger_records = 0;
    std::size_t reused_records = 0;
    std::size_t backend_requests = 0;
    std::size_t predictions = 0;
    std::vector<std::string> warnings;
    /// Instances resolved by the selected candidates (when reports are given).
    std::optional<std::size_t> selection_resolved;
};

/**
 * ingest -> assemble -> score -> rerank -> metrics -> report.
 *
 * Writes config.json, order.json, ledger.jsonl, rankings.jsonl,
 * predictions.jsonl, manifest.json and, with reports, matrix.json,
 * metrics.csv, metrics.txt, votes.csv and report.txt. An existing ledger in
 * the output directory is reused: complete records are not rescored.
 */
PipelineResult run_pipeline(RunConfig const & config, ScoringBackend * backend_override = nullptr);

struct Report {
    std::string table;
    std::string csv;
};

/// Summary of a finished run directory. Throws Error when metrics are missing.
Report report(std::filesystem::path const & output_dir);

} // namespace deirank
