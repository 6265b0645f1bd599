#pragma once

#include "deirank/candidate.hpp"
#include "deirank/committee.hpp"
#include "deirank/corpus.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace deirank {

/// Candidates of one instance by descending aggregate; ties go to the earlier order position.
struct RankingResult {
    std::string instance_id;
    std::vector<CandidateKey> ranked;
    std::vector<double> aggregates;
};

/**
 * Ranks one instance's records. With `prefix_votes`, each aggregate is
 * recomputed from only the first m votes.
 *
 * Throws ValidationError when records mix instances, repeat a candidate, or
 * name a candidate missing from `order`.
 */
RankingResult rank_candidates(
    std::span<ScoreRecord const> records,
    CandidateOrder const & order,
    std::optional<std::size_t> prefix_votes = std::nullopt);

/// First min(n, size) ranked candidates.
std::vector<CandidateKey> select_top_n(RankingResult const & result, std::size_t n);

struct Selection {
    std::string instance_id;
    CandidateKey candidate;
    std::string patch_text;
    double aggregate = 0.0;
};

struct SelectionOutput {
    std::vector<Selection> selections;
    std::string label;
    /// Instances where no candidate received a valid score.
    std::vector<std::string> warnings;
};

/// Writes one prediction line per instance, sorted by instance_id.
void emit_predictions(SelectionOutput const & selections, std::string const & label, std::filesystem::path const & path);

using PatchLookup = std::map<std::pair<std::string, CandidateKey>, std::string>;

PatchLookup patch_lookup(std::span<PredictionSet const> sets);

struct RerankResult {
    std::vector<RankingResult> rankings;
    SelectionOutput selection;
};

/**
 * Ranks every instance found in `records` and picks each instance's head.
 * Candidates missing from `patches` are emitted with an empty patch.
 */
RerankResult rerank(
    std::span<ScoreRecord const> records,
    CandidateOrder const & order,
    PatchLookup const & patches,
    std::string const & label,
    std::optional<std::size_t> prefix_votes = std::nullopt);

/// JSONL of {"instance_id", "ranked": [{"agent_id", "run_index", "aggregate"}]}; top `n` only when given.
std::string serialize_rankings(std::span<RankingResult const> rankings, std::optional<std::size_t> n = std::nullopt);

std::map<std::string, std::vector<ScoreRecord>> group_by_instance(std::span<ScoreRecord const> records);

} // namespace deirank
