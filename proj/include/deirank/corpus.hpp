#pragma once

#include "deirank/candidate.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deirank {

/// One issue-resolution task.
struct Instance {
    std::string instance_id;
    std::string issue_text;
    std::string repo_label;
    /// Key under which the instance's files live in a FileBundle (defaults to instance_id).
    std::string bundle_ref;
};

/// One agent's proposed fix for one instance. An empty patch means "no change proposed".
struct CandidatePatch {
    std::string instance_id;
    std::string agent_id;
    std::size_t run_index = 0;
    std::string patch_text;

    CandidateKey key() const { return {agent_id, run_index}; }
};

/// One submission file: a single agent run's patches, at most one per instance.
struct PredictionSet {
    std::string agent_id;
    std::size_t run_index = 0;
    std::vector<CandidatePatch> entries;

    CandidateKey key() const { return {agent_id, run_index}; }
    CandidatePatch const * find(std::string const & instance_id) const;
};

using ResolvedSet = std::set<std::string>;

/**
 * Reads a JSONL prediction file with keys instance_id, model_name_or_path,
 * model_patch. Every non-empty patch must parse as a unified diff.
 *
 * An empty file yields an empty set whose agent_id is the file stem.
 */
PredictionSet load_predictions(std::filesystem::path const & path, std::size_t run_index = 0);

/// Reads {"resolved": [...]}; duplicates collapse.
ResolvedSet load_resolution_report(std::filesystem::path const & path);

/**
 * Instance records, JSONL of {"instance_id", "problem_statement" | "issue_text",
 * "repo"?, "version"?}.
 */
std::vector<Instance> load_instances(std::filesystem::path const & path);

/**
 * Loads every *.jsonl file in `dir` in file-name order. Repeated agent ids
 * get run indices 0, 1, ... in that order (generation order).
 */
std::vector<PredictionSet> load_candidates_dir(std::filesystem::path const & dir);

/// Instances x candidates grid of ground-truth outcomes; columns follow a CandidateOrder.
class ResolutionMatrix {
public:
    ResolutionMatrix() = default;
    /// Throws ValidationError when the grid does not match the two lists.
    ResolutionMatrix(
        std::vector<std::string> instance_ids,
        std::vector<CandidateKey> candidates,
        std::vector<std::vector<bool>> resolved);

    std::vector<std::string> const & instance_ids() const noexcept { return instance_ids_; }
    std::vector<CandidateKey> const & candidates() const noexcept { return candidates_; }
    std::size_t rows() const noexcept { return instance_ids_.size(); }
    std::size_t cols() const noexcept { return candidates_.size(); }

    bool resolved(std::size_t row, std::size_t col) const { return resolved_[row][col]; }
    std::vector<std::vector<bool>> const & grid() const noexcept { return resolved_; }

    std::size_t column_index(CandidateKey const & key) const;
    std::size_t row_index(std::string const & instance_id) const;
    std::size_t column_count(std::size_t col) const;
    double resolve_rate(std::size_t col) const;
    ResolvedSet resolved_set(std::size_t col) const;

    nlohmann::ordered_json to_json() const;
    static ResolutionMatrix from_json(nlohmann::json const & j);
    static ResolutionMatrix load(std::filesystem::path const & path);
    void save(std::filesystem::path const & path) const;

private:
    std::vector<std::string> instance_ids_;
    std::vector<CandidateKey> candidates_;
    std::vector<std::vector<bool>> resolved_;
};

/**
 * Cell (i, j) is true iff candidate j submitted a patch for instance i and its
 * report lists instance i. `reports[j]` belongs to `predictions[j]`. Columns
 * come out in `order`.
 *
 * Without explicit instance ids the rows are the sorted union of all
 * predicted instances.
 */
ResolutionMatrix build_resolution_matrix(
    std::span<PredictionSet const> predictions,
    std::span<ResolvedSet const> reports,
    CandidateOrder const & order,
    std::vector<std::string> instance_ids = {});

} // namespace deirank
