#pragma once

#include "deirank/backend.hpp"
#include "deirank/candidate.hpp"
#include "deirank/context.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace deirank {

inline constexpr std::string_view default_rubric_version = "explain-score-v1";

struct CommitteeConfig {
    std::size_t votes_per_candidate = 10;
    /// When false the prompt asks for a score only (explanation ablation).
    bool explanations_enabled = true;
    std::string model_label = "mock";
    double temperature = 0.7;
    std::uint64_t seed = 0;
    std::size_t max_parse_retries = 2;
    std::string rubric_version = std::string(default_rubric_version);

    /// Throws ArgumentError when votes_per_candidate is 0 or temperature negative.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    static CommitteeConfig from_json(nlohmann::json const & j);
};

/// Headers of the five explanations, in the order they must be written.
inline constexpr std::string_view explanation_headers[] = {
    "Issue explanation",
    "Context explanation",
    "Location explanation",
    "Patch explanation",
    "Conflict detection",
};

struct ExplanationSet {
    std::string issue_expl;
    std::string context_expl;
    std::string location_expl;
    std::string patch_expl;
    std::string conflict_expl;

    bool empty() const noexcept;
    bool operator==(ExplanationSet const &) const = default;
};

/// Pulls the five sections out of a response that follows the prompt's headers.
ExplanationSet extract_explanations(std::string_view raw_response);

struct Vote {
    std::size_t vote_index = 0;
    std::string raw_response;
    ExplanationSet explanations;
    /// nullopt marks an abstain.
    std::optional<int> score;
    std::string backend_metadata;
};

struct ScoreRecord {
    std::string instance_id;
    CandidateKey candidate;
    std::vector<Vote> votes;
    /// Mean of non-abstaining scores; 0 when every vote abstained.
    double aggregate = 0.0;

    void recompute_aggregate();
};

double mean_score(std::span<Vote const> votes);

/**
 * Renders the explain-then-score prompt: issue, relevant spans, code before,
 * code after, then the explanation requests (unless disabled), the rubric,
 * and the "Score: <integer 1-10>" output contract.
 */
std::string build_prompt(ScoringContext const & ctx, CommitteeConfig const & cfg);

/**
 * Reads the score from the last line containing "Score:". The text after the
 * final "Score:" on that line must be a bare integer in [1, 10]; anything
 * else (including out-of-range values) is a failure, never clamped.
 */
std::optional<int> parse_score(std::string_view raw_response);

/// Mean of the first `m` votes' valid scores; 0 when none are valid.
/// Throws ArgumentError unless 1 <= m <= record.votes.size().
double aggregate_prefix(ScoreRecord const & record, std::size_t m);

/**
 * Append-only JSONL log of every vote. One line per vote:
 * {"instance_id","agent_id","run_index","vote_index","raw_response","score","model_label","rubric_version"}.
 * Whole records are appended atomically.
 */
class VoteLedger {
public:
    /// Opens for append; `truncate` starts a fresh file.
    explicit VoteLedger(std::filesystem::path path, bool truncate = false);

    void append(ScoreRecord const & record, CommitteeConfig const & cfg);
    std::filesystem::path const & path() const noexcept { return path_; }

    static std::string serialize(ScoreRecord const & record, CommitteeConfig const & cfg);

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
};

struct LedgerLoadOptions {
    /// Skip an unterminated final line (a record torn by an interrupted write).
    bool tolerate_torn_tail = false;
};

/// Groups ledger lines into records in first-appearance order and recomputes aggregates.
std::vector<ScoreRecord> load_ledger(std::filesystem::path const & path, LedgerLoadOptions options = {});

/// Model label and rubric version stamped on a ledger's lines (from the first line).
std::pair<std::string, std::string> ledger_provenance(std::filesystem::path const & path);

/**
 * Collects `cfg.votes_per_candidate` votes for one candidate. Each vote retries
 * up to `cfg.max_parse_retries` times on an unparseable reply, then abstains.
 * Votes run concurrently up to the backend's in-flight bound. The record is
 * appended to `ledger` (when given) before its aggregate is computed.
 *
 * Candidates with an empty patch make no backend calls: every vote abstains
 * and the aggregate is 0.
 */
ScoreRecord score_candidate(
    ScoringContext const & ctx,
    CandidatePatch const & candidate,
    CommitteeConfig const & cfg,
    ScoringBackend & backend,
    VoteLedger * ledger = nullptr);

} // namespace deirank
