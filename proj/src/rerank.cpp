#include "deirank/rerank.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <set>

namespace deirank {

RankingResult rank_candidates(
    std::span<ScoreRecord const> records,
    CandidateOrder const & order,
    std::optional<std::size_t> prefix_votes)
{
    RankingResult result;
    if (records.empty()) {
        return result;
    }
    result.instance_id = records.front().instance_id;

    struct Entry {
        CandidateKey key;
        double aggregate;
        std::size_t position;
    };
    std::vector<Entry> entries;
    std::set<CandidateKey> seen;
    for (auto const & r : records) {
        if (r.instance_id != result.instance_id) {
            throw ValidationError(fmt::format(
                "cannot rank records of {} and {} together", result.instance_id, r.instance_id));
        }
        if (!seen.insert(r.candidate).second) {
            throw ValidationError(fmt::format(
                "duplicate candidate {} for {}", r.candidate.to_string(), r.instance_id));
        }
        auto pos = order.position(r.candidate);
        if (!pos) {
            throw ValidationError(fmt::format(
                "candidate {} of {} is not in the candidate order", r.candidate.to_string(), r.instance_id));
        }
        auto agg = prefix_votes ? aggregate_prefix(r, *prefix_votes) : r.aggregate;
        entries.push_back({r.candidate, agg, *pos});
    }
    std::sort(entries.begin(), entries.end(), [](Entry const & a, Entry const & b) {
        if (a.aggregate != b.aggregate) {
            return a.aggregate > b.aggregate;
        }
        return a.position < b.position;
    });
    for (auto & e : entries) {
        result.ranked.push_back(std::move(e.key));
        result.aggregates.push_back(e.aggregate);
    }
    return result;
}

std::vector<CandidateKey> select_top_n(RankingResult const & result, std::size_t n)
{
    if (n == 0) {
        throw ArgumentError("n must be at least 1");
    }
    auto count = std::min(n, result.ranked.size());
    return {result.ranked.begin(), result.ranked.begin() + static_cast<std::ptrdiff_t>(count)};
}

void emit_predictions(SelectionOutput const & selections, std::string const & label, std::filesystem::path const & path)
{
    std::vector<Selection const *> sorted;
    for (auto const & s : selections.selections) {
        sorted.push_back(&s);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](auto const * a, auto const * b) { return a->instance_id < b->instance_id; });
    std::string out;
    for (auto const * s : sorted) {
        nlohmann::ordered_json j;
        j["instance_id"] = s->instance_id;
        j["model_name_or_path"] = label;
        j["model_patch"] = s->patch_text;
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    io::write_text_file(path, out);
}

PatchLookup patch_lookup(std::span<PredictionSet const> sets)
{
    PatchLookup out;
    for (auto const & set : sets) {
        for (auto const & e : set.entries) {
            out[{e.instance_id, e.key()}] = e.patch_text;
        }
    }
    return out;
}

std::map<std::string, std::vector<ScoreRecord>> group_by_instance(std::span<ScoreRecord const> records)
{
    std::map<std::string, std::vector<ScoreRecord>> out;
    for (auto const & r : records) {
        out[r.instance_id].push_back(r);
    }
    return out;
}

RerankResult rerank(
    std::span<ScoreRecord const> records,
    CandidateOrder const & order,
    PatchLookup const & patches,
    std::string const & label,
    std::optional<std::size_t> prefix_votes)
{
    RerankResult result;
    result.selection.label = label;
    for (auto const & [instance_id, group] : group_by_instance(records)) {
        auto ranking = rank_candidates(group, order, prefix_votes);
        if (ranking.ranked.empty()) {
            continue;
        }
        Selection sel;
        sel.instance_id = instance_id;
        sel.candidate = ranking.ranked.front();
        sel.aggregate = ranking.aggregates.front();
        if (auto it = patches.find({instance_id, sel.candidate}); it != patches.end()) {
            sel.patch_text = it->second;
        }
        if (sel.aggregate == 0.0) {
            result.selection.warnings.push_back(fmt::format(
                "{}: no candidate received a valid score; chose order-first {}", instance_id,
                sel.candidate.to_string()));
        }
        result.selection.selections.push_back(std::move(sel));
        result.rankings.push_back(std::move(ranking));
    }
    return result;
}

std::string serialize_rankings(std::span<RankingResult const> rankings, std::optional<std::size_t> n)
{
    std::string out;
    for (auto const & r : rankings) {
        nlohmann::ordered_json j;
        j["instance_id"] = r.instance_id;
        j["ranked"] = nlohmann::ordered_json::array();
        auto count = n ? std::min(*n, r.ranked.size()) : r.ranked.size();
        for (std::size_t i = 0; i < count; ++i) {
            j["ranked"].push_back({
                {"agent_id", r.ranked[i].agent_id},
                {"run_index", r.ranked[i].run_index},
                {"aggregate", r.aggregates[i]},
            });
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace deirank
