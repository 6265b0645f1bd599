#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deirank {

/// Identifies one candidate column: which agent produced it and which run.
struct CandidateKey {
    std::string agent_id;
    std::size_t run_index = 0;

    auto operator<=>(CandidateKey const &) const = default;
    bool operator==(CandidateKey const &) const = default;

    std::string to_string() const;
};

void to_json(nlohmann::json & j, CandidateKey const & key);
void from_json(nlohmann::json const & j, CandidateKey & key);

/**
 * The sequence in which candidates enter the prefix metrics (first k columns)
 * and the tie-break order used when ranking equal aggregates.
 *
 * Single-agent runs use generation order; multi-agent groups use a fixed
 * shuffled agent list.
 */
class CandidateOrder {
public:
    CandidateOrder() = default;
    /// Throws ValidationError on duplicate keys.
    CandidateOrder(std::vector<CandidateKey> keys, std::string provenance);

    std::vector<CandidateKey> const & keys() const noexcept { return keys_; }
    std::string const & provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return keys_.size(); }

    std::optional<std::size_t> position(CandidateKey const & key) const;

    /// Throws ValidationError unless `columns` is a permutation of this order.
    void require_covers(std::vector<CandidateKey> const & columns) const;

    nlohmann::ordered_json to_json() const;
    static CandidateOrder from_json(nlohmann::json const & j);

    static CandidateOrder load(std::filesystem::path const & path);
    void save(std::filesystem::path const & path) const;

    /// Run indices 0..runs-1 of a single agent, in generation order.
    static CandidateOrder generation_order(std::string const & agent_id, std::size_t runs);

    /// The ten-agent committee order obtained by shuffling the agents'
    /// chronological order with Python's random.shuffle under seed 42.
    static CandidateOrder default_multi_agent_order();

private:
    std::vector<CandidateKey> keys_;
    std::string provenance_;
};

} // namespace deirank
