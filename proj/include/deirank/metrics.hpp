#pragma once

#include "deirank/candidate.hpp"
#include "deirank/committee.hpp"
#include "deirank/corpus.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace deirank::metrics {

/// Always picks a resolving candidate when one exists.
struct Oracle {};

/// Picks unresolved candidates while any remain.
struct Adversarial {};

/// Samples n distinct candidates uniformly per instance; reported as a Monte Carlo mean.
struct UniformRandom {
    std::uint64_t seed = 0;
    std::size_t trials = 1000;
};

/// Picks the top-n candidates by committee aggregate (ties by order position).
struct ScoreBased {
    std::vector<ScoreRecord> records;
    std::optional<std::size_t> prefix_votes;
};

using Selector = std::variant<Oracle, Adversarial, UniformRandom, ScoreBased>;

std::string selector_name(Selector const & selector);

/// Instances solved by at least one of the first k candidates in `order`.
std::size_t union_at_k(ResolutionMatrix const & matrix, CandidateOrder const & order, std::size_t k);

/// Instances solved by every one of the first k candidates.
std::size_t intersect_at_k(ResolutionMatrix const & matrix, CandidateOrder const & order, std::size_t k);

/// Mean per-candidate resolve count over the first k candidates.
double average_at_k(ResolutionMatrix const & matrix, CandidateOrder const & order, std::size_t k);

/**
 * Instances solved when the selector submits n of the first k candidates. For
 * UniformRandom this is the mean over `trials` seeded draws; every other
 * selector is exact.
 *
 * Throws ArgumentError unless 1 <= n <= k <= columns, and ValidationError when
 * a score-based selector lacks a record for some (instance, candidate) pair.
 */
double n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::size_t k,
    std::size_t n,
    Selector const & selector);

struct MonteCarloEstimate {
    double mean = 0.0;
    /// Standard error of `mean` (sample standard deviation / sqrt(trials)).
    double std_error = 0.0;
};

MonteCarloEstimate random_n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::size_t k,
    std::size_t n,
    UniformRandom const & selector);

/// Closed-form expectation of the uniform-random n@k: sum over instances of 1 - C(k-r, n) / C(k, n).
double expected_random_n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::size_t k,
    std::size_t n);

struct MetricRow {
    std::size_t k = 0;
    double intersect = 0.0;
    double average = 0.0;
    double n_at_k = 0.0;
    double union_ = 0.0;
};

struct MetricSeries {
    std::size_t instances = 0;
    std::size_t n = 1;
    std::string selector;
    std::vector<MetricRow> rows;

    double percent(double count) const;

    /// k, counts and one-decimal percentages, improvement = n@k - Average@k.
    std::string to_csv() const;
    /// Aligned table of percentages.
    std::string to_table() const;
    static MetricSeries from_csv(std::string_view csv);
};

/// Every metric for k = 1..K. Throws ArgumentError when K exceeds the column count.
MetricSeries metric_series(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    Selector const & selector,
    std::size_t n,
    std::size_t max_k);

/**
 * Seeded synthetic resolution matrix. Each cell is resolved with probability
 * `rate`. With probability `overlap` a cell follows its instance's shared
 * outcome instead of an independent one, so overlap = 0 gives independent
 * columns and overlap = 1 identical columns.
 *
 * Columns are {"agentNN", 0}; rows are "synthetic-NNNN".
 */
ResolutionMatrix generate_synthetic_matrix(
    std::size_t instances,
    std::size_t candidates,
    double rate,
    double overlap,
    std::uint64_t seed);

/// Order of the matrix's columns as stored.
CandidateOrder column_order(ResolutionMatrix const & matrix, std::string provenance = "matrix column order");

} // namespace deirank::metrics
