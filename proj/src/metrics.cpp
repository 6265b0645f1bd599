#include "deirank/metrics.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"
#include "deirank/rerank.hpp"
#include "deirank/rng.hpp"

#include <fmt/format.h>

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace deirank::metrics {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Matrix column index of each order position.
std::vector<std::size_t> ordered_columns(ResolutionMatrix const & matrix, CandidateOrder const & order)
{
    order.require_covers(matrix.candidates());
    std::vector<std::size_t> cols;
    cols.reserve(order.size());
    for (auto const & key : order.keys()) {
        cols.push_back(matrix.column_index(key));
    }
    return cols;
}

void check_k(ResolutionMatrix const & matrix, std::size_t k)
{
    if (k < 1 || k > matrix.cols()) {
        throw ArgumentError(fmt::format("k = {} outside 1..{}", k, matrix.cols()));
    }
}

std::size_t resolved_in_prefix(ResolutionMatrix const & matrix, std::vector<std::size_t> const & cols, std::size_t row, std::size_t k)
{
    std::size_t r = 0;
    for (std::size_t j = 0; j < k; ++j) {
        r += matrix.resolved(row, cols[j]) ? 1 : 0;
    }
    return r;
}

double choose(std::size_t n, std::size_t r)
{
    if (r > n) {
        return 0.0;
    }
    double out = 1.0;
    for (std::size_t i = 1; i <= r; ++i) {
        out = out * static_cast<double>(n - r + i) / static_cast<double>(i);
    }
    return out;
}

double score_based_n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::vector<std::size_t> const & cols,
    std::size_t k,
    std::size_t n,
    ScoreBased const & sel)
{
    std::map<std::pair<std::string, CandidateKey>, ScoreRecord const *> index;
    for (auto const & r : sel.records) {
        index[{r.instance_id, r.candidate}] = &r;
    }
    CandidateOrder prefix_order(
        std::vector<CandidateKey>(order.keys().begin(), order.keys().begin() + static_cast<std::ptrdiff_t>(k)),
        order.provenance());

    std::size_t solved = 0;
    for (std::size_t row = 0; row < matrix.rows(); ++row) {
        auto const & id = matrix.instance_ids()[row];
        std::vector<ScoreRecord> group;
        for (std::size_t j = 0; j < k; ++j) {
            auto it = index.find({id, order.keys()[j]});
            if (it == index.end()) {
                throw ValidationError(fmt::format(
                    "vote ledger has no record for {} {}", id, order.keys()[j].to_string()));
            }
            group.push_back(*it->second);
        }
        auto ranking = rank_candidates(group, prefix_order, sel.prefix_votes);
        for (auto const & key : select_top_n(ranking, n)) {
            if (matrix.resolved(row, cols[*order.position(key)])) {
                ++solved;
                break;
            }
        }
    }
    return static_cast<double>(solved);
}

std::string fmt_count(double v)
{
    return fmt::format("{}", v);
}

std::string fmt_signed_pct(double v)
{
    auto rounded = std::round(v * 10.0) / 10.0;
    if (rounded == 0.0) {
        rounded = 0.0; // no "-0.0"
    }
    return fmt::format("{:+.1f}", rounded);
}

} // namespace

std::string selector_name(Selector const & selector)
{
    return std::visit(overloaded{
                          [](Oracle const &) { return std::string("oracle"); },
                          [](Adversarial const &) { return std::string("adversarial"); },
                          [](UniformRandom const &) { return std::string("random"); },
                          [](ScoreBased const &) { return std::string("scores"); },
                      },
                      selector);
}

std::size_t union_at_k(ResolutionMatrix const & matrix, CandidateOrder const & order, std::size_t k)
{
    check_k(matrix, k);
    auto cols = ordered_columns(matrix, order);
    std::size_t count = 0;
    for (std::size_t row = 0; row < matrix.rows(); ++row) {
        count += resolved_in_prefix(matrix, cols, row, k) > 0 ? 1 : 0;
    }
    return count;
}

std::size_t intersect_at_k(ResolutionMatrix const & matrix, CandidateOrder const & order, std::size_t k)
{
    check_k(matrix, k);
    auto cols = ordered_columns(matrix, order);
    std::size_t count = 0;
    for (std::size_t row = 0; row < matrix.rows(); ++row) {
        count += resolved_in_prefix(matrix, cols, row, k) == k ? 1 : 0;
    }
    return count;
}

double average_at_k(ResolutionMatrix const & matrix, CandidateOrder const & order, std::size_t k)
{
    check_k(matrix, k);
    auto cols = ordered_columns(matrix, order);
    std::size_t total = 0;
    for (std::size_t j = 0; j < k; ++j) {
        total += matrix.column_count(cols[j]);
    }
    return static_cast<double>(total) / static_cast<double>(k);
}

MonteCarloEstimate random_n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::size_t k,
    std::size_t n,
    UniformRandom const & selector)
{
    check_k(matrix, k);
    if (n < 1 || n > k) {
        throw ArgumentError(fmt::format("n = {} outside 1..{}", n, k));
    }
    if (selector.trials == 0) {
        throw ArgumentError("random selector needs at least one trial");
    }
    auto cols = ordered_columns(matrix, order);
    std::vector<std::size_t> pool(k);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t t = 0; t < selector.trials; ++t) {
        std::mt19937_64 gen(rng::mix(rng::mix(selector.seed, (k << 20) ^ n), t));
        std::size_t solved = 0;
        for (std::size_t row = 0; row < matrix.rows(); ++row) {
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            bool hit = false;
            // Partial Fisher-Yates: the first n slots become a uniform n-subset.
            for (std::size_t i = 0; i < n; ++i) {
                auto j = i + rng::below(gen, k - i);
                std::swap(pool[i], pool[j]);
                hit = hit || matrix.resolved(row, cols[pool[i]]);
            }
            solved += hit ? 1 : 0;
        }
        auto x = static_cast<double>(solved);
        sum += x;
        sum_sq += x * x;
    }
    auto trials = static_cast<double>(selector.trials);
    MonteCarloEstimate est;
    est.mean = sum / trials;
    if (selector.trials > 1) {
        auto var = std::max(0.0, (sum_sq - trials * est.mean * est.mean) / (trials - 1.0));
        est.std_error = std::sqrt(var / trials);
    }
    return est;
}

double expected_random_n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::size_t k,
    std::size_t n)
{
    check_k(matrix, k);
    if (n < 1 || n > k) {
        throw ArgumentError(fmt::format("n = {} outside 1..{}", n, k));
    }
    auto cols = ordered_columns(matrix, order);
    auto all = choose(k, n);
    double total = 0.0;
    for (std::size_t row = 0; row < matrix.rows(); ++row) {
        auto r = resolved_in_prefix(matrix, cols, row, k);
        total += 1.0 - choose(k - r, n) / all;
    }
    return total;
}

double n_at_k(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    std::size_t k,
    std::size_t n,
    Selector const & selector)
{
    check_k(matrix, k);
    if (n < 1 || n > k) {
        throw ArgumentError(fmt::format("n = {} outside 1..{}", n, k));
    }
    auto cols = ordered_columns(matrix, order);
    return std::visit(
        overloaded{
            [&](Oracle const &) {
                std::size_t solved = 0;
                for (std::size_t row = 0; row < matrix.rows(); ++row) {
                    solved += resolved_in_prefix(matrix, cols, row, k) > 0 ? 1 : 0;
                }
                return static_cast<double>(solved);
            },
            [&](Adversarial const &) {
                // n picks all land on unresolved candidates unless fewer than n exist.
                std::size_t solved = 0;
                for (std::size_t row = 0; row < matrix.rows(); ++row) {
                    auto unresolved = k - resolved_in_prefix(matrix, cols, row, k);
                    solved += unresolved < n ? 1 : 0;
                }
                return static_cast<double>(solved);
            },
            [&](UniformRandom const & sel) { return random_n_at_k(matrix, order, k, n, sel).mean; },
            [&](ScoreBased const & sel) { return score_based_n_at_k(matrix, order, cols, k, n, sel); },
        },
        selector);
}

double MetricSeries::percent(double count) const
{
    return instances == 0 ? 0.0 : 100.0 * count / static_cast<double>(instances);
}

std::string MetricSeries::to_csv() const
{
    std::string out = "instances,k,intersect,intersect_pct,average,average_pct,n_at_k,n_at_k_pct,improvement_pct,union,union_pct\n";
    for (auto const & r : rows) {
        out += fmt::format(
            "{},{},{},{:.1f},{},{:.1f},{},{:.1f},{},{},{:.1f}\n", instances, r.k, fmt_count(r.intersect),
            percent(r.intersect), fmt_count(r.average), percent(r.average), fmt_count(r.n_at_k), percent(r.n_at_k),
            fmt_signed_pct(percent(r.n_at_k) - percent(r.average)), fmt_count(r.union_), percent(r.union_));
    }
    return out;
}

std::string MetricSeries::to_table() const
{
    auto n_label = fmt::format("{}@k ({})", n, selector);
    auto width = std::max<std::size_t>(n_label.size(), 11);
    std::string out = fmt::format(
        "{:>3}  {:>11}  {:>9}  {:>{}}  {:>11}  {:>7}\n", "k", "Intersect@k", "Average@k", n_label, width,
        "Improvement", "Union@k");
    for (auto const & r : rows) {
        out += fmt::format(
            "{:>3}  {:>11.1f}  {:>9.1f}  {:>{}.1f}  {:>11}  {:>7.1f}\n", r.k, percent(r.intersect),
            percent(r.average), percent(r.n_at_k), width, fmt_signed_pct(percent(r.n_at_k) - percent(r.average)),
            percent(r.union_));
    }
    return out;
}

MetricSeries MetricSeries::from_csv(std::string_view csv)
{
    MetricSeries s;
    auto lines = io::split_lines(csv);
    if (lines.empty() || !lines[0].starts_with("instances,k,")) {
        throw FormatError("metrics CSV is missing its header");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (io::trim(lines[i]).empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(lines[i]);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != 11) {
            throw FormatError(fmt::format("metrics CSV line {} has {} fields", i + 1, cells.size()));
        }
        try {
            s.instances = std::stoul(cells[0]);
            MetricRow r;
            r.k = std::stoul(cells[1]);
            r.intersect = std::stod(cells[2]);
            r.average = std::stod(cells[4]);
            r.n_at_k = std::stod(cells[6]);
            r.union_ = std::stod(cells[9]);
            s.rows.push_back(r);
        } catch (std::exception const &) {
            throw FormatError(fmt::format("metrics CSV line {} is not numeric", i + 1));
        }
    }
    return s;
}

MetricSeries metric_series(
    ResolutionMatrix const & matrix,
    CandidateOrder const & order,
    Selector const & selector,
    std::size_t n,
    std::size_t max_k)
{
    if (max_k < 1 || max_k > matrix.cols()) {
        throw ArgumentError(fmt::format("K = {} outside 1..{}", max_k, matrix.cols()));
    }
    MetricSeries s;
    s.instances = matrix.rows();
    s.n = n;
    s.selector = selector_name(selector);
    for (std::size_t k = 1; k <= max_k; ++k) {
        MetricRow r;
        r.k = k;
        r.intersect = static_cast<double>(intersect_at_k(matrix, order, k));
        r.average = average_at_k(matrix, order, k);
        // n larger than the prefix submits every candidate.
        r.n_at_k = n_at_k(matrix, order, k, std::min(n, k), selector);
        r.union_ = static_cast<double>(union_at_k(matrix, order, k));
        s.rows.push_back(r);
    }
    return s;
}

ResolutionMatrix generate_synthetic_matrix(
    std::size_t instances,
    std::size_t candidates,
    double rate,
    double overlap,
    std::uint64_t seed)
{
    if (!(rate >= 0.0 && rate <= 1.0)) {
        throw ArgumentError("rate must lie in [0, 1]");
    }
    if (!(overlap >= 0.0 && overlap <= 1.0)) {
        throw ArgumentError("overlap must lie in [0, 1]");
    }
    if (candidates == 0) {
        throw ArgumentError("need at least one candidate");
    }
    std::mt19937_64 gen(rng::splitmix64(seed));
    std::vector<std::string> ids;
    std::vector<std::vector<bool>> grid(instances, std::vector<bool>(candidates));
    for (std::size_t i = 0; i < instances; ++i) {
        ids.push_back(fmt::format("synthetic-{:04}", i));
        bool shared = rng::unit(gen) < rate;
        for (std::size_t j = 0; j < candidates; ++j) {
            bool follow = rng::unit(gen) < overlap;
            bool own = rng::unit(gen) < rate;
            grid[i][j] = follow ? shared : own;
        }
    }
    std::vector<CandidateKey> keys;
    for (std::size_t j = 0; j < candidates; ++j) {
        keys.push_back({fmt::format("agent{:02}", j), 0});
    }
    return ResolutionMatrix(std::move(ids), std::move(keys), std::move(grid));
}

CandidateOrder column_order(ResolutionMatrix const & matrix, std::string provenance)
{
    return CandidateOrder(matrix.candidates(), std::move(provenance));
}

} // namespace deirank::metrics
