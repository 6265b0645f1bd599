// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "deirank/committee.hpp"
#include "deirank/context.hpp"
#include "deirank/diffkit.hpp"
#include "deirank/io.hpp"
#include "deirank/metrics.hpp"
#include "deirank/pipeline.hpp"

#include "diff_oracle.hpp"
#include "score_oracle.hpp"
#include "support.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <random>

using namespace deirank;
using namespace deirank::metrics;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
    void fail(std::string const & why)
    {
        if (ok) {
            detail = why;
        }
        ok = false;
    }
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<ResolutionMatrix> identity_matrices()
{
    std::mt19937_64 gen(20240601);
    std::vector<ResolutionMatrix> out;
    for (int i = 0; i < 200; ++i) {
        out.push_back(testsupport::random_matrix(gen, 30, 10));
    }
    return out;
}

Outcome metric_identities()
{
    Outcome o;
    auto t0 = Clock::now();
    std::size_t checks = 0;
    for (auto const & m : identity_matrices()) {
        auto order = column_order(m);
        std::size_t prev_union = 0;
        std::size_t prev_inter = m.rows();
        for (std::size_t k = 1; k <= m.cols(); ++k) {
            auto u = union_at_k(m, order, k);
            auto in = intersect_at_k(m, order, k);
            auto avg = average_at_k(m, order, k);
            for (std::size_t n = 1; n <= k; ++n) {
                ++checks;
                if (n_at_k(m, order, k, n, Oracle{}) != static_cast<double>(u)) {
                    o.fail(fmt::format("oracle {}@{} != Union@{}", n, k, k));
                }
            }
            if (n_at_k(m, order, k, 1, Adversarial{}) != static_cast<double>(in)) {
                o.fail(fmt::format("adversarial 1@{} != Intersect@{}", k, k));
            }
            if (!(static_cast<double>(in) <= avg + 1e-12 && avg <= static_cast<double>(u) + 1e-12)) {
                o.fail(fmt::format("Intersect <= Average <= Union broken at k={}", k));
            }
            if (u < prev_union || in > prev_inter) {
                o.fail(fmt::format("monotonicity broken at k={}", k));
            }
            prev_union = u;
            prev_inter = in;
        }
    }
    auto secs = seconds_since(t0);
    if (secs >= 5.0) {
        o.fail(fmt::format("took {:.2f} s", secs));
    }
    if (o.ok) {
        o.detail = fmt::format("200 matrices, {} oracle checks, {:.2f} s", checks, secs);
    }
    return o;
}

Outcome k1_degeneracy()
{
    Outcome o;
    std::mt19937_64 gen(7);
    std::size_t matrices = 0;
    for (auto const & m : identity_matrices()) {
        ++matrices;
        auto order = column_order(m);
        auto in = static_cast<double>(intersect_at_k(m, order, 1));
        auto avg = average_at_k(m, order, 1);
        auto un = static_cast<double>(union_at_k(m, order, 1));

        std::vector<ScoreRecord> records;
        std::uniform_int_distribution<int> s(1, 10);
        for (auto const & id : m.instance_ids()) {
            ScoreRecord r{id, m.candidates()[0], {}, 0.0};
            r.votes.push_back({0, "", {}, s(gen), ""});
            r.recompute_aggregate();
            records.push_back(std::move(r));
        }
        std::vector<double> selected = {
            n_at_k(m, order, 1, 1, Oracle{}),
            n_at_k(m, order, 1, 1, Adversarial{}),
            n_at_k(m, order, 1, 1, UniformRandom{3, 50}),
            n_at_k(m, order, 1, 1, ScoreBased{records, std::nullopt}),
            expected_random_n_at_k(m, order, 1, 1),
        };
        for (auto v : selected) {
            if (!(in == avg && avg == un && un == v)) {
                o.fail(fmt::format("k=1 metrics differ: {} {} {} {}", in, avg, v, un));
            }
        }
        auto row = metric_series(m, order, Oracle{}, 1, 1).to_csv();
        if (row.find(",+0.0,") == std::string::npos) {
            o.fail("k=1 improvement is not +0.0");
        }
    }
    if (o.ok) {
        o.detail = fmt::format("{} matrices, 5 selectors each", matrices);
    }
    return o;
}

Outcome random_convergence()
{
    Outcome o;
    auto t0 = Clock::now();
    std::size_t inside = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        std::mt19937_64 gen(1000 + i);
        auto m = testsupport::random_matrix(gen, 30, 10);
        auto order = column_order(m);
        auto k = m.cols();
        auto est = random_n_at_k(m, order, k, 1, UniformRandom{i, 1000});
        auto exact = average_at_k(m, order, k);
        auto gap = std::abs(est.mean - exact);
        auto z = est.std_error > 0 ? gap / est.std_error : (gap < 1e-9 ? 0.0 : INFINITY);
        worst = std::max(worst, z);
        if (z <= 2.0) {
            ++inside;
        } else {
            o.fail(fmt::format("matrix {}: |{:.4f} - {:.4f}| = {:.2f} SE", i, est.mean, exact, z));
        }
    }
    auto secs = seconds_since(t0);
    if (secs >= 10.0) {
        o.fail(fmt::format("took {:.2f} s", secs));
    }
    auto summary = fmt::format("{}/20 within 2 SE, worst {:.2f} SE, {:.2f} s", inside, worst, secs);
    o.detail = o.ok ? summary : o.detail + "; " + summary;
    return o;
}

Outcome independence_closed_form()
{
    Outcome o;
    auto t0 = Clock::now();
    auto m = generate_synthetic_matrix(3000, 10, 0.266, 0.0, 266);
    auto order = column_order(m);
    auto u = static_cast<double>(union_at_k(m, order, 10));
    auto avg = average_at_k(m, order, 10);
    double expected = 1.0 - std::pow(1.0 - 0.266, 10);
    double rate = u / 3000.0;
    if (std::abs(rate - expected) > 0.02) {
        o.fail(fmt::format("Union@10 rate {:.4f} vs {:.4f}", rate, expected));
    }
    if (!(u > 2.0 * avg)) {
        o.fail(fmt::format("Union@10 {} not above twice Average@10 {:.1f}", u, avg));
    }
    auto secs = seconds_since(t0);
    if (secs >= 5.0) {
        o.fail(fmt::format("took {:.2f} s", secs));
    }
    if (o.ok) {
        o.detail = fmt::format("Union@10 rate {:.4f}, closed form {:.4f}, Union/Average {:.2f}, {:.2f} s", rate, expected,
                               u / avg, secs);
    }
    return o;
}

Outcome diff_oracle()
{
    Outcome o;
    auto t0 = Clock::now();
    testsupport::EditGenerator g(5150);
    for (int t = 0; t < 500 && o.ok; ++t) {
        FileBundle bundle;
        std::string text;
        std::vector<testsupport::FileCase> cases;
        auto files = g.pick(1, 3);
        for (std::size_t f = 0; f < files; ++f) {
            auto fc = g.file_case(fmt::format("dir{}/file{}.py", t % 4, f));
            if (fc.kind != testsupport::FileKind::create) {
                bundle.add("inst", fc.path, testsupport::render_lines(fc.before));
            }
            text += testsupport::write_diff(fc);
            cases.push_back(std::move(fc));
        }
        try {
            auto patches = diff::parse_unified_diff(text);
            auto out = diff::apply_patch(bundle, "inst", patches);
            FileBundle patched;
            for (auto const & fc : cases) {
                auto it = out.find(fc.path);
                if (fc.kind == testsupport::FileKind::remove) {
                    if (it != out.end()) {
                        o.fail(fmt::format("case {}: deleted file {} still present", t, fc.path));
                    }
                    continue;
                }
                if (it == out.end() || it->second != testsupport::render_lines(fc.after)) {
                    o.fail(fmt::format("case {}: {} differs from the splice oracle", t, fc.path));
                    continue;
                }
                patched.add("inst", fc.path, it->second);
            }
            auto back = diff::apply_patch(patched, "inst", diff::reverse_patches(patches));
            for (auto const & fc : cases) {
                auto it = back.find(fc.path);
                if (fc.kind == testsupport::FileKind::create) {
                    if (it != back.end()) {
                        o.fail(fmt::format("case {}: reversed creation left {}", t, fc.path));
                    }
                } else if (it == back.end() || it->second != testsupport::render_lines(fc.before)) {
                    o.fail(fmt::format("case {}: reverse did not restore {}", t, fc.path));
                }
            }
            auto s1 = diff::serialize_unified_diff(patches);
            auto reparsed = diff::parse_unified_diff(s1);
            if (!(reparsed == patches) || diff::serialize_unified_diff(reparsed) != s1) {
                o.fail(fmt::format("case {}: parse/serialize is not a fixed point", t));
            }
        } catch (std::exception const & e) {
            o.fail(fmt::format("case {}: {}", t, e.what()));
        }
    }
    auto secs = seconds_since(t0);
    if (secs >= 10.0) {
        o.fail(fmt::format("took {:.2f} s", secs));
    }
    if (o.ok) {
        o.detail = fmt::format("500 cases, {:.2f} s", secs);
    }
    return o;
}

Outcome mock_determinism()
{
    Outcome o;
    testsupport::TempDir dir("accept6");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 10, 4, 606);
    std::vector<std::string> files = {"ledger.jsonl", "rankings.jsonl", "predictions.jsonl"};
    std::map<std::string, std::string> first;
    for (auto const * out : {"run_a", "run_b"}) {
        auto cfg = RunConfig::from_json(testsupport::run_config_json(c, dir / out, 42));
        run_pipeline(cfg);
        for (auto const & f : files) {
            auto text = io::read_text_file(dir / out / f);
            if (first.count(f) == 0) {
                first[f] = text;
            } else if (first[f] != text) {
                o.fail(f + " differs between runs");
            }
        }
    }
    if (o.ok) {
        o.detail = fmt::format("ledger {} bytes, rankings {} bytes, predictions {} bytes identical",
                               first["ledger.jsonl"].size(), first["rankings.jsonl"].size(),
                               first["predictions.jsonl"].size());
    }
    return o;
}

Outcome oracle_scores()
{
    Outcome o;
    testsupport::TempDir dir("accept7");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 30, 4, 707, 0.3);
    auto j = testsupport::run_config_json(c, dir / "out", 7);
    auto cfg = RunConfig::from_json(j);
    for (std::size_t i = 0; i < c.instance_ids.size(); ++i) {
        for (std::size_t a = 0; a < c.agents.size(); ++a) {
            cfg.backend.script.set_score(c.instance_ids[i], {c.agents[a], 0}, c.resolved[i][a] ? 10 : 1);
        }
    }
    auto result = run_pipeline(cfg);
    auto matrix = ResolutionMatrix::load(dir / "out" / "matrix.json");
    auto order = CandidateOrder::load(dir / "out" / "order.json");
    auto K = matrix.cols();
    auto u = union_at_k(matrix, order, K);
    if (!result.selection_resolved || *result.selection_resolved != u) {
        o.fail(fmt::format("selections resolve {} but Union@{} is {}",
                           result.selection_resolved ? *result.selection_resolved : 0, K, u));
    }
    auto series = MetricSeries::from_csv(io::read_text_file(dir / "out" / "metrics.csv"));
    for (auto const & row : series.rows) {
        if (row.n_at_k != row.union_) {
            o.fail(fmt::format("score-based 1@{} = {} but Union@{} = {}", row.k, row.n_at_k, row.k, row.union_));
        }
    }
    if (o.ok) {
        o.detail = fmt::format("selections resolve {}/{} = Union@{}; 1@k = Union@k for k=1..{}", u, matrix.rows(), K, K);
    }
    return o;
}

Outcome prefix_votes()
{
    Outcome o;
    testsupport::TempDir dir("accept8");
    CommitteeConfig cfg;
    std::size_t checks = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 gen(seed);
        std::uniform_int_distribution<int> score(0, 10); // 0 stands for an abstention
        std::uniform_int_distribution<std::size_t> votes(1, 12);
        auto path = dir / fmt::format("l{}.jsonl", seed);
        {
            VoteLedger ledger(path, true);
            for (int r = 0; r < 5; ++r) {
                ScoreRecord rec{fmt::format("i{}", r), {"a", 0}, {}, 0.0};
                auto n = votes(gen);
                for (std::size_t v = 0; v < n; ++v) {
                    auto s = score(gen);
                    rec.votes.push_back({v, fmt::format("Score: {}", s), {}, s == 0 ? std::nullopt : std::optional<int>(s), ""});
                }
                ledger.append(rec, cfg);
            }
        }
        // Oracle: running sums straight from the raw ledger lines.
        std::map<std::string, std::vector<std::optional<int>>> raw;
        for (auto const & line : io::split_lines(io::read_text_file(path))) {
            auto j = nlohmann::json::parse(line);
            raw[j["instance_id"]].push_back(j["score"].is_null() ? std::nullopt : std::optional<int>(j["score"].get<int>()));
        }
        for (auto const & rec : load_ledger(path)) {
            auto const & scores = raw[rec.instance_id];
            int sum = 0;
            int count = 0;
            for (std::size_t m = 1; m <= scores.size(); ++m) {
                if (scores[m - 1]) {
                    sum += *scores[m - 1];
                    ++count;
                }
                double expect = count == 0 ? 0.0 : static_cast<double>(sum) / count;
                ++checks;
                if (std::abs(aggregate_prefix(rec, m) - expect) > 1e-12) {
                    o.fail(fmt::format("ledger {} {} m={}: {} vs {}", seed, rec.instance_id, m, aggregate_prefix(rec, m), expect));
                }
            }
        }
    }

    // End to end: votes.csv and the report section.
    auto c = testsupport::write_synthetic_corpus(dir.path() / "corpus", 12, 4, 808);
    auto run = RunConfig::from_json(testsupport::run_config_json(c, dir / "out", 8));
    run_pipeline(run);
    auto matrix = ResolutionMatrix::load(dir / "out" / "matrix.json");
    auto order = CandidateOrder::load(dir / "out" / "order.json");
    auto records = load_ledger(dir / "out" / "ledger.jsonl");
    auto lines = io::split_lines(io::read_text_file(dir / "out" / "votes.csv"));
    if (lines.size() != 11 || lines[0] != "m,k,resolved,resolved_pct,average_pct") {
        o.fail("votes.csv does not hold m = 1..10");
    } else {
        for (std::size_t m = 1; m <= 10; ++m) {
            // Independent selection: highest prefix mean, earliest in order on ties.
            std::size_t solved = 0;
            for (std::size_t row = 0; row < matrix.rows(); ++row) {
                auto const & id = matrix.instance_ids()[row];
                double best = -1.0;
                std::size_t best_col = 0;
                for (auto const & key : order.keys()) {
                    for (auto const & r : records) {
                        if (r.instance_id == id && r.candidate == key) {
                            auto mean = mean_score(std::span<Vote const>(r.votes).first(m));
                            if (mean > best) {
                                best = mean;
                                best_col = matrix.column_index(key);
                            }
                        }
                    }
                }
                solved += matrix.resolved(row, best_col) ? 1 : 0;
            }
            auto expect = fmt::format("{},{},{},", m, matrix.cols(), solved);
            if (!lines[m].starts_with(expect)) {
                o.fail(fmt::format("votes.csv row '{}' expected to start '{}'", lines[m], expect));
            }
        }
    }
    auto table = report(dir / "out").table;
    if (table.find("Resolve rate by number of votes") == std::string::npos) {
        o.fail("report lacks the vote-count series");
    }
    if (o.ok) {
        o.detail = fmt::format("100 ledgers, {} prefix means; votes.csv m=1..10 matches", checks);
    }
    return o;
}

Outcome prompt_contract()
{
    Outcome o;
    ScoringContext ctx;
    ctx.issue_text = "Crash when the list is empty";
    ctx.spans.push_back({"a.py", 1, 1, "x = 1\n", ""});
    ctx.views.push_back({"a.py", "1 | x = 1\n", "1 | x = 2\n", 10});
    CommitteeConfig cfg;
    auto with = build_prompt(ctx, cfg);
    std::size_t last = 0;
    for (std::size_t i = 0; i < std::size(explanation_headers); ++i) {
        auto pos = with.find(fmt::format("{}. {}:", i + 1, explanation_headers[i]));
        if (pos == std::string::npos || pos < last) {
            o.fail(fmt::format("request '{}' missing or out of order", explanation_headers[i]));
        }
        last = pos == std::string::npos ? last : pos;
    }
    auto contract = with.find("Score: <integer 1-10>");
    if (contract == std::string::npos || contract < last) {
        o.fail("score contract missing or before the explanations");
    }
    cfg.explanations_enabled = false;
    auto without = build_prompt(ctx, cfg);
    for (auto h : explanation_headers) {
        if (without.find(h) != std::string::npos) {
            o.fail(fmt::format("ablated prompt still asks for '{}'", h));
        }
    }
    if (without.find("## Scoring rubric") == std::string::npos || without.find("wrong location") == std::string::npos) {
        o.fail("ablated prompt lost the rubric");
    }
    if (without.find("Score: <integer 1-10>") == std::string::npos) {
        o.fail("ablated prompt lost the score contract");
    }
    if (o.ok) {
        o.detail = "five requests in order; ablation keeps rubric and contract";
    }
    return o;
}

Outcome score_parse()
{
    Outcome o;
    auto corpus = testsupport::score_fuzz_corpus(1000, 1010);
    std::size_t valid = 0;
    std::size_t out_of_range = 0;
    std::regex const last_int(R"(Score:[ \t]*(-?[0-9]+)[ \t\r]*$)");
    for (auto const & c : corpus) {
        auto got = parse_score(c.text);
        auto want = testsupport::regex_score(c.text);
        if (got != want) {
            o.fail(fmt::format("'{}' parsed {} but oracle says {}", c.text, got ? std::to_string(*got) : "none",
                               want ? std::to_string(*want) : "none"));
        }
        valid += got ? 1 : 0;
        if (got && (*got < 1 || *got > 10)) {
            o.fail(fmt::format("'{}' produced out-of-range {}", c.text, *got));
        }
        // An out-of-range integer on the deciding line must not come back clamped.
        auto lines = io::split_lines(c.text);
        for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
            if (it->find("Score:") == std::string::npos) {
                continue;
            }
            std::smatch m;
            if (std::regex_search(*it, m, last_int) && m[1].str().size() <= 4) {
                auto v = std::stoi(m[1].str());
                if (v < 1 || v > 10) {
                    ++out_of_range;
                    if (got) {
                        o.fail(fmt::format("'{}' clamped to {}", *it, *got));
                    }
                }
            }
            break;
        }
    }
    if (o.ok) {
        o.detail = fmt::format("1000 cases, {} valid, {} out of range rejected", valid, out_of_range);
    }
    return o;
}

} // namespace

int main()
{
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"metric identities", metric_identities},
        {"k=1 degeneracy", k1_degeneracy},
        {"random-selector convergence", random_convergence},
        {"independence closed form", independence_closed_form},
        {"diff engine oracle equivalence", diff_oracle},
        {"end-to-end mock determinism", mock_determinism},
        {"oracle-score end-to-end", oracle_scores},
        {"prefix-vote ablation", prefix_votes},
        {"prompt contract", prompt_contract},
        {"score-parse robustness", score_parse},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (std::exception const & e) {
            out.fail(std::string("exception: ") + e.what());
        }
        fmt::print("{} [{}] {}: {}\n", out.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, out.detail);
        failures += out.ok ? 0 : 1;
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
