#pragma once

// Fixtures shared by the unit and acceptance suites.

#include "deirank/corpus.hpp"
#include "deirank/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(std::string const & tag = "t")
    {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path()
            / fmt::format("deirank-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(TempDir const &) = delete;
    TempDir & operator=(TempDir const &) = delete;

    fs::path const & path() const { return path_; }
    fs::path operator/(std::string const & name) const { return path_ / name; }

private:
    fs::path path_;
};

/// A patch replacing `lines[idx]` with `replacement`, three lines of context.
inline std::string replace_line_patch(
    std::string const & path,
    std::vector<std::string> const & lines,
    std::size_t idx,
    std::string const & replacement)
{
    auto lo = idx >= 3 ? idx - 3 : 0;
    auto hi = std::min(lines.size(), idx + 4);
    std::string body;
    for (auto i = lo; i < hi; ++i) {
        if (i == idx) {
            body += "-" + lines[i] + "\n+" + replacement + "\n";
        } else {
            body += " " + lines[i] + "\n";
        }
    }
    auto len = hi - lo;
    return fmt::format("diff --git a/{0} b/{0}\n--- a/{0}\n+++ b/{0}\n@@ -{1},{2} +{1},{2} @@\n{3}", path, lo + 1,
                       len, body);
}

inline std::vector<std::string> synthetic_file(std::size_t instance, std::size_t nlines = 30)
{
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < nlines; ++i) {
        lines.push_back(fmt::format("value_{}_{} = compute({}, {})", instance, i, instance, i));
    }
    return lines;
}

struct SyntheticCorpus {
    fs::path root;
    fs::path instances;
    fs::path candidates_dir;
    fs::path spans;
    fs::path bundle;
    fs::path reports_dir;
    std::vector<std::string> instance_ids;
    std::vector<std::string> agents;
    std::vector<std::vector<bool>> resolved; ///< [instance][agent]
};

/**
 * Writes instances, one prediction file per agent, spans, a bundle and a
 * resolution report per agent under `root`. Agent `a` edits line `a + 5` of
 * the instance's file; ground truth is a seeded coin flip per cell.
 */
inline SyntheticCorpus write_synthetic_corpus(
    fs::path const & root,
    std::size_t instances,
    std::size_t agents,
    std::uint64_t seed,
    double rate = 0.4)
{
    SyntheticCorpus c;
    c.root = root;
    c.instances = root / "instances.jsonl";
    c.candidates_dir = root / "candidates";
    c.spans = root / "spans.jsonl";
    c.bundle = root / "bundle.jsonl";
    c.reports_dir = root / "reports";
    fs::create_directories(c.candidates_dir);
    fs::create_directories(c.reports_dir);

    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::string instances_text;
    std::string spans_text;
    std::string bundle_text;
    std::vector<std::string> pred_text(agents);
    std::vector<nlohmann::json> reports(agents, nlohmann::json{{"resolved", nlohmann::json::array()}});
    for (std::size_t a = 0; a < agents; ++a) {
        c.agents.push_back(fmt::format("agent{}", a));
    }

    for (std::size_t i = 0; i < instances; ++i) {
        auto id = fmt::format("demo__repo-{:03}", i);
        c.instance_ids.push_back(id);
        auto path = fmt::format("pkg/module_{}.py", i);
        auto lines = synthetic_file(i);
        instances_text += nlohmann::json{{"instance_id", id},
                                         {"issue_text", fmt::format("compute() returns the wrong value in {}", path)},
                                         {"repo", "demo/repo"}}
                              .dump()
            + "\n";
        std::string code;
        for (std::size_t l = 4; l < 9; ++l) {
            code += lines[l] + "\n";
        }
        spans_text += nlohmann::json{{"instance_id", id},
                                     {"spans",
                                      {{{"file_path", path}, {"start_line", 5}, {"end_line", 9}, {"code", code}}}}}
                          .dump()
            + "\n";
        bundle_text += nlohmann::json{{"instance_id", id}, {"file_path", path}, {"content", deirank::io::join_lines(lines, true)}}
                           .dump()
            + "\n";

        std::vector<bool> row;
        for (std::size_t a = 0; a < agents; ++a) {
            auto patch = replace_line_patch(path, lines, a + 5, fmt::format("value_{}_{} = fixed({})", i, a + 5, a));
            pred_text[a] += nlohmann::json{{"instance_id", id}, {"model_name_or_path", c.agents[a]}, {"model_patch", patch}}
                                .dump()
                + "\n";
            bool ok = coin(gen) < rate;
            row.push_back(ok);
            if (ok) {
                reports[a]["resolved"].push_back(id);
            }
        }
        c.resolved.push_back(std::move(row));
    }

    deirank::io::write_text_file(c.instances, instances_text);
    deirank::io::write_text_file(c.spans, spans_text);
    deirank::io::write_text_file(c.bundle, bundle_text);
    for (std::size_t a = 0; a < agents; ++a) {
        deirank::io::write_text_file(c.candidates_dir / (c.agents[a] + ".jsonl"), pred_text[a]);
        deirank::io::write_text_file(c.reports_dir / (c.agents[a] + ".json"), reports[a].dump() + "\n");
    }
    return c;
}

/// Run config JSON for `run` over a synthetic corpus.
inline nlohmann::json run_config_json(SyntheticCorpus const & c, fs::path const & out, std::uint64_t seed)
{
    return {
        {"paths",
         {{"instances", c.instances.string()},
          {"candidates_dir", c.candidates_dir.string()},
          {"spans", c.spans.string()},
          {"bundle", c.bundle.string()},
          {"reports_dir", c.reports_dir.string()},
          {"output_dir", out.string()}}},
        {"seed", seed},
        {"committee", {{"votes_per_candidate", 10}}},
        {"backend", {{"kind", "mock"}, {"max_in_flight", 4}}},
    };
}

/// Uniform random boolean matrix with seeded shape, for identity checks.
inline deirank::ResolutionMatrix random_matrix(std::mt19937_64 & gen, std::size_t max_rows, std::size_t max_cols)
{
    std::uniform_int_distribution<std::size_t> rows(1, max_rows);
    std::uniform_int_distribution<std::size_t> cols(1, max_cols);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto r = rows(gen);
    auto c = cols(gen);
    double density = unit(gen);
    std::vector<std::string> ids;
    std::vector<deirank::CandidateKey> keys;
    std::vector<std::vector<bool>> grid(r, std::vector<bool>(c));
    for (std::size_t i = 0; i < r; ++i) {
        ids.push_back(fmt::format("i{}", i));
        for (std::size_t j = 0; j < c; ++j) {
            grid[i][j] = unit(gen) < density;
        }
    }
    for (std::size_t j = 0; j < c; ++j) {
        keys.push_back({fmt::format("a{}", j), 0});
    }
    return deirank::ResolutionMatrix(std::move(ids), std::move(keys), std::move(grid));
}

} // namespace testsupport
