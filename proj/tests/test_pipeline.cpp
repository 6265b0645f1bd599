#include "deirank/error.hpp"
#include "deirank/io.hpp"
#include "deirank/pipeline.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace deirank;
using testsupport::TempDir;

namespace {

RunConfig config_for(testsupport::SyntheticCorpus const & c, std::filesystem::path const & out, std::uint64_t seed)
{
    return RunConfig::from_json(testsupport::run_config_json(c, out, seed));
}

std::string slurp(std::filesystem::path const & p)
{
    return io::read_text_file(p);
}

} // namespace

TEST_CASE("run config round trip and hashing")
{
    TempDir dir("cfg");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 2, 2, 1);
    auto cfg = config_for(c, dir / "out", 4);
    auto again = RunConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
    CHECK(again.hash() == cfg.hash());
    CHECK(again.committee.seed == 4);
    auto other = cfg;
    other.seed = 5;
    CHECK(other.hash() != cfg.hash());

    io::write_text_file(dir / "rel.json",
                        R"({"paths": {"instances": "instances.jsonl", "candidates_dir": "candidates", "bundle": "bundle.jsonl", "output_dir": "o"}})");
    auto rel = RunConfig::load(dir / "rel.json");
    CHECK(rel.instances == dir / "instances.jsonl");
    io::write_text_file(dir / "bad.json", R"({"seed": 1})");
    CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), FormatError);
}

TEST_CASE("run writes every artifact and resumes from its ledger")
{
    TempDir dir("run");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 5, 3, 8);
    auto cfg = config_for(c, dir / "out", 2);
    auto result = run_pipeline(cfg);
    CHECK(result.ledger_records == 15);
    CHECK(result.reused_records == 0);
    CHECK(result.backend_requests == 150);
    CHECK(result.predictions == 5);
    REQUIRE(result.selection_resolved);
    for (auto name : {"config.json", "order.json", "ledger.jsonl", "rankings.jsonl", "predictions.jsonl", "matrix.json",
                      "metrics.csv", "metrics.txt", "votes.csv", "manifest.json", "report.txt"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / "out" / name), name);
    }
    auto manifest = io::read_json_file(dir / "out" / "manifest.json");
    CHECK(manifest["config_hash"] == cfg.hash());
    CHECK(slurp(dir / "out" / "report.txt").find(cfg.hash()) != std::string::npos);
    CHECK(io::split_lines(slurp(dir / "out" / "ledger.jsonl")).size() == 150);

    auto ledger = slurp(dir / "out" / "ledger.jsonl");
    auto predictions = slurp(dir / "out" / "predictions.jsonl");

    // Interrupted mid-record: keep 7 records and a torn eighth.
    auto lines = io::split_lines(ledger);
    std::string cut;
    for (std::size_t i = 0; i < 74; ++i) {
        cut += lines[i] + "\n";
    }
    cut += lines[74].substr(0, 20);
    io::write_text_file(dir / "out" / "ledger.jsonl", cut);
    auto resumed = run_pipeline(cfg);
    CHECK(resumed.reused_records == 7);
    CHECK(resumed.backend_requests == 80);
    CHECK(slurp(dir / "out" / "ledger.jsonl") == ledger);
    CHECK(slurp(dir / "out" / "predictions.jsonl") == predictions);

    // A complete ledger needs no backend calls at all.
    auto replay = run_pipeline(cfg);
    CHECK(replay.backend_requests == 0);
    CHECK(replay.reused_records == 15);

    auto r = report(dir / "out");
    CHECK(r.table.find("Union@k") != std::string::npos);
    CHECK(r.table.find("Resolve rate by number of votes") != std::string::npos);
    CHECK(r.csv == slurp(dir / "out" / "metrics.csv"));
}

TEST_CASE("a ledger from another model is not reused")
{
    TempDir dir("prov");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 2, 2, 8);
    auto cfg = config_for(c, dir / "out", 2);
    run_pipeline(cfg);
    cfg.committee.model_label = "other-model";
    CHECK_THROWS_AS(run_pipeline(cfg), ValidationError);
}

TEST_CASE("missing predictions become empty candidates")
{
    TempDir dir("missing");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 3, 2, 8);
    auto path = c.candidates_dir / "agent1.jsonl";
    auto lines = io::split_lines(slurp(path));
    io::write_text_file(path, lines[0] + "\n");
    auto result = run_pipeline(config_for(c, dir / "out", 1));
    CHECK(result.ledger_records == 6);
    CHECK(result.backend_requests == 40);
}

TEST_CASE("report without metrics is an error")
{
    TempDir dir("report");
    CHECK_THROWS_AS(report(dir.path()), Error);
}

TEST_CASE("order resolution")
{
    TempDir dir("order");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 2, 3, 1);
    auto sets = load_candidates_dir(c.candidates_dir);
    auto order = resolve_order(sets, {});
    CHECK(order.keys().front() == CandidateKey{"agent0", 0});
    CHECK(order.provenance() == "candidates directory order");

    std::vector<PredictionSet> solo(2);
    solo[0].agent_id = solo[1].agent_id = "s";
    solo[1].run_index = 1;
    CHECK(resolve_order(solo, {}).keys() == CandidateOrder::generation_order("s", 2).keys());
}

#ifdef DEIRANK_CLI_PATH
TEST_CASE("command line exit codes")
{
    TempDir dir("cli");
    auto c = testsupport::write_synthetic_corpus(dir.path(), 3, 2, 4);
    io::write_text_file(dir / "run.json", testsupport::run_config_json(c, dir / "out", 3).dump());
    auto sh = [&](std::string const & args) {
        auto cmd = fmt::format("{} {} > {} 2>&1", DEIRANK_CLI_PATH, args, (dir / "log.txt").string());
        auto status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    auto bin = [&](std::string const & p) { return (dir / p).string(); };

    CHECK(sh(fmt::format("run --config {}", bin("run.json"))) == 0);
    CHECK(sh(fmt::format("report --dir {}", bin("out"))) == 0);
    CHECK(slurp(dir / "log.txt").find("Union@k") != std::string::npos);
    CHECK(sh(fmt::format("metrics --matrix {} --selector adversarial --format csv", bin("out/matrix.json"))) == 0);
    CHECK(slurp(dir / "log.txt").starts_with("instances,k,"));
    CHECK(sh(fmt::format("rerank --ledger {} --candidates {} --out {}", bin("out/ledger.jsonl"), c.candidates_dir.string(),
                         bin("p.jsonl")))
          == 0);
    CHECK(slurp(dir / "p.jsonl") == slurp(dir / "out" / "predictions.jsonl"));
    CHECK(sh(fmt::format("ingest --instances {} --candidates {} --bundle {} --reports {} --matrix-out {}",
                         c.instances.string(), c.candidates_dir.string(), c.bundle.string(), c.reports_dir.string(),
                         bin("m.json")))
          == 0);
    CHECK(slurp(dir / "m.json") == slurp(dir / "out" / "matrix.json"));

    CHECK(sh(fmt::format("report --dir {}", bin("nowhere"))) == 3);
    CHECK(sh(fmt::format("metrics --matrix {}", bin("missing.json"))) == 1);
    CHECK(sh("bogus") == 1);

    // Unreachable endpoint: transport failure.
    CHECK(sh(fmt::format("score --instances {} --candidates {} --bundle {} --backend http --endpoint "
                         "http://127.0.0.1:9/v1 --retries 0 --out {}",
                         c.instances.string(), c.candidates_dir.string(), c.bundle.string(), bin("l.jsonl")))
          == 2);
}
#endif
