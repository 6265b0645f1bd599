#include "deirank/committee.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <thread>

namespace deirank {
namespace {

constexpr std::string_view score_marker = "Score:";

constexpr std::string_view explanation_requests[] = {
    "what the issue is about and what problem it causes.",
    "for each relevant code span, how and why it relates to the issue.",
    "whether the patch modifies the part of the code that is actually faulty, and why.",
    "whether and how the patch fixes the issue.",
    "whether the patch conflicts with any of the other relevant code spans.",
};

std::string dump_line(nlohmann::ordered_json const & j)
{
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

} // namespace

void CommitteeConfig::validate() const
{
    if (votes_per_candidate == 0) {
        throw ArgumentError("votes_per_candidate must be at least 1");
    }
    if (temperature < 0.0) {
        throw ArgumentError("temperature must be non-negative");
    }
}

nlohmann::ordered_json CommitteeConfig::to_json() const
{
    nlohmann::ordered_json j;
    j["votes_per_candidate"] = votes_per_candidate;
    j["explanations_enabled"] = explanations_enabled;
    j["model_label"] = model_label;
    j["temperature"] = temperature;
    j["seed"] = seed;
    j["max_parse_retries"] = max_parse_retries;
    j["rubric_version"] = rubric_version;
    return j;
}

CommitteeConfig CommitteeConfig::from_json(nlohmann::json const & j)
{
    CommitteeConfig cfg;
    cfg.votes_per_candidate = j.value("votes_per_candidate", cfg.votes_per_candidate);
    cfg.explanations_enabled = j.value("explanations_enabled", cfg.explanations_enabled);
    cfg.model_label = j.value("model_label", cfg.model_label);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_parse_retries = j.value("max_parse_retries", cfg.max_parse_retries);
    cfg.rubric_version = j.value("rubric_version", cfg.rubric_version);
    cfg.validate();
    return cfg;
}

bool ExplanationSet::empty() const noexcept
{
    return issue_expl.empty() && context_expl.empty() && location_expl.empty() && patch_expl.empty()
           && conflict_expl.empty();
}

ExplanationSet extract_explanations(std::string_view raw)
{
    // Locate each header in order; a section runs to the next header or the score line.
    std::vector<std::pair<std::size_t, std::size_t>> found; // (header pos, body start)
    std::size_t from = 0;
    for (auto header : explanation_headers) {
        auto pos = raw.find(header, from);
        if (pos == std::string_view::npos) {
            found.emplace_back(std::string_view::npos, std::string_view::npos);
            continue;
        }
        auto body = pos + header.size();
        while (body < raw.size() && (raw[body] == ':' || raw[body] == '*' || raw[body] == ' ')) {
            ++body;
        }
        found.emplace_back(pos, body);
        from = body;
    }
    auto score_pos = raw.rfind(score_marker);

    std::string out[5];
    for (std::size_t i = 0; i < found.size(); ++i) {
        auto [pos, body] = found[i];
        if (pos == std::string_view::npos) {
            continue;
        }
        auto end = raw.size();
        for (auto j = i + 1; j < found.size(); ++j) {
            if (found[j].first != std::string_view::npos) {
                end = found[j].first;
                break;
            }
        }
        if (score_pos != std::string_view::npos && score_pos >= body && score_pos < end) {
            end = score_pos;
        }
        auto text = io::trim(raw.substr(body, end - body));
        // Drop list/heading decoration left in front of the next header.
        while (!text.empty() && (text.back() == '#' || text.back() == '*' || text.back() == '-')) {
            text = io::trim(text.substr(0, text.size() - 1));
        }
        out[i] = std::string(text);
    }
    return {out[0], out[1], out[2], out[3], out[4]};
}

void ScoreRecord::recompute_aggregate()
{
    aggregate = mean_score(votes);
}

double mean_score(std::span<Vote const> votes)
{
    int sum = 0;
    int count = 0;
    for (auto const & v : votes) {
        if (v.score) {
            sum += *v.score;
            ++count;
        }
    }
    return count == 0 ? 0.0 : static_cast<double>(sum) / count;
}

std::string build_prompt(ScoringContext const & ctx, CommitteeConfig const & cfg)
{
    std::string p;
    p += "You are reviewing a candidate patch written to resolve an issue in a software repository. "
         "You are given the issue, code spans relevant to the issue, and the changed regions of the code "
         "before and after the patch, each with line numbers.\n\n";
    p += render_context(ctx);
    p += "\n## Instructions\n\n";
    if (cfg.explanations_enabled) {
        p += "Before scoring, write the following five explanations in exactly this order, each starting "
             "with its header on a new line. When writing each explanation, refer back to the explanations "
             "you have already written.\n\n";
        for (std::size_t i = 0; i < std::size(explanation_headers); ++i) {
            p += fmt::format("{}. {}: explain {}\n", i + 1, explanation_headers[i], explanation_requests[i]);
        }
        p += "\nThen, based on your explanations, score the patch using the rubric below.\n";
    } else {
        p += "Score the patch using the rubric below.\n";
    }
    p += "\n## Scoring rubric\n\n"
         "Start from 10 and deduct points for each problem you find:\n"
         "- The patch modifies the wrong location in the code: a serious mistake, deduct 5 or more.\n"
         "- The patch conflicts with one of the relevant code spans: deduct 3.\n"
         "- The patch does not address the root cause of the issue: deduct 2.\n"
         "- Style problems or other minor issues: deduct 1.\n"
         "The final score must be an integer from 1 to 10.\n";
    p += "\n## Output format\n\n"
         "End your response with a final line of exactly this form:\n"
         "Score: <integer 1-10>\n";
    return p;
}

std::optional<int> parse_score(std::string_view raw)
{
    auto lines = io::split_lines(raw);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string_view line = *it;
        auto pos = line.rfind(score_marker);
        if (pos == std::string_view::npos) {
            continue;
        }
        auto rest = io::trim(line.substr(pos + score_marker.size()));
        if (rest.empty() || rest.size() > 3) {
            return std::nullopt;
        }
        int value = 0;
        for (char c : rest) {
            if (c < '0' || c > '9') {
                return std::nullopt;
            }
            value = value * 10 + (c - '0');
        }
        if (value < 1 || value > 10) {
            return std::nullopt;
        }
        return value;
    }
    return std::nullopt;
}

double aggregate_prefix(ScoreRecord const & record, std::size_t m)
{
    if (m < 1 || m > record.votes.size()) {
        throw ArgumentError(fmt::format(
            "prefix of {} votes requested but {} {} has {}", m, record.instance_id,
            record.candidate.to_string(), record.votes.size()));
    }
    return mean_score(std::span<Vote const>(record.votes).first(m));
}

VoteLedger::VoteLedger(std::filesystem::path path, bool truncate)
: path_(std::move(path))
{
    if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app));
    if (!out_) {
        throw Error("cannot open vote ledger '" + path_.string() + "'");
    }
}

std::string VoteLedger::serialize(ScoreRecord const & record, CommitteeConfig const & cfg)
{
    std::string out;
    for (auto const & v : record.votes) {
        nlohmann::ordered_json j;
        j["instance_id"] = record.instance_id;
        j["agent_id"] = record.candidate.agent_id;
        j["run_index"] = record.candidate.run_index;
        j["vote_index"] = v.vote_index;
        j["raw_response"] = v.raw_response;
        j["score"] = v.score ? nlohmann::ordered_json(*v.score) : nlohmann::ordered_json(nullptr);
        j["model_label"] = cfg.model_label;
        j["rubric_version"] = cfg.rubric_version;
        out += dump_line(j);
        out += '\n';
    }
    return out;
}

void VoteLedger::append(ScoreRecord const & record, CommitteeConfig const & cfg)
{
    auto text = serialize(record, cfg);
    std::lock_guard lock(mutex_);
    out_.write(text.data(), static_cast<std::streamsize>(text.size()));
    out_.flush();
    if (!out_) {
        throw Error("write to vote ledger '" + path_.string() + "' failed");
    }
}

std::vector<ScoreRecord> load_ledger(std::filesystem::path const & path, LedgerLoadOptions options)
{
    auto text = io::read_text_file(path);
    if (options.tolerate_torn_tail && !text.empty() && text.back() != '\n') {
        auto nl = text.rfind('\n');
        text.resize(nl == std::string::npos ? 0 : nl + 1);
    }

    std::vector<ScoreRecord> records;
    std::map<std::tuple<std::string, std::string, std::size_t>, std::size_t> index;
    auto lines = io::split_lines(text);
    for (std::size_t n = 0; n < lines.size(); ++n) {
        if (io::trim(lines[n]).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(lines[n]);
            auto id = j.at("instance_id").get<std::string>();
            CandidateKey key{j.at("agent_id").get<std::string>(), j.at("run_index").get<std::size_t>()};
            auto [it, inserted] = index.try_emplace({id, key.agent_id, key.run_index}, records.size());
            if (inserted) {
                records.push_back({id, key, {}, 0.0});
            }
            Vote v;
            v.vote_index = j.at("vote_index").get<std::size_t>();
            v.raw_response = j.at("raw_response").get<std::string>();
            if (!j.at("score").is_null()) {
                auto s = j.at("score").get<int>();
                if (s < 1 || s > 10) {
                    throw ParseError(path.string(), n + 1, fmt::format("score {} outside 1-10", s));
                }
                v.score = s;
            }
            v.explanations = extract_explanations(v.raw_response);
            records[it->second].votes.push_back(std::move(v));
        } catch (nlohmann::json::exception const & e) {
            throw ParseError(path.string(), n + 1, e.what());
        }
    }
    for (auto & r : records) {
        std::sort(r.votes.begin(), r.votes.end(),
                  [](Vote const & a, Vote const & b) { return a.vote_index < b.vote_index; });
        for (std::size_t i = 0; i < r.votes.size(); ++i) {
            if (r.votes[i].vote_index != i) {
                throw ValidationError(fmt::format(
                    "ledger '{}': votes of {} {} are not numbered 0..{}", path.string(), r.instance_id,
                    r.candidate.to_string(), r.votes.size() - 1));
            }
        }
        r.recompute_aggregate();
    }
    return records;
}

std::pair<std::string, std::string> ledger_provenance(std::filesystem::path const & path)
{
    std::pair<std::string, std::string> out;
    bool first = true;
    io::for_each_jsonl(path, [&](nlohmann::json const & j, std::size_t) {
        if (first) {
            out = {j.value("model_label", std::string{}), j.value("rubric_version", std::string{})};
            first = false;
        }
    });
    return out;
}

ScoreRecord score_candidate(
    ScoringContext const & ctx,
    CandidatePatch const & candidate,
    CommitteeConfig const & cfg,
    ScoringBackend & backend,
    VoteLedger * ledger)
{
    cfg.validate();
    ScoreRecord record;
    record.instance_id = candidate.instance_id;
    record.candidate = candidate.key();
    record.votes.resize(cfg.votes_per_candidate);
    for (std::size_t i = 0; i < record.votes.size(); ++i) {
        record.votes[i].vote_index = i;
    }

    if (io::trim(candidate.patch_text).empty()) {
        for (auto & v : record.votes) {
            v.backend_metadata = "skipped: empty patch";
        }
    } else {
        auto prompt = build_prompt(ctx, cfg);
        auto run_vote = [&](Vote & vote) {
            for (std::size_t attempt = 0; attempt <= cfg.max_parse_retries; ++attempt) {
                VoteRequest req;
                req.prompt = prompt;
                req.model = cfg.model_label;
                req.temperature = cfg.temperature;
                req.seed = derive_seed(cfg.seed, record.instance_id, record.candidate, vote.vote_index, attempt);
                req.instance_id = record.instance_id;
                req.candidate = record.candidate;
                req.vote_index = vote.vote_index;
                req.attempt = attempt;
                auto reply = backend.complete(req);
                vote.raw_response = std::move(reply.content);
                vote.backend_metadata = fmt::format("{} parse_attempts={}", reply.metadata, attempt + 1);
                vote.score = parse_score(vote.raw_response);
                if (vote.score) {
                    break;
                }
            }
            if (cfg.explanations_enabled) {
                vote.explanations = extract_explanations(vote.raw_response);
            }
        };

        auto workers = std::min(backend.max_in_flight(), record.votes.size());
        if (workers <= 1) {
            try {
                for (auto & v : record.votes) {
                    run_vote(v);
                }
            } catch (TransportError const & e) {
                throw TransportError(fmt::format(
                    "scoring {} {} failed: {}", record.instance_id, record.candidate.to_string(), e.what()));
            }
        } else {
            std::atomic<std::size_t> next{0};
            std::exception_ptr failure;
            std::mutex failure_mutex;
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (auto i = next++; i < record.votes.size(); i = next++) {
                        try {
                            run_vote(record.votes[i]);
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) {
                                failure = std::current_exception();
                            }
                            next = record.votes.size();
                        }
                    }
                });
            }
            pool.clear();
            if (failure) {
                try {
                    std::rethrow_exception(failure);
                } catch (TransportError const & e) {
                    throw TransportError(fmt::format(
                        "scoring {} {} failed: {}", record.instance_id, record.candidate.to_string(), e.what()));
                }
            }
        }
    }

    if (ledger) {
        ledger->append(record, cfg);
    }
    record.recompute_aggregate();
    return record;
}

} // namespace deirank
