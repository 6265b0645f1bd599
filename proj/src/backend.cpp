#include "deirank/backend.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"
#include "deirank/rng.hpp"

#include <fmt/format.h>

#include <random>

namespace deirank {
namespace {

// Unbiased draw in [lo, hi].
int bounded_draw(std::mt19937_64 & gen, int lo, int hi)
{
    return lo + static_cast<int>(rng::below(gen, static_cast<std::uint64_t>(hi - lo) + 1));
}

void replace_all(std::string & s, std::string_view from, std::string_view to)
{
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

} // namespace

std::uint64_t derive_seed(
    std::uint64_t seed,
    std::string const & instance_id,
    CandidateKey const & key,
    std::size_t vote_index,
    std::size_t attempt)
{
    auto h = io::fnv1a64(instance_id);
    h = io::fnv1a64(key.agent_id, h ^ 0x1f);
    h = rng::splitmix64(h ^ key.run_index);
    h = rng::splitmix64(h ^ (static_cast<std::uint64_t>(vote_index) << 16) ^ attempt);
    return rng::mix(h, seed);
}

std::string default_mock_template()
{
    return "Issue explanation: The issue in {instance_id} describes a defect that needs fixing.\n"
           "\n"
           "Context explanation: The relevant spans show where the defect lives.\n"
           "\n"
           "Location explanation: Candidate {agent_id} run {run_index} edits the code near the defect.\n"
           "\n"
           "Patch explanation: Vote {vote_index} judges whether the change resolves the issue.\n"
           "\n"
           "Conflict detection: No conflicts with the relevant spans were found.\n"
           "\n"
           "Score: {score}\n";
}

void MockScript::set_score(std::string const & instance_id, CandidateKey const & key, int score)
{
    votes[{instance_id, key.agent_id, key.run_index}] = {score};
}

void MockScript::set_votes(std::string const & instance_id, CandidateKey const & key, std::vector<std::optional<int>> v)
{
    if (v.empty()) {
        throw ArgumentError("scripted vote list for " + instance_id + " is empty");
    }
    votes[{instance_id, key.agent_id, key.run_index}] = std::move(v);
}

MockScript MockScript::from_json(nlohmann::json const & j)
{
    MockScript s;
    if (j.contains("default")) {
        s.default_min = j.at("default").value("min", 1);
        s.default_max = j.at("default").value("max", 10);
    }
    if (s.default_min > s.default_max) {
        throw ArgumentError("mock default score range is empty");
    }
    s.response_template = j.value("template", std::string{});
    if (j.contains("scores")) {
        for (auto const & e : j.at("scores")) {
            auto id = e.at("instance_id").get<std::string>();
            CandidateKey key{e.at("agent_id").get<std::string>(), e.value("run_index", std::size_t{0})};
            if (e.contains("score")) {
                s.set_score(id, key, e.at("score").get<int>());
            } else {
                std::vector<std::optional<int>> v;
                for (auto const & x : e.at("votes")) {
                    v.push_back(x.is_null() ? std::nullopt : std::optional<int>(x.get<int>()));
                }
                s.set_votes(id, key, std::move(v));
            }
        }
    }
    return s;
}

nlohmann::ordered_json MockScript::to_json() const
{
    nlohmann::ordered_json j;
    j["default"] = {{"min", default_min}, {"max", default_max}};
    if (!response_template.empty()) {
        j["template"] = response_template;
    }
    j["scores"] = nlohmann::ordered_json::array();
    for (auto const & [key, v] : votes) {
        nlohmann::ordered_json e;
        e["instance_id"] = std::get<0>(key);
        e["agent_id"] = std::get<1>(key);
        e["run_index"] = std::get<2>(key);
        auto arr = nlohmann::ordered_json::array();
        for (auto const & x : v) {
            arr.push_back(x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr));
        }
        e["votes"] = std::move(arr);
        j["scores"].push_back(std::move(e));
    }
    return j;
}

nlohmann::ordered_json BackendSpec::to_json() const
{
    nlohmann::ordered_json j;
    j["kind"] = kind == Kind::mock ? "mock" : "http";
    if (kind == Kind::http_chat) {
        j["endpoint"] = endpoint;
        j["api_key_env"] = api_key_env;
        j["timeout_ms"] = timeout.count();
        j["max_transport_retries"] = max_transport_retries;
        j["retry_backoff_ms"] = retry_backoff.count();
    } else {
        j["seed"] = seed;
        j["script"] = script.to_json();
    }
    j["max_in_flight"] = max_in_flight;
    return j;
}

BackendSpec BackendSpec::from_json(nlohmann::json const & j)
{
    BackendSpec spec;
    auto kind = j.value("kind", std::string("mock"));
    if (kind == "mock" || kind == "scripted-mock") {
        spec.kind = Kind::mock;
    } else if (kind == "http" || kind == "http-chat") {
        spec.kind = Kind::http_chat;
    } else {
        throw ArgumentError("unknown backend kind '" + kind + "'");
    }
    spec.endpoint = j.value("endpoint", spec.endpoint);
    spec.api_key_env = j.value("api_key_env", spec.api_key_env);
    spec.timeout = std::chrono::milliseconds(j.value("timeout_ms", spec.timeout.count()));
    spec.max_transport_retries = j.value("max_transport_retries", spec.max_transport_retries);
    spec.retry_backoff = std::chrono::milliseconds(j.value("retry_backoff_ms", spec.retry_backoff.count()));
    spec.max_in_flight = j.value("max_in_flight", spec.max_in_flight);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("script")) {
        spec.script = MockScript::from_json(j.at("script"));
    }
    if (spec.max_in_flight == 0) {
        throw ArgumentError("max_in_flight must be at least 1");
    }
    return spec;
}

MockBackend::MockBackend(std::uint64_t seed, MockScript script, std::size_t max_in_flight)
: seed_(seed)
, script_(std::move(script))
, max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight)
{
    if (script_.response_template.empty()) {
        script_.response_template = default_mock_template();
    }
}

BackendReply MockBackend::do_complete(VoteRequest const & request)
{
    std::optional<int> score;
    auto it = script_.votes.find({request.instance_id, request.candidate.agent_id, request.candidate.run_index});
    if (it != script_.votes.end()) {
        score = it->second[request.vote_index % it->second.size()];
    } else {
        std::mt19937_64 gen(derive_seed(seed_, request.instance_id, request.candidate, request.vote_index, 0));
        score = bounded_draw(gen, script_.default_min, script_.default_max);
    }

    auto text = script_.response_template;
    replace_all(text, "{instance_id}", request.instance_id);
    replace_all(text, "{agent_id}", request.candidate.agent_id);
    replace_all(text, "{run_index}", std::to_string(request.candidate.run_index));
    replace_all(text, "{vote_index}", std::to_string(request.vote_index));
    replace_all(text, "{score}", score ? std::to_string(*score) : std::string("undecided"));
    return {std::move(text), fmt::format("model=mock attempt={}", request.attempt)};
}

std::unique_ptr<ScoringBackend> make_backend(BackendSpec const & spec)
{
    if (spec.kind == BackendSpec::Kind::mock) {
        return std::make_unique<MockBackend>(spec.seed, spec.script, spec.max_in_flight);
    }
    return std::make_unique<HttpChatBackend>(spec);
}

} // namespace deirank
