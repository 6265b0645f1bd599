#pragma once

#include "deirank/candidate.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

namespace deirank {

/// One backend call: a single attempt at a single vote.
struct VoteRequest {
    std::string prompt;
    std::string model;
    double temperature = 0.7;
    std::uint64_t seed = 0;
    std::string instance_id;
    CandidateKey candidate;
    std::size_t vote_index = 0;
    std::size_t attempt = 0;
};

struct BackendReply {
    std::string content;
    /// Free-form: model, latency, transport retries.
    std::string metadata;
};

class ScoringBackend {
public:
    virtual ~ScoringBackend() = default;

    /// Throws TransportError when the backend cannot produce a reply.
    BackendReply complete(VoteRequest const & request)
    {
        ++requests_;
        return do_complete(request);
    }

    virtual std::size_t max_in_flight() const { return 1; }
    std::uint64_t request_count() const noexcept { return requests_.load(); }

private:
    virtual BackendReply do_complete(VoteRequest const & request) = 0;

    std::atomic<std::uint64_t> requests_{0};
};

/**
 * Scripted scores for the mock backend.
 *
 * JSON shape:
 *   {"default": {"min": 1, "max": 10},
 *    "template": "...{score}...",
 *    "scores": [{"instance_id", "agent_id", "run_index", "score": 7},
 *               {"instance_id", "agent_id", "run_index", "votes": [8, null, 6]}]}
 *
 * A null vote produces a response without a parseable score. Per-vote lists
 * repeat cyclically. Unlisted candidates draw uniformly from [min, max].
 */
struct MockScript {
    using Key = std::tuple<std::string, std::string, std::size_t>;

    int default_min = 1;
    int default_max = 10;
    std::string response_template;
    std::map<Key, std::vector<std::optional<int>>> votes;

    void set_score(std::string const & instance_id, CandidateKey const & key, int score);
    void set_votes(std::string const & instance_id, CandidateKey const & key, std::vector<std::optional<int>> v);

    static MockScript from_json(nlohmann::json const & j);
    nlohmann::ordered_json to_json() const;
};

/// Default mock reply: one paragraph per explanation, then the score line.
std::string default_mock_template();

struct BackendSpec {
    enum class Kind { mock, http_chat };

    Kind kind = Kind::mock;
    // http-chat
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string api_key_env = "DEIRANK_API_KEY";
    std::chrono::milliseconds timeout{std::chrono::seconds(120)};
    std::size_t max_transport_retries = 3;
    std::chrono::milliseconds retry_backoff{std::chrono::milliseconds(500)};
    std::size_t max_in_flight = 4;
    // scripted-mock
    std::uint64_t seed = 0;
    MockScript script;

    nlohmann::ordered_json to_json() const;
    static BackendSpec from_json(nlohmann::json const & j);
};

/// Deterministic: the reply depends only on (seed, instance, candidate, vote, attempt).
class MockBackend final : public ScoringBackend {
public:
    MockBackend(std::uint64_t seed, MockScript script, std::size_t max_in_flight = 4);

    std::size_t max_in_flight() const override { return max_in_flight_; }

private:
    BackendReply do_complete(VoteRequest const & request) override;

    std::uint64_t seed_;
    MockScript script_;
    std::size_t max_in_flight_;
};

/// Chat-completion style HTTP endpoint. The credential is read from the environment.
class HttpChatBackend final : public ScoringBackend {
public:
    explicit HttpChatBackend(BackendSpec spec);

    std::size_t max_in_flight() const override { return spec_.max_in_flight; }

    static nlohmann::ordered_json request_body(VoteRequest const & request);
    /// Extracts choices[0].message.content; throws TransportError on other shapes.
    static std::string response_content(nlohmann::json const & body);

private:
    BackendReply do_complete(VoteRequest const & request) override;

    BackendSpec spec_;
    std::string api_key_;
};

std::unique_ptr<ScoringBackend> make_backend(BackendSpec const & spec);

/// Stable per-triple stream seed: mixes the run seed with the vote identity.
std::uint64_t derive_seed(
    std::uint64_t seed,
    std::string const & instance_id,
    CandidateKey const & key,
    std::size_t vote_index,
    std::size_t attempt);

} // namespace deirank
