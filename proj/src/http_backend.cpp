#include "deirank/backend.hpp"

#include "deirank/error.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace deirank {
namespace {

struct Endpoint {
    std::string base; // scheme://host[:port]
    std::string path;
};

Endpoint split_endpoint(std::string const & url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ArgumentError("endpoint '" + url + "' has no scheme");
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status)
{
    return status == 408 || status == 429 || status >= 500;
}

} // namespace

HttpChatBackend::HttpChatBackend(BackendSpec spec)
: spec_(std::move(spec))
{
    split_endpoint(spec_.endpoint);
    if (auto const * key = std::getenv(spec_.api_key_env.c_str())) {
        api_key_ = key;
    }
}

nlohmann::ordered_json HttpChatBackend::request_body(VoteRequest const & request)
{
    nlohmann::ordered_json body;
    body["model"] = request.model;
    body["messages"] = nlohmann::ordered_json::array();
    body["messages"].push_back({{"role", "user"}, {"content", request.prompt}});
    body["temperature"] = request.temperature;
    // Many servers reject seeds above 2^31.
    body["seed"] = static_cast<std::int64_t>(request.seed & 0x7fffffffULL);
    return body;
}

std::string HttpChatBackend::response_content(nlohmann::json const & body)
{
    try {
        auto const & content = body.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (nlohmann::json::exception const & e) {
        throw TransportError(std::string("unexpected chat completion response: ") + e.what());
    }
}

BackendReply HttpChatBackend::do_complete(VoteRequest const & request)
{
    auto [base, path] = split_endpoint(spec_.endpoint);
    httplib::Client client(base);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(spec_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }
    auto payload = request_body(request).dump();

    std::string last_error;
    auto backoff = spec_.retry_backoff;
    for (std::size_t attempt = 0; attempt <= spec_.max_transport_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        auto started = std::chrono::steady_clock::now();
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = fmt::format("HTTP {}", res->status);
            if (retryable_status(res->status)) {
                continue;
            }
            break;
        }
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(res->body);
        } catch (nlohmann::json::parse_error const & e) {
            last_error = std::string("response is not JSON: ") + e.what();
            continue;
        }
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return {
            response_content(body),
            fmt::format("model={} latency_ms={} transport_retries={}", request.model, elapsed.count(), attempt),
        };
    }
    throw TransportError(fmt::format(
        "backend {} failed for {} {} vote {}: {}", spec_.endpoint, request.instance_id,
        request.candidate.to_string(), request.vote_index, last_error));
}

} // namespace deirank
