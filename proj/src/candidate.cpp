#include "deirank/candidate.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <algorithm>
#include <set>

namespace deirank {

std::string CandidateKey::to_string() const
{
    return agent_id + "#" + std::to_string(run_index);
}

void to_json(nlohmann::json & j, CandidateKey const & key)
{
    j = nlohmann::json{{"agent_id", key.agent_id}, {"run_index", key.run_index}};
}

void from_json(nlohmann::json const & j, CandidateKey & key)
{
    j.at("agent_id").get_to(key.agent_id);
    key.run_index = j.contains("run_index") ? j.at("run_index").get<std::size_t>() : 0;
}

CandidateOrder::CandidateOrder(std::vector<CandidateKey> keys, std::string provenance)
: keys_(std::move(keys))
, provenance_(std::move(provenance))
{
    std::set<CandidateKey> seen;
    for (auto const & k : keys_) {
        if (!seen.insert(k).second) {
            throw ValidationError("candidate order lists " + k.to_string() + " twice");
        }
    }
}

std::optional<std::size_t> CandidateOrder::position(CandidateKey const & key) const
{
    auto it = std::find(keys_.begin(), keys_.end(), key);
    if (it == keys_.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - keys_.begin());
}

void CandidateOrder::require_covers(std::vector<CandidateKey> const & columns) const
{
    std::set<CandidateKey> cols(columns.begin(), columns.end());
    for (auto const & k : keys_) {
        if (!cols.contains(k)) {
            throw ValidationError("candidate order references unknown candidate " + k.to_string());
        }
    }
    if (cols.size() != keys_.size() || columns.size() != keys_.size()) {
        for (auto const & c : columns) {
            if (!position(c)) {
                throw ValidationError("candidate order does not cover candidate " + c.to_string());
            }
        }
        throw ValidationError("candidate order and candidate columns differ in size");
    }
}

nlohmann::ordered_json CandidateOrder::to_json() const
{
    nlohmann::ordered_json j;
    j["order"] = nlohmann::ordered_json::array();
    for (auto const & k : keys_) {
        j["order"].push_back({{"agent_id", k.agent_id}, {"run_index", k.run_index}});
    }
    j["provenance"] = provenance_;
    return j;
}

CandidateOrder CandidateOrder::from_json(nlohmann::json const & j)
{
    if (!j.is_object() || !j.contains("order") || !j.at("order").is_array()) {
        throw FormatError("order file must be an object with an \"order\" array");
    }
    try {
        auto keys = j.at("order").get<std::vector<CandidateKey>>();
        return CandidateOrder(std::move(keys), j.value("provenance", std::string{}));
    } catch (nlohmann::json::exception const & e) {
        throw FormatError(std::string("bad order entry: ") + e.what());
    }
}

CandidateOrder CandidateOrder::load(std::filesystem::path const & path)
{
    return from_json(io::read_json_file(path));
}

void CandidateOrder::save(std::filesystem::path const & path) const
{
    io::write_text_file(path, to_json().dump(2) + "\n");
}

CandidateOrder CandidateOrder::generation_order(std::string const & agent_id, std::size_t runs)
{
    std::vector<CandidateKey> keys;
    keys.reserve(runs);
    for (std::size_t r = 0; r < runs; ++r) {
        keys.push_back({agent_id, r});
    }
    return CandidateOrder(std::move(keys), "generation order");
}

CandidateOrder CandidateOrder::default_multi_agent_order()
{
    static char const * const agents[] = {
        "20240612_IBM_Research_Agent101",
        "20240612_MASAI_gpt4o",
        "20240604_CodeR",
        "20240523_aider",
        "20240630_agentless_gpt4o",
        "20240617_moatless_gpt4o",
        "20240725_opendevin_codeact_v1.8_claude35sonnet",
        "20240706_sima_gpt4o",
        "20240621_autocoderover-v20240620",
        "20240509_amazon-q-developer-agent-20240430-dev",
    };
    std::vector<CandidateKey> keys;
    for (auto const * a : agents) {
        keys.push_back({a, 0});
    }
    return CandidateOrder(std::move(keys), "fixed shuffled order");
}

} // namespace deirank
