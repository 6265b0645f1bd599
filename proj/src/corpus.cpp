#include "deirank/corpus.hpp"

#include "deirank/diffkit.hpp"
#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <algorithm>
#include <map>

namespace deirank {

CandidatePatch const * PredictionSet::find(std::string const & instance_id) const
{
    for (auto const & e : entries) {
        if (e.instance_id == instance_id) {
            return &e;
        }
    }
    return nullptr;
}

PredictionSet load_predictions(std::filesystem::path const & path, std::size_t run_index)
{
    PredictionSet set;
    set.run_index = run_index;
    std::set<std::string> seen;
    io::for_each_jsonl(path, [&](nlohmann::json const & j, std::size_t line) {
        CandidatePatch cp;
        cp.instance_id = j.at("instance_id").get<std::string>();
        auto agent = j.at("model_name_or_path").get<std::string>();
        cp.patch_text = j.at("model_patch").is_null() ? std::string{} : j.at("model_patch").get<std::string>();
        if (cp.instance_id.empty()) {
            throw ParseError(path.string(), line, "empty instance_id");
        }
        if (set.entries.empty()) {
            set.agent_id = agent;
        } else if (agent != set.agent_id) {
            throw ValidationError(
                path.string() + ":" + std::to_string(line) + ": model_name_or_path '" + agent
                + "' differs from '" + set.agent_id + "' earlier in the file");
        }
        if (!seen.insert(cp.instance_id).second) {
            throw ValidationError(
                path.string() + ":" + std::to_string(line) + ": duplicate instance_id '" + cp.instance_id + "'");
        }
        try {
            diff::parse_unified_diff(cp.patch_text);
        } catch (MalformedDiffError const & e) {
            throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
        cp.agent_id = agent;
        cp.run_index = run_index;
        set.entries.push_back(std::move(cp));
    });
    if (set.entries.empty()) {
        set.agent_id = path.stem().string();
    }
    return set;
}

ResolvedSet load_resolution_report(std::filesystem::path const & path)
{
    auto j = io::read_json_file(path);
    if (!j.is_object() || !j.contains("resolved") || !j.at("resolved").is_array()) {
        throw FormatError("'" + path.string() + "' has no \"resolved\" array");
    }
    ResolvedSet out;
    for (auto const & id : j.at("resolved")) {
        if (!id.is_string()) {
            throw FormatError("'" + path.string() + "': resolved ids must be strings");
        }
        out.insert(id.get<std::string>());
    }
    return out;
}

std::vector<Instance> load_instances(std::filesystem::path const & path)
{
    std::vector<Instance> out;
    std::set<std::string> seen;
    io::for_each_jsonl(path, [&](nlohmann::json const & j, std::size_t line) {
        Instance inst;
        inst.instance_id = j.at("instance_id").get<std::string>();
        if (j.contains("issue_text")) {
            inst.issue_text = j.at("issue_text").get<std::string>();
        } else {
            inst.issue_text = j.at("problem_statement").get<std::string>();
        }
        inst.repo_label = j.value("repo", std::string{});
        if (j.contains("version")) {
            auto v = j.at("version");
            inst.repo_label += "@" + (v.is_string() ? v.get<std::string>() : v.dump());
        }
        inst.bundle_ref = j.value("bundle_ref", inst.instance_id);
        if (inst.instance_id.empty()) {
            throw ParseError(path.string(), line, "empty instance_id");
        }
        if (inst.issue_text.empty()) {
            throw ParseError(path.string(), line, "empty issue text for " + inst.instance_id);
        }
        if (!seen.insert(inst.instance_id).second) {
            throw ValidationError(
                path.string() + ":" + std::to_string(line) + ": duplicate instance_id '" + inst.instance_id + "'");
        }
        out.push_back(std::move(inst));
    });
    return out;
}

std::vector<PredictionSet> load_candidates_dir(std::filesystem::path const & dir)
{
    if (!std::filesystem::is_directory(dir)) {
        throw ValidationError("'" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (auto const & entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, std::size_t> runs;
    std::vector<PredictionSet> sets;
    for (auto const & f : files) {
        auto set = load_predictions(f);
        set.run_index = runs[set.agent_id]++;
        for (auto & e : set.entries) {
            e.run_index = set.run_index;
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

ResolutionMatrix::ResolutionMatrix(
    std::vector<std::string> instance_ids,
    std::vector<CandidateKey> candidates,
    std::vector<std::vector<bool>> resolved)
: instance_ids_(std::move(instance_ids))
, candidates_(std::move(candidates))
, resolved_(std::move(resolved))
{
    if (resolved_.size() != instance_ids_.size()) {
        throw ValidationError("resolution grid has " + std::to_string(resolved_.size())
                              + " rows for " + std::to_string(instance_ids_.size()) + " instances");
    }
    for (auto const & row : resolved_) {
        if (row.size() != candidates_.size()) {
            throw ValidationError("resolution grid row width does not match candidate count");
        }
    }
    std::set<std::string> ids(instance_ids_.begin(), instance_ids_.end());
    if (ids.size() != instance_ids_.size()) {
        throw ValidationError("duplicate instance id in resolution matrix");
    }
    std::set<CandidateKey> keys(candidates_.begin(), candidates_.end());
    if (keys.size() != candidates_.size()) {
        throw ValidationError("duplicate candidate in resolution matrix");
    }
}

std::size_t ResolutionMatrix::column_index(CandidateKey const & key) const
{
    auto it = std::find(candidates_.begin(), candidates_.end(), key);
    if (it == candidates_.end()) {
        throw ValidationError("unknown candidate " + key.to_string());
    }
    return static_cast<std::size_t>(it - candidates_.begin());
}

std::size_t ResolutionMatrix::row_index(std::string const & instance_id) const
{
    auto it = std::find(instance_ids_.begin(), instance_ids_.end(), instance_id);
    if (it == instance_ids_.end()) {
        throw ValidationError("unknown instance " + instance_id);
    }
    return static_cast<std::size_t>(it - instance_ids_.begin());
}

std::size_t ResolutionMatrix::column_count(std::size_t col) const
{
    std::size_t n = 0;
    for (auto const & row : resolved_) {
        n += row.at(col) ? 1 : 0;
    }
    return n;
}

double ResolutionMatrix::resolve_rate(std::size_t col) const
{
    return rows() == 0 ? 0.0 : static_cast<double>(column_count(col)) / static_cast<double>(rows());
}

ResolvedSet ResolutionMatrix::resolved_set(std::size_t col) const
{
    ResolvedSet out;
    for (std::size_t i = 0; i < rows(); ++i) {
        if (resolved_[i].at(col)) {
            out.insert(instance_ids_[i]);
        }
    }
    return out;
}

nlohmann::ordered_json ResolutionMatrix::to_json() const
{
    nlohmann::ordered_json j;
    j["instance_ids"] = instance_ids_;
    j["candidates"] = nlohmann::ordered_json::array();
    for (auto const & c : candidates_) {
        j["candidates"].push_back({{"agent_id", c.agent_id}, {"run_index", c.run_index}});
    }
    j["resolved"] = nlohmann::ordered_json::array();
    for (auto const & row : resolved_) {
        auto r = nlohmann::ordered_json::array();
        for (bool b : row) {
            r.push_back(b);
        }
        j["resolved"].push_back(std::move(r));
    }
    return j;
}

ResolutionMatrix ResolutionMatrix::from_json(nlohmann::json const & j)
{
    try {
        return ResolutionMatrix(
            j.at("instance_ids").get<std::vector<std::string>>(),
            j.at("candidates").get<std::vector<CandidateKey>>(),
            j.at("resolved").get<std::vector<std::vector<bool>>>());
    } catch (nlohmann::json::exception const & e) {
        throw FormatError(std::string("bad matrix document: ") + e.what());
    }
}

ResolutionMatrix ResolutionMatrix::load(std::filesystem::path const & path)
{
    return from_json(io::read_json_file(path));
}

void ResolutionMatrix::save(std::filesystem::path const & path) const
{
    io::write_text_file(path, to_json().dump() + "\n");
}

ResolutionMatrix build_resolution_matrix(
    std::span<PredictionSet const> predictions,
    std::span<ResolvedSet const> reports,
    CandidateOrder const & order,
    std::vector<std::string> instance_ids)
{
    if (predictions.size() != reports.size()) {
        throw ValidationError("need one resolution report per prediction set");
    }
    std::vector<CandidateKey> columns;
    for (auto const & p : predictions) {
        columns.push_back(p.key());
    }
    order.require_covers(columns);

    if (instance_ids.empty()) {
        std::set<std::string> all;
        for (auto const & p : predictions) {
            for (auto const & e : p.entries) {
                all.insert(e.instance_id);
            }
        }
        instance_ids.assign(all.begin(), all.end());
    }

    std::vector<std::vector<bool>> grid(instance_ids.size(), std::vector<bool>(order.size(), false));
    for (std::size_t col = 0; col < order.size(); ++col) {
        auto const & key = order.keys()[col];
        auto src = static_cast<std::size_t>(
            std::find(columns.begin(), columns.end(), key) - columns.begin());
        auto const & set = predictions[src];
        auto const & report = reports[src];
        std::set<std::string> predicted;
        for (auto const & e : set.entries) {
            predicted.insert(e.instance_id);
        }
        for (std::size_t row = 0; row < instance_ids.size(); ++row) {
            grid[row][col] = report.contains(instance_ids[row]) && predicted.contains(instance_ids[row]);
        }
    }
    return ResolutionMatrix(std::move(instance_ids), order.keys(), std::move(grid));
}

} // namespace deirank
