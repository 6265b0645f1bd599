#include "deirank/bundle.hpp"

#include "deirank/error.hpp"
#include "deirank/io.hpp"

#include <nlohmann/json.hpp>

namespace deirank {

void FileBundle::add(std::string instance_id, std::string file_path, std::string content)
{
    Key key{std::move(instance_id), std::move(file_path)};
    auto [it, inserted] = entries_.try_emplace(key, std::move(content));
    if (!inserted && it->second != content) {
        throw ValidationError(
            "bundle has conflicting content for " + key.first + ":" + key.second);
    }
}

std::optional<std::string> FileBundle::find(std::string const & instance_id, std::string const & file_path) const
{
    auto it = entries_.find({instance_id, file_path});
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool FileBundle::contains(std::string const & instance_id, std::string const & file_path) const
{
    return entries_.contains({instance_id, file_path});
}

FileBundle FileBundle::load(std::filesystem::path const & path)
{
    FileBundle bundle;
    io::for_each_jsonl(path, [&](nlohmann::json const & j, std::size_t) {
        bundle.add(
            j.at("instance_id").get<std::string>(),
            j.at("file_path").get<std::string>(),
            j.at("content").get<std::string>());
    });
    return bundle;
}

void FileBundle::save(std::filesystem::path const & path) const
{
    std::string out;
    for (auto const & [key, content] : entries_) {
        nlohmann::ordered_json j;
        j["instance_id"] = key.first;
        j["file_path"] = key.second;
        j["content"] = content;
        out += j.dump();
        out += '\n';
    }
    io::write_text_file(path, out);
}

FileBundle FileBundle::from_checkouts(
    std::filesystem::path const & checkout_root,
    std::map<std::string, std::vector<std::string>> const & files_per_instance)
{
    FileBundle bundle;
    for (auto const & [instance_id, files] : files_per_instance) {
        auto base = checkout_root / instance_id;
        for (auto const & file : files) {
            auto full = base / file;
            if (!std::filesystem::is_regular_file(full)) {
                throw ValidationError(
                    "checkout for " + instance_id + " has no file '" + file + "'");
            }
            bundle.add(instance_id, file, io::read_text_file(full));
        }
    }
    return bundle;
}

} // namespace deirank
