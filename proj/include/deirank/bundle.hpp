#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace deirank {

/**
 * Pre-patch contents of every file a candidate or code span touches, keyed by
 * (instance_id, file_path). Stands in for a repository checkout at the
 * instance's base snapshot.
 *
 * On disk: JSONL of {"instance_id", "file_path", "content"}.
 */
class FileBundle {
public:
    using Key = std::pair<std::string, std::string>;

    /// Throws ValidationError if the entry already exists with different content.
    void add(std::string instance_id, std::string file_path, std::string content);

    std::optional<std::string> find(std::string const & instance_id, std::string const & file_path) const;
    bool contains(std::string const & instance_id, std::string const & file_path) const;

    std::size_t size() const noexcept { return entries_.size(); }
    std::map<Key, std::string> const & entries() const noexcept { return entries_; }

    static FileBundle load(std::filesystem::path const & path);
    void save(std::filesystem::path const & path) const;

    /**
     * Reads `files` relative to `checkout_root / instance_id` for each
     * requested instance. Missing files raise ValidationError.
     */
    static FileBundle from_checkouts(
        std::filesystem::path const & checkout_root,
        std::map<std::string, std::vector<std::string>> const & files_per_instance);

private:
    std::map<Key, std::string> entries_;
};

} // namespace deirank
