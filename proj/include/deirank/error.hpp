#pragma once

#include <stdexcept>
#include <string>

namespace deirank {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a data invariant (duplicate ids, bad ranges, unknown keys).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A JSON / JSONL file could not be parsed.
class ParseError : public ValidationError {
public:
    ParseError(std::string const & path, std::size_t line, std::string const & what)
    : ValidationError(path + ":" + std::to_string(line) + ": " + what)
    , line_(line)
    {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A document parsed but does not have the expected shape.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class MalformedDiffError : public ValidationError {
public:
    MalformedDiffError(std::string file, std::size_t hunk_index, std::string const & what)
    : ValidationError(
          "malformed diff in '" + file + "' hunk " + std::to_string(hunk_index) + ": " + what)
    , file_(std::move(file))
    , hunk_index_(hunk_index)
    {}

    std::string const & file() const noexcept { return file_; }
    std::size_t hunk_index() const noexcept { return hunk_index_; }

private:
    std::string file_;
    std::size_t hunk_index_;
};

/// Patch context or removed lines disagree with the bundled file content.
class ApplyConflictError : public ValidationError {
public:
    ApplyConflictError(std::string file, std::size_t hunk_index, std::size_t line, std::string const & what)
    : ValidationError(
          "cannot apply hunk " + std::to_string(hunk_index) + " to '" + file + "' at line "
          + std::to_string(line) + ": " + what)
    , file_(std::move(file))
    , hunk_index_(hunk_index)
    , line_(line)
    {}

    std::string const & file() const noexcept { return file_; }
    std::size_t hunk_index() const noexcept { return hunk_index_; }
    /// 1-based line in the original file; 0 when the file itself is missing.
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t hunk_index_;
    std::size_t line_;
};

class BudgetError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ArgumentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Scoring backend could not be reached or kept failing after retries.
class TransportError : public Error {
public:
    using Error::Error;
};

} // namespace deirank
