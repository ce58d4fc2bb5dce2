#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace redist {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or schema violation. `path` names the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Problems with input data (annotation files, images, score tables).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

inline std::string join_preview(const std::vector<std::string>& items, std::size_t limit = 20) {
    std::string out;
    for (std::size_t i = 0; i < items.size() && i < limit; ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    if (items.size() > limit) out += ", ... (" + std::to_string(items.size() - limit) + " more)";
    return out;
}

/// Images whose dimensions could not be determined.
class ResolveError : public DataError {
public:
    explicit ResolveError(std::vector<std::string> paths)
        : DataError("unresolved image dimensions: " + join_preview(paths)), paths_(std::move(paths)) {}
    const std::vector<std::string>& paths() const noexcept { return paths_; }

private:
    std::vector<std::string> paths_;
};

/// Evaluator could not score some architectures.
class MissingScores : public DataError {
public:
    explicit MissingScores(std::vector<std::string> ids)
        : DataError("no score for arch ids: " + join_preview(ids)), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

/// Rejection sampling gave up before collecting the requested population.
class SamplingError : public Error {
public:
    SamplingError(std::size_t attempts, std::size_t accepted, const std::string& detail)
        : Error(make_message(attempts, accepted, detail)), attempts_(attempts), accepted_(accepted) {}

    std::size_t attempts() const noexcept { return attempts_; }
    std::size_t accepted() const noexcept { return accepted_; }
    double acceptance_rate() const noexcept {
        return attempts_ ? static_cast<double>(accepted_) / static_cast<double>(attempts_) : 0.0;
    }

private:
    static std::string make_message(std::size_t attempts, std::size_t accepted, const std::string& detail) {
        const double rate = attempts ? static_cast<double>(accepted) / static_cast<double>(attempts) : 0.0;
        return "attempt cap exceeded after " + std::to_string(attempts) + " attempts (" +
               std::to_string(accepted) + " accepted, acceptance rate " + std::to_string(rate) + ")" +
               (detail.empty() ? "" : "; " + detail) + "; consider a wider flop band";
    }

    std::size_t attempts_;
    std::size_t accepted_;
};

}  // namespace redist
