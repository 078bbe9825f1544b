#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace flownet {

// All library failures throw this. The category is a stable, machine-parsable
// dotted string ("io.not_found", "parse.schema", "dim.mismatch", ...); the CLI
// prints it as a single "error: <category>: <detail>" line on stderr.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& detail)
        : std::runtime_error(detail), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

[[noreturn]] inline void fail(std::string category, const std::string& detail) {
    throw Error(std::move(category), detail);
}

}  // namespace flownet
