#pragma once

#include <stdexcept>
#include <string>

namespace svac {

// Failure to read or validate on-disk assets (weights, tokenizer, lexicon,
// circuit files). CLI exit code 2.
struct AssetError : std::runtime_error {
    explicit AssetError(const std::string& what) : std::runtime_error(what) {}
};

// A precondition or input-shape violation. CLI exit code 3.
struct ValidationError : std::invalid_argument {
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace svac
