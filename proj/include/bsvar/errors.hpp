#pragma once

#include <stdexcept>
#include <string>

namespace bsvar {

// Bad user input: invalid background, malformed config, unknown preset.
class config_error : public std::invalid_argument {
public:
    explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

// A solver could not reach its tolerance or bracket a minimum.
class numerical_failure : public std::runtime_error {
public:
    explicit numerical_failure(const std::string& what) : std::runtime_error(what) {}
};

} // namespace bsvar
