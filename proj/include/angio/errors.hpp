#pragma once

#include <stdexcept>
#include <string>

namespace angio {

// Error taxonomy. CLI maps these to exit codes: config_error -> 3,
// usage problems -> 2 (handled by the parser), everything else -> 1.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct param_error : std::runtime_error {
    explicit param_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct state_error : std::runtime_error {
    explicit state_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct generation_error : std::runtime_error {
    explicit generation_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace angio
