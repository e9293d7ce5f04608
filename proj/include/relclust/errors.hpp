#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace relclust {

// Error taxonomy. Every failure mode maps onto one of these so callers can
// distinguish bad input shapes from bad configuration from numeric blowups.

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct contract_error : std::runtime_error {
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct parse_error : std::runtime_error {
    explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct structural_error : std::runtime_error {
    explicit structural_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-fatal diagnostics go to stderr; they never change results.
inline void warn(const std::string& msg) {
    std::fprintf(stderr, "[relclust] warning: %s\n", msg.c_str());
}

}  // namespace relclust
