#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace artadapter {

// All numerics run in double precision.
using scalar_t = double;

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error("shape error: " + m) {}
};
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& m) : std::runtime_error("range error: " + m) {}
};
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& m) : std::invalid_argument("argument error: " + m) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};
struct StateError : std::runtime_error {
    explicit StateError(const std::string& m) : std::runtime_error("state error: " + m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("io error: " + m) {}
};
struct KeyError : std::runtime_error {
    explicit KeyError(const std::string& m) : std::runtime_error("key error: " + m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};
struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& m) : std::runtime_error("load error: " + m) {}
};
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& m) : std::runtime_error("format error: " + m) {}
};

}  // namespace artadapter
