#pragma once

#include <stdexcept>
#include <string>

namespace mpfa {

// Common base so callers can catch everything from this library at once.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };  // shape/axis mismatch
struct ParameterError : Error { using Error::Error; };  // bad argument value
struct ParseError     : Error { using Error::Error; };  // malformed input file
struct StateError     : Error { using Error::Error; };  // inconsistent internal state
struct TimeOrderError : Error { using Error::Error; };  // timestamps moving backwards
struct SamplingError  : Error { using Error::Error; };  // impossible sampling request
struct ConfigError    : Error { using Error::Error; };  // invalid run configuration
struct ProtocolError  : Error { using Error::Error; };  // API called out of order
struct NumericError   : Error { using Error::Error; };  // NaN/Inf or divergence
struct MetricError    : Error { using Error::Error; };  // metric undefined for input
struct LoadError      : Error { using Error::Error; };  // file/checkpoint load problem

}  // namespace mpfa
