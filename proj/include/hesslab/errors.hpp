#pragma once

#include <stdexcept>
#include <string>

namespace hesslab {

// Base class for every error raised by the library. Callers that only need
// a message can catch this; the subclasses exist so that tests and the CLI
// can map failures to distinct exit paths.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SymmetryError : public Error {
public:
    using Error::Error;
};

class DegenerateVectorError : public Error {
public:
    using Error::Error;
};

// Non-finite loss, gradient or operator output.
class NumericError : public Error {
public:
    using Error::Error;
    NumericError(const std::string& what, long epoch) : Error(what), epoch_(epoch) {}
    long epoch() const { return epoch_; }

private:
    long epoch_ = -1;
};

class PoleError : public Error {
public:
    PoleError(const std::string& what, std::size_t index) : Error(what), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

class DegenerateScaleError : public Error {
public:
    using Error::Error;
};

class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class CheckpointMissingError : public Error {
public:
    using Error::Error;
};

class IncompatibleError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hesslab
