#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace leaflet {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(format(file, line, what)), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& file, std::size_t line, const std::string& what) {
        std::string out = file;
        if (line > 0) out += ":" + std::to_string(line);
        return out + ": " + what;
    }

    std::size_t line_;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// The external OCR binary could not be started.
class EngineNotFound : public Error {
public:
    using Error::Error;
};

/// The review queue store is inconsistent; it must be rebuilt from its event log.
class CorruptStore : public Error {
public:
    using Error::Error;
};

/// Class tables of two artifacts disagree.
class ClassTableMismatch : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

/// A state transition that has already happened was requested again.
class Conflict : public Error {
public:
    using Error::Error;
};

}  // namespace leaflet
