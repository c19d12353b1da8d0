#pragma once

#include <stdexcept>
#include <string>

namespace sgc {

// Base class for everything this library throws on contract violations.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension disagreement between operands; message names the operation and both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside its documented domain (negative counts, non-finite values, bad ranges).
class ValueError : public Error {
public:
    using Error::Error;
};

// Malformed input file; carries the 1-based line number when one is known.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line = 0)
        : Error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

// Filesystem failure (missing file, unwritable directory, short read).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sgc
