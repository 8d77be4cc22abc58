#pragma once

#include <stdexcept>
#include <string>

namespace csf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when operands live on different charts or a name is not a coordinate.
class ChartError : public Error {
public:
    using Error::Error;
};

/// Raised by the expression/form text parser; carries a 1-based column.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t column)
        : Error(what + " (column " + std::to_string(column) + ")"), column_(column) {}
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

}  // namespace csf
