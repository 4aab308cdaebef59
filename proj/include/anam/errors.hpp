#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace anam {

// Base of every error raised by the library. The CLI maps each branch of
// this hierarchy to its own exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data: malformed CSV cells, unknown levels, schema mismatches.
class DataError : public Error {
public:
    using Error::Error;
};

class MissingFileError : public DataError {
public:
    explicit MissingFileError(const std::string& path)
        : DataError("file not found: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t row, std::string column, const std::string& detail)
        : DataError("row " + std::to_string(row) + ", column '" + column + "': " + detail),
          row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class UnknownLevelError : public DataError {
public:
    UnknownLevelError(std::size_t row, std::string column, std::string level)
        : DataError("row " + std::to_string(row) + ", column '" + column +
                    "': unknown category level '" + level + "'"),
          row_(row), column_(std::move(column)), level_(std::move(level)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }
    const std::string& level() const noexcept { return level_; }

private:
    std::size_t row_;
    std::string column_;
    std::string level_;
};

class MissingValueError : public DataError {
public:
    MissingValueError(std::size_t row, std::string column)
        : DataError("row " + std::to_string(row) + ", column '" + column + "': missing value"),
          row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class ZeroVarianceError : public DataError {
public:
    explicit ZeroVarianceError(std::string column)
        : DataError("column '" + column + "' has zero standard deviation"),
          column_(std::move(column)) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

// Invalid configuration or violated preconditions.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite intermediate values. `row` is the offending observation when
// one is known, otherwise npos.
class NumericError : public Error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit NumericError(const std::string& what, std::size_t row = npos)
        : Error(row == npos ? what : what + " (row " + std::to_string(row) + ")"), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace anam
