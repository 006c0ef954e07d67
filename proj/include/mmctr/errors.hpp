#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmctr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point or vector left the region where a geometric formula is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Two operands were defined on different manifolds.
class SpecMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

/// A user or ad id that is not part of the vocabulary.
class UnknownEntity : public Error {
public:
    UnknownEntity(const std::string& what, std::size_t position = npos)
        : Error(what), position_(position) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    /// Position of the offending id inside a batch request, or npos.
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed line in an interaction log.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed checkpoint; carries the JSON pointer of the offending field.
class FormatError : public Error {
public:
    FormatError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

/// Evaluation set without both classes (or without any scorable record).
class DegenerateLabels : public Error {
public:
    DegenerateLabels(const std::string& what, std::size_t num_eval = 0)
        : Error(what), num_eval_(num_eval) {}

    std::size_t num_eval() const noexcept { return num_eval_; }

private:
    std::size_t num_eval_;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(std::size_t epoch, std::size_t batch)
        : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

}  // namespace mmctr
