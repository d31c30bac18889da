#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace calibkit {

enum class ErrorKind {
    DimensionMismatch,
    NonFiniteFeature,
    EmptyDomain,
    ParseError,
    SchemaError,
    IoError,
    RankError,
    ConfigError,
    InvalidParameter,
    MissingPseudoLabels,
    SingularSystem,
    LengthMismatch,
    NoLabeledSamples,
    TooFewPoints,
    DegenerateTable,
    OutOfRange,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the toolkit carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

}  // namespace calibkit
