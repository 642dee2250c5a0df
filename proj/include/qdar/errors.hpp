#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qdar {

enum class ErrorKind {
    InvalidArgument,
    NonFinite,
    DidNotConverge,
    Degenerate,
    SingularInformation,
    InsufficientData,
    RankDeficient,
    Parse,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::DidNotConverge: return "DidNotConverge";
        case ErrorKind::Degenerate: return "Degenerate";
        case ErrorKind::SingularInformation: return "SingularInformation";
        case ErrorKind::InsufficientData: return "InsufficientData";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::Parse: return "Parse";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
    if (!condition) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace qdar
