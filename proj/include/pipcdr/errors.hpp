#pragma once

#include <stdexcept>
#include <string>

namespace pipcdr {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimMismatch : Error {
    explicit DimMismatch(const std::string& msg) : Error(msg) {}
};

struct ZeroRow : Error {
    explicit ZeroRow(const std::string& msg) : Error(msg) {}
};

struct BatchTooSmall : Error {
    explicit BatchTooSmall(const std::string& msg) : Error(msg) {}
};

struct NoForwardState : Error {
    explicit NoForwardState(const std::string& msg) : Error(msg) {}
};

struct SingleCluster : Error {
    explicit SingleCluster(const std::string& msg) : Error(msg) {}
};

struct DegenerateBatch : Error {
    explicit DegenerateBatch(const std::string& msg) : Error(msg) {}
};

struct TooFewPoints : Error {
    explicit TooFewPoints(const std::string& msg) : Error(msg) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& msg) : Error(msg) {}
};

struct EmptyReference : Error {
    explicit EmptyReference(const std::string& msg) : Error(msg) {}
};

struct InfeasibleSeparation : Error {
    explicit InfeasibleSeparation(const std::string& msg) : Error(msg) {}
};

struct LabelsMissing : Error {
    explicit LabelsMissing(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct RaggedRows : Error {
    explicit RaggedRows(const std::string& msg) : Error(msg) {}
};

struct ConfigInvalid : Error {
    explicit ConfigInvalid(const std::string& msg) : Error(msg) {}
};

} // namespace pipcdr
