#pragma once

#include <stdexcept>
#include <string>

namespace fcm {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error { using Error::Error; };

// algebra
struct NoProlongationExists : Error { using Error::Error; };
struct LimitExceeded : Error { using Error::Error; };
struct InvalidMatching : Error { using Error::Error; };
struct NotSolvableAtP : Error { using Error::Error; };
struct NoSquareCandidate : Error { using Error::Error; };

// carleman
struct OutOfRange : Error { using Error::Error; };
struct ConstructionFailed : Error { using Error::Error; };
struct DegenerateRegion : Error { using Error::Error; };

// pde / hum / compose
struct IllConditionedStep : Error { using Error::Error; };
struct Diverged : Error { using Error::Error; };
struct GridTooCoarse : Error { using Error::Error; };

// cli
struct ConfigError : Error { using Error::Error; };

}  // namespace fcm
