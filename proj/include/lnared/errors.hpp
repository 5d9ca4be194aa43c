#pragma once

#include <stdexcept>
#include <string>

namespace lnared {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define LNARED_DEFINE_ERROR(NAME)                                    \
    class NAME : public Error {                                      \
    public:                                                          \
        explicit NAME(const std::string& what) : Error(what) {}      \
    }

// linalg
LNARED_DEFINE_ERROR(DimensionMismatch);
LNARED_DEFINE_ERROR(NotStable);
LNARED_DEFINE_ERROR(NoConvergence);
LNARED_DEFINE_ERROR(NotPositiveDefinite);
LNARED_DEFINE_ERROR(NotFinite);

// network
LNARED_DEFINE_ERROR(ParseError);
LNARED_DEFINE_ERROR(UnboundParameter);
LNARED_DEFINE_ERROR(BadStoichiometry);
LNARED_DEFINE_ERROR(EvalError);
LNARED_DEFINE_ERROR(SingularJacobian);

// matclass
LNARED_DEFINE_ERROR(NotHPlus);
LNARED_DEFINE_ERROR(SingularCompanion);
LNARED_DEFINE_ERROR(CertificateUnavailable);

// gramian / sdp
LNARED_DEFINE_ERROR(Infeasible);
LNARED_DEFINE_ERROR(PatternMismatch);

// balance
LNARED_DEFINE_ERROR(HankelTie);
LNARED_DEFINE_ERROR(SingularFastBlock);
LNARED_DEFINE_ERROR(DiagonalStabilityLost);

// timescale
LNARED_DEFINE_ERROR(FastRootNotFound);
LNARED_DEFINE_ERROR(SingularFastJacobian);

// simulate
LNARED_DEFINE_ERROR(NonzeroFeedthrough);

// cli
LNARED_DEFINE_ERROR(ConfigError);

#undef LNARED_DEFINE_ERROR

} // namespace lnared
