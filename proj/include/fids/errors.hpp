#pragma once

#include <stdexcept>
#include <string>

namespace fids {

// Base of every error raised by the library. `kind()` is the spec-level name
// (AxiomViolation, SizeLimit, ...), used by the CLI to pick an exit code.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), m_kind(std::move(kind)) {}
    const std::string& kind() const { return m_kind; }

private:
    std::string m_kind;
};

#define FIDS_DEFINE_ERROR(Name)                                                \
    struct Name : Error {                                                      \
        explicit Name(const std::string& what) : Error(#Name, what) {}         \
    };

FIDS_DEFINE_ERROR(AxiomViolation)
FIDS_DEFINE_ERROR(NotPlanar)
FIDS_DEFINE_ERROR(SizeLimit)
FIDS_DEFINE_ERROR(OutOfLattice)
FIDS_DEFINE_ERROR(MissingFolding)
FIDS_DEFINE_ERROR(ConvergenceFailure)
FIDS_DEFINE_ERROR(DomainError)
FIDS_DEFINE_ERROR(ViolatesB)
FIDS_DEFINE_ERROR(NegativePotential)
FIDS_DEFINE_ERROR(DegenerateLaw)
FIDS_DEFINE_ERROR(PreconditionMNotReached)
FIDS_DEFINE_ERROR(EmptyWindow)
FIDS_DEFINE_ERROR(IncompatiblePhi)
FIDS_DEFINE_ERROR(ConfigError)
FIDS_DEFINE_ERROR(GateFailure)

#undef FIDS_DEFINE_ERROR

} // namespace fids
