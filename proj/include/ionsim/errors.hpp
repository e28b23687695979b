#pragma once

#include <stdexcept>
#include <string>

namespace ionsim {

// Base class for all library errors. `code()` is stable and is what the CLI
// maps to exit codes and machine-readable error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define IONSIM_DEFINE_ERROR(Name)                                     \
    class Name : public Error {                                       \
    public:                                                            \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

// crystal
IONSIM_DEFINE_ERROR(NonConvergence);
IONSIM_DEFINE_ERROR(UnstableTrap);
IONSIM_DEFINE_ERROR(AmbiguousStructure);
IONSIM_DEFINE_ERROR(BracketFailure);

// phonons
IONSIM_DEFINE_ERROR(ImaginaryFrequency);

// generic precondition violation
IONSIM_DEFINE_ERROR(InvalidInput);

// couplings
IONSIM_DEFINE_ERROR(ResonantMode);
IONSIM_DEFINE_ERROR(ZeroBond);
IONSIM_DEFINE_ERROR(EmptyModel);

// dynamics
IONSIM_DEFINE_ERROR(DimensionOverflow);
IONSIM_DEFINE_ERROR(StepRejection);

// ising-ed
IONSIM_DEFINE_ERROR(InvalidRange);
IONSIM_DEFINE_ERROR(NoConvergence);
IONSIM_DEFINE_ERROR(SizeLimit);
IONSIM_DEFINE_ERROR(FitDegenerate);

// error-budget
IONSIM_DEFINE_ERROR(RegimeViolation);
IONSIM_DEFINE_ERROR(PositivityLoss);
IONSIM_DEFINE_ERROR(TruncationNotConverged);

// cli
IONSIM_DEFINE_ERROR(ConfigError);
IONSIM_DEFINE_ERROR(ComputeError);
IONSIM_DEFINE_ERROR(IOError);
IONSIM_DEFINE_ERROR(UsageError);

#undef IONSIM_DEFINE_ERROR

}  // namespace ionsim
