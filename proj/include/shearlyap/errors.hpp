#pragma once

#include <stdexcept>
#include <string>

namespace shearlyap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SHEARLYAP_ERROR(Name)                                  \
    class Name : public Error {                                \
    public:                                                    \
        explicit Name(const std::string& what)                 \
            : Error(std::string(#Name ": ") + what) {}         \
    };

SHEARLYAP_ERROR(NotUnimodular)
SHEARLYAP_ERROR(EigenvalueOnUnitCircle)
SHEARLYAP_ERROR(ComplexSpectrumUnsupported)
SHEARLYAP_ERROR(NormalizationFailed)
SHEARLYAP_ERROR(NumericalBlowup)
SHEARLYAP_ERROR(PlaneNotInvariant)
SHEARLYAP_ERROR(PoorFit)
SHEARLYAP_ERROR(EmptyCone)
SHEARLYAP_ERROR(ZeroVector)
SHEARLYAP_ERROR(ConeLoss)
SHEARLYAP_ERROR(TooFewStrips)
SHEARLYAP_ERROR(DomainError)
SHEARLYAP_ERROR(NotConverged)
SHEARLYAP_ERROR(HypothesisViolated)
SHEARLYAP_ERROR(ValidationError)
SHEARLYAP_ERROR(ConditionsNotMet)
SHEARLYAP_ERROR(ControlFailed)

#undef SHEARLYAP_ERROR

}  // namespace shearlyap
