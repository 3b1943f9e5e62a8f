#pragma once

#include <stdexcept>
#include <string>

namespace lorentz {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LORENTZ_ERROR(Name)   \
  class Name : public Error { \
   public:                    \
    using Error::Error;       \
  };

LORENTZ_ERROR(PreconditionViolation)
LORENTZ_ERROR(ParseError)
/// Substitution rule fails its consistency checks.
LORENTZ_ERROR(RuleInconsistency)
LORENTZ_ERROR(NonPrimitive)
/// A query needs data outside the patch window.
LORENTZ_ERROR(WindowTooSmall)
/// Scatterers overlap or touch (no-corners violation).
LORENTZ_ERROR(DegenerateField)
LORENTZ_ERROR(HorizonEscape)
/// Tangential or near-tangential collision.
LORENTZ_ERROR(Singularity)
/// Trajectory left the certified region.
LORENTZ_ERROR(RegionExit)
LORENTZ_ERROR(OutgoingInput)
LORENTZ_ERROR(UnrealizedClass)

#undef LORENTZ_ERROR

}  // namespace lorentz
