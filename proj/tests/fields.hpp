#pragma once

// Certified fields shared by the unit tests, built once per process.

#include "lorentz/scatterer.hpp"

namespace testfields {

inline constexpr const char* kStar =
    "depth = 1\nclass star=6 -> circle r=0.475\nclass star=4 -> circle r=0.46\nclass star=3 -> circle r=0.45\nclass * -> circle r=0.44\n";

inline lorentz::ScattererField certified(const lorentz::SubstitutionSystem& sys, int gen, const lorentz::Assignment& a) {
  auto s = std::make_shared<const lorentz::SubstitutionSystem>(sys);
  auto p = std::make_shared<const lorentz::PatchRegion>(lorentz::supertile_patch(s, 0, gen));
  lorentz::ScattererField f = lorentz::instantiate_field(p, a);
  const auto cert = lorentz::certify_category_A(f);
  if (!cert.verified()) throw lorentz::HorizonEscape("test field is not certified");
  lorentz::assign_addresses(f, 2.0 * cert.M + 2.0);
  return f;
}

/// The star field on a generation-6 half-hex supertile.
inline const lorentz::ScattererField& star() {
  static const lorentz::ScattererField f = certified(lorentz::half_hex(), 6, lorentz::parse_assignment_text(kStar));
  return f;
}

/// Constant radius 0.45 on a generation-6 half-hex supertile: a periodic Lorentz gas.
inline const lorentz::ScattererField& constant() {
  static const lorentz::ScattererField f = certified(lorentz::half_hex(), 6, lorentz::Assignment::constant(0.0, 0.45));
  return f;
}

}  // namespace testfields
