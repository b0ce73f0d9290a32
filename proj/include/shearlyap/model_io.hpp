#pragma once

#include <iosfwd>
#include <string>

#include "shearlyap/adapted_bound.hpp"

namespace shearlyap {

// Plain text layout, one record per line:
//   adapted-model 1
//   params <beta> <delta> <lambda>
//   atom <index> <weight> <sector start> <sector length>
//   child <atom> <target> <weight> <good 0|1> <m00> <m01> <m10> <m11>
//   end
void write_model(std::ostream& os, const AdaptedFamilyModel& m);
AdaptedFamilyModel read_model(std::istream& is);  // throws ValidationError

std::string model_to_string(const AdaptedFamilyModel& m);
AdaptedFamilyModel model_from_string(const std::string& text);

}  // namespace shearlyap
