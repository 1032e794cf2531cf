#pragma once

#include <memory>

#include "rwre/env.hpp"

namespace rwre::models {

/// d=1+1 law with pi(0,(1,1)) = p_lo or p_hi, equiprobable.
MarginalLaw binary_space_time(double p_lo = 0.3, double p_hi = 0.7);

/// d=2+1 two-point law over (-e1, -e2, +e2, +e1):
/// (0.15, 0.25, 0.25, 0.35) or (0.35, 0.25, 0.25, 0.15), equiprobable.
MarginalLaw two_point_2p1();

/// d=2+1 four-point law: the two-point law plus its copy along e2.
MarginalLaw four_point_2p1();

/// Single-atom law at the averaged kernel of `law` (no disorder).
MarginalLaw degenerate_of(const MarginalLaw& law);

}  // namespace rwre::models
