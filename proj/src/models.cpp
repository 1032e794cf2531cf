#include "rwre/models.hpp"

#include <algorithm>

namespace rwre::models {

MarginalLaw binary_space_time(double p_lo, double p_hi) {
  // steps (-1,1), (1,1)
  const Kernel lo{1.0 - p_lo, p_lo, 0, 0, 0, 0};
  const Kernel hi{1.0 - p_hi, p_hi, 0, 0, 0, 0};
  const double kappa = std::min({p_lo, p_hi, 1.0 - p_lo, 1.0 - p_hi});
  return MarginalLaw::finite(StepRange::space_time(2), {{lo, 0.5}, {hi, 0.5}}, kappa);
}

MarginalLaw two_point_2p1() {
  const Kernel a{0.15, 0.25, 0.25, 0.35, 0, 0};
  const Kernel b{0.35, 0.25, 0.25, 0.15, 0, 0};
  return MarginalLaw::finite(StepRange::space_time(3), {{a, 0.5}, {b, 0.5}}, 0.15);
}

MarginalLaw four_point_2p1() {
  const Kernel a{0.15, 0.25, 0.25, 0.35, 0, 0};
  const Kernel b{0.35, 0.25, 0.25, 0.15, 0, 0};
  const Kernel c{0.25, 0.15, 0.35, 0.25, 0, 0};
  const Kernel e{0.25, 0.35, 0.15, 0.25, 0, 0};
  return MarginalLaw::finite(StepRange::space_time(3), {{a, 0.25}, {b, 0.25}, {c, 0.25}, {e, 0.25}}, 0.15);
}

MarginalLaw degenerate_of(const MarginalLaw& law) {
  return MarginalLaw::finite(law.range(), {{law.mean_kernel(), 1.0}}, law.kappa());
}

}  // namespace rwre::models
