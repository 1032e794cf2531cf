#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rwre/lattice.hpp"

namespace rwre {

enum class RangeKind { SpaceTime, SpaceOnly };

inline constexpr std::size_t kMaxSteps = 6;

/// Transition probabilities indexed like StepRange::steps; unused slots are zero.
using Kernel = std::array<double, kMaxSteps>;

/// Allowed steps of the walk, in lexicographic order of their coordinates.
///   SpaceTime, d=2: (-1,1) (1,1)
///   SpaceTime, d=3: (-1,0,1) (0,-1,1) (0,1,1) (1,0,1)
///   SpaceOnly, d=2: (-1,0) (0,-1) (0,1) (1,0)
///   SpaceOnly, d=3: (-1,0,0) (0,-1,0) (0,0,-1) (0,0,1) (0,1,0) (1,0,0)
struct StepRange {
  RangeKind kind = RangeKind::SpaceTime;
  int d = 2;
  std::vector<Site> steps;

  static StepRange space_time(int d);
  static StepRange space_only(int d);

  std::size_t size() const { return steps.size(); }
  /// Index of a step, or -1 when it is not in the range.
  int index_of(const Site& z) const;
  /// Index of +e_j / -e_j (0-based axis j) in this range; -1 when absent.
  int index_of_axis(int axis, int sign) const;
};

struct SupportPoint {
  Kernel probs{};
  double weight = 0.0;
};

/// Parametric family: each opposite pair of steps (z, z') listed in `pairs`
/// carries pi(z') = base(z') + amplitude * (2U - 1), pi(z) = base(z) - amplitude * (2U - 1)
/// with one independent uniform U per pair, drawn by inverse CDF from the site stream.
struct PairUniformLaw {
  Kernel base{};
  double amplitude = 0.0;
  std::vector<std::array<int, 2>> pairs;
};

/// One-site law of the transition vector.
class MarginalLaw {
 public:
  static MarginalLaw finite(StepRange range, std::vector<SupportPoint> support, double kappa,
                            bool isotropic = false);
  static MarginalLaw pair_uniform(StepRange range, PairUniformLaw law, double kappa);

  const StepRange& range() const { return range_; }
  int d() const { return range_.d; }
  double kappa() const { return kappa_; }
  bool is_finite() const { return !parametric_; }
  bool isotropic() const { return isotropic_; }
  std::span<const SupportPoint> support() const;
  const PairUniformLaw& parametric() const;

  /// Averaged one-step law q(z) = E[pi(0,z)].
  const Kernel& mean_kernel() const { return mean_; }
  /// E[v(omega)] = sum_z q(z) z.
  Vec mean_drift() const;
  /// True when every realization equals the mean kernel.
  bool degenerate() const;

  /// Finite laws: support index selected by the uniform u in [0,1).
  std::size_t index_for(double u) const;
  /// Kernel realized from a site key (the per-site stream).
  Kernel realize(std::uint64_t key) const;

  /// Smallest value of <v, u> over the support (exact for both families).
  double min_drift_projection(const Vec& u) const;

 private:
  MarginalLaw() = default;
  void validate() const;
  void finish();

  StepRange range_;
  std::vector<SupportPoint> support_;
  std::vector<double> cumulative_;
  PairUniformLaw param_;
  bool parametric_ = false;
  bool isotropic_ = false;
  double kappa_ = 0.0;
  Kernel mean_{};
};

/// Drift v = sum_z pi(0,z) z of one kernel.
Vec drift(const Kernel& kernel, const StepRange& range);

/// ess inf <v, direction> > 0 over the marginal's support.
bool non_nestling(const MarginalLaw& law, const Vec& direction);

/// Infinite i.i.d. field realized lazily: omega_x is a pure function of (seed, x).
class EnvironmentModel {
 public:
  EnvironmentModel(std::shared_ptr<const MarginalLaw> marginal, std::uint64_t seed)
      : marginal_(std::move(marginal)), seed_(seed) {}
  EnvironmentModel(const MarginalLaw& marginal, std::uint64_t seed)
      : marginal_(std::make_shared<const MarginalLaw>(marginal)), seed_(seed) {}

  const MarginalLaw& marginal() const { return *marginal_; }
  std::shared_ptr<const MarginalLaw> marginal_ptr() const { return marginal_; }
  std::uint64_t seed() const { return seed_; }
  int d() const { return marginal_->d(); }
  const StepRange& range() const { return marginal_->range(); }

  EnvironmentModel with_seed(std::uint64_t seed) const { return {marginal_, seed}; }

  Kernel site_kernel(const Site& x) const;

  /// Finite laws only: index of the support point realized at x.
  std::size_t support_index(const Site& x) const;

 private:
  std::shared_ptr<const MarginalLaw> marginal_;
  std::uint64_t seed_;
};

/// Parameters of the class M_eps(d, p) of space-only laws.
struct ClassMSpec {
  int d = 2;
  double p_plus = 0.5;
  double p_zero = 0.3;
  double p_minus = 0.2;
  double epsilon = 0.05;
};

struct ValidationReport {
  struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
  };
  std::vector<Check> checks;
  /// Ellipticity implied by the support bounds: min(p+, p-, p0/(2(d-1)) - eps).
  double kappa = 0.0;

  bool ok() const;
};

/// Checks conditions (a)-(d) of the class definition plus eps <= p0/(4(d-1)).
/// Violations are reported, not thrown; non-finite or non-positive inputs throw ConfigError.
ValidationReport validate_class_m(const ClassMSpec& spec);

/// Canonical finite-support member of the class: transversal perturbation of
/// magnitude 3*eps/4, symmetrized exactly over the rotations fixing e_d
/// (x -> -x for d=2, the four quarter turns for d=3).
MarginalLaw canonical_class_m_marginal(const ClassMSpec& spec);

/// Linear isometries of Z^d fixing e_d under which class M laws are invariant.
/// Row-major integer matrices acting on column vectors.
using IntMatrix = std::array<std::array<int, kMaxDim>, kMaxDim>;
std::vector<IntMatrix> transversal_symmetries(int d);
Site apply(const IntMatrix& m, const Site& x);
Vec apply(const IntMatrix& m, const Vec& x);

}  // namespace rwre
