#pragma once

// The re-parameterized design space: variation sliders that interpolate
// between projected variations, bounded free-variable sliders, and toggles
// for optional part groups.

#include <string>
#include <vector>

#include "reparamcad/discovery.hpp"
#include "reparamcad/numeric.hpp"

namespace reparamcad::manipulation {

using csg::ParamVector;

struct PartGroup {
    std::vector<std::size_t> members;  // primitive indices
    bool default_on = true;
    std::string label;
};

struct ManipulationSpace {
    csg::Model model;
    numeric::Subspace subspace;
    discovery::ProjectionMethod method = discovery::ProjectionMethod::FaceLeastSquares;
    ParamVector base;                  // projected initial parameters
    Eigen::VectorXd base_reduced;      // free coordinates of `base`
    std::vector<std::string> labels;   // one per variation slider
    std::vector<ParamVector> deltas;   // projected variation minus base
    Eigen::VectorXd lower;             // reduced-coordinate bounds
    Eigen::VectorXd upper;
    std::vector<PartGroup> groups;
    bool bounded = true;

    std::size_t variation_count() const { return deltas.size(); }
    std::size_t free_count() const { return subspace.nullity(); }
    /// Name of free variable k, e.g. "seat.sx".
    std::string free_name(std::size_t k) const { return model.param_name(subspace.free.at(k)); }
};

struct ManipulationState {
    Eigen::VectorXd weights;  // per variation, in [0, 1]
    Eigen::VectorXd offsets;  // per free variable, relative to the base
    std::vector<bool> toggles;  // per group, true = shown

    /// All sliders at rest, every group at its default.
    static ManipulationState rest(const ManipulationSpace& space);
};

struct Evaluation {
    ParamVector x;
    std::vector<bool> present;  // per primitive
    std::vector<std::string> warnings;
};

/// Projects x0 and every variation with `projector`; bounds per free
/// variable span the projected base and variations.
ManipulationSpace build_space(const csg::Model& model, const ParamVector& x0, const discovery::VariationSet& vars,
                              const Eigen::MatrixXd& constraint_rows, const discovery::DiscreteGroups& groups,
                              const discovery::Projector& projector, bool bounded = true);

/// x = base + s + N * offsets where s = sum w_i d_i, divided by W = sum w_i
/// when W > 1. Out-of-range weights and offsets are clamped with a warning.
/// Throws DimensionMismatch on wrong state sizes.
Evaluation evaluate(const ManipulationSpace& space, const ManipulationState& state);

struct BoundsCheck {
    bool ok = false;
    std::string reason;
};

/// Whether x lies in the constraint subspace with its free coordinates
/// inside the slider bounds.
BoundsCheck bounds_check(const ManipulationSpace& space, const ParamVector& x);

}  // namespace reparamcad::manipulation
