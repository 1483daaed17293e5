#include "reparamcad/manipulation.hpp"

#include <algorithm>
#include <cmath>

#include "reparamcad/error.hpp"

namespace reparamcad::manipulation {

ManipulationState ManipulationState::rest(const ManipulationSpace& space) {
    ManipulationState s;
    s.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.variation_count()));
    s.offsets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.free_count()));
    for (const auto& g : space.groups) s.toggles.push_back(g.default_on);
    return s;
}

ManipulationSpace build_space(const csg::Model& model, const ParamVector& x0, const discovery::VariationSet& vars,
                              const Eigen::MatrixXd& constraint_rows, const discovery::DiscreteGroups& groups,
                              const discovery::Projector& projector, bool bounded) {
    vars.validate(model.dimension());
    if (static_cast<std::size_t>(constraint_rows.cols()) != model.dimension()) {
        throw DimensionMismatch("constraint rows do not match model dimension");
    }
    ManipulationSpace space;
    space.model = model;
    space.subspace = numeric::nullspace(constraint_rows);
    space.method = projector.method();
    space.bounded = bounded;
    try {
        space.base = projector.project(space.subspace, x0);
    } catch (const InfeasibleProjection& e) {
        throw InfeasibleProjection(std::string("base model: ") + e.what());
    }
    space.base_reduced = space.subspace.reduce(space.base);
    space.lower = space.base_reduced;
    space.upper = space.base_reduced;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        ParamVector projected;
        try {
            projected = projector.project(space.subspace, vars.vectors[i]);
        } catch (const InfeasibleProjection& e) {
            throw InfeasibleProjection("variation '" + vars.labels[i] + "': " + e.what());
        }
        const Eigen::VectorXd y = space.subspace.reduce(projected);
        space.lower = space.lower.cwiseMin(y);
        space.upper = space.upper.cwiseMax(y);
        space.labels.push_back(vars.labels[i]);
        space.deltas.push_back(projected - space.base);
    }
    for (std::size_t g = 0; g < groups.groups.size(); ++g) {
        PartGroup group;
        group.members = groups.groups[g];
        for (const std::size_t p : group.members) {
            if (!group.label.empty()) group.label += "+";
            group.label += model.primitive(p).name;
        }
        space.groups.push_back(std::move(group));
    }
    return space;
}

Evaluation evaluate(const ManipulationSpace& space, const ManipulationState& state) {
    if (static_cast<std::size_t>(state.weights.size()) != space.variation_count()) {
        throw DimensionMismatch("state has " + std::to_string(state.weights.size()) + " weights, space has " +
                                std::to_string(space.variation_count()) + " variations");
    }
    if (static_cast<std::size_t>(state.offsets.size()) != space.free_count()) {
        throw DimensionMismatch("state has " + std::to_string(state.offsets.size()) + " offsets, space has " +
                                std::to_string(space.free_count()) + " free variables");
    }
    if (state.toggles.size() != space.groups.size()) {
        throw DimensionMismatch("state has " + std::to_string(state.toggles.size()) + " toggles, space has " +
                                std::to_string(space.groups.size()) + " groups");
    }
    Evaluation out;
    ParamVector semantic = ParamVector::Zero(space.base.size());
    double total = 0.0;
    for (std::size_t i = 0; i < space.variation_count(); ++i) {
        const double raw = state.weights[static_cast<Eigen::Index>(i)];
        const double w = std::clamp(std::isfinite(raw) ? raw : 0.0, 0.0, 1.0);
        if (w != raw) out.warnings.push_back("weight '" + space.labels[i] + "' clamped to [0, 1]");
        if (w == 0.0) continue;
        semantic += w * space.deltas[i];
        total += w;
    }
    if (total > 1.0) semantic /= total;

    Eigen::VectorXd offsets = state.offsets;
    for (Eigen::Index k = 0; k < offsets.size(); ++k) {
        if (!std::isfinite(offsets[k])) {
            offsets[k] = 0.0;
            out.warnings.push_back("offset for '" + space.free_name(static_cast<std::size_t>(k)) + "' reset to 0");
            continue;
        }
        if (!space.bounded) continue;
        const double lo = space.lower[k] - space.base_reduced[k];
        const double hi = space.upper[k] - space.base_reduced[k];
        const double clamped = std::clamp(offsets[k], lo, hi);
        if (clamped != offsets[k]) {
            out.warnings.push_back("offset for '" + space.free_name(static_cast<std::size_t>(k)) +
                                   "' clamped to bounds");
            offsets[k] = clamped;
        }
    }
    out.x = space.base + semantic;
    if (offsets.size() > 0) out.x += space.subspace.basis * offsets;

    out.present.assign(space.model.size(), true);
    for (std::size_t g = 0; g < space.groups.size(); ++g) {
        if (state.toggles[g]) continue;
        for (const std::size_t p : space.groups[g].members) out.present[p] = false;
    }
    return out;
}

BoundsCheck bounds_check(const ManipulationSpace& space, const ParamVector& x) {
    if (x.size() != space.base.size()) throw DimensionMismatch("parameter vector does not match space");
    if (space.subspace.residual(x) > 1e-6) return {false, "violates constraints"};
    if (!space.bounded) return {true, ""};
    const Eigen::VectorXd y = space.subspace.reduce(x);
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        const double tol = 1e-9 * (1.0 + std::abs(space.lower[k]) + std::abs(space.upper[k]));
        if (y[k] < space.lower[k] - tol || y[k] > space.upper[k] + tol) {
            return {false, "free variable '" + space.free_name(static_cast<std::size_t>(k)) + "' out of bounds"};
        }
    }
    return {true, ""};
}

}  // namespace reparamcad::manipulation
