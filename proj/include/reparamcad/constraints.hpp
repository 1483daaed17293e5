#pragma once

// Candidate geometric relations found in the initial model, each a small
// conjunction of homogeneous linear rows c . x = 0.

#include <string>
#include <vector>

#include "reparamcad/csg.hpp"

namespace reparamcad::constraints {

using csg::ParamVector;

enum class ConstraintKind { DimEqual = 0, Coplanar = 1, Coaxial = 2, KeypointCoincident = 3 };

std::string_view to_string(ConstraintKind kind);
ConstraintKind kind_from_string(std::string_view name);

/// Number of rows a constraint of this kind carries.
int arity(ConstraintKind kind);

/// Dense row of length d, scaled to unit max-abs with a positive leading
/// nonzero.
struct ConstraintRow {
    Eigen::RowVectorXd coeffs;

    static ConstraintRow normalized(Eigen::RowVectorXd raw);
    double residual(const ParamVector& x) const { return coeffs.dot(x); }
    bool operator==(const ConstraintRow& other) const { return coeffs == other.coeffs; }
};

struct SemanticConstraint {
    ConstraintKind kind = ConstraintKind::Coplanar;
    std::vector<ConstraintRow> rows;
    /// Primitive indices involved (two entries, equal for within-primitive
    /// dimension equality).
    std::vector<std::size_t> participants;
    /// Feature ids within the participants: face (2*axis + positive),
    /// keypoint id, coaxial axis, or scale axis.
    std::vector<int> features;
    std::string label;

    double max_residual(const ParamVector& x) const;
};

struct CandidatePool {
    std::vector<SemanticConstraint> constraints;
    double tolerance = 0.0;  // absolute: eps_rel * bbox diagonal

    std::size_t size() const { return constraints.size(); }
    bool empty() const { return constraints.empty(); }
};

inline constexpr double kDefaultEpsRel = 1e-5;

/// Every coplanarity, coaxiality, keypoint coincidence and dimension
/// equality that holds at x0 within eps_rel * bbox diagonal, in a fixed
/// deterministic order.
CandidatePool enumerate_candidates(const csg::Model& model, const ParamVector& x0,
                                   double eps_rel = kDefaultEpsRel);

/// Stacked rows of the given constraints with exact duplicates removed
/// (m x d; 0 x d for an empty set).
Eigen::MatrixXd rows_of(const std::vector<SemanticConstraint>& set, std::size_t dimension);
Eigen::MatrixXd rows_of(const std::vector<const SemanticConstraint*>& set, std::size_t dimension);

/// Ordering key used for greedy tie-breaks: kind priority, then participants.
bool tie_break_less(const SemanticConstraint& a, const SemanticConstraint& b);

}  // namespace reparamcad::constraints
