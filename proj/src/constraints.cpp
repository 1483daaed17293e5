#include "reparamcad/constraints.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <tuple>

#include "reparamcad/error.hpp"

namespace reparamcad::constraints {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"dim_equal", "coplanar", "coaxial", "keypoint"};
constexpr std::array<char, 3> kAxis = {'x', 'y', 'z'};

std::string face_label(const csg::Model& m, std::size_t prim, int axis, bool positive) {
    return m.primitive(prim).name + (positive ? ".+" : ".-") + kAxis[static_cast<std::size_t>(axis)];
}

Eigen::RowVectorXd face_row(const csg::Model& m, std::size_t prim, int axis, bool positive) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(m.dimension()));
    const auto o = static_cast<Eigen::Index>(m.offset(prim));
    r[o + axis] = 1.0;
    r[o + 3 + axis] = positive ? 0.5 : -0.5;
    return r;
}

// Sorted row list, the identity used for merging equal row-sets.
std::vector<std::vector<double>> row_key(const SemanticConstraint& c) {
    std::vector<std::vector<double>> key;
    for (const auto& r : c.rows) key.emplace_back(r.coeffs.data(), r.coeffs.data() + r.coeffs.size());
    std::sort(key.begin(), key.end());
    return key;
}

Eigen::MatrixXd stack(const SemanticConstraint& c) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(c.rows.size()), c.rows.front().coeffs.size());
    for (std::size_t i = 0; i < c.rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = c.rows[i].coeffs;
    return m;
}

Eigen::Index rank_of(const Eigen::MatrixXd& m) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-10);
    return lu.rank();
}

// rowspan(a) is a subset of rowspan(b)
bool span_contained(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd both(a.rows() + b.rows(), a.cols());
    both << a, b;
    return rank_of(both) == rank_of(b);
}

// A cylinder's transverse scale components are its radius; radii of
// cylinders with different axes are never equated.
bool is_radial(const csg::Primitive& p, int axis) {
    const int cyl = csg::cylinder_axis(p.kind);
    return cyl >= 0 && cyl != axis;
}

}  // namespace

std::string_view to_string(ConstraintKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

ConstraintKind kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return static_cast<ConstraintKind>(i);
    }
    throw InvalidArgument("unknown constraint kind '" + std::string(name) + "'");
}

int arity(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::DimEqual:
        case ConstraintKind::Coplanar: return 1;
        case ConstraintKind::Coaxial: return 2;
        case ConstraintKind::KeypointCoincident: return 3;
    }
    return 0;
}

ConstraintRow ConstraintRow::normalized(Eigen::RowVectorXd raw) {
    const double scale = raw.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) throw InvalidArgument("constraint row must have a nonzero coefficient");
    raw /= scale;
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        if (raw[i] != 0.0) {
            if (raw[i] < 0.0) raw = -raw;
            break;
        }
    }
    return ConstraintRow{std::move(raw)};
}

double SemanticConstraint::max_residual(const ParamVector& x) const {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(r.residual(x)));
    return worst;
}

CandidatePool enumerate_candidates(const csg::Model& model, const ParamVector& x0, double eps_rel) {
    if (static_cast<std::size_t>(x0.size()) != model.dimension()) {
        throw DimensionMismatch("x0 does not match model dimension");
    }
    if (!(eps_rel >= 0.0)) throw InvalidArgument("eps_rel must be non-negative");
    const csg::Model m = csg::unflatten(model, x0);
    const double tol = eps_rel * csg::bounding_box(model, x0).diagonal();
    const std::size_t count = m.size();
    const auto d = static_cast<Eigen::Index>(m.dimension());

    std::vector<SemanticConstraint> raw;
    auto keep_if_holds = [&](SemanticConstraint c) {
        if (c.max_residual(x0) <= tol) raw.push_back(std::move(c));
    };

    // dimension equality over all scale components
    for (std::size_t i = 0; i < count; ++i) {
        for (int a = 0; a < 3; ++a) {
            for (std::size_t j = i; j < count; ++j) {
                for (int b = (j == i ? a + 1 : 0); b < 3; ++b) {
                    if (i != j && is_radial(m.primitive(i), a) && is_radial(m.primitive(j), b) &&
                        csg::cylinder_axis(m.primitive(i).kind) != csg::cylinder_axis(m.primitive(j).kind)) {
                        continue;
                    }
                    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(d);
                    r[static_cast<Eigen::Index>(m.offset(i)) + 3 + a] += 1.0;
                    r[static_cast<Eigen::Index>(m.offset(j)) + 3 + b] -= 1.0;
                    SemanticConstraint c;
                    c.kind = ConstraintKind::DimEqual;
                    c.rows.push_back(ConstraintRow::normalized(r));
                    c.participants = {i, j};
                    c.features = {a, b};
                    c.label = "dim_equal(" + m.primitive(i).name + ".s" + kAxis[a] + ", " + m.primitive(j).name +
                              ".s" + kAxis[b] + ")";
                    keep_if_holds(std::move(c));
                }
            }
        }
    }

    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i + 1; j < count; ++j) {
            // coplanarity of same-axis faces, all four sign pairings
            for (int a = 0; a < 3; ++a) {
                for (const bool pi : {false, true}) {
                    for (const bool pj : {false, true}) {
                        SemanticConstraint c;
                        c.kind = ConstraintKind::Coplanar;
                        c.rows.push_back(ConstraintRow::normalized(face_row(m, i, a, pi) - face_row(m, j, a, pj)));
                        c.participants = {i, j};
                        c.features = {2 * a + (pi ? 1 : 0), 2 * a + (pj ? 1 : 0)};
                        c.label = "coplanar(" + face_label(m, i, a, pi) + ", " + face_label(m, j, a, pj) + ")";
                        keep_if_holds(std::move(c));
                    }
                }
            }
            // coaxiality along each axis: both transverse translations equal
            for (int a = 0; a < 3; ++a) {
                SemanticConstraint c;
                c.kind = ConstraintKind::Coaxial;
                for (int b = 0; b < 3; ++b) {
                    if (b == a) continue;
                    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(d);
                    r[static_cast<Eigen::Index>(m.offset(i)) + b] = 1.0;
                    r[static_cast<Eigen::Index>(m.offset(j)) + b] = -1.0;
                    c.rows.push_back(ConstraintRow::normalized(r));
                }
                c.participants = {i, j};
                c.features = {a, a};
                c.label = "coaxial(" + m.primitive(i).name + ", " + m.primitive(j).name + ", " + kAxis[a] + ")";
                keep_if_holds(std::move(c));
            }
        }
    }

    // keypoint coincidence
    const auto kps = csg::keypoints(m);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i + 1; j < count; ++j) {
            for (int ki = 0; ki <= csg::Keypoint::kCenter; ++ki) {
                const auto& a = kps[9 * i + static_cast<std::size_t>(ki)];
                for (int kj = 0; kj <= csg::Keypoint::kCenter; ++kj) {
                    const auto& b = kps[9 * j + static_cast<std::size_t>(kj)];
                    if ((a.position(x0) - b.position(x0)).cwiseAbs().maxCoeff() > tol) continue;
                    SemanticConstraint c;
                    c.kind = ConstraintKind::KeypointCoincident;
                    for (int r = 0; r < 3; ++r) c.rows.push_back(ConstraintRow::normalized(a.expr.row(r) - b.expr.row(r)));
                    c.participants = {i, j};
                    c.features = {ki, kj};
                    c.label = "keypoint(" + a.label(m) + ", " + b.label(m) + ")";
                    keep_if_holds(std::move(c));
                }
            }
        }
    }

    // Merge identical row-sets, keeping the first in enumeration order.
    std::map<std::vector<std::vector<double>>, std::size_t> seen;
    std::vector<SemanticConstraint> unique;
    for (auto& c : raw) {
        if (seen.emplace(row_key(c), unique.size()).second) unique.push_back(std::move(c));
    }

    // Drop a constraint whose row span lies inside another constraint of the
    // same kind over the same participants.
    std::vector<bool> drop(unique.size(), false);
    std::map<std::tuple<int, std::size_t, std::size_t>, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < unique.size(); ++k) {
        const auto& c = unique[k];
        groups[{static_cast<int>(c.kind), c.participants[0], c.participants[1]}].push_back(k);
    }
    for (const auto& [key, members] : groups) {
        if (members.size() < 2 || std::get<0>(key) == static_cast<int>(ConstraintKind::DimEqual) ||
            std::get<0>(key) == static_cast<int>(ConstraintKind::Coplanar)) {
            continue;  // single-row kinds: equal spans were merged above
        }
        for (const std::size_t a : members) {
            for (const std::size_t b : members) {
                if (a == b || drop[b] || drop[a]) continue;
                if (span_contained(stack(unique[a]), stack(unique[b]))) drop[a] = true;
            }
        }
    }

    CandidatePool pool;
    pool.tolerance = tol;
    for (std::size_t k = 0; k < unique.size(); ++k) {
        if (!drop[k]) pool.constraints.push_back(std::move(unique[k]));
    }
    return pool;
}

namespace {

Eigen::MatrixXd stack_unique(const std::vector<const ConstraintRow*>& rows, std::size_t dimension) {
    std::vector<const ConstraintRow*> unique;
    for (const auto* r : rows) {
        if (static_cast<std::size_t>(r->coeffs.size()) != dimension) {
            throw DimensionMismatch("constraint row does not match model dimension");
        }
        const bool dup = std::any_of(unique.begin(), unique.end(), [&](const ConstraintRow* u) { return *u == *r; });
        if (!dup) unique.push_back(r);
    }
    Eigen::MatrixXd c(static_cast<Eigen::Index>(unique.size()), static_cast<Eigen::Index>(dimension));
    for (std::size_t i = 0; i < unique.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = unique[i]->coeffs;
    return c;
}

}  // namespace

Eigen::MatrixXd rows_of(const std::vector<const SemanticConstraint*>& set, std::size_t dimension) {
    std::vector<const ConstraintRow*> rows;
    for (const auto* c : set) {
        for (const auto& r : c->rows) rows.push_back(&r);
    }
    return stack_unique(rows, dimension);
}

Eigen::MatrixXd rows_of(const std::vector<SemanticConstraint>& set, std::size_t dimension) {
    std::vector<const SemanticConstraint*> ptrs;
    for (const auto& c : set) ptrs.push_back(&c);
    return rows_of(ptrs, dimension);
}

bool tie_break_less(const SemanticConstraint& a, const SemanticConstraint& b) {
    return std::tie(a.kind, a.participants, a.features) < std::tie(b.kind, b.participants, b.features);
}

}  // namespace reparamcad::constraints
