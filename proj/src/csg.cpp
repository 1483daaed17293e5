#include "reparamcad/csg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "reparamcad/error.hpp"

namespace reparamcad::csg {

namespace {

constexpr std::array<std::string_view, 5> kKindNames = {"cube", "cylinder_x", "cylinder_y",
                                                        "cylinder_z", "cone_cylinder_y"};

constexpr std::array<char, 3> kAxisNames = {'x', 'y', 'z'};

}  // namespace

std::string_view to_string(PrimitiveKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

PrimitiveKind kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return static_cast<PrimitiveKind>(i);
    }
    throw InvalidArgument("unknown primitive kind '" + std::string(name) + "'");
}

bool is_cylinder(PrimitiveKind kind) { return kind != PrimitiveKind::Cube; }

int cylinder_axis(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::CylinderX: return 0;
        case PrimitiveKind::CylinderY:
        case PrimitiveKind::ConeCylinderY: return 1;
        case PrimitiveKind::CylinderZ: return 2;
        case PrimitiveKind::Cube: break;
    }
    return -1;
}

std::size_t param_count(PrimitiveKind kind) { return kind == PrimitiveKind::ConeCylinderY ? 7 : 6; }

void Aabb::extend(const Eigen::Vector3d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
}

void Aabb::extend(const Aabb& other) {
    if (other.empty()) return;
    lo = lo.cwiseMin(other.lo);
    hi = hi.cwiseMax(other.hi);
}

void validate(const Primitive& p) {
    if (!(p.scale.array() > 0.0).all() || !p.scale.allFinite()) {
        throw InvalidArgument("degenerate scale on primitive '" + p.name + "'");
    }
    if (!p.translation.allFinite()) {
        throw InvalidArgument("non-finite translation on primitive '" + p.name + "'");
    }
    if (p.kind == PrimitiveKind::ConeCylinderY) {
        if (!p.top_radius) throw InvalidArgument("cone cylinder '" + p.name + "' needs a top radius");
        if (!(*p.top_radius >= 0.0 && *p.top_radius <= 1.0)) {
            throw InvalidArgument("top radius out of range on primitive '" + p.name + "'");
        }
    } else if (p.top_radius) {
        throw InvalidArgument("top radius given for non-cone primitive '" + p.name + "'");
    }
}

Model::Model(std::vector<Primitive> primitives, std::string category)
    : primitives_(std::move(primitives)), category_(std::move(category)) {
    if (primitives_.empty()) throw InvalidArgument("model must contain at least one primitive");
    std::size_t end = 0;
    offsets_.reserve(primitives_.size());
    for (const auto& p : primitives_) {
        validate(p);
        end += p.param_count();
        offsets_.push_back(end);
    }
}

std::size_t Model::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (primitives_[i].name == name) return i;
    }
    throw InvalidArgument("no primitive named '" + std::string(name) + "'");
}

std::string Model::param_name(std::size_t index) const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (index < offsets_[i]) {
            const std::size_t local = index - offset(i);
            if (local == 6) return primitives_[i].name + ".r_top";
            return primitives_[i].name + "." + (local < 3 ? 't' : 's') + kAxisNames[local % 3];
        }
    }
    throw DimensionMismatch("parameter index out of range");
}

bool Model::has_cone_cylinder() const {
    return std::any_of(primitives_.begin(), primitives_.end(),
                       [](const Primitive& p) { return p.kind == PrimitiveKind::ConeCylinderY; });
}

bool Model::is_scale_param(std::size_t index) const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (index < offsets_[i]) {
            const std::size_t local = index - offset(i);
            return local >= 3 && local < 6;
        }
    }
    return false;
}

bool Model::is_top_radius_param(std::size_t index) const {
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (index < offsets_[i]) return index - offset(i) == 6;
    }
    return false;
}

ParamVector flatten(const Model& model) {
    ParamVector x(static_cast<Eigen::Index>(model.dimension()));
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& p = model.primitive(i);
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        x.segment<3>(o) = p.translation;
        x.segment<3>(o + 3) = p.scale;
        if (p.top_radius) x[o + 6] = *p.top_radius;
    }
    return x;
}

Model unflatten(const Model& model, const ParamVector& x) {
    if (static_cast<std::size_t>(x.size()) != model.dimension()) {
        throw DimensionMismatch("parameter vector has length " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(model.dimension()));
    }
    std::vector<Primitive> prims = model.primitives();
    for (std::size_t i = 0; i < prims.size(); ++i) {
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        prims[i].translation = x.segment<3>(o);
        prims[i].scale = x.segment<3>(o + 3);
        if (prims[i].top_radius) prims[i].top_radius = x[o + 6];
    }
    return Model(std::move(prims), model.category());
}

Aabb bounding_box(const Model& model, const ParamVector& x) {
    Aabb box;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        const Eigen::Vector3d t = x.segment<3>(o);
        const Eigen::Vector3d half = 0.5 * x.segment<3>(o + 3).cwiseAbs();
        box.extend(t - half);
        box.extend(t + half);
    }
    return box;
}

Aabb TriangleMesh::bounds() const {
    Aabb box;
    for (const auto& v : vertices) box.extend(v);
    return box;
}

namespace {

// Canonical cylinder along +Y inscribed in the unit cube, bottom ring radius
// 0.5, top ring radius 0.5 * top. Vertex layout: bottom ring, top ring,
// bottom center, top center.
void canonical_cylinder(int segments, double top, std::vector<Eigen::Vector3d>& verts,
                        std::vector<std::array<std::uint32_t, 3>>& tris) {
    const auto n = static_cast<std::uint32_t>(segments);
    for (int ring = 0; ring < 2; ++ring) {
        const double r = ring == 0 ? 0.5 : 0.5 * top;
        const double y = ring == 0 ? -0.5 : 0.5;
        for (int k = 0; k < segments; ++k) {
            // Quarter turns are evaluated exactly so the ring reaches +-0.5.
            double c;
            double s;
            if (k % (segments / 4) == 0) {
                static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
                static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
                c = kCos[k / (segments / 4)];
                s = kSin[k / (segments / 4)];
            } else {
                const double a = 2.0 * std::numbers::pi * k / segments;
                c = std::cos(a);
                s = std::sin(a);
            }
            verts.emplace_back(r * c, y, r * s);
        }
    }
    const std::uint32_t bottom_center = 2 * n;
    const std::uint32_t top_center = 2 * n + 1;
    verts.emplace_back(0.0, -0.5, 0.0);
    verts.emplace_back(0.0, 0.5, 0.0);
    for (std::uint32_t k = 0; k < n; ++k) {
        const std::uint32_t k1 = (k + 1) % n;
        // Ring parameterized by angle about +y from +x towards +z, so
        // outward winding for the side is (b_k, t_k, b_k1) ordering below.
        tris.push_back({k, n + k, k1});
        tris.push_back({k1, n + k, n + k1});
        tris.push_back({bottom_center, k, k1});
        tris.push_back({top_center, n + k1, n + k});
    }
}

void canonical_cube(std::vector<Eigen::Vector3d>& verts, std::vector<std::array<std::uint32_t, 3>>& tris) {
    for (int i = 0; i < 8; ++i) {
        verts.emplace_back((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5, (i & 4) ? 0.5 : -0.5);
    }
    static constexpr std::uint32_t kFaces[6][4] = {
        {0, 4, 6, 2},  // -x
        {1, 3, 7, 5},  // +x
        {0, 1, 5, 4},  // -y
        {2, 6, 7, 3},  // +y
        {0, 2, 3, 1},  // -z
        {4, 5, 7, 6},  // +z
    };
    for (const auto& f : kFaces) {
        tris.push_back({f[0], f[1], f[2]});
        tris.push_back({f[0], f[2], f[3]});
    }
}

}  // namespace

TriangleMesh tessellate(const Model& model, const ParamVector& x, int segments, std::span<const bool> present) {
    if (segments < 8) throw InvalidArgument("cylinder segments must be at least 8");
    segments = (segments + 3) / 4 * 4;
    const Model m = unflatten(model, x);
    TriangleMesh mesh;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!present.empty() && !present[i]) continue;
        const auto& p = m.primitive(i);
        std::vector<Eigen::Vector3d> verts;
        std::vector<std::array<std::uint32_t, 3>> tris;
        if (p.kind == PrimitiveKind::Cube) {
            canonical_cube(verts, tris);
        } else {
            canonical_cylinder(segments, p.top_radius.value_or(1.0), verts, tris);
            const int axis = cylinder_axis(p.kind);
            if (axis != 1) {
                // Rotate +y onto the cylinder axis with a cyclic permutation
                // (keeps orientation): X takes (y,z,x), Z takes (z,x,y).
                for (auto& v : verts) {
                    v = axis == 0 ? Eigen::Vector3d(v.y(), v.z(), v.x()) : Eigen::Vector3d(v.z(), v.x(), v.y());
                }
            }
        }
        PrimitiveRange range;
        range.primitive = i;
        range.first_vertex = mesh.vertices.size();
        range.vertex_count = verts.size();
        range.first_triangle = mesh.triangles.size();
        range.triangle_count = tris.size();
        const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
        for (const auto& v : verts) mesh.vertices.push_back(v.cwiseProduct(p.scale) + p.translation);
        for (const auto& t : tris) mesh.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        mesh.ranges.push_back(range);
    }
    return mesh;
}

Solid::Solid(const Model& model, const ParamVector& x, std::span<const bool> present) {
    if (static_cast<std::size_t>(x.size()) != model.dimension()) {
        throw DimensionMismatch("parameter vector does not match model dimension");
    }
    parts_.reserve(model.size());
    boxes_.reserve(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        const Eigen::Vector3d t = x.segment<3>(o);
        const Eigen::Vector3d s = x.segment<3>(o + 3);
        const auto kind = model.primitive(i).kind;
        Part part{kind, t, s.cwiseInverse(), kind == PrimitiveKind::ConeCylinderY ? x[o + 6] : 1.0};
        Aabb box;
        if (present.empty() || present[i]) {
            box.extend(t - 0.5 * s);
            box.extend(t + 0.5 * s);
        }
        parts_.push_back(part);
        boxes_.push_back(box);
        bounds_.extend(box);
    }
}

bool Solid::primitive_contains(std::size_t i, const Eigen::Vector3d& p) const {
    // empty boxes (lo = +inf, hi = -inf) fail the range test
    const auto& box = boxes_[i];
    if (p.x() < box.lo.x() || p.x() > box.hi.x() || p.y() < box.lo.y() || p.y() > box.hi.y() ||
        p.z() < box.lo.z() || p.z() > box.hi.z()) {
        return false;
    }
    const auto& part = parts_[i];
    if (part.kind == PrimitiveKind::Cube) return true;
    const Eigen::Vector3d u = (p - part.center).cwiseProduct(part.inv_scale);
    switch (part.kind) {
        case PrimitiveKind::CylinderX: return u.y() * u.y() + u.z() * u.z() <= 0.25;
        case PrimitiveKind::CylinderY: return u.x() * u.x() + u.z() * u.z() <= 0.25;
        case PrimitiveKind::CylinderZ: return u.x() * u.x() + u.y() * u.y() <= 0.25;
        case PrimitiveKind::ConeCylinderY: {
            const double r = 0.5 * (1.0 + (part.top_radius - 1.0) * (u.y() + 0.5));
            return u.x() * u.x() + u.z() * u.z() <= r * r;
        }
        case PrimitiveKind::Cube: break;
    }
    return true;
}

bool Solid::cuboids_only() const {
    for (std::size_t i = 0; i < parts_.size(); ++i) {
        if (!boxes_[i].empty() && parts_[i].kind != PrimitiveKind::Cube) return false;
    }
    return true;
}

bool Solid::same_part(std::size_t i, const Solid& other) const {
    if (i >= parts_.size() || i >= other.parts_.size()) return false;
    const auto& a = parts_[i];
    const auto& b = other.parts_[i];
    const bool ea = boxes_[i].empty();
    if (ea != other.boxes_[i].empty()) return false;
    if (ea) return true;
    return a.kind == b.kind && a.center == b.center && a.inv_scale == b.inv_scale && a.top_radius == b.top_radius;
}

bool Solid::contains(const Eigen::Vector3d& p) const {
    for (std::size_t i = 0; i < parts_.size(); ++i) {
        if (primitive_contains(i, p)) return true;
    }
    return false;
}

bool contains(const Model& model, const ParamVector& x, const Eigen::Vector3d& p) {
    return Solid(model, x).contains(p);
}

FaceMap face_map(const Model& model) {
    const std::size_t count = model.size();
    const auto d = static_cast<Eigen::Index>(model.dimension());
    FaceMap fm;
    fm.primitive_count = count;
    fm.q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(6 * count), d);
    fm.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(6 * count));
    for (std::size_t i = 0; i < count; ++i) {
        const auto& p = model.primitive(i);
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        const double ratio = is_cylinder(p.kind) ? std::numbers::pi / 4.0 : 1.0;
        if (p.kind == PrimitiveKind::ConeCylinderY) fm.alg1_unsound = true;
        for (int axis = 0; axis < 3; ++axis) {
            const double area = p.scale[(axis + 1) % 3] * p.scale[(axis + 2) % 3];
            for (const bool positive : {false, true}) {
                const auto r = static_cast<Eigen::Index>(FaceMap::row(i, axis, positive));
                fm.q(r, o + axis) = 1.0;
                fm.q(r, o + 3 + axis) = positive ? 0.5 : -0.5;
                fm.weights[r] = area * ratio;
            }
        }
    }
    return fm;
}

std::string Keypoint::label(const Model& model) const {
    const std::string& name = model.primitive(primitive).name;
    if (point_id == kCenter) return name + ".center";
    std::string s = name + ".";
    for (int a = 0; a < 3; ++a) s += (point_id >> a) & 1 ? '+' : '-';
    return s;
}

std::vector<Keypoint> keypoints(const Model& model) {
    const auto d = static_cast<Eigen::Index>(model.dimension());
    std::vector<Keypoint> out;
    out.reserve(9 * model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        for (int id = 0; id <= Keypoint::kCenter; ++id) {
            Keypoint k;
            k.primitive = i;
            k.point_id = id;
            k.expr = Eigen::MatrixXd::Zero(3, d);
            for (int a = 0; a < 3; ++a) {
                k.expr(a, o + a) = 1.0;
                if (id != Keypoint::kCenter) k.expr(a, o + 3 + a) = ((id >> a) & 1) ? 0.5 : -0.5;
            }
            out.push_back(std::move(k));
        }
    }
    return out;
}

}  // namespace reparamcad::csg
