#pragma once

// Simplified CSG language: axis-aligned primitives composed by union only.
//
// Every primitive is an origin-centered unit-cube-inscribed base shape that
// is scaled then translated. The flattened parameter vector lists, per
// primitive in declaration order, [tx, ty, tz, sx, sy, sz] followed by r_top
// for cone-cylinders.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace reparamcad::csg {

using ParamVector = Eigen::VectorXd;

enum class PrimitiveKind { Cube, CylinderX, CylinderY, CylinderZ, ConeCylinderY };

std::string_view to_string(PrimitiveKind kind);
PrimitiveKind kind_from_string(std::string_view name);

/// True for the four cylinder kinds (including the cone-cylinder).
bool is_cylinder(PrimitiveKind kind);

/// Axis of a cylinder kind (0, 1 or 2); -1 for cubes.
int cylinder_axis(PrimitiveKind kind);

std::size_t param_count(PrimitiveKind kind);

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Cube;
    std::string name;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    std::optional<double> top_radius;  // ConeCylinderY only

    std::size_t param_count() const { return csg::param_count(kind); }
};

struct Aabb {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());

    bool empty() const { return (lo.array() > hi.array()).any(); }
    void extend(const Eigen::Vector3d& p);
    void extend(const Aabb& other);
    Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
    double diagonal() const { return empty() ? 0.0 : (hi - lo).norm(); }
    double volume() const { return empty() ? 0.0 : (hi - lo).prod(); }
};

class Model {
public:
    Model() = default;
    Model(std::vector<Primitive> primitives, std::string category);

    const std::vector<Primitive>& primitives() const { return primitives_; }
    const Primitive& primitive(std::size_t i) const { return primitives_.at(i); }
    std::size_t size() const { return primitives_.size(); }
    const std::string& category() const { return category_; }

    /// Dimension d of the flattened parameter vector.
    std::size_t dimension() const { return offsets_.empty() ? 0 : offsets_.back(); }

    /// Index of the first parameter of primitive i. offset(size()) == dimension().
    std::size_t offset(std::size_t i) const { return i == 0 ? 0 : offsets_[i - 1]; }

    std::size_t index_of(std::string_view name) const;

    /// Human-readable parameter name, e.g. "seat.sx".
    std::string param_name(std::size_t index) const;

    bool has_cone_cylinder() const;

    /// Is parameter `index` a scale component?
    bool is_scale_param(std::size_t index) const;
    /// Is parameter `index` a cone-cylinder top radius?
    bool is_top_radius_param(std::size_t index) const;

private:
    std::vector<Primitive> primitives_;
    std::string category_;
    std::vector<std::size_t> offsets_;  // cumulative end offsets
};

/// Throws InvalidArgument when a primitive violates its invariants.
void validate(const Primitive& primitive);

ParamVector flatten(const Model& model);

/// Replace all parameters. Throws DimensionMismatch or InvalidArgument
/// ("degenerate scale", "top radius out of range").
Model unflatten(const Model& model, const ParamVector& x);

/// Union of per-primitive boxes t ± s/2.
Aabb bounding_box(const Model& model, const ParamVector& x);

struct PrimitiveRange {
    std::size_t primitive = 0;
    std::size_t first_vertex = 0;
    std::size_t vertex_count = 0;
    std::size_t first_triangle = 0;
    std::size_t triangle_count = 0;
};

struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;  // counter-clockwise seen from outside
    std::vector<PrimitiveRange> ranges;

    Aabb bounds() const;
};

/// Default cylinder circumference subdivision.
inline constexpr int kDefaultSegments = 32;

/// Tessellate every primitive whose entry in `present` is true (all when
/// `present` is empty). Segments are rounded up to a multiple of 4 so the
/// ring touches the bounding box; throws when segments < 8.
TriangleMesh tessellate(const Model& model, const ParamVector& x, int segments = kDefaultSegments,
                        std::span<const bool> present = {});

/// Point-membership for a fixed parameter vector, prepared once and queried
/// many times.
class Solid {
public:
    Solid(const Model& model, const ParamVector& x, std::span<const bool> present = {});

    bool contains(const Eigen::Vector3d& p) const;
    bool primitive_contains(std::size_t i, const Eigen::Vector3d& p) const;
    const Aabb& bounds() const { return bounds_; }
    std::span<const Aabb> primitive_boxes() const { return boxes_; }
    /// Every present primitive is a cube, so the solid is exactly its boxes.
    bool cuboids_only() const;
    /// Primitive i occupies exactly the same region in both solids.
    bool same_part(std::size_t i, const Solid& other) const;

private:
    struct Part {
        PrimitiveKind kind;
        Eigen::Vector3d center;
        Eigen::Vector3d inv_scale;
        double top_radius;
    };
    std::vector<Part> parts_;
    std::vector<Aabb> boxes_;
    Aabb bounds_;
};

/// True iff p lies inside any primitive (boundary inclusive).
bool contains(const Model& model, const ParamVector& x, const Eigen::Vector3d& p);

/// Linear map from parameters to axis-aligned proxy face coordinates.
struct FaceMap {
    Eigen::MatrixXd q;        // 6P x d, row 6p + 2*axis + (positive side)
    Eigen::VectorXd weights;  // 6P, face area at x0 (times pi/4 for cylinders)
    std::size_t primitive_count = 0;
    bool alg1_unsound = false;  // model has a cone-cylinder

    static std::size_t row(std::size_t primitive, int axis, bool positive) {
        return 6 * primitive + 2 * static_cast<std::size_t>(axis) + (positive ? 1 : 0);
    }
};

/// Face weights are evaluated at the model's own parameters.
FaceMap face_map(const Model& model);

/// Bounding-cuboid keypoint. Corners use bit a of `point_id` for the sign
/// along axis a (set = positive); id 8 is the center.
struct Keypoint {
    std::size_t primitive = 0;
    int point_id = 0;
    Eigen::MatrixXd expr;  // 3 x d, position = expr * x

    static constexpr int kCenter = 8;
    Eigen::Vector3d position(const ParamVector& x) const { return expr * x; }
    std::string label(const Model& model) const;
};

std::vector<Keypoint> keypoints(const Model& model);

}  // namespace reparamcad::csg
