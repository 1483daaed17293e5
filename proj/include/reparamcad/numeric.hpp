#pragma once

// Linear-algebra and scoring core: Gauss-Jordan null spaces, the two
// projections onto a constraint subspace, image fitting, and Monte-Carlo IoU.

#include <cstdint>
#include <span>
#include <vector>

#include "reparamcad/csg.hpp"
#include "reparamcad/raster.hpp"

namespace reparamcad::numeric {

using csg::ParamVector;

/// Null space {x : C x = 0} with an identity-retaining basis: for every free
/// (non-pivot) variable j, basis column k(j) has 1 at j and 0 at all other
/// free variables.
struct Subspace {
    Eigen::MatrixXd constraints;      // m x d
    Eigen::MatrixXd basis;            // d x d'
    std::vector<std::size_t> pivots;  // constrained variables
    std::vector<std::size_t> free;    // identity-retaining variables, one per basis column

    std::size_t dimension() const { return static_cast<std::size_t>(basis.rows()); }
    std::size_t nullity() const { return static_cast<std::size_t>(basis.cols()); }
    std::size_t rank() const { return pivots.size(); }

    /// Reduced coordinates of a vector already in the subspace (its free entries).
    Eigen::VectorXd reduce(const ParamVector& x) const;
    ParamVector lift(const Eigen::VectorXd& y) const { return basis * y; }
    double residual(const ParamVector& x) const;
};

inline constexpr double kPivotTolerance = 1e-10;

/// Reduced row echelon form by Gauss-Jordan elimination with partial
/// pivoting; columns whose best pivot falls below the tolerance (relative to
/// the largest entry of C) are free.
Subspace nullspace(const Eigen::MatrixXd& c);

/// Weighted face-shift least squares over the subspace:
/// y* = argmin |A Q N y - A Q x|^2, x* = N y* (minimum-norm on rank
/// deficiency). Free top-radius variables are copied from x. Throws
/// InfeasibleProjection on a non-positive scale.
ParamVector project_alg1(const csg::FaceMap& fm, const Subspace& sub, const ParamVector& x);

/// Weighted face-shift cost |A Q (a - b)|^2 used by project_alg1.
double face_shift_cost(const csg::FaceMap& fm, const ParamVector& a, const ParamVector& b);

/// Plain orthogonal least-squares projection onto the subspace.
ParamVector project_orthogonal(const Subspace& sub, const ParamVector& x);

struct DescentOptions {
    int iterations = 200;
    double learning_rate = 0.05;  // maximum step, in bbox diagonals
    double fd_step = 1e-3;        // central-difference step, in bbox diagonals
    int max_halvings = 8;
};

struct DescentReport {
    std::vector<double> accepted_losses;  // loss after each accepted step (first entry: start)
    int accepted_steps = 0;
};

/// Image-loss projection: descends sum_a mse(render_a(N y), I_a) over the
/// reduced coordinates from the orthogonal-projection seed, with
/// central-difference gradients and backtracking. Scales that collapse
/// during descent are clamped to 1e-4 bbox diagonals for rendering.
ParamVector project_alg2(const csg::Model& model, const Subspace& sub, const ParamVector& x,
                         std::span<const raster::RenderTarget> targets, const DescentOptions& options = {},
                         DescentReport* report = nullptr);

struct FitOptions {
    int iterations = 30;
    double learning_rate = 0.05;
    double lambda = raster::kDefaultLambda;
    double fd_step = 1e-3;
    int max_halvings = 8;
};

/// Fit parameters to target images by descending the sharpened pixel loss
/// with a proximity term towards x0. Returns the best parameters seen.
ParamVector fit_to_images(const csg::Model& model, const ParamVector& x0,
                          std::span<const raster::RenderTarget> targets, const FitOptions& options = {},
                          DescentReport* report = nullptr);

/// Monte-Carlo IoU over the union bounding box of both shapes. Returns 1
/// when both shapes are empty.
double iou(const csg::Model& model, const ParamVector& a, const ParamVector& b, std::size_t samples,
           std::uint64_t seed);

/// Monte-Carlo IoU drawing samples uniformly from the union of the
/// primitives' bounding boxes of both shapes (rejection on the first owning
/// box). Same estimand as iou() with far fewer wasted samples on sparse
/// shapes.
double iou_boxes(const csg::Solid& a, const csg::Solid& b, std::size_t samples, std::uint64_t seed);

/// Exact IoU of two cube-only solids by coordinate compression of their
/// boxes. Throws InvalidArgument when either solid has a non-cube part.
double iou_cuboids(const csg::Solid& a, const csg::Solid& b);

}  // namespace reparamcad::numeric
