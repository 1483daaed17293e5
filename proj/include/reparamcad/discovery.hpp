#pragma once

// Constraint discovery: greedy ranking of candidate constraints by how much
// imposing them distorts the design variations, a change-point cutoff on
// the pixel-space distortion curve, and detection of optional parts.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reparamcad/constraints.hpp"
#include "reparamcad/csg.hpp"
#include "reparamcad/numeric.hpp"
#include "reparamcad/raster.hpp"

namespace reparamcad::discovery {

using csg::ParamVector;

struct VariationSet {
    ParamVector base;
    std::vector<std::string> labels;
    std::vector<ParamVector> vectors;

    std::size_t size() const { return vectors.size(); }
    void add(std::string label, ParamVector x);
    /// Throws on empty set, duplicate labels or wrong vector length.
    void validate(std::size_t dimension) const;
};

enum class Aggregate { Mean, Max };

enum class ProjectionMethod { Auto, FaceLeastSquares, ImageLoss };

std::string_view to_string(ProjectionMethod method);
ProjectionMethod projection_from_string(std::string_view name);

struct DiscoveryConfig {
    double eps_rel = constraints::kDefaultEpsRel;
    std::size_t iou_samples = 200'000;
    std::uint64_t iou_seed = 1;
    Aggregate aggregate = Aggregate::Mean;
    ProjectionMethod projection = ProjectionMethod::Auto;
    int camera_count = raster::kDefaultCameraCount;
    std::uint64_t camera_seed = 7;
    int render_size = raster::kDefaultImageSize;
    /// Image-loss projection settings (used for cone-cylinder models).
    numeric::DescentOptions image_projection{20, 0.05, 1e-3, 8};
    int image_projection_size = 64;
    double discrete_threshold = 1e-4;
    double change_gap_sigmas = 3.0;
};

/// Projects parameter vectors onto a constraint subspace with one fixed
/// method and, for the image-loss route, one fixed camera set.
class Projector {
public:
    Projector(const csg::Model& model, ProjectionMethod method, std::vector<raster::Camera> cameras,
              numeric::DescentOptions image_options = {}, int image_size = 64);

    ProjectionMethod method() const { return method_; }
    const csg::FaceMap& face_map() const { return face_map_; }

    /// Image-loss targets are renders of x itself.
    ParamVector project(const numeric::Subspace& sub, const ParamVector& x) const;
    ParamVector project(const numeric::Subspace& sub, const ParamVector& x,
                        std::span<const raster::RenderTarget> targets) const;
    std::vector<raster::RenderTarget> targets_for(const ParamVector& x) const;

private:
    const csg::Model* model_;
    ProjectionMethod method_;
    csg::FaceMap face_map_;
    std::vector<raster::Camera> cameras_;
    numeric::DescentOptions image_options_;
    int image_size_;
};

/// Resolve Auto: image loss for models with cone-cylinders, else face least squares.
ProjectionMethod resolve(ProjectionMethod method, const csg::Model& model);

struct GreedyStep {
    std::size_t candidate = 0;   // index into the pool
    double distortion = 0.0;     // score of the prefix ending here
    double cumulative = 0.0;     // running maximum of distortion
    double face_cost = 0.0;      // summed face-shift cost (face least-squares route)
};

struct RedundantEntry {
    std::size_t candidate = 0;
    std::size_t implied_by = 0;  // implied by the first `implied_by` picks
};

struct GreedyRanking {
    std::vector<GreedyStep> picks;
    std::vector<RedundantEntry> redundant;
    std::vector<std::size_t> infeasible;
};

/// Greedy forward selection. Each round scores every unused candidate
/// unioned with the constraints already chosen and keeps the least
/// distorting one; candidates already implied are set aside. The image-loss
/// route scores candidates individually in a single round.
GreedyRanking greedy_rank(const constraints::CandidatePool& pool, const VariationSet& vars, const csg::Model& model,
                          const DiscoveryConfig& config = {});

struct ChangePoint {
    std::size_t split = 0;  // first index of the second segment
    double gap = 0.0;       // mean(second) - mean(first)
    double pooled_sigma = 0.0;
    bool accepted = false;
};

/// Central differences, one-sided at the ends.
std::vector<double> central_difference(std::span<const double> curve);

/// Best single split of a series by total squared deviation from segment
/// means; accepted when the upward mean gap exceeds gap_sigmas pooled
/// standard deviations.
ChangePoint detect_change(std::span<const double> series, double gap_sigmas = 3.0);

/// Number of leading constraints to keep given the prefix distortion curve.
std::size_t cutoff(std::span<const double> curve, double gap_sigmas = 3.0);

/// Renders of every variation at fixed cameras, reused across prefixes.
class DistortionProbe {
public:
    DistortionProbe(const csg::Model& model, const VariationSet& vars, std::vector<raster::Camera> cameras,
                    int size);
    /// Mean over variations and cameras of per-pixel MSE between the
    /// projected and the unprojected variation renders.
    double operator()(const numeric::Subspace& sub, const Projector& projector) const;
    std::span<const raster::Camera> cameras() const { return cameras_; }

private:
    const csg::Model* model_;
    const VariationSet* vars_;
    std::vector<raster::Camera> cameras_;
    int size_;
    std::vector<std::vector<raster::Image>> reference_;
};

double pixel_distortion(const csg::Model& model, const VariationSet& vars, const numeric::Subspace& sub,
                        std::span<const raster::Camera> cameras, const Projector& projector,
                        int size = raster::kDefaultImageSize);

struct DiscreteGroups {
    std::vector<std::vector<std::size_t>> groups;  // primitive indices
    std::vector<std::vector<std::size_t>> absent;  // per variation, group indices
    Eigen::MatrixXd removal_loss;                  // variations x primitives
};

/// A primitive is optional in a variation when removing it changes the
/// renders by less than `threshold` per-pixel MSE. Primitives sharing the
/// same non-empty optional set form one group.
DiscreteGroups discover_discrete(const csg::Model& model, const VariationSet& vars,
                                 std::span<const raster::Camera> cameras, double threshold = 1e-4,
                                 int size = raster::kDefaultImageSize);

struct GreedyTrace {
    GreedyRanking ranking;
    std::vector<double> pixel_curve;  // entry k: prefix of k + 1 picks
    std::size_t cutoff = 0;
};

struct DiscoveryResult {
    constraints::CandidatePool pool;
    GreedyTrace trace;
    std::vector<std::size_t> chosen;  // pool indices, pick order then implied ones
    Eigen::MatrixXd rows;
    DiscreteGroups groups;
    ProjectionMethod method = ProjectionMethod::FaceLeastSquares;
    std::vector<raster::Camera> cameras;

    std::size_t free_dimension() const;
};

DiscoveryResult discover(const csg::Model& model, const ParamVector& x0, const VariationSet& vars,
                         const DiscoveryConfig& config = {});

/// Same pipeline on a caller-supplied pool.
DiscoveryResult discover_with_pool(const csg::Model& model, constraints::CandidatePool pool, const VariationSet& vars,
                                   const DiscoveryConfig& config = {});

/// Cameras used by discovery, framed on the base shape.
std::vector<raster::Camera> discovery_cameras(const csg::Model& model, const ParamVector& x0,
                                              const DiscoveryConfig& config);

}  // namespace reparamcad::discovery
