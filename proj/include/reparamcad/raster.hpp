#pragma once

// CPU z-buffer rasterizer and the image-space loss used for fitting.

#include <cstdint>
#include <span>
#include <vector>

#include "reparamcad/csg.hpp"

namespace reparamcad::raster {

using csg::ParamVector;

/// Orbit camera. Distance is expressed in multiples of `frame_diagonal`,
/// the bounding-box diagonal of the shape the camera was framed on.
struct Camera {
    double azimuth = 0.0;    // rad, about +y, 0 looks from +z
    double elevation = 0.0;  // rad above the xz-plane
    double distance = 2.2;
    double frame_diagonal = 1.0;
    Eigen::Vector3d look_at = Eigen::Vector3d::Zero();
    double fov_y = 0.6981317007977318;  // 40 degrees

    Eigen::Vector3d eye() const;
    void validate() const;
};

/// Grayscale float image, row-major, row 0 at the top.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0);

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

struct RenderTarget {
    Camera camera;
    Image image;
};

inline constexpr int kDefaultImageSize = 256;
inline constexpr int kDefaultCameraCount = 5;
inline constexpr double kDefaultLambda = 0.001;

/// Deterministic camera set: azimuth uniform in [0, 2pi), elevation uniform
/// in [10, 40] degrees, distance 2.2 frame diagonals, looking at the frame
/// center.
std::vector<Camera> sample_cameras(std::uint64_t seed, int n, const csg::Aabb& frame);

/// Flat-shaded render of the tessellated model; primitives with a false
/// entry in `present` are skipped. Background is 0.
Image render(const csg::Model& model, const ParamVector& x, const Camera& camera,
             int size = kDefaultImageSize, std::span<const bool> present = {});

/// Render one image per camera.
std::vector<RenderTarget> render_targets(const csg::Model& model, const ParamVector& x,
                                         std::span<const Camera> cameras, int size = kDefaultImageSize);

/// I - 0.2 * box3x3(I) with clamped edges. Output may leave [0, 1].
Image sharpen(const Image& image);

/// Mean squared per-pixel difference. Throws on size mismatch.
double mse(const Image& a, const Image& b);

/// Fitting loss: sum over targets of the per-pixel mean of
/// (sharpen(render) - sharpen(target))^2, plus lambda * |x - x0|^2.
/// Sharpened targets are computed once at construction.
class PixelLoss {
public:
    PixelLoss(const csg::Model& model, ParamVector x0, std::span<const RenderTarget> targets,
              double lambda = kDefaultLambda);

    double operator()(const ParamVector& x) const;
    double image_term(const ParamVector& x) const;
    double lambda() const { return lambda_; }

private:
    const csg::Model* model_;
    ParamVector x0_;
    std::vector<Camera> cameras_;
    std::vector<Image> sharpened_;
    int size_;
    double lambda_;
};

double pixel_loss(const csg::Model& model, const ParamVector& x, const ParamVector& x0,
                  std::span<const RenderTarget> targets, double lambda = kDefaultLambda);

}  // namespace reparamcad::raster
