#include "reparamcad/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "reparamcad/error.hpp"

namespace reparamcad::raster {

namespace {

const Eigen::Vector3d kLight = Eigen::Vector3d(0.35, 0.85, 0.4).normalized();
constexpr double kAmbient = 0.2;

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

Eigen::Vector3d Camera::eye() const {
    const double r = distance * frame_diagonal;
    return look_at + r * Eigen::Vector3d(std::cos(elevation) * std::sin(azimuth), std::sin(elevation),
                                         std::cos(elevation) * std::cos(azimuth));
}

void Camera::validate() const {
    if (!(distance > 0.0) || !(frame_diagonal > 0.0)) throw InvalidArgument("camera distance must be positive");
    if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) throw InvalidArgument("camera fov must be in (0, pi)");
}

Image::Image(int w, int h, double fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

std::vector<Camera> sample_cameras(std::uint64_t seed, int n, const csg::Aabb& frame) {
    if (n < 1) throw InvalidArgument("need at least one camera");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> elevation(deg(10.0), deg(40.0));
    const double diag = frame.diagonal();
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Camera c;
        c.azimuth = azimuth(rng);
        c.elevation = elevation(rng);
        c.distance = 2.2;
        c.frame_diagonal = diag > 0.0 ? diag : 1.0;
        c.look_at = frame.empty() ? Eigen::Vector3d::Zero() : frame.center();
        cams.push_back(c);
    }
    return cams;
}

Image render(const csg::Model& model, const ParamVector& x, const Camera& camera, int size,
             std::span<const bool> present) {
    if (size < 32) throw InvalidArgument("render size must be at least 32");
    camera.validate();
    Image img(size, size, 0.0);
    if (model.size() == 0) return img;
    const csg::TriangleMesh mesh = csg::tessellate(model, x, csg::kDefaultSegments, present);

    const Eigen::Vector3d eye = camera.eye();
    const Eigen::Vector3d forward = (camera.look_at - eye).normalized();
    const Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitY()).normalized();
    const Eigen::Vector3d up = right.cross(forward);
    const double focal = 1.0 / std::tan(0.5 * camera.fov_y);
    const double near = 1e-6 * camera.frame_diagonal;
    const double half = 0.5 * size;

    struct Projected {
        double sx, sy, inv_z;
        bool visible;
    };
    std::vector<Projected> proj(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Eigen::Vector3d rel = mesh.vertices[i] - eye;
        const double zc = rel.dot(forward);
        if (zc <= near) {
            proj[i] = {0.0, 0.0, 0.0, false};
            continue;
        }
        const double xc = rel.dot(right);
        const double yc = rel.dot(up);
        proj[i] = {half + half * focal * xc / zc, half - half * focal * yc / zc, 1.0 / zc, true};
    }

    std::vector<double> depth(img.pixels.size(), 0.0);  // stores 1/z, larger is closer
    for (const auto& tri : mesh.triangles) {
        const Projected& a = proj[tri[0]];
        const Projected& b = proj[tri[1]];
        const Projected& c = proj[tri[2]];
        if (!a.visible || !b.visible || !c.visible) continue;
        const double area = (b.sx - a.sx) * (c.sy - a.sy) - (b.sy - a.sy) * (c.sx - a.sx);
        if (std::abs(area) < 1e-12) continue;

        const Eigen::Vector3d& p0 = mesh.vertices[tri[0]];
        Eigen::Vector3d n = (mesh.vertices[tri[1]] - p0).cross(mesh.vertices[tri[2]] - p0);
        if (n.squaredNorm() == 0.0) continue;
        n.normalize();
        if (n.dot(eye - p0) < 0.0) n = -n;
        const double shade = kAmbient + (1.0 - kAmbient) * std::max(0.0, n.dot(kLight));

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.sx, b.sx, c.sx}))));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.sx, b.sx, c.sx}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.sy, b.sy, c.sy}))));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.sy, b.sy, c.sy}))));
        const double inv_area = 1.0 / area;
        for (int py = y0; py <= y1; ++py) {
            const double cy = py + 0.5;
            for (int px = x0; px <= x1; ++px) {
                const double cx = px + 0.5;
                const double w0 = ((c.sx - b.sx) * (cy - b.sy) - (c.sy - b.sy) * (cx - b.sx)) * inv_area;
                const double w1 = ((a.sx - c.sx) * (cy - c.sy) - (a.sy - c.sy) * (cx - c.sx)) * inv_area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                const double inv_z = w0 * a.inv_z + w1 * b.inv_z + w2 * c.inv_z;
                const std::size_t idx = static_cast<std::size_t>(py) * size + px;
                if (inv_z > depth[idx]) {
                    depth[idx] = inv_z;
                    img.pixels[idx] = shade;
                }
            }
        }
    }
    return img;
}

std::vector<RenderTarget> render_targets(const csg::Model& model, const ParamVector& x,
                                         std::span<const Camera> cameras, int size) {
    std::vector<RenderTarget> out;
    out.reserve(cameras.size());
    for (const auto& cam : cameras) out.push_back({cam, render(model, x, cam, size)});
    return out;
}

Image sharpen(const Image& image) {
    Image out(image.width, image.height);
    const int w = image.width;
    const int h = image.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -1; dx <= 1; ++dx) sum += image.at(std::clamp(x + dx, 0, w - 1), yy);
            }
            out.at(x, y) = image.at(x, y) - 0.2 * (sum / 9.0);
        }
    }
    return out;
}

double mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw DimensionMismatch("image size mismatch");
    if (a.pixels.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.pixels.size());
}

PixelLoss::PixelLoss(const csg::Model& model, ParamVector x0, std::span<const RenderTarget> targets, double lambda)
    : model_(&model), x0_(std::move(x0)), lambda_(lambda) {
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
    if (targets.empty()) throw InvalidArgument("need at least one render target");
    size_ = targets.front().image.width;
    for (const auto& t : targets) {
        if (t.image.width != size_ || t.image.height != size_) {
            throw DimensionMismatch("render targets must be square and share one size");
        }
        cameras_.push_back(t.camera);
        sharpened_.push_back(sharpen(t.image));
    }
}

double PixelLoss::image_term(const ParamVector& x) const {
    double total = 0.0;
    for (std::size_t i = 0; i < cameras_.size(); ++i) {
        total += mse(sharpen(render(*model_, x, cameras_[i], size_)), sharpened_[i]);
    }
    return total;
}

double PixelLoss::operator()(const ParamVector& x) const {
    if (x.size() != x0_.size()) throw DimensionMismatch("parameter vector does not match x0");
    return image_term(x) + lambda_ * (x - x0_).squaredNorm();
}

double pixel_loss(const csg::Model& model, const ParamVector& x, const ParamVector& x0,
                  std::span<const RenderTarget> targets, double lambda) {
    return PixelLoss(model, x0, targets, lambda)(x);
}

}  // namespace reparamcad::raster
