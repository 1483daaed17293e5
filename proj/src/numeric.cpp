#include "reparamcad/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "reparamcad/error.hpp"
#include "reparamcad/parallel.hpp"

namespace reparamcad::numeric {

Eigen::VectorXd Subspace::reduce(const ParamVector& x) const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) y[static_cast<Eigen::Index>(k)] = x[static_cast<Eigen::Index>(free[k])];
    return y;
}

double Subspace::residual(const ParamVector& x) const {
    if (constraints.rows() == 0) return 0.0;
    return (constraints * x).cwiseAbs().maxCoeff();
}

Subspace nullspace(const Eigen::MatrixXd& c) {
    const Eigen::Index m = c.rows();
    const Eigen::Index d = c.cols();
    Subspace sub;
    sub.constraints = c;
    Eigen::MatrixXd r = c;
    const double tol = kPivotTolerance * std::max(1.0, m > 0 && d > 0 ? c.cwiseAbs().maxCoeff() : 0.0);

    std::vector<Eigen::Index> pivot_row_of_col(static_cast<std::size_t>(d), -1);
    Eigen::Index row = 0;
    for (Eigen::Index col = 0; col < d && row < m; ++col) {
        Eigen::Index best = row;
        double best_abs = std::abs(r(row, col));
        for (Eigen::Index i = row + 1; i < m; ++i) {
            if (std::abs(r(i, col)) > best_abs) {
                best_abs = std::abs(r(i, col));
                best = i;
            }
        }
        if (best_abs <= tol) continue;
        r.row(row).swap(r.row(best));
        r.row(row) /= r(row, col);
        for (Eigen::Index i = 0; i < m; ++i) {
            if (i != row && r(i, col) != 0.0) r.row(i) -= r(i, col) * r.row(row);
        }
        pivot_row_of_col[static_cast<std::size_t>(col)] = row;
        sub.pivots.push_back(static_cast<std::size_t>(col));
        ++row;
    }
    for (Eigen::Index col = 0; col < d; ++col) {
        if (pivot_row_of_col[static_cast<std::size_t>(col)] < 0) sub.free.push_back(static_cast<std::size_t>(col));
    }

    sub.basis = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(sub.free.size()));
    for (std::size_t k = 0; k < sub.free.size(); ++k) {
        const auto f = static_cast<Eigen::Index>(sub.free[k]);
        const auto kk = static_cast<Eigen::Index>(k);
        sub.basis(f, kk) = 1.0;
        for (const std::size_t p : sub.pivots) {
            const Eigen::Index pr = pivot_row_of_col[p];
            sub.basis(static_cast<Eigen::Index>(p), kk) = -r(pr, f);
        }
    }
    return sub;
}

namespace {

// Columns of Q touched by a +-0.5 entry are scales; untouched ones are top radii.
std::vector<bool> scale_columns(const csg::FaceMap& fm) {
    std::vector<bool> out(static_cast<std::size_t>(fm.q.cols()), false);
    for (Eigen::Index j = 0; j < fm.q.cols(); ++j) {
        for (Eigen::Index i = 0; i < fm.q.rows(); ++i) {
            if (std::abs(fm.q(i, j)) == 0.5) {
                out[static_cast<std::size_t>(j)] = true;
                break;
            }
        }
    }
    return out;
}

std::vector<bool> untouched_columns(const csg::FaceMap& fm) {
    std::vector<bool> out(static_cast<std::size_t>(fm.q.cols()));
    for (Eigen::Index j = 0; j < fm.q.cols(); ++j) out[static_cast<std::size_t>(j)] = fm.q.col(j).isZero(0.0);
    return out;
}

void require_positive_scales(const csg::Model& model, const ParamVector& x) {
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        if (!(x.segment<3>(o + 3).array() > 0.0).all()) throw InfeasibleProjection("projection left feasible region");
    }
}

// Scales below the floor are raised to it, top radii clamped into [0, 1].
ParamVector clamp_to_valid(const csg::Model& model, ParamVector x, double scale_floor) {
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto o = static_cast<Eigen::Index>(model.offset(i));
        for (int a = 0; a < 3; ++a) x[o + 3 + a] = std::max(x[o + 3 + a], scale_floor);
        if (model.primitive(i).kind == csg::PrimitiveKind::ConeCylinderY) x[o + 6] = std::clamp(x[o + 6], 0.0, 1.0);
    }
    return x;
}

struct DescentSettings {
    int iterations;
    double max_step;
    double fd_step;
    int max_halvings;
};

// Normalized-gradient descent with central-difference gradients and
// backtracking; only strictly improving steps are taken, so the returned
// point is the best seen. Coordinates where both probes raise the loss get
// a zero gradient.
Eigen::VectorXd descend(const std::function<double(const Eigen::VectorXd&)>& loss, Eigen::VectorXd y,
                        const DescentSettings& s, DescentReport* report) {
    double current = loss(y);
    if (report) {
        report->accepted_losses = {current};
        report->accepted_steps = 0;
    }
    double step = s.max_step;
    const auto n = static_cast<std::size_t>(y.size());
    Eigen::VectorXd grad(y.size());
    for (int it = 0; it < s.iterations && current > 0.0; ++it) {
        parallel_for(n, [&](std::size_t i) {
            const auto k = static_cast<Eigen::Index>(i);
            Eigen::VectorXd plus = y;
            Eigen::VectorXd minus = y;
            plus[k] += s.fd_step;
            minus[k] -= s.fd_step;
            const double up = loss(plus);
            const double down = loss(minus);
            // pixel losses kink at the optimum of a coordinate; no descent either way
            grad[k] = (up >= current && down >= current) ? 0.0 : (up - down) / (2.0 * s.fd_step);
        });
        const double gmax = grad.cwiseAbs().maxCoeff();
        if (!(gmax > 0.0) || !std::isfinite(gmax)) break;
        const Eigen::VectorXd dir = -grad / gmax;

        double trial = step;
        bool accepted = false;
        for (int h = 0; h <= s.max_halvings; ++h) {
            const Eigen::VectorXd candidate = y + trial * dir;
            const double value = loss(candidate);
            if (value < current) {
                y = candidate;
                current = value;
                accepted = true;
                break;
            }
            trial *= 0.5;
        }
        if (accepted) {
            step = std::min(s.max_step, 2.0 * trial);
            if (report) {
                report->accepted_losses.push_back(current);
                ++report->accepted_steps;
            }
        } else {
            step = trial;
            if (step < 1e-6 * s.max_step) break;
        }
    }
    return y;
}

}  // namespace

double face_shift_cost(const csg::FaceMap& fm, const ParamVector& a, const ParamVector& b) {
    return (fm.weights.asDiagonal() * (fm.q * (a - b))).squaredNorm();
}

ParamVector project_alg1(const csg::FaceMap& fm, const Subspace& sub, const ParamVector& x) {
    if (x.size() != fm.q.cols() || sub.dimension() != static_cast<std::size_t>(x.size())) {
        throw DimensionMismatch("projection inputs disagree on dimension");
    }
    const Eigen::MatrixXd aq = fm.weights.asDiagonal() * fm.q;
    const Eigen::MatrixXd m = aq * sub.basis;
    const Eigen::VectorXd rhs = aq * x;

    // Free top-radius coordinates do not enter the face map; copy them.
    const auto untouched = untouched_columns(fm);
    std::vector<Eigen::Index> solve_cols;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sub.nullity()));
    for (std::size_t k = 0; k < sub.free.size(); ++k) {
        if (untouched[sub.free[k]]) {
            y[static_cast<Eigen::Index>(k)] = x[static_cast<Eigen::Index>(sub.free[k])];
        } else {
            solve_cols.push_back(static_cast<Eigen::Index>(k));
        }
    }
    if (!solve_cols.empty()) {
        Eigen::MatrixXd ms(m.rows(), static_cast<Eigen::Index>(solve_cols.size()));
        for (std::size_t k = 0; k < solve_cols.size(); ++k) ms.col(static_cast<Eigen::Index>(k)) = m.col(solve_cols[k]);
        const Eigen::VectorXd target = rhs - m * y;
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ms);
        cod.setThreshold(1e-12);
        const Eigen::VectorXd ys = cod.solve(target);
        for (std::size_t k = 0; k < solve_cols.size(); ++k) y[solve_cols[k]] = ys[static_cast<Eigen::Index>(k)];
    }
    ParamVector out = sub.basis * y;
    const auto scales = scale_columns(fm);
    for (std::size_t j = 0; j < scales.size(); ++j) {
        if (scales[j] && !(out[static_cast<Eigen::Index>(j)] > 0.0)) {
            throw InfeasibleProjection("projection left feasible region");
        }
    }
    return out;
}

ParamVector project_orthogonal(const Subspace& sub, const ParamVector& x) {
    if (sub.nullity() == 0) return ParamVector::Zero(x.size());
    const Eigen::VectorXd y = sub.basis.colPivHouseholderQr().solve(x);
    return sub.basis * y;
}

ParamVector project_alg2(const csg::Model& model, const Subspace& sub, const ParamVector& x,
                         std::span<const raster::RenderTarget> targets, const DescentOptions& options,
                         DescentReport* report) {
    if (options.iterations < 1) throw InvalidArgument("need at least one iteration");
    if (!(options.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (targets.empty()) throw InvalidArgument("need at least one render target");
    if (static_cast<std::size_t>(x.size()) != model.dimension() || sub.dimension() != model.dimension()) {
        throw DimensionMismatch("projection inputs disagree on dimension");
    }
    const double diag = csg::bounding_box(model, x).diagonal();
    const double floor = 1e-4 * diag;
    const int size = targets.front().image.width;

    auto loss = [&](const Eigen::VectorXd& y) {
        const ParamVector px = clamp_to_valid(model, sub.basis * y, floor);
        double total = 0.0;
        for (const auto& t : targets) total += raster::mse(raster::render(model, px, t.camera, size), t.image);
        return total;
    };

    const ParamVector seed = project_orthogonal(sub, x);
    const Eigen::VectorXd y0 = sub.nullity() == 0 ? Eigen::VectorXd() : sub.reduce(seed);
    if (sub.nullity() == 0) {
        require_positive_scales(model, seed);
        return seed;
    }
    const DescentSettings settings{options.iterations, options.learning_rate * diag, options.fd_step * diag,
                                   options.max_halvings};
    const Eigen::VectorXd y = descend(loss, y0, settings, report);
    ParamVector out = sub.basis * y;
    require_positive_scales(model, out);
    return out;
}

ParamVector fit_to_images(const csg::Model& model, const ParamVector& x0,
                          std::span<const raster::RenderTarget> targets, const FitOptions& options,
                          DescentReport* report) {
    if (options.iterations < 1) throw InvalidArgument("need at least one iteration");
    if (!(options.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (static_cast<std::size_t>(x0.size()) != model.dimension()) throw DimensionMismatch("x0 does not match model");
    const raster::PixelLoss pixel(model, x0, targets, options.lambda);
    const double diag = csg::bounding_box(model, x0).diagonal();
    const double floor = 1e-4 * diag;
    auto loss = [&](const Eigen::VectorXd& x) { return pixel(clamp_to_valid(model, x, floor)); };
    const DescentSettings settings{options.iterations, options.learning_rate * diag, options.fd_step * diag,
                                   options.max_halvings};
    return clamp_to_valid(model, descend(loss, x0, settings, report), floor);
}

double iou(const csg::Model& model, const ParamVector& a, const ParamVector& b, std::size_t samples,
           std::uint64_t seed) {
    if (samples < 1000) throw InvalidArgument("iou needs at least 1000 samples");
    const csg::Solid sa(model, a);
    const csg::Solid sb(model, b);
    csg::Aabb box = sa.bounds();
    box.extend(sb.bounds());
    if (box.empty()) return 1.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(box.lo.x(), box.hi.x());
    std::uniform_real_distribution<double> uy(box.lo.y(), box.hi.y());
    std::uniform_real_distribution<double> uz(box.lo.z(), box.hi.z());
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
        const bool in_a = sa.contains(p);
        const bool in_b = sb.contains(p);
        inter += (in_a && in_b) ? 1 : 0;
        uni += (in_a || in_b) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double iou_boxes(const csg::Solid& a, const csg::Solid& b, std::size_t samples, std::uint64_t seed) {
    struct Box {
        double lo[3];
        double hi[3];
        std::size_t part;
        bool shared;  // same primitive region in both solids
        const csg::Solid* owner;
    };
    std::vector<Box> boxes;
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto* solid : {&a, &b}) {
        const auto list = solid->primitive_boxes();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& box = list[i];
            if (box.empty() || !(box.volume() > 0.0)) continue;
            const bool shared = a.same_part(i, b);
            // an unchanged primitive is sampled once
            if (shared && solid == &b) continue;
            total += box.volume();
            boxes.push_back({{box.lo.x(), box.lo.y(), box.lo.z()}, {box.hi.x(), box.hi.y(), box.hi.z()}, i, shared,
                             solid});
            cumulative.push_back(total);
        }
    }
    if (boxes.empty()) return 1.0;
    std::mt19937_64 rng(seed);
    const auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    std::size_t inter = 0;
    std::size_t uni = 0;
    const std::size_t last = boxes.size() - 1;
    for (std::size_t s = 0; s < samples; ++s) {
        const double pick = unit() * total;
        std::size_t k = 0;
        while (k < last && cumulative[k] <= pick) ++k;
        const Box& box = boxes[k];
        const Eigen::Vector3d p(box.lo[0] + unit() * (box.hi[0] - box.lo[0]),
                                box.lo[1] + unit() * (box.hi[1] - box.lo[1]),
                                box.lo[2] + unit() * (box.hi[2] - box.lo[2]));
        bool owned = true;
        for (std::size_t j = 0; j < k; ++j) {
            const Box& o = boxes[j];
            if (p.x() >= o.lo[0] && p.x() <= o.hi[0] && p.y() >= o.lo[1] && p.y() <= o.hi[1] && p.z() >= o.lo[2] &&
                p.z() <= o.hi[2]) {
                owned = false;
                break;
            }
        }
        if (!owned) continue;
        if (box.shared && box.owner->primitive_contains(box.part, p)) {
            ++inter;
            ++uni;
            continue;
        }
        const bool in_a = a.contains(p);
        const bool in_b = b.contains(p);
        inter += (in_a && in_b) ? 1 : 0;
        uni += (in_a || in_b) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double iou_cuboids(const csg::Solid& a, const csg::Solid& b) {
    if (!a.cuboids_only() || !b.cuboids_only()) throw InvalidArgument("exact IoU needs cube-only solids");
    std::vector<csg::Aabb> boxes;
    std::uint64_t a_bits = 0;
    for (const auto* solid : {&a, &b}) {
        for (const auto& box : solid->primitive_boxes()) {
            if (box.empty() || !(box.volume() > 0.0)) continue;
            if (solid == &a) a_bits |= std::uint64_t{1} << boxes.size();
            boxes.push_back(box);
        }
    }
    if (boxes.empty()) return 1.0;
    if (boxes.size() > 64) throw InvalidArgument("too many boxes for exact IoU");
    const std::uint64_t b_bits = ~a_bits & (boxes.size() == 64 ? ~std::uint64_t{0}
                                                              : (std::uint64_t{1} << boxes.size()) - 1);

    // per axis: cut coordinates and, per slab, the set of boxes spanning it
    std::array<std::vector<double>, 3> cuts;
    std::array<std::vector<std::uint64_t>, 3> cover;
    for (int ax = 0; ax < 3; ++ax) {
        auto& c = cuts[ax];
        for (const auto& box : boxes) {
            c.push_back(box.lo[ax]);
            c.push_back(box.hi[ax]);
        }
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
        for (std::size_t i = 0; i + 1 < c.size(); ++i) {
            const double mid = 0.5 * (c[i] + c[i + 1]);
            std::uint64_t bits = 0;
            for (std::size_t k = 0; k < boxes.size(); ++k) {
                if (boxes[k].lo[ax] <= mid && mid <= boxes[k].hi[ax]) bits |= std::uint64_t{1} << k;
            }
            cover[ax].push_back(bits);
        }
    }
    double inter = 0.0;
    double uni = 0.0;
    for (std::size_t i = 0; i < cover[0].size(); ++i) {
        const double dx = cuts[0][i + 1] - cuts[0][i];
        for (std::size_t j = 0; j < cover[1].size(); ++j) {
            const std::uint64_t xy = cover[0][i] & cover[1][j];
            if (xy == 0) continue;
            const double dxy = dx * (cuts[1][j + 1] - cuts[1][j]);
            for (std::size_t k = 0; k < cover[2].size(); ++k) {
                const std::uint64_t m = xy & cover[2][k];
                if (m == 0) continue;
                const double v = dxy * (cuts[2][k + 1] - cuts[2][k]);
                uni += v;
                if ((m & a_bits) && (m & b_bits)) inter += v;
            }
        }
    }
    return uni > 0.0 ? inter / uni : 1.0;
}

}  // namespace reparamcad::numeric
