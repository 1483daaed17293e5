#include "reparamcad/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>

#include "reparamcad/error.hpp"
#include "reparamcad/parallel.hpp"

namespace reparamcad::discovery {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kImpliedTolerance = 1e-9;

}  // namespace

void VariationSet::add(std::string label, ParamVector x) {
    labels.push_back(std::move(label));
    vectors.push_back(std::move(x));
}

void VariationSet::validate(std::size_t dimension) const {
    if (vectors.empty()) throw InvalidArgument("need at least one variation");
    if (labels.size() != vectors.size()) throw InvalidArgument("every variation needs a label");
    if (static_cast<std::size_t>(base.size()) != dimension) throw DimensionMismatch("base vector does not match model");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!seen.insert(labels[i]).second) throw InvalidArgument("duplicate variation label '" + labels[i] + "'");
        if (static_cast<std::size_t>(vectors[i].size()) != dimension) {
            throw DimensionMismatch("variation '" + labels[i] + "' does not match model dimension");
        }
    }
}

std::string_view to_string(ProjectionMethod method) {
    switch (method) {
        case ProjectionMethod::Auto: return "auto";
        case ProjectionMethod::FaceLeastSquares: return "face_least_squares";
        case ProjectionMethod::ImageLoss: return "image_loss";
    }
    return "auto";
}

ProjectionMethod projection_from_string(std::string_view name) {
    for (const auto m : {ProjectionMethod::Auto, ProjectionMethod::FaceLeastSquares, ProjectionMethod::ImageLoss}) {
        if (to_string(m) == name) return m;
    }
    throw InvalidArgument("unknown projection method '" + std::string(name) + "'");
}

ProjectionMethod resolve(ProjectionMethod method, const csg::Model& model) {
    if (method != ProjectionMethod::Auto) return method;
    return model.has_cone_cylinder() ? ProjectionMethod::ImageLoss : ProjectionMethod::FaceLeastSquares;
}

Projector::Projector(const csg::Model& model, ProjectionMethod method, std::vector<raster::Camera> cameras,
                     numeric::DescentOptions image_options, int image_size)
    : model_(&model),
      method_(resolve(method, model)),
      face_map_(csg::face_map(model)),
      cameras_(std::move(cameras)),
      image_options_(image_options),
      image_size_(image_size) {}

std::vector<raster::RenderTarget> Projector::targets_for(const ParamVector& x) const {
    return raster::render_targets(*model_, x, cameras_, image_size_);
}

ParamVector Projector::project(const numeric::Subspace& sub, const ParamVector& x) const {
    if (method_ == ProjectionMethod::FaceLeastSquares) return numeric::project_alg1(face_map_, sub, x);
    const auto targets = targets_for(x);
    return numeric::project_alg2(*model_, sub, x, targets, image_options_);
}

ParamVector Projector::project(const numeric::Subspace& sub, const ParamVector& x,
                               std::span<const raster::RenderTarget> targets) const {
    if (method_ == ProjectionMethod::FaceLeastSquares) return numeric::project_alg1(face_map_, sub, x);
    return numeric::project_alg2(*model_, sub, x, targets, image_options_);
}

std::vector<raster::Camera> discovery_cameras(const csg::Model& model, const ParamVector& x0,
                                              const DiscoveryConfig& config) {
    return raster::sample_cameras(config.camera_seed, config.camera_count, csg::bounding_box(model, x0));
}

namespace {

struct Scorer {
    const csg::Model& model;
    const VariationSet& vars;
    const DiscoveryConfig& config;
    const Projector& projector;
    std::vector<csg::Solid> solids;                              // face route
    std::vector<std::vector<raster::RenderTarget>> targets;      // image route

    Scorer(const csg::Model& m, const VariationSet& v, const DiscoveryConfig& c, const Projector& p)
        : model(m), vars(v), config(c), projector(p) {
        for (const auto& x : vars.vectors) {
            if (projector.method() == ProjectionMethod::FaceLeastSquares) {
                solids.emplace_back(model, x);
            } else {
                targets.push_back(projector.targets_for(x));
            }
        }
    }

    struct Score {
        double distortion = kInfinity;
        double face_cost = 0.0;
    };

    Score operator()(const numeric::Subspace& sub) const {
        Score s;
        std::vector<double> per;
        per.reserve(vars.size());
        double cost = 0.0;
        try {
            for (std::size_t v = 0; v < vars.size(); ++v) {
                const ParamVector& x = vars.vectors[v];
                if (projector.method() == ProjectionMethod::FaceLeastSquares) {
                    const ParamVector p = projector.project(sub, x);
                    cost += numeric::face_shift_cost(projector.face_map(), p, x);
                    if ((p - x).cwiseAbs().maxCoeff() <= 1e-12) {
                        per.push_back(0.0);
                    } else {
                        const csg::Solid projected(model, p);
                        const double overlap = solids[v].cuboids_only() && projected.cuboids_only()
                                                   ? numeric::iou_cuboids(solids[v], projected)
                                                   : numeric::iou_boxes(solids[v], projected, config.iou_samples,
                                                                        config.iou_seed + v);
                        per.push_back(1.0 - overlap);
                    }
                } else {
                    const ParamVector p = projector.project(sub, x, targets[v]);
                    double loss = 0.0;
                    for (const auto& t : targets[v]) {
                        loss += raster::mse(raster::render(model, p, t.camera, t.image.width), t.image);
                    }
                    per.push_back(loss / static_cast<double>(targets[v].size()));
                }
            }
        } catch (const InfeasibleProjection&) {
            return s;
        } catch (const InvalidArgument&) {
            return s;
        }
        s.face_cost = cost;
        s.distortion = config.aggregate == Aggregate::Max
                           ? *std::max_element(per.begin(), per.end())
                           : std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
        return s;
    }
};

bool implied(const constraints::SemanticConstraint& c, const numeric::Subspace& sub) {
    if (sub.nullity() == 0) return true;
    for (const auto& r : c.rows) {
        if ((r.coeffs * sub.basis).cwiseAbs().maxCoeff() > kImpliedTolerance) return false;
    }
    return true;
}

}  // namespace

GreedyRanking greedy_rank(const constraints::CandidatePool& pool, const VariationSet& vars, const csg::Model& model,
                          const DiscoveryConfig& config) {
    if (pool.empty()) throw InvalidArgument("candidate pool is empty");
    vars.validate(model.dimension());
    const std::size_t d = model.dimension();
    const Projector projector(model, config.projection, discovery_cameras(model, vars.base, config),
                              config.image_projection, config.image_projection_size);
    const Scorer score(model, vars, config, projector);

    GreedyRanking ranking;
    std::vector<const constraints::SemanticConstraint*> chosen;
    std::vector<std::size_t> remaining(pool.size());
    std::iota(remaining.begin(), remaining.end(), 0);

    auto better = [&](std::size_t a, double sa, std::size_t b, double sb) {
        if (sa != sb) return sa < sb;
        return constraints::tie_break_less(pool.constraints[a], pool.constraints[b]);
    };

    auto record = [&](std::size_t candidate, const Scorer::Score& s) {
        GreedyStep step;
        step.candidate = candidate;
        step.distortion = s.distortion;
        step.face_cost = s.face_cost;
        step.cumulative = ranking.picks.empty() ? s.distortion : std::max(ranking.picks.back().cumulative, s.distortion);
        if (projector.method() == ProjectionMethod::FaceLeastSquares && !ranking.picks.empty()) {
            const double prev = ranking.picks.back().face_cost;
            if (s.face_cost < prev - 1e-9 * (1.0 + prev)) {
                throw Error("greedy invariant violated: face-shift cost decreased after adding a constraint");
            }
        }
        ranking.picks.push_back(step);
        chosen.push_back(&pool.constraints[candidate]);
    };

    if (projector.method() == ProjectionMethod::ImageLoss) {
        // Single round: every candidate scored alone, then ordered.
        std::vector<Scorer::Score> scores(pool.size());
        parallel_for(pool.size(), [&](std::size_t i) {
            scores[i] = score(numeric::nullspace(constraints::rows_of({&pool.constraints[i]}, d)));
        });
        std::sort(remaining.begin(), remaining.end(),
                  [&](std::size_t a, std::size_t b) { return better(a, scores[a].distortion, b, scores[b].distortion); });
        for (const std::size_t c : remaining) {
            if (!std::isfinite(scores[c].distortion)) {
                ranking.infeasible.push_back(c);
                continue;
            }
            const auto sub = numeric::nullspace(constraints::rows_of(chosen, d));
            if (!chosen.empty() && implied(pool.constraints[c], sub)) {
                ranking.redundant.push_back({c, ranking.picks.size()});
                continue;
            }
            // Prefix score replaces the individual score in the trace.
            auto prefix = chosen;
            prefix.push_back(&pool.constraints[c]);
            const auto s = score(numeric::nullspace(constraints::rows_of(prefix, d)));
            if (!std::isfinite(s.distortion)) {
                ranking.infeasible.push_back(c);
                continue;
            }
            record(c, s);
        }
        return ranking;
    }

    while (!remaining.empty()) {
        const auto current = numeric::nullspace(constraints::rows_of(chosen, d));
        std::vector<std::size_t> open;
        for (const std::size_t c : remaining) {
            if (!chosen.empty() && implied(pool.constraints[c], current)) {
                ranking.redundant.push_back({c, ranking.picks.size()});
            } else {
                open.push_back(c);
            }
        }
        remaining = open;
        if (remaining.empty()) break;

        std::vector<Scorer::Score> scores(remaining.size());
        parallel_for(remaining.size(), [&](std::size_t i) {
            auto trial = chosen;
            trial.push_back(&pool.constraints[remaining[i]]);
            scores[i] = score(numeric::nullspace(constraints::rows_of(trial, d)));
        });
        std::size_t best = 0;
        for (std::size_t i = 1; i < remaining.size(); ++i) {
            if (better(remaining[i], scores[i].distortion, remaining[best], scores[best].distortion)) best = i;
        }
        if (!std::isfinite(scores[best].distortion)) {
            ranking.infeasible.insert(ranking.infeasible.end(), remaining.begin(), remaining.end());
            break;
        }
        record(remaining[best], scores[best]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return ranking;
}

std::vector<double> central_difference(std::span<const double> curve) {
    const std::size_t n = curve.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    out[0] = curve[1] - curve[0];
    out[n - 1] = curve[n - 1] - curve[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = 0.5 * (curve[i + 1] - curve[i - 1]);
    return out;
}

ChangePoint detect_change(std::span<const double> series, double gap_sigmas) {
    const std::size_t n = series.size();
    ChangePoint best;
    if (n < 3) return best;
    // prefix sums for O(1) segment statistics
    std::vector<double> s1(n + 1, 0.0);
    std::vector<double> s2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s1[i + 1] = s1[i] + series[i];
        s2[i + 1] = s2[i] + series[i] * series[i];
    }
    auto sse = [&](std::size_t a, std::size_t b) {
        const double len = static_cast<double>(b - a);
        const double sum = s1[b] - s1[a];
        return std::max(0.0, (s2[b] - s2[a]) - sum * sum / len);
    };
    double best_cost = kInfinity;
    for (std::size_t k = 1; k < n; ++k) {
        const double cost = sse(0, k) + sse(k, n);
        if (cost < best_cost) {
            best_cost = cost;
            best.split = k;
        }
    }
    const std::size_t k = best.split;
    const double mean_a = s1[k] / static_cast<double>(k);
    const double mean_b = (s1[n] - s1[k]) / static_cast<double>(n - k);
    best.gap = mean_b - mean_a;
    best.pooled_sigma = std::sqrt(best_cost / static_cast<double>(n - 2));
    best.accepted = best.gap > gap_sigmas * best.pooled_sigma;
    return best;
}

std::size_t cutoff(std::span<const double> curve, double gap_sigmas) {
    if (curve.size() < 3) throw InvalidArgument("curve too short");
    const auto deriv = central_difference(curve);
    const ChangePoint cp = detect_change(deriv, gap_sigmas);
    return cp.accepted ? cp.split : curve.size();
}

DistortionProbe::DistortionProbe(const csg::Model& model, const VariationSet& vars,
                                 std::vector<raster::Camera> cameras, int size)
    : model_(&model), vars_(&vars), cameras_(std::move(cameras)), size_(size) {
    reference_.resize(vars.size());
    parallel_for(vars.size(), [&](std::size_t v) {
        for (const auto& cam : cameras_) reference_[v].push_back(raster::render(model, vars.vectors[v], cam, size_));
    });
}

double DistortionProbe::operator()(const numeric::Subspace& sub, const Projector& projector) const {
    std::vector<double> per(vars_->size(), 0.0);
    parallel_for(vars_->size(), [&](std::size_t v) {
        const ParamVector& x = vars_->vectors[v];
        ParamVector p;
        try {
            p = projector.project(sub, x);
        } catch (const InfeasibleProjection&) {
            per[v] = kInfinity;
            return;
        }
        if ((p - x).cwiseAbs().maxCoeff() == 0.0) return;
        double sum = 0.0;
        for (std::size_t c = 0; c < cameras_.size(); ++c) {
            sum += raster::mse(raster::render(*model_, p, cameras_[c], size_), reference_[v][c]);
        }
        per[v] = sum / static_cast<double>(cameras_.size());
    });
    return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

double pixel_distortion(const csg::Model& model, const VariationSet& vars, const numeric::Subspace& sub,
                        std::span<const raster::Camera> cameras, const Projector& projector, int size) {
    vars.validate(model.dimension());
    const DistortionProbe probe(model, vars, {cameras.begin(), cameras.end()}, size);
    return probe(sub, projector);
}

DiscreteGroups discover_discrete(const csg::Model& model, const VariationSet& vars,
                                 std::span<const raster::Camera> cameras, double threshold, int size) {
    if (!(threshold > 0.0)) throw InvalidArgument("threshold must be positive");
    vars.validate(model.dimension());
    const std::size_t count = model.size();
    DiscreteGroups out;
    out.removal_loss = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vars.size()), static_cast<Eigen::Index>(count));
    parallel_for(vars.size(), [&](std::size_t v) {
        const ParamVector& x = vars.vectors[v];
        std::vector<raster::Image> full;
        for (const auto& cam : cameras) full.push_back(raster::render(model, x, cam, size));
        std::unique_ptr<bool[]> present(new bool[count]);
        for (std::size_t p = 0; p < count; ++p) {
            std::fill(present.get(), present.get() + count, true);
            present[p] = false;
            double sum = 0.0;
            for (std::size_t c = 0; c < cameras.size(); ++c) {
                sum += raster::mse(raster::render(model, x, cameras[c], size, {present.get(), count}), full[c]);
            }
            out.removal_loss(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(p)) =
                sum / static_cast<double>(cameras.size());
        }
    });

    std::map<std::vector<bool>, std::size_t> group_of;
    for (std::size_t p = 0; p < count; ++p) {
        std::vector<bool> optional_in(vars.size());
        bool any = false;
        for (std::size_t v = 0; v < vars.size(); ++v) {
            optional_in[v] = out.removal_loss(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(p)) < threshold;
            any = any || optional_in[v];
        }
        if (!any) continue;
        auto [it, inserted] = group_of.emplace(optional_in, out.groups.size());
        if (inserted) out.groups.emplace_back();
        out.groups[it->second].push_back(p);
    }
    out.absent.resize(vars.size());
    for (const auto& [set, g] : group_of) {
        for (std::size_t v = 0; v < vars.size(); ++v) {
            if (set[v]) out.absent[v].push_back(g);
        }
    }
    for (auto& a : out.absent) std::sort(a.begin(), a.end());
    return out;
}

std::size_t DiscoveryResult::free_dimension() const {
    return numeric::nullspace(rows).nullity();
}

DiscoveryResult discover(const csg::Model& model, const ParamVector& x0, const VariationSet& vars,
                         const DiscoveryConfig& config) {
    vars.validate(model.dimension());
    if (x0.size() != vars.base.size()) throw DimensionMismatch("x0 does not match variation base");
    auto pool = constraints::enumerate_candidates(model, x0, config.eps_rel);
    return discover_with_pool(model, std::move(pool), vars, config);
}

DiscoveryResult discover_with_pool(const csg::Model& model, constraints::CandidatePool pool, const VariationSet& vars,
                                   const DiscoveryConfig& config) {
    vars.validate(model.dimension());
    const std::size_t d = model.dimension();
    DiscoveryResult result;
    result.pool = std::move(pool);
    result.method = resolve(config.projection, model);
    result.cameras = discovery_cameras(model, vars.base, config);

    if (!result.pool.empty()) {
        result.trace.ranking = greedy_rank(result.pool, vars, model, config);
    }
    const auto& picks = result.trace.ranking.picks;

    const Projector projector(model, result.method, result.cameras, config.image_projection,
                              config.image_projection_size);
    const DistortionProbe probe(model, vars, result.cameras, config.render_size);
    std::vector<const constraints::SemanticConstraint*> prefix;
    for (const auto& step : picks) {
        prefix.push_back(&result.pool.constraints[step.candidate]);
        result.trace.pixel_curve.push_back(probe(numeric::nullspace(constraints::rows_of(prefix, d)), projector));
    }
    result.trace.cutoff = picks.size() < 3 ? picks.size() : cutoff(result.trace.pixel_curve, config.change_gap_sigmas);

    for (std::size_t k = 0; k < result.trace.cutoff; ++k) result.chosen.push_back(picks[k].candidate);
    for (const auto& r : result.trace.ranking.redundant) {
        if (r.implied_by <= result.trace.cutoff) result.chosen.push_back(r.candidate);
    }
    std::vector<const constraints::SemanticConstraint*> chosen;
    for (const std::size_t c : result.chosen) chosen.push_back(&result.pool.constraints[c]);
    result.rows = constraints::rows_of(chosen, d);

    result.groups = discover_discrete(model, vars, result.cameras, config.discrete_threshold, config.render_size);
    return result;
}

}  // namespace reparamcad::discovery
