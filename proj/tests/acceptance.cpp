// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 if any
// criterion fails, other than those passed as --known-failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "oracles.hpp"
#include "reparamcad/constraints.hpp"
#include "reparamcad/discovery.hpp"
#include "reparamcad/error.hpp"
#include "reparamcad/io.hpp"
#include "reparamcad/manipulation.hpp"
#include "reparamcad/numeric.hpp"

using namespace reparamcad;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    std::string id;
    std::string name;
    double limit_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int m, int d, int rank) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(m, rank), b(rank, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < rank; ++j) a(i, j) = g(rng);
    for (int i = 0; i < rank; ++i)
        for (int j = 0; j < d; ++j) b(i, j) = g(rng);
    return a * b;
}

Outcome a1() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    int mismatches = 0;
    for (int t = 0; t < 200; ++t) {
        const int d = std::uniform_int_distribution<int>(1, 50)(rng);
        const int m = std::uniform_int_distribution<int>(1, 40)(rng);
        const int r = std::uniform_int_distribution<int>(0, std::min(m, d))(rng);
        Eigen::MatrixXd c = random_matrix(rng, m, d, r);
        if (t % 4 == 0) {
            // sparse rows with small integer coefficients, like real constraints
            c.setZero();
            std::uniform_int_distribution<int> col(0, d - 1), coef(-2, 2);
            for (int i = 0; i < m; ++i)
                for (int k = 0; k < 3; ++k) c(i, col(rng)) = coef(rng);
        }
        const auto s = numeric::nullspace(c);
        if (static_cast<int>(s.nullity()) != d - oracle::rank(c)) ++mismatches;
        if (s.nullity() > 0) worst = std::max(worst, (c * s.basis).cwiseAbs().maxCoeff());
    }
    return {mismatches == 0 && worst < 1e-9, fmt("rank mismatches %d, max |CN| %.2e", mismatches, worst)};
}

Outcome a2() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    int done = 0;
    int attempts = 0;
    while (done < 20 && attempts < 1000) {
        ++attempts;
        const int prims = std::uniform_int_distribution<int>(1, 3)(rng);
        std::vector<csg::Primitive> ps;
        std::uniform_real_distribution<double> u(0.3, 1.0);
        for (int p = 0; p < prims; ++p) {
            // snapped to a coarse grid so some relations hold
            const Eigen::Vector3d t(0.5 * std::uniform_int_distribution<int>(-2, 2)(rng), 0.5 * p, 0.0);
            const double s = 0.5 * std::uniform_int_distribution<int>(1, 3)(rng);
            ps.push_back(testing::cube("p" + std::to_string(p), t, Eigen::Vector3d(s, 0.5 * (p + 1), s)));
        }
        const csg::Model model(ps, "random");
        const auto x0 = csg::flatten(model);
        const auto pool = constraints::enumerate_candidates(model, x0);
        if (pool.empty()) continue;
        const int k = std::uniform_int_distribution<int>(1, 4)(rng);
        std::vector<const constraints::SemanticConstraint*> set;
        for (int i = 0; i < k; ++i) {
            set.push_back(&pool.constraints[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
        }
        const auto c = constraints::rows_of(set, model.dimension());
        const auto sub = numeric::nullspace(c);
        const auto fm = csg::face_map(model);
        std::normal_distribution<double> g(0.0, 0.02);
        csg::ParamVector x = x0;
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += g(rng);
        csg::ParamVector got;
        try {
            got = numeric::project_alg1(fm, sub, x);
        } catch (const InfeasibleProjection&) {
            continue;
        }
        const auto want = oracle::weighted_projection(fm.q, fm.weights, c, x);
        worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
        ++done;
    }
    return {done == 20 && worst < 1e-6, fmt("%d instances, max |x* - kkt| %.2e", done, worst)};
}

Outcome a3() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> c(-0.5, 0.5), s(0.3, 1.2);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const Eigen::Vector3d ta(c(rng), c(rng), c(rng)), sa(s(rng), s(rng), s(rng));
        const Eigen::Vector3d tb(c(rng), c(rng), c(rng)), sb(s(rng), s(rng), s(rng));
        const csg::Model m({testing::cube("box", ta, sa)}, "box");
        csg::ParamVector xa = csg::flatten(m), xb = xa;
        xb.head<3>() = tb;
        xb.segment<3>(3) = sb;
        oracle::Box ba, bb;
        for (int k = 0; k < 3; ++k) {
            ba.lo[k] = ta[k] - sa[k] / 2, ba.hi[k] = ta[k] + sa[k] / 2;
            bb.lo[k] = tb[k] - sb[k] / 2, bb.hi[k] = tb[k] + sb[k] / 2;
        }
        const double mc = numeric::iou(m, xa, xb, 1'000'000, 17 + t);
        worst = std::max(worst, std::abs(mc - oracle::box_iou(ba, bb)));
    }
    return {worst < 0.01, fmt("max |mc - analytic| %.4f", worst)};
}

// Five same-size-class blocks, all visible from every camera.
csg::Model blocks() {
    using V = Eigen::Vector3d;
    return csg::Model({testing::cube("b0", V(-1.5, 0.5, 0), V(1, 1, 1)), testing::cube("b1", V(0, 0.7, 0), V(0.8, 1.4, 1)),
                       testing::cube("b2", V(1.5, 0.5, 0), V(1, 1, 1)),
                       testing::cube("b3", V(-0.75, 0.6, 1.5), V(1.2, 1.2, 0.8)),
                       testing::cube("b4", V(0.75, 0.6, 1.5), V(0.8, 1.2, 1.2))},
                      "blocks");
}

Outcome a4() {
    const auto model = blocks();
    const auto x0 = csg::flatten(model);
    const auto full = constraints::enumerate_candidates(model, x0);
    const std::size_t d = model.dimension();
    int good = 0, ranked_first = 0;
    std::ostringstream log;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<std::size_t> order(full.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<const constraints::SemanticConstraint*> planted_set;
        std::vector<std::size_t> planted, distractors;
        int rank = 0;
        for (const std::size_t i : order) {
            if (planted.size() == 5) break;
            planted_set.push_back(&full.constraints[i]);
            const int r = oracle::rank(constraints::rows_of(planted_set, d));
            if (r > rank) {
                rank = r;
                planted.push_back(i);
            } else {
                planted_set.pop_back();
            }
        }
        for (const std::size_t i : order) {
            if (distractors.size() == 25) break;
            if (std::find(planted.begin(), planted.end(), i) != planted.end()) continue;
            auto with = planted_set;
            with.push_back(&full.constraints[i]);
            if (oracle::rank(constraints::rows_of(with, d)) > rank) distractors.push_back(i);
        }
        constraints::CandidatePool pool;
        pool.tolerance = full.tolerance;
        std::vector<std::size_t> members = planted;
        members.insert(members.end(), distractors.begin(), distractors.end());
        std::sort(members.begin(), members.end());
        std::set<std::size_t> planted_local;
        for (std::size_t k = 0; k < members.size(); ++k) {
            pool.constraints.push_back(full.constraints[members[k]]);
            if (std::find(planted.begin(), planted.end(), members[k]) != planted.end()) planted_local.insert(k);
        }

        const auto sub = numeric::nullspace(constraints::rows_of(planted_set, d));
        io::SyntheticSpec spec;
        spec.constraint_indices.assign(planted_local.begin(), planted_local.end());
        spec.offsets = io::random_offsets(model, sub, 6, 0.08, seed * 31);
        spec.sigma = 0.005;
        spec.seed = seed;
        const auto vars = io::synth_variations(model, pool, spec);
        const auto result = discovery::discover_with_pool(model, pool, vars.variations);
        std::size_t leading = 0;
        const auto& picks = result.trace.ranking.picks;
        while (leading < picks.size() && planted_local.count(picks[leading].candidate)) ++leading;
        ranked_first += leading == planted_local.size() ? 1 : 0;
        int recovered = 0, spurious = 0;
        for (const std::size_t c : result.chosen) {
            if (planted_local.count(c)) {
                ++recovered;
            } else {
                ++spurious;
            }
        }
        const bool ok = pool.size() == 30 && recovered >= 4 && spurious <= 1;
        good += ok ? 1 : 0;
        log << " " << recovered << "/" << spurious;
    }
    return {good >= 9, fmt("%d/10 seeds ok, planted ranked first in %d/10 (recovered/spurious:", good, ranked_first) +
                           log.str() + ")"};
}

Outcome a5() {
    std::mt19937_64 rng(505);
    int agree = 0;
    for (int t = 0; t < 100; ++t) {
        const int n = std::uniform_int_distribution<int>(8, 60)(rng);
        const int k = std::uniform_int_distribution<int>(3, n - 3)(rng);
        const double sigma = std::uniform_real_distribution<double>(1e-4, 1e-2)(rng);
        const double jump = sigma * std::uniform_real_distribution<double>(10.0, 50.0)(rng);
        const double base = std::uniform_real_distribution<double>(0.0, 2.0)(rng) * sigma;
        std::normal_distribution<double> g(0.0, sigma);
        std::vector<double> curve(static_cast<std::size_t>(n));
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += std::max(0.0, base + (i >= k ? jump : 0.0) + g(rng));
            curve[static_cast<std::size_t>(i)] = acc;
        }
        agree += discovery::cutoff(curve) == oracle::cutoff(curve) ? 1 : 0;
    }
    return {agree == 100, fmt("%d/100 curves agree", agree)};
}

Outcome a6() {
    const std::map<std::string, std::size_t> want{{"bottle", 19}, {"camera", 24}, {"chair", 48}, {"table", 36},
                                                  {"car", 42}};
    std::string got;
    bool ok = true;
    for (const char* name : {"bottle", "camera", "chair", "table", "car"}) {
        const std::size_t dim = static_cast<std::size_t>(csg::flatten(testing::bundled(name)).size());
        ok = ok && dim == want.at(name);
        got += (got.empty() ? "" : "/") + std::to_string(dim);
    }
    return {ok, "d = " + got};
}

// Shared by A7, A9 and A10.
struct ChairRun {
    csg::Model model;
    io::VariationDocument vars;
    discovery::DiscoveryResult result;
};

const ChairRun& chair() {
    static const ChairRun run = [] {
        ChairRun r;
        r.model = testing::bundled("chair");
        r.vars = io::load_variations(testing::data_path("fixtures/chair.vars"), r.model);
        r.result = discovery::discover(r.model, csg::flatten(r.model), r.vars.variations);
        return r;
    }();
    return run;
}

Outcome a7() {
    const auto& run = chair();
    const std::size_t truth = run.vars.ground_truth ? run.vars.ground_truth->free_dimension : 0;
    const std::size_t got = run.result.free_dimension();
    const bool ok = truth > 0 && (got + 2 >= truth && got <= truth + 2) && got < run.model.dimension();
    return {ok, fmt("free dimension %zu, ground truth %zu, cutoff %zu of %zu picks", got, truth,
                    run.result.trace.cutoff, run.result.trace.ranking.picks.size())};
}

Outcome a8() {
    const auto model = testing::bundled("table");
    const auto x0 = csg::flatten(model);
    const std::size_t k = model.offset(model.index_of("top")) + 3;  // top.sx
    auto truth = x0;
    truth[static_cast<Eigen::Index>(k)] *= 1.05;
    const auto cams = raster::sample_cameras(7, 5, csg::bounding_box(model, x0));
    const auto targets = raster::render_targets(model, truth, cams, raster::kDefaultImageSize);
    numeric::DescentReport report;
    const auto fit = numeric::fit_to_images(model, x0, targets, {}, &report);
    const double want = truth[static_cast<Eigen::Index>(k)];
    const double err = std::abs(fit[static_cast<Eigen::Index>(k)] - want) / want;
    bool monotone = true;
    for (std::size_t i = 1; i < report.accepted_losses.size(); ++i) {
        monotone = monotone && report.accepted_losses[i] <= report.accepted_losses[i - 1];
    }
    return {err < 0.01 && monotone,
            fmt("top.sx relative error %.4f, %d accepted steps, loss %s", err, report.accepted_steps,
                monotone ? "non-increasing" : "increased")};
}

Outcome a9() {
    const auto& run = chair();
    const auto x0 = csg::flatten(run.model);
    const discovery::DiscoveryConfig config;
    const discovery::Projector projector(run.model, run.result.method, run.result.cameras, config.image_projection,
                                         config.image_projection_size);
    const auto space = manipulation::build_space(run.model, x0, run.vars.variations, run.result.rows,
                                                 run.result.groups, projector);
    std::mt19937_64 rng(909);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        auto st = manipulation::ManipulationState::rest(space);
        for (Eigen::Index i = 0; i < st.weights.size(); ++i) st.weights[i] = u(rng);
        for (Eigen::Index i = 0; i < st.offsets.size(); ++i) {
            st.offsets[i] = space.lower[i] - space.base_reduced[i] + u(rng) * (space.upper[i] - space.lower[i]);
        }
        for (std::size_t g = 0; g < st.toggles.size(); ++g) st.toggles[g] = u(rng) < 0.5;
        const auto ev = manipulation::evaluate(space, st);
        worst = std::max(worst, (run.result.rows * ev.x).cwiseAbs().maxCoeff());
    }
    double trip = 0.0;
    for (std::size_t i = 0; i < space.variation_count(); ++i) {
        auto st = manipulation::ManipulationState::rest(space);
        st.weights[static_cast<Eigen::Index>(i)] = 1.0;
        const auto want = projector.project(space.subspace, run.vars.variations.vectors[i]);
        trip = std::max(trip, (manipulation::evaluate(space, st).x - want).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-8 && trip < 1e-9, fmt("max |Cx| %.2e, max round-trip error %.2e", worst, trip)};
}

Outcome a10() {
    const auto& run = chair();
    const auto& model = run.model;
    const auto& vars = run.vars.variations;
    const auto& loss = run.result.groups.removal_loss;
    const double threshold = discovery::DiscoveryConfig{}.discrete_threshold;
    const auto stool = static_cast<Eigen::Index>(
        std::find(vars.labels.begin(), vars.labels.end(), "stool") - vars.labels.begin());
    if (stool >= static_cast<Eigen::Index>(vars.size())) return {false, "fixture has no stool variation"};
    const auto col = [&](const char* name) { return static_cast<Eigen::Index>(model.index_of(name)); };
    const double arm = std::max(loss(stool, col("arm_l")), loss(stool, col("arm_r")));
    const double seat = loss.col(col("seat")).minCoeff();
    // identical optional-set rule, recomputed from the loss table
    std::map<std::vector<bool>, std::vector<std::size_t>> sets;
    std::vector<std::vector<bool>> order;
    for (std::size_t p = 0; p < model.size(); ++p) {
        std::vector<bool> s(vars.size());
        bool any = false;
        for (std::size_t v = 0; v < vars.size(); ++v) {
            s[v] = loss(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(p)) < threshold;
            any = any || s[v];
        }
        if (!any) continue;
        if (!sets.count(s)) order.push_back(s);
        sets[s].push_back(p);
    }
    std::vector<std::vector<std::size_t>> expected;
    for (const auto& s : order) expected.push_back(sets[s]);
    const bool arms_grouped =
        std::any_of(run.result.groups.groups.begin(), run.result.groups.groups.end(), [&](const auto& g) {
            return g == std::vector<std::size_t>{static_cast<std::size_t>(col("arm_l")),
                                                 static_cast<std::size_t>(col("arm_r"))};
        });
    const bool ok = arm < threshold && seat > 10 * threshold && expected == run.result.groups.groups && arms_grouped;
    return {ok, fmt("arm loss %.2e, min seat loss %.2e, %zu group(s)", arm, seat, run.result.groups.groups.size())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"A1", "null-space soundness", 10, a1},
        {"A2", "face least-squares optimality", 5, a2},
        {"A3", "Monte-Carlo IoU", 30, a3},
        {"A4", "planted-constraint recovery", 300, a4},
        {"A5", "change-point exactness", 5, a5},
        {"A6", "parameter accounting", 1, a6},
        {"A7", "end-to-end dimensionality", 600, a7},
        {"A8", "self-supervised fit", 180, a8},
        {"A9", "manipulation-space safety", 30, a9},
        {"A10", "discrete discovery", 60, a10},
    };
    // usage: acceptance [--known-failure ID]... [ID]...
    std::set<std::string> only, known;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--known-failure" && i + 1 < argc) {
            known.insert(argv[++i]);
        } else {
            only.insert(arg);
        }
    }
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool ok = o.ok && s < c.limit_s;
        const bool expected = known.count(c.id) > 0;
        // a known failure that starts passing is reported so the list gets pruned
        failed += ok == !expected ? 0 : 1;
        std::printf("%-4s %s  %s: %s [%.2f s, limit %.0f s]%s\n", c.id.c_str(), ok ? "PASS" : "FAIL", c.name.c_str(),
                    o.detail.c_str(), s, c.limit_s,
                    expected ? (ok ? " (listed as known failure)" : " (known failure)") : "");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
