#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "reparamcad/error.hpp"
#include "reparamcad/manipulation.hpp"

using namespace reparamcad;
using namespace reparamcad::manipulation;
using V = Eigen::Vector3d;

namespace {

struct Fixture {
    csg::Model model = testing::tower();
    csg::ParamVector x0 = csg::flatten(model);
    discovery::VariationSet vars;
    Eigen::MatrixXd rows;
    discovery::DiscreteGroups groups;
    std::unique_ptr<discovery::Projector> projector;

    Fixture() {
        vars.base = x0;
        auto wide = x0;
        wide[3] = wide[9] = 1.5;  // both wider
        vars.add("wide", wide);
        auto tall = x0;
        tall[10] = 0.9;  // top taller, resting on the base
        tall[7] = 0.5 + 0.45;
        vars.add("tall", tall);
        // top rests on base, x/z extents shared, everything centered on the y axis
        rows = Eigen::MatrixXd::Zero(8, 12);
        rows(0, 1) = 1, rows(0, 4) = 0.5, rows(0, 7) = -1, rows(0, 10) = 0.5;
        rows(1, 3) = 1, rows(1, 9) = -1;
        rows(2, 5) = 1, rows(2, 11) = -1;
        rows(3, 0) = 1;
        rows(4, 2) = 1;
        rows(5, 6) = 1;
        rows(6, 8) = 1;
        rows(7, 1) = 1, rows(7, 4) = -0.5;  // base on the ground
        groups.groups = {{1}};
        groups.absent = {{}, {}};
        projector = std::make_unique<discovery::Projector>(model, discovery::ProjectionMethod::FaceLeastSquares,
                                                           std::vector<raster::Camera>{});
    }

    ManipulationSpace space(bool bounded = true) const {
        return build_space(model, x0, vars, rows, groups, *projector, bounded);
    }
};

}  // namespace

TEST_CASE("space construction") {
    const Fixture f;
    const auto s = f.space();
    CHECK(s.variation_count() == 2);
    CHECK(s.free_count() == 12 - 8);
    CHECK(s.groups.size() == 1);
    CHECK(s.groups[0].label == "top");
    for (const auto& d : s.deltas) CHECK((f.rows * d).cwiseAbs().maxCoeff() < 1e-9);
    for (Eigen::Index k = 0; k < s.lower.size(); ++k) {
        CHECK(s.lower[k] <= s.base_reduced[k]);
        CHECK(s.base_reduced[k] <= s.upper[k]);
    }
    CHECK_THROWS_AS(build_space(f.model, f.x0, f.vars, Eigen::MatrixXd::Zero(1, 5), f.groups, *f.projector),
                    DimensionMismatch);
}

TEST_CASE("identical variations give zero deltas and point bounds") {
    Fixture f;
    f.vars.vectors = {f.x0, f.x0};
    const auto s = f.space();
    for (const auto& d : s.deltas) CHECK(d.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.lower == s.upper);
}

TEST_CASE("evaluation rules") {
    const Fixture f;
    const auto s = f.space();
    auto st = ManipulationState::rest(s);
    auto ev = evaluate(s, st);
    CHECK(ev.x == s.base);
    CHECK(ev.warnings.empty());
    CHECK(ev.present == std::vector<bool>{true, true});

    for (std::size_t i = 0; i < 2; ++i) {
        st = ManipulationState::rest(s);
        st.weights[static_cast<Eigen::Index>(i)] = 1.0;
        const auto want = f.projector->project(s.subspace, f.vars.vectors[i]);
        CHECK((evaluate(s, st).x - want).cwiseAbs().maxCoeff() < 1e-9);
    }
    st = ManipulationState::rest(s);
    st.weights << 1.0, 1.0;
    CHECK((evaluate(s, st).x - (s.base + 0.5 * (s.deltas[0] + s.deltas[1]))).cwiseAbs().maxCoeff() < 1e-12);
    st.weights << 0.5, 0.25;
    CHECK((evaluate(s, st).x - (s.base + 0.5 * s.deltas[0] + 0.25 * s.deltas[1])).cwiseAbs().maxCoeff() < 1e-12);

    st.weights << 2.0, -1.0;
    ev = evaluate(s, st);
    CHECK(ev.warnings.size() == 2);
    CHECK((ev.x - (s.base + s.deltas[0])).cwiseAbs().maxCoeff() < 1e-12);

    st = ManipulationState::rest(s);
    st.toggles[0] = false;
    ev = evaluate(s, st);
    CHECK(ev.x == s.base);  // toggles never move parameters
    CHECK(ev.present == std::vector<bool>{true, false});

    st = ManipulationState::rest(s);
    st.offsets.setConstant(100.0);
    ev = evaluate(s, st);
    CHECK(!ev.warnings.empty());
    CHECK(bounds_check(s, ev.x).ok);

    const auto unbounded = f.space(false);
    ev = evaluate(unbounded, st);
    CHECK(ev.warnings.empty());

    st = ManipulationState::rest(s);
    st.weights = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(evaluate(s, st), DimensionMismatch);
    st = ManipulationState::rest(s);
    st.toggles.push_back(true);
    CHECK_THROWS_AS(evaluate(s, st), DimensionMismatch);
}

TEST_CASE("random states stay inside the constraint subspace") {
    const Fixture f;
    const auto s = f.space();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        auto st = ManipulationState::rest(s);
        for (Eigen::Index k = 0; k < st.weights.size(); ++k) st.weights[k] = u(rng);
        for (Eigen::Index k = 0; k < st.offsets.size(); ++k) {
            st.offsets[k] = s.lower[k] - s.base_reduced[k] + u(rng) * (s.upper[k] - s.lower[k]);
        }
        const auto ev = evaluate(s, st);
        CHECK((f.rows * ev.x).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("bounds check") {
    const Fixture f;
    const auto s = f.space();
    CHECK(bounds_check(s, s.base).ok);
    for (const auto& d : s.deltas) CHECK(bounds_check(s, s.base + d).ok);
    auto off = f.x0;
    off[7] += 0.3;  // top floats above the base
    const auto r = bounds_check(s, off);
    CHECK_FALSE(r.ok);
    CHECK(r.reason == "violates constraints");

    // push one free coordinate past its upper bound
    Eigen::VectorXd y = s.base_reduced;
    Eigen::Index k = 0;
    while (k < y.size() && s.upper[k] == s.lower[k]) ++k;
    REQUIRE(k < y.size());
    y[k] = s.base_reduced[k] + 2.0 * (s.upper[k] - s.lower[k]) + 1.0;
    const auto out = bounds_check(s, s.subspace.lift(y));
    CHECK_FALSE(out.ok);
    CHECK(out.reason.find("out of bounds") != std::string::npos);
    CHECK(bounds_check(f.space(false), s.subspace.lift(y)).ok);
    CHECK_THROWS_AS(bounds_check(s, csg::ParamVector::Zero(3)), DimensionMismatch);
}
