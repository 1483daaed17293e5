#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "reparamcad/discovery.hpp"
#include "reparamcad/error.hpp"

using namespace reparamcad;
using namespace reparamcad::discovery;
using V = Eigen::Vector3d;

namespace {

// Three boxes in a row on the ground, all the same size.
csg::Model row_of_boxes() {
    return csg::Model({testing::cube("a", V(-1.2, 0.5, 0), V(1, 1, 1)), testing::cube("b", V(0, 0.5, 0), V(1, 1, 1)),
                       testing::cube("c", V(1.2, 0.5, 0), V(1, 1, 1))},
                      "row");
}

DiscoveryConfig quick_config() {
    DiscoveryConfig c;
    c.iou_samples = 20'000;
    c.render_size = 64;
    c.camera_count = 3;
    return c;
}

}  // namespace

TEST_CASE("central differences") {
    const std::vector<double> c{0, 1, 4, 9};
    const auto d = central_difference(c);
    CHECK(d == std::vector<double>{1, 2, 4, 5});
}

TEST_CASE("cutoff examples") {
    const std::vector<double> jump{0, 0, 0, 0, 0.5, 1.2, 2.0};
    CHECK(cutoff(jump) == 4);
    CHECK(cutoff(jump) == oracle::cutoff(jump));
    const std::vector<double> linear{0, 1, 2, 3, 4, 5};
    CHECK(cutoff(linear) == linear.size());
    CHECK_THROWS_WITH_AS(cutoff(std::vector<double>{0, 1}), "curve too short", InvalidArgument);
    const std::vector<double> flat{0, 0, 0};
    CHECK(cutoff(flat) == 3);
}

TEST_CASE("cutoff agrees with the exhaustive-split oracle on noisy curves") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(6, 40)(rng);
        const std::size_t at = std::uniform_int_distribution<std::size_t>(2, n - 2)(rng);
        std::vector<double> curve(n);
        double level = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            level += (i >= at ? 0.2 : 0.0) + noise(rng);
            curve[i] = level;
        }
        CHECK(cutoff(curve) == oracle::cutoff(curve));
        const auto cp = detect_change(central_difference(curve));
        const auto want = oracle::best_split(oracle::derivative(curve));
        CHECK(cp.split == want.split);
        CHECK(cp.gap == doctest::Approx(want.gap));
        CHECK(cp.pooled_sigma == doctest::Approx(want.sigma));
    }
}

TEST_CASE("variation set validation") {
    VariationSet v;
    v.base = csg::ParamVector::Zero(3);
    CHECK_THROWS_WITH(v.validate(3), "need at least one variation");
    v.add("a", csg::ParamVector::Zero(3));
    v.validate(3);
    v.add("a", csg::ParamVector::Zero(3));
    CHECK_THROWS_AS(v.validate(3), InvalidArgument);
    v.labels[1] = "b";
    v.vectors[1] = csg::ParamVector::Zero(2);
    CHECK_THROWS_AS(v.validate(3), DimensionMismatch);
}

TEST_CASE("identical variations keep every candidate") {
    const auto m = row_of_boxes();
    const auto x0 = csg::flatten(m);
    VariationSet vars;
    vars.base = x0;
    vars.add("same", x0);
    vars.add("again", x0);
    const auto result = discover(m, x0, vars, quick_config());
    CHECK(result.method == ProjectionMethod::FaceLeastSquares);
    for (const double d : result.trace.pixel_curve) CHECK(d == 0.0);
    for (const auto& s : result.trace.ranking.picks) CHECK(s.distortion == 0.0);
    CHECK(result.chosen.size() + result.trace.ranking.infeasible.size() == result.pool.size());
    CHECK(result.groups.groups.empty());
}

TEST_CASE("greedy picks constraints the variations share first") {
    const auto m = row_of_boxes();
    const auto x0 = csg::flatten(m);
    VariationSet vars;
    vars.base = x0;
    // boxes change size independently but stay on the ground
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.6, 1.4);
    for (int v = 0; v < 4; ++v) {
        csg::ParamVector x = x0;
        for (int p = 0; p < 3; ++p) {
            const double h = u(rng);
            x[6 * p + 3] = u(rng);
            x[6 * p + 5] = u(rng);
            x[6 * p + 4] = h;
            x[6 * p + 1] = 0.5 * h;
        }
        vars.add("v" + std::to_string(v), x);
    }
    const auto result = discover(m, x0, vars, quick_config());
    const auto& picks = result.trace.ranking.picks;
    REQUIRE(picks.size() >= 3);
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& c = result.pool.constraints[picks[k].candidate];
        CHECK(c.label.find("-y") != std::string::npos);
        CHECK(picks[k].distortion == doctest::Approx(0.0).epsilon(1e-12));
    }
    for (std::size_t k = 1; k < picks.size(); ++k) {
        CHECK(picks[k].cumulative >= picks[k - 1].cumulative);
        CHECK(picks[k].face_cost >= picks[k - 1].face_cost - 1e-9);
    }
    // every chosen constraint holds exactly on every projected variation
    const Projector projector(m, result.method, result.cameras);
    const auto sub = numeric::nullspace(result.rows);
    for (const auto& x : vars.vectors) {
        const auto p = projector.project(sub, x);
        for (const std::size_t c : result.chosen) CHECK(result.pool.constraints[c].max_residual(p) <= 1e-9);
    }
    CHECK(result.free_dimension() == sub.nullity());
}

TEST_CASE("greedy on an empty pool") {
    const auto m = row_of_boxes();
    VariationSet vars;
    vars.base = csg::flatten(m);
    vars.add("a", vars.base);
    CHECK_THROWS_WITH(greedy_rank({}, vars, m), "candidate pool is empty");
}

TEST_CASE("pixel distortion") {
    const auto m = row_of_boxes();
    const auto x0 = csg::flatten(m);
    VariationSet vars;
    vars.base = x0;
    auto x = x0;
    x[4] = 1.3;  // a taller
    x[1] = 0.65;
    vars.add("tall", x);
    const auto cams = raster::sample_cameras(1, 2, csg::bounding_box(m, x0));
    const Projector projector(m, ProjectionMethod::FaceLeastSquares, cams);
    const auto all = numeric::nullspace(Eigen::MatrixXd(0, 18));
    CHECK(pixel_distortion(m, vars, all, cams, projector, 64) == 0.0);

    Eigen::MatrixXd same_height = Eigen::MatrixXd::Zero(1, 18);
    same_height(0, 4) = 1;
    same_height(0, 10) = -1;
    CHECK(pixel_distortion(m, vars, numeric::nullspace(same_height), cams, projector, 64) > 0.0);
}

TEST_CASE("discrete parts") {
    const auto m = row_of_boxes();
    const auto x0 = csg::flatten(m);
    VariationSet vars;
    vars.base = x0;
    vars.add("full", x0);
    auto gone = x0;
    gone[3] = gone[4] = gone[5] = 1e-6;  // a vanishes
    gone[15] = gone[16] = gone[17] = 1e-6;  // c vanishes
    vars.add("only_b", gone);
    auto half = x0;
    half[3] = half[4] = half[5] = 1e-6;
    vars.add("no_a", half);
    const auto cams = raster::sample_cameras(2, 3, csg::bounding_box(m, x0));
    const auto groups = discover_discrete(m, vars, cams, 1e-4, 64);
    REQUIRE(groups.groups.size() == 2);
    CHECK(groups.groups[0] == std::vector<std::size_t>{0});
    CHECK(groups.groups[1] == std::vector<std::size_t>{2});
    CHECK(groups.absent[0].empty());
    CHECK(groups.absent[1] == std::vector<std::size_t>{0, 1});
    CHECK(groups.absent[2] == std::vector<std::size_t>{0});
    CHECK(groups.removal_loss(0, 1) > 1e-3);  // removing the middle box is visible

    // raising the threshold never drops an optional primitive
    const auto loose = discover_discrete(m, vars, cams, 1e-1, 64);
    std::size_t strict_count = 0, loose_count = 0;
    for (const auto& g : groups.groups) strict_count += g.size();
    for (const auto& g : loose.groups) loose_count += g.size();
    CHECK(loose_count >= strict_count);
    CHECK_THROWS_AS(discover_discrete(m, vars, cams, 0.0, 64), InvalidArgument);
}

TEST_CASE("cone models resolve to the image-loss route") {
    const auto bottle = testing::bundled("bottle");
    CHECK(resolve(ProjectionMethod::Auto, bottle) == ProjectionMethod::ImageLoss);
    CHECK(resolve(ProjectionMethod::Auto, row_of_boxes()) == ProjectionMethod::FaceLeastSquares);
    CHECK(resolve(ProjectionMethod::FaceLeastSquares, bottle) == ProjectionMethod::FaceLeastSquares);
    CHECK(projection_from_string("image_loss") == ProjectionMethod::ImageLoss);
    CHECK_THROWS_AS(projection_from_string("magic"), InvalidArgument);
}
