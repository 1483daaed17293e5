#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "reparamcad/constraints.hpp"
#include "reparamcad/error.hpp"
#include "reparamcad/numeric.hpp"

using namespace reparamcad;
using namespace reparamcad::numeric;
using V = Eigen::Vector3d;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int m, int d, int rank) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(m, rank), b(rank, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < rank; ++j) a(i, j) = g(rng);
    for (int i = 0; i < rank; ++i)
        for (int j = 0; j < d; ++j) b(i, j) = g(rng);
    return a * b;
}

}  // namespace

TEST_CASE("null space of small matrices") {
    Eigen::MatrixXd c(2, 4);
    c << 1, -1, 0, 0,  //
        0, 0, 1, -1;
    const Subspace s = nullspace(c);
    CHECK(s.nullity() == 2);
    CHECK(s.rank() == 2);
    CHECK((c * s.basis).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.free == std::vector<std::size_t>{1, 3});

    const Subspace all = nullspace(Eigen::MatrixXd(0, 3));
    CHECK(all.basis.isApprox(Eigen::MatrixXd::Identity(3, 3)));
    CHECK(all.rank() == 0);

    const Subspace none = nullspace(Eigen::MatrixXd::Identity(3, 3));
    CHECK(none.nullity() == 0);
    CHECK(none.residual(Eigen::Vector3d(0, 0, 0)) == 0.0);
}

TEST_CASE("null space against an SVD rank oracle") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> dim(1, 30);
    for (int trial = 0; trial < 60; ++trial) {
        const int d = dim(rng);
        const int m = std::uniform_int_distribution<int>(0, 25)(rng);
        const int r = std::min({m, d, std::uniform_int_distribution<int>(0, 25)(rng)});
        const Eigen::MatrixXd c = m == 0 ? Eigen::MatrixXd(0, d) : random_matrix(rng, m, d, r);
        const Subspace s = nullspace(c);
        CHECK(static_cast<int>(s.nullity()) == d - oracle::rank(c));
        if (m > 0 && s.nullity() > 0) CHECK((c * s.basis).cwiseAbs().maxCoeff() < 1e-9);
        // identity-retaining: basis restricted to free rows is the identity
        for (std::size_t k = 0; k < s.free.size(); ++k) {
            for (std::size_t j = 0; j < s.free.size(); ++j) {
                CHECK(s.basis(static_cast<Eigen::Index>(s.free[j]), static_cast<Eigen::Index>(k)) ==
                      (j == k ? 1.0 : 0.0));
            }
        }
        if (s.nullity() == 0) continue;
        Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(s.nullity()), -1, 1);
        CHECK((s.reduce(s.lift(y)) - y).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    }
}

TEST_CASE("face least-squares projection matches the KKT oracle") {
    const auto m = testing::tower();
    const auto x0 = csg::flatten(m);
    const auto pool = constraints::enumerate_candidates(m, x0);
    const auto fm = csg::face_map(m);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.03);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<const constraints::SemanticConstraint*> set;
        for (int k = 0; k < 3; ++k) {
            set.push_back(&pool.constraints[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
        }
        const Eigen::MatrixXd c = constraints::rows_of(set, m.dimension());
        const Subspace sub = nullspace(c);
        csg::ParamVector x = x0;
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += g(rng);
        const auto got = project_alg1(fm, sub, x);
        const auto want = oracle::weighted_projection(fm.q, fm.weights, c, x);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(sub.residual(got) < 1e-9);
        CHECK(face_shift_cost(fm, got, x) <= face_shift_cost(fm, x0, x) + 1e-12);
    }
}

TEST_CASE("face least-squares projection reports infeasible results") {
    const csg::Model m({testing::cube("a", V(0, 0, 0), V(1, 1, 1)), testing::cube("b", V(3, 0, 0), V(1, 1, 1))}, "m");
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, 12);
    c(0, 3) = 1.0;
    c(0, 9) = 1.0;  // a.sx + b.sx = 0
    const auto sub = nullspace(c);
    CHECK_THROWS_WITH_AS(project_alg1(csg::face_map(m), sub, csg::flatten(m)), "projection left feasible region",
                         InfeasibleProjection);
}

TEST_CASE("orthogonal projection") {
    Eigen::MatrixXd c(1, 3);
    c << 1, 1, 1;
    const auto sub = nullspace(c);
    const Eigen::Vector3d x(1, 2, 3);
    const auto p = project_orthogonal(sub, x);
    CHECK(p.isApprox(Eigen::Vector3d(-1, 0, 1)));
}

TEST_CASE("Monte-Carlo IoU of boxes") {
    const csg::Model m({testing::cube("a", V(0, 0, 0), V(1, 1, 1))}, "m");
    const csg::ParamVector a = csg::flatten(m);
    csg::ParamVector b = a;
    b[0] = 0.5;
    CHECK(iou(m, a, b, 1'000'000, 1) == doctest::Approx(1.0 / 3.0).epsilon(0.03));
    CHECK(iou(m, a, a, 1000, 1) == 1.0);
    b[0] = 2.0;
    CHECK(iou(m, a, b, 1000, 1) == 0.0);
    CHECK_THROWS_AS(iou(m, a, b, 999, 1), InvalidArgument);

    b[0] = 0.25;
    b[4] = 0.5;
    const double want = oracle::box_iou({{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}}, {{-0.25, -0.25, -0.5}, {0.75, 0.25, 0.5}});
    const csg::Solid sa(m, a), sb(m, b);
    CHECK(iou_boxes(sa, sb, 400'000, 5) == doctest::Approx(want).epsilon(0.02));
    CHECK(iou_cuboids(sa, sb) == doctest::Approx(want).epsilon(1e-12));
    CHECK(iou(m, a, b, 400'000, 5) == doctest::Approx(want).epsilon(0.02));
}

TEST_CASE("exact cuboid IoU on overlapping unions") {
    const auto m = testing::tower();
    const auto x = csg::flatten(m);
    auto y = x;
    y[6] += 0.3;  // slide the top box along x
    const csg::Solid a(m, x), b(m, y);
    // union of each shape is 1 (top overlaps nothing else); shifted top keeps 0.7 of its volume
    const double inter = 0.5 + 0.5 * 0.7;
    const double uni = 2.0 - inter;
    CHECK(iou_cuboids(a, b) == doctest::Approx(inter / uni));
    CHECK(iou_boxes(a, b, 200'000, 3) == doctest::Approx(inter / uni).epsilon(0.02));
    const csg::Model cyl({testing::prim(csg::PrimitiveKind::CylinderY, "c", V::Zero(), V::Ones())}, "c");
    const csg::Solid c(cyl, csg::flatten(cyl));
    CHECK_THROWS_AS(iou_cuboids(c, c), InvalidArgument);
}

TEST_CASE("image-loss projection stays in the subspace and reduces the loss") {
    const auto m = testing::tower();
    const auto x0 = csg::flatten(m);
    auto x = x0;
    x[10] += 0.08;  // top taller
    x[7] += 0.04;
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, 12);
    c(0, 4) = 1.0;
    c(0, 10) = -1.0;  // base.sy = top.sy
    const auto sub = nullspace(c);
    const auto cams = raster::sample_cameras(2, 3, csg::bounding_box(m, x0));
    const auto targets = raster::render_targets(m, x, cams, 48);
    DescentOptions opt;
    opt.iterations = 8;
    DescentReport report;
    const auto p = project_alg2(m, sub, x, targets, opt, &report);
    CHECK(sub.residual(p) < 1e-9);
    REQUIRE(report.accepted_losses.size() >= 1);
    for (std::size_t i = 1; i < report.accepted_losses.size(); ++i) {
        CHECK(report.accepted_losses[i] < report.accepted_losses[i - 1]);
    }
    opt.iterations = 0;
    CHECK_THROWS_AS(project_alg2(m, sub, x, targets, opt), InvalidArgument);
}
