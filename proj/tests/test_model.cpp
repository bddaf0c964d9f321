#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hdvi/model.hpp"
#include "support.hpp"

using namespace hdvi;

TEST_CASE("rod example: single element assembles a unit end load") {
    const TimeGrid grid{1.0, 10};
    const auto p = build_rod_example(1, grid);
    CHECK(p.space.n_dof == 1);
    CHECK(p.constraints.upper_bounds.size() == 1);
    CHECK(p.constraints.upper_bounds[0].dof == 0);
    CHECK(p.constraints.upper_bounds[0].upper_bound == 1.0);
    const Vector f = p.load_at(0.0);
    CHECK(f == Vector{1.0});
}

TEST_CASE("rod example: four elements, contact DOF index and unit coercivity") {
    const auto p = build_rod_example(4, TimeGrid{1.0, 10});
    CHECK(p.space.n_dof == 4);
    CHECK(p.constraints.upper_bounds[0].dof == 3);
    CHECK(p.coercivity == doctest::Approx(1.0).epsilon(1e-12));
    // end load telescopes to the last DOF
    const Vector f = p.load_at(0.5);
    for (std::size_t i = 0; i + 1 < f.size(); ++i) CHECK(f[i] == 0.0);
    CHECK(f[3] == 1.0);
}

TEST_CASE("rod example: coercivity is exactly one for every element count") {
    for (std::size_t n = 1; n <= 64; ++n) {
        const auto p = build_rod_example(n, TimeGrid{1.0, 4});
        CHECK(std::abs(p.coercivity - 1.0) <= 1e-12);
    }
}

TEST_CASE("derived constants on the rod and the memory-free case") {
    const auto rod = build_rod_example(8, TimeGrid{1.0, 20});
    const auto d = derived_constants(rod);
    CHECK(d.memory_rate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.solution_lipschitz == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(d.contraction_window == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(!d.window_unbounded);

    // no memory: rate 0, Lipschitz 1/m, window unbounded
    auto space = make_space(DenseMatrix::identity(2), Vector(2, 1.0));
    DenseMatrix b = DenseMatrix::identity(2);
    b(0, 0) = 2.0;
    auto p = make_problem(std::move(space), std::move(b), MatrixKernel::zero(2), ComplianceLaw{}, ConstraintSet{},
                          LoadSampler::constant({0.0, 0.0}), TimeGrid{1.0, 10});
    const auto d0 = derived_constants(p);
    CHECK(d0.memory_rate == 0.0);
    CHECK(d0.solution_lipschitz == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d0.window_unbounded);
    CHECK(std::isinf(d0.contraction_window));
}

TEST_CASE("derived constants by direct substitution: m=2, |R|=4, T=1/2") {
    auto space = make_space(DenseMatrix::identity(2), Vector(2, 1.0));
    DenseMatrix b = DenseMatrix::identity(2);
    b(0, 0) = 2.0; b(1, 1) = 2.0;
    DenseMatrix r = DenseMatrix::identity(2);
    r(0, 0) = 4.0; r(1, 1) = 4.0;
    auto p = make_problem(std::move(space), std::move(b), MatrixKernel::constant(std::move(r)), ComplianceLaw{},
                          ConstraintSet{}, LoadSampler::constant({0.0, 0.0}), TimeGrid{0.5, 10});
    const auto d = derived_constants(p);
    CHECK(d.memory_rate == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(d.solution_lipschitz == doctest::Approx(0.5 * std::exp(1.0)).epsilon(1e-12));
    CHECK(d.contraction_window == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("projection clamps, is idempotent, and keeps feasible points") {
    ConstraintSet set;
    set.upper_bounds.push_back({0, 1.0});
    CHECK(project(set, {2.0, 5.0}) == Vector{1.0, 5.0});
    CHECK(project(set, {0.5, 5.0}) == Vector{0.5, 5.0});

    ConstraintSet both;
    both.upper_bounds.push_back({0, 0.0});
    both.upper_bounds.push_back({1, 0.0});
    CHECK(project(both, {-1.0, 3.0}) == Vector{-1.0, 0.0});

    testsupport::Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const Vector v = rng.vector(2, -3.0, 3.0);
        const Vector w = rng.vector(2, -3.0, 3.0);
        const Vector pv = project(both, v);
        const Vector pw = project(both, w);
        CHECK(project(both, pv) == pv);
        double dp = 0.0, dv = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            dp += (pv[k] - pw[k]) * (pv[k] - pw[k]);
            dv += (v[k] - w[k]) * (v[k] - w[k]);
        }
        CHECK(dp <= dv + 1e-15);
    }
}

TEST_CASE("zero feasibility flag") {
    ConstraintSet ok;
    ok.upper_bounds.push_back({0, 0.0});
    CHECK(ok.zero_feasible());
    ConstraintSet bad;
    bad.upper_bounds.push_back({0, -0.5});
    CHECK(!bad.zero_feasible());
}

TEST_CASE("clamp compliance law satisfies the contact conditions") {
    ComplianceLaw law;
    law.stiffness = 1.7;
    testsupport::Rng rng(9);
    for (int i = 0; i < 10000; ++i) {
        const double r1 = rng.uniform(-5.0, 5.0);
        const double r2 = rng.uniform(-5.0, 5.0);
        CHECK((law.value(r1) - law.value(r2)) * (r1 - r2) >= 0.0);          // monotone
        CHECK(std::abs(law.value(r1) - law.value(r2)) <= law.lipschitz() * std::abs(r1 - r2) * (1.0 + 1e-12) + 1e-15);
        if (r1 <= 0.0) CHECK(law.value(r1) == 0.0);
        CHECK(law.value(r1) >= 0.0);
    }
    // one-sided derivative at the kink
    CHECK(law.derivative(0.0, 1.0) == doctest::Approx(1.7));
    CHECK(law.derivative(0.0, -1.0) == 0.0);
    CHECK(law.derivative(-1.0, 1.0) == 0.0);
    CHECK(law.derivative(2.0, -3.0) == doctest::Approx(-5.1));
}

TEST_CASE("problem validation rejects inconsistent inputs") {
    auto space = make_space(DenseMatrix::identity(2), Vector(2, 1.0));
    CHECK_THROWS_AS(make_problem(space, DenseMatrix::identity(3), MatrixKernel::zero(2), ComplianceLaw{},
                                 ConstraintSet{}, LoadSampler::constant({0.0, 0.0}), TimeGrid{1.0, 4}),
                    Error);
    ConstraintSet dup;
    dup.upper_bounds.push_back({0, 1.0});
    dup.upper_bounds.push_back({0, 2.0});
    CHECK_THROWS_AS(make_problem(space, DenseMatrix::identity(2), MatrixKernel::zero(2), ComplianceLaw{},
                                 std::move(dup), LoadSampler::constant({0.0, 0.0}), TimeGrid{1.0, 4}),
                    Error);
}

TEST_CASE("load table interpolates linearly between samples") {
    auto load = LoadSampler::table({0.0, 1.0}, {Vector{0.0}, Vector{2.0}});
    CHECK(load.at(0.25)[0] == doctest::Approx(0.5));
    CHECK(load.at(-1.0)[0] == 0.0);
    CHECK(load.at(5.0)[0] == 2.0);
}
