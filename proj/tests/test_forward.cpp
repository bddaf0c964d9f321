#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hdvi/forward.hpp"
#include "support.hpp"

using namespace hdvi;

namespace {

double rod_sup_error(const HdviProblem& p, const Trajectory& u, std::size_t n_elements) {
    double err = 0.0;
    for (std::size_t n = 0; n < u.values.size(); ++n) {
        const Vector exact = rod_exact_solution(n_elements, p.grid.node(n));
        for (std::size_t i = 0; i < exact.size(); ++i) err = std::max(err, std::abs(u.values[n][i] - exact[i]));
    }
    return err;
}

double rod_error_at(std::size_t n_elements, std::size_t steps, QuadratureRule rule) {
    const auto p = build_rod_example(n_elements, TimeGrid{1.0, steps});
    ForwardOptions opt;
    opt.rule = rule;
    const auto u = solve_forward(p, opt);
    return rod_sup_error(p, u, n_elements);
}

}  // namespace

TEST_CASE("rod regression: trapezoid marching tracks the closed form") {
    const std::size_t n_el = 16;
    const auto p = build_rod_example(n_el, TimeGrid{1.0, 200});
    const auto u = solve_forward(p, {});
    CHECK(rod_sup_error(p, u, n_el) <= 1e-3);

    // every node stays feasible, and the first node sits at the bound
    for (const auto& v : u.values) CHECK(v[n_el - 1] <= 1.0);
    CHECK(u.values[0][n_el - 1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("time quadrature orders: halving the step shrinks the rod error") {
    const double e200 = rod_error_at(8, 200, QuadratureRule::trapezoid);
    const double e400 = rod_error_at(8, 400, QuadratureRule::trapezoid);
    CHECK(e200 / e400 >= 3.5);

    const double r200 = rod_error_at(8, 200, QuadratureRule::left_rectangle);
    const double r400 = rod_error_at(8, 400, QuadratureRule::left_rectangle);
    CHECK(r200 / r400 >= 1.8);
}

TEST_CASE("zero load with feasible origin yields the zero trajectory") {
    auto p = build_rod_example(4, TimeGrid{1.0, 20});
    p.load = LoadSampler::constant(Vector(4, 0.0));
    const auto u = solve_forward(p, {});
    for (const auto& v : u.values) CHECK(v == Vector(4, 0.0));
}

TEST_CASE("memory-free unconstrained marching reduces to per-node linear solves") {
    testsupport::Rng rng(17);
    testsupport::InstanceOptions opt;
    opt.with_memory = false;
    opt.max_bounded = 0;
    const auto p = testsupport::random_instance(rng, opt);
    const double tol = 1e-11;
    ForwardOptions fopt;
    fopt.tolerance = tol;
    const auto u = solve_forward(p, fopt);
    for (std::size_t n = 0; n < u.values.size(); ++n) {
        const Vector oracle = spd_solve(p.w_operator, p.load_at(p.grid.node(n)));
        double dist = 0.0;
        for (std::size_t i = 0; i < oracle.size(); ++i)
            dist += (u.values[n][i] - oracle[i]) * (u.values[n][i] - oracle[i]);
        CHECK(std::sqrt(dist) <= 10.0 * tol);
    }
}

TEST_CASE("forward output is a fixed point of the trajectory map") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 60});
    const double tol = 1e-10;
    ForwardOptions opt;
    opt.tolerance = tol;
    const auto u = solve_forward(p, opt);
    const auto mapped = apply_fixed_point_map(p, u, tol);
    CHECK(trajectory_distance(p.space, u, mapped) <= 10.0 * tol);
}

TEST_CASE("memory-free map ignores its argument") {
    testsupport::Rng rng(23);
    testsupport::InstanceOptions opt;
    opt.with_memory = false;
    const auto p = testsupport::random_instance(rng, opt);
    const double tol = 1e-11;

    Trajectory a = Trajectory::zero(p.grid, p.space.n_dof);
    Trajectory b = Trajectory::zero(p.grid, p.space.n_dof);
    for (auto& v : a.values) v = rng.vector(p.space.n_dof, -2.0, 2.0);
    for (auto& v : b.values) v = rng.vector(p.space.n_dof, -2.0, 2.0);

    const auto ma = apply_fixed_point_map(p, a, tol);
    const auto mb = apply_fixed_point_map(p, b, tol);
    CHECK(trajectory_distance(p.space, ma, mb) <= 10.0 * tol);
}

TEST_CASE("map applied to the zero trajectory on the rod gives nodal coordinates at every node") {
    const std::size_t n_el = 6;
    const auto p = build_rod_example(n_el, TimeGrid{1.0, 30});
    const auto mapped = apply_fixed_point_map(p, Trajectory::zero(p.grid, n_el), 1e-11);
    for (std::size_t n = 0; n < mapped.values.size(); ++n)
        for (std::size_t i = 0; i < n_el; ++i)
            CHECK(mapped.values[n][i] == doctest::Approx((i + 1.0) / n_el).epsilon(1e-8));
}

TEST_CASE("picard iteration agrees with marching on the rod") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 50});
    const double tol = 1e-10;
    ForwardOptions opt;
    opt.tolerance = tol;
    const auto direct = solve_forward(p, opt);
    const auto picard = solve_picard(p, Trajectory::zero(p.grid, 8), tol, 200);
    CHECK(trajectory_distance(p.space, direct, picard.trajectory) <= 20.0 * tol);

    // the change sequence eventually decreases monotonically
    const auto& ch = picard.sweep_changes;
    REQUIRE(ch.size() >= 4);
    for (std::size_t k = ch.size() / 2; k + 1 < ch.size(); ++k) CHECK(ch[k + 1] <= ch[k] * (1.0 + 1e-9));
}

TEST_CASE("picard on a memory-free problem converges in one sweep") {
    testsupport::Rng rng(31);
    testsupport::InstanceOptions opt;
    opt.with_memory = false;
    const auto p = testsupport::random_instance(rng, opt);
    Trajectory u0 = Trajectory::zero(p.grid, p.space.n_dof);
    for (auto& v : u0.values) v = rng.vector(p.space.n_dof, -1.0, 1.0);
    const auto res = solve_picard(p, u0, 1e-10, 50);
    CHECK(res.converged_after == 1);
}

TEST_CASE("picard raises MaxSweeps when the cap is too small") {
    const auto p = build_rod_example(4, TimeGrid{1.0, 20});
    CHECK_THROWS_AS(solve_picard(p, Trajectory::zero(p.grid, 4), 1e-12, 2), Error);
}

TEST_CASE("method agreement on randomized instances") {
    testsupport::Rng rng(41);
    for (int inst = 0; inst < 5; ++inst) {
        testsupport::InstanceOptions iopt;
        iopt.steps = 24;
        iopt.with_compliance = (inst % 2 == 0);
        const auto p = testsupport::random_instance(rng, iopt);
        const double tol = 1e-10;
        ForwardOptions opt;
        opt.tolerance = tol;
        const auto direct = solve_forward(p, opt);
        const auto picard = solve_picard(p, Trajectory::zero(p.grid, p.space.n_dof), tol, 400);
        CHECK(trajectory_distance(p.space, direct, picard.trajectory) <= 20.0 * tol);
    }
}

TEST_CASE("equivalence report: small at solutions, large away from them") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 40});
    const double tol = 1e-10;
    ForwardOptions opt;
    opt.tolerance = tol;
    const auto u = solve_forward(p, opt);

    const auto good = equivalence_check(p, u, tol);
    CHECK(good.max_vi_residual <= 10.0 * tol);
    CHECK(good.max_fixed_point_residual <= 10.0 * tol);

    Trajectory bumped = u;
    bumped.values[20][3] += 1e-3;
    const auto bad = equivalence_check(p, bumped, tol);
    CHECK(bad.max_vi_residual > 10.0 * tol);
    CHECK(bad.max_fixed_point_residual > 10.0 * tol);

    const auto zero = equivalence_check(p, Trajectory::zero(p.grid, 8), tol);
    CHECK(zero.max_vi_residual >= 0.1);
    CHECK(zero.max_fixed_point_residual >= 0.1);
}

TEST_CASE("lipschitz probe: scaled load on the rod stays below the bound") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 60});
    auto scaled = LoadSampler::function(8, [&p](double t) {
        Vector f = p.load_at(t);
        for (auto& x : f) x *= 1.1;
        return f;
    });
    const auto report = lipschitz_probe(p, scaled, 1e-10);
    CHECK(report.bound == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(report.ratio <= std::exp(1.0) + 0.01);
}

TEST_CASE("lipschitz probe: tiny constant dual shift and the degenerate case") {
    const auto p = build_rod_example(6, TimeGrid{1.0, 40});
    Vector shift(6, 0.0);
    shift[2] = 1e-6;
    const auto shifted = combine_loads(p.load, 1.0, LoadSampler::constant(shift));
    const auto report = lipschitz_probe(p, shifted, 1e-11);
    CHECK(report.ratio <= report.bound + 1e-6);

    CHECK_THROWS_AS(lipschitz_probe(p, p.load, 1e-10), Error);
}

TEST_CASE("lipschitz probe: memory-free unconstrained ratio is at most 1/m") {
    testsupport::Rng rng(61);
    testsupport::InstanceOptions iopt;
    iopt.with_memory = false;
    iopt.max_bounded = 0;
    const auto p = testsupport::random_instance(rng, iopt);
    Vector shift = rng.vector(p.space.n_dof, -0.3, 0.3);
    const auto shifted = combine_loads(p.load, 1.0, LoadSampler::constant(shift));
    const auto report = lipschitz_probe(p, shifted, 1e-11);
    CHECK(report.ratio <= 1.0 / p.coercivity + 1e-6);
}

TEST_CASE("step contraction guard rejects overly coarse grids") {
    auto space = make_space(DenseMatrix::identity(2), Vector(2, 1.0));
    DenseMatrix big = DenseMatrix::identity(2);
    big(0, 0) = 500.0; big(1, 1) = 500.0;
    const auto p = make_problem(std::move(space), DenseMatrix::identity(2), MatrixKernel::constant(std::move(big)),
                                ComplianceLaw{}, ConstraintSet{}, LoadSampler::constant(Vector(2, 1.0)),
                                TimeGrid{1.0, 10});
    CHECK_THROWS_AS(solve_forward(p, {}), Error);
    try {
        solve_forward(p, {});
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::step_contraction);
    }
}

TEST_CASE("randomized Lipschitz bound holds for load perturbations") {
    testsupport::Rng rng(71);
    for (int inst = 0; inst < 3; ++inst) {
        testsupport::InstanceOptions iopt;
        iopt.steps = 24;
        const auto p = testsupport::random_instance(rng, iopt);
        const auto bound = derived_constants(p).solution_lipschitz;
        for (int k = 0; k < 5; ++k) {
            Vector shift = rng.vector(p.space.n_dof, -0.5, 0.5);
            const auto shifted = combine_loads(p.load, 1.0, LoadSampler::constant(shift));
            const auto report = lipschitz_probe(p, shifted, 1e-10);
            CHECK(report.ratio <= bound + 1e-6);
        }
    }
}
