#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hdvi/sensitivity.hpp"
#include "support.hpp"

using namespace hdvi;

namespace {

// Scalar marching for the rod response to the scaled-load direction: strain
// is spatially uniform, clamped to zero at the initial node where the bound
// is weakly active, then follows the linear memory recursion. Independent of
// the solver stack under test.
std::vector<double> rod_response_strain(const TimeGrid& grid) {
    std::vector<double> s(grid.node_count(), 0.0);
    const double dt = grid.dt();
    double running = 0.0;  // dt * (s_0/2 + s_1 + ... + s_{n-1})
    for (std::size_t n = 1; n < s.size(); ++n) {
        running += (n == 1 ? 0.5 : 1.0) * dt * s[n - 1];
        s[n] = (1.0 - running) / (1.0 + 0.5 * dt);
    }
    return s;
}

}  // namespace

TEST_CASE("rod response to the scaling direction matches the scalar recursion") {
    const std::size_t n_el = 8;
    const auto p = build_rod_example(n_el, TimeGrid{1.0, 100});
    const double tol = 1e-10;
    ForwardOptions fopt;
    fopt.tolerance = tol;
    const auto base = solve_forward(p, fopt);

    SensitivityOptions opt;
    opt.tolerance = tol;
    const auto d = solve_derivative(p, base, p.load, opt);

    // node 0: bound weakly active, response pinned into the nonpositive cone
    CHECK(d.cones[0].tags[0] == ConeTag::nonpositive);
    for (double x : d.values[0]) CHECK(std::abs(x) <= 10.0 * tol);

    const auto strain = rod_response_strain(p.grid);
    for (std::size_t n = 1; n < d.values.size(); ++n) {
        CHECK(d.cones[n].tags[0] == ConeTag::free);
        for (std::size_t i = 0; i < n_el; ++i) {
            const double exact = ((i + 1.0) / n_el) * strain[n];
            CHECK(std::abs(d.values[n][i] - exact) <= 1e-8);
        }
    }
}

TEST_CASE("zero direction gives the zero response") {
    const auto p = build_rod_example(4, TimeGrid{1.0, 30});
    const auto base = solve_forward(p, {});
    const auto d = solve_derivative(p, base, LoadSampler::constant(Vector(4, 0.0)), {});
    for (const auto& v : d.values)
        for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("all-free linear marching agrees with a direct Volterra oracle") {
    testsupport::Rng rng(19);
    testsupport::InstanceOptions iopt;
    iopt.max_bounded = 0;
    iopt.steps = 40;
    const auto p = testsupport::random_instance(rng, iopt);
    const std::size_t n_dof = p.space.n_dof;
    const double tol = 1e-11;

    ForwardOptions fopt;
    fopt.tolerance = tol;
    const auto base = solve_forward(p, fopt);

    const auto df = LoadSampler::table({0.0, p.grid.t_end},
                                       {rng.vector(n_dof, -1.0, 1.0), rng.vector(n_dof, -1.0, 1.0)});
    SensitivityOptions opt;
    opt.tolerance = tol;
    const auto d = solve_derivative(p, base, df, opt);

    // direct marching oracle: (W + (dt/2) E) du_n = df_n - known memory, with
    // E the assembled kernel-at-zero operator; plain linear solves per node.
    const double dt = p.grid.dt();
    const auto r0 = p.kernel.op.at(0.0);
    DenseMatrix e_op;  // D^T diag(w) R(0) D
    {
        DenseMatrix rd;
        kernels::matmul(r0, p.space.strain_map, rd);
        for (std::size_t q = 0; q < rd.rows; ++q)
            for (std::size_t j = 0; j < rd.cols; ++j) rd(q, j) *= p.space.q_weights[q];
        kernels::matmul(transpose(p.space.strain_map), rd, e_op);
    }
    DenseMatrix lhs = p.w_operator;
    for (std::size_t i = 0; i < lhs.data.size(); ++i) lhs.data[i] += 0.5 * dt * e_op.data[i];

    std::vector<Vector> du(p.grid.node_count());
    std::vector<Vector> strains(p.grid.node_count());
    for (std::size_t n = 0; n < du.size(); ++n) {
        Vector rhs = df.at(p.grid.node(n));
        if (n > 0) {
            // trapezoid weights over past nodes
            Vector acc(p.space.strain_dim(), 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                const double w = (j == 0) ? 0.5 * dt : dt;
                Vector tmp(p.space.strain_dim());
                p.kernel.op.apply(p.grid.node(n) - p.grid.node(j), strains[j], tmp);
                kernels::add_scaled(acc, w, tmp);
            }
            const Vector dual = p.space.strain_adjoint(acc);
            for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] -= dual[i];
            du[n] = spd_solve(lhs, rhs);
        } else {
            du[n] = spd_solve(p.w_operator, rhs);
        }
        strains[n] = p.space.strain(du[n]);
    }

    for (std::size_t n = 0; n < du.size(); ++n) {
        double dist = 0.0;
        for (std::size_t i = 0; i < n_dof; ++i) dist += (du[n][i] - d.values[n][i]) * (du[n][i] - d.values[n][i]);
        CHECK(std::sqrt(dist) <= 10.0 * tol);
    }
}

TEST_CASE("pinned components are exactly zero along the march") {
    // push the contact DOF hard so the bound is active with positive multiplier
    auto p = build_rod_example(6, TimeGrid{1.0, 30});
    Vector f(6, 0.0);
    f[5] = 3.0;
    p.load = LoadSampler::constant(f);
    const auto base = solve_forward(p, {});
    const auto d = solve_derivative(p, base, p.load, {});
    for (std::size_t n = 0; n < d.values.size(); ++n) {
        REQUIRE(d.cones[n].tags[0] == ConeTag::zero);
        CHECK(d.values[n][5] == 0.0);
    }
}

TEST_CASE("response is positively homogeneous in the direction") {
    testsupport::Rng rng(29);
    for (int inst = 0; inst < 10; ++inst) {
        testsupport::InstanceOptions iopt;
        iopt.steps = 16;
        iopt.with_compliance = (inst % 2 == 0);
        const auto p = testsupport::random_instance(rng, iopt);
        const std::size_t n_dof = p.space.n_dof;
        const double tol = 1e-10;

        ForwardOptions fopt;
        fopt.tolerance = tol;
        const auto base = solve_forward(p, fopt);
        const auto df = LoadSampler::constant(rng.vector(n_dof, -1.0, 1.0));
        SensitivityOptions opt;
        opt.tolerance = tol;
        const auto one = solve_derivative(p, base, df, opt);
        const auto two = solve_derivative(p, base, combine_loads(df, 1.0, df), opt);
        for (std::size_t n = 0; n < one.values.size(); ++n) {
            Vector diff(n_dof);
            for (std::size_t i = 0; i < n_dof; ++i) diff[i] = two.values[n][i] - 2.0 * one.values[n][i];
            CHECK(p.space.v_norm(diff) <= 10.0 * tol);
        }
    }
}

TEST_CASE("per-node cone inequality residual stays at tolerance level") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 60});
    const double tol = 1e-10;
    ForwardOptions fopt;
    fopt.tolerance = tol;
    const auto base = solve_forward(p, fopt);
    SensitivityOptions opt;
    opt.tolerance = tol;
    const auto d = solve_derivative(p, base, p.load, opt);

    std::vector<Vector> strains(d.values.size());
    for (std::size_t n = 0; n < d.values.size(); ++n) strains[n] = p.space.strain(d.values[n]);
    for (std::size_t n = 0; n < d.values.size(); ++n) {
        Vector dh = p.load_at(p.grid.node(n));
        if (n > 0) {
            const Vector mem = memory_integral(p.kernel.op, strains, p.grid, n, QuadratureRule::trapezoid);
            const Vector dual = p.space.strain_adjoint(mem);
            for (std::size_t i = 0; i < dh.size(); ++i) dh[i] -= dual[i];
        }
        CHECK(derivative_residual(p, d.cones[n], base.values[n], d.values[n], dh) <= 10.0 * tol);
    }
}

TEST_CASE("fd_validate on the rod: errors decrease to 1e-3 up to quotient noise") {
    const auto p = build_rod_example(16, TimeGrid{1.0, 200});
    SensitivityOptions opt;
    opt.tolerance = 1e-10;
    const auto report = fd_validate(p, p.load, {1e-1, 1e-2, 1e-3, 1e-4}, 2.0, opt);
    REQUIRE(report.errors.size() == 4);
    // dividing two tol-accurate solves by tau amplifies solver noise to
    // ~tol/tau, the only term that can break monotone decrease
    for (std::size_t k = 1; k < report.errors.size(); ++k)
        CHECK(report.errors[k] <= report.errors[k - 1] + 10.0 * opt.tolerance / report.taus[k]);
    CHECK(report.errors.back() <= 1e-3);
    CHECK(report.errors.back() <= std::max(10.0 * opt.tolerance, report.errors.front() / 10.0));
}

TEST_CASE("fd_validate with a zero direction reports zero error") {
    const auto p = build_rod_example(4, TimeGrid{1.0, 30});
    SensitivityOptions opt;
    opt.tolerance = 1e-10;
    const auto report = fd_validate(p, LoadSampler::constant(Vector(4, 0.0)), {1e-1, 1e-2}, 2.0, opt);
    for (double e : report.errors) CHECK(e <= 10.0 * opt.tolerance);
}

TEST_CASE("fd_validate on a memory-free linear instance sits at solver tolerance") {
    testsupport::Rng rng(37);
    testsupport::InstanceOptions iopt;
    iopt.with_memory = false;
    iopt.max_bounded = 0;
    iopt.steps = 20;
    const auto p = testsupport::random_instance(rng, iopt);
    SensitivityOptions opt;
    opt.tolerance = 1e-11;
    const auto df = LoadSampler::constant(rng.vector(p.space.n_dof, -1.0, 1.0));
    const auto report = fd_validate(p, df, {1e-1, 1e-2, 1e-3}, 2.0, opt);
    for (double e : report.errors) CHECK(e <= 1e-5);
}

TEST_CASE("fd_validate rejects malformed tau sequences") {
    const auto p = build_rod_example(2, TimeGrid{1.0, 10});
    CHECK_THROWS_AS(fd_validate(p, p.load, {1e-2, 1e-1}, 2.0, {}), Error);
    CHECK_THROWS_AS(fd_validate(p, p.load, {-1e-1}, 2.0, {}), Error);
}

TEST_CASE("hadamard probe with unperturbed directions reproduces fd_validate") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 80});
    SensitivityOptions opt;
    opt.tolerance = 1e-10;
    const std::vector<double> taus = {1e-1, 1e-2, 1e-3};
    const auto fd = fd_validate(p, p.load, taus, 2.0, opt);
    const auto hp = hadamard_probe(p, p.load, {p.load, p.load, p.load}, taus, 2.0, opt);
    for (std::size_t k = 0; k < taus.size(); ++k) CHECK(hp.errors[k] == fd.errors[k]);
}

TEST_CASE("hadamard probe converges for vanishing direction perturbations") {
    const auto p = build_rod_example(8, TimeGrid{1.0, 80});
    SensitivityOptions opt;
    opt.tolerance = 1e-10;
    const std::vector<double> taus = {1e-1, 1e-2, 1e-3, 1e-4};
    const auto fd = fd_validate(p, p.load, taus, 2.0, opt);

    // constant dual offset decaying cubically in tau: the direction error
    // contributes below the quotient noise, so the diagonal shares fd's limit
    Vector offset(8, 0.0);
    offset[3] = 1.0;
    std::vector<LoadSampler> seq;
    for (double tau : taus) seq.push_back(combine_loads(p.load, tau * tau * tau, LoadSampler::constant(offset)));
    const auto hp = hadamard_probe(p, p.load, seq, taus, 2.0, opt);
    CHECK(hp.errors.front() <= 2.0 * fd.errors.front());
    CHECK(hp.errors.back() <= 2.0 * fd.errors.back() + 10.0 * opt.tolerance);
    CHECK(hp.errors.back() <= 1e-3);

    // scaled directions (1 + tau^2) * direction
    std::vector<LoadSampler> scaled;
    for (double tau : taus) scaled.push_back(combine_loads(p.load, tau * tau, p.load));
    const auto hs = hadamard_probe(p, p.load, scaled, taus, 2.0, opt);
    for (std::size_t k = 1; k < taus.size(); ++k)
        CHECK(hs.errors[k] <= hs.errors[k - 1] + 10.0 * opt.tolerance / taus[k]);
    CHECK(hs.errors.back() <= 2.0 * fd.errors.back() + 10.0 * opt.tolerance);
}
