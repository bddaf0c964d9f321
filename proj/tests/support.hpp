#pragma once

// Shared helpers for the test and acceptance binaries: a portable RNG (the
// raw mt19937_64 stream is pinned by the standard, distributions are not),
// random SPD matrices with a prescribed condition number, small random
// problem instances, and the exhaustive active-set oracle.

#include <cstdint>
#include <random>

#include "hdvi/algebra.hpp"
#include "hdvi/evi.hpp"
#include "hdvi/kernels.hpp"
#include "hdvi/model.hpp"

namespace testsupport {

using hdvi::DenseMatrix;
using hdvi::Vector;

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    Vector vector(std::size_t n, double lo, double hi) {
        Vector v(n);
        for (auto& x : v) x = uniform(lo, hi);
        return v;
    }

  private:
    std::mt19937_64 gen_;
};

// H A H with H = I - 2 v v^T keeps the spectrum, so starting from a diagonal
// with the desired eigenvalues gives an SPD matrix of known condition number.
inline DenseMatrix random_spd(Rng& rng, std::size_t n, double eig_lo, double eig_hi) {
    DenseMatrix a(n, n);
    a(0, 0) = eig_lo;
    if (n > 1) a(n - 1, n - 1) = eig_hi;
    for (std::size_t i = 1; i + 1 < n; ++i) a(i, i) = rng.uniform(eig_lo, eig_hi);

    for (int pass = 0; pass < 2; ++pass) {
        Vector v = rng.vector(n, -1.0, 1.0);
        const double nv = hdvi::norm2(v);
        for (auto& x : v) x /= nv;
        // A <- H A H
        Vector av(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) av[i] += a(i, j) * v[j];
        const double vav = hdvi::dot(v, av);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                a(i, j) += -2.0 * v[i] * av[j] - 2.0 * av[i] * v[j] + 4.0 * vav * v[i] * v[j];
    }
    return a;
}

struct InstanceOptions {
    std::size_t min_dofs = 2;
    std::size_t max_dofs = 6;
    std::size_t max_bounded = 3;
    bool with_memory = true;
    bool with_compliance = false;
    double t_end = 1.0;
    std::size_t steps = 32;
};

// Small dense instance with identity strain map (so the V metric is the
// stiffness-free Euclidean one): W = B, eigenvalues kept O(1).
inline hdvi::HdviProblem random_instance(Rng& rng, const InstanceOptions& opt) {
    const std::size_t n = opt.min_dofs + rng.index(opt.max_dofs - opt.min_dofs + 1);
    auto space = hdvi::make_space(DenseMatrix::identity(n), Vector(n, 1.0));

    DenseMatrix b = random_spd(rng, n, 0.8, 4.0);

    hdvi::MatrixKernel kernel = hdvi::MatrixKernel::zero(n);
    if (opt.with_memory) {
        DenseMatrix r = random_spd(rng, n, 0.05, 0.6);
        kernel = hdvi::MatrixKernel::constant(std::move(r));
    }

    hdvi::ComplianceLaw law;
    if (opt.with_compliance) {
        law.stiffness = rng.uniform(0.2, 1.0);
        law.contacts.push_back({rng.index(n), rng.uniform(0.5, 1.5)});
    }

    hdvi::ConstraintSet constraints;
    const std::size_t n_bounded = rng.index(opt.max_bounded + 1);
    std::vector<std::size_t> dofs(n);
    for (std::size_t i = 0; i < n; ++i) dofs[i] = i;
    for (std::size_t k = 0; k < n_bounded && !dofs.empty(); ++k) {
        const std::size_t pick = rng.index(dofs.size());
        constraints.upper_bounds.push_back({dofs[pick], rng.uniform(-0.3, 0.8)});
        dofs.erase(dofs.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    const hdvi::TimeGrid grid{opt.t_end, opt.steps};
    auto load = hdvi::LoadSampler::table({0.0, 0.5 * opt.t_end, opt.t_end},
                                         {rng.vector(n, -1.0, 1.0), rng.vector(n, -1.0, 1.0), rng.vector(n, -1.0, 1.0)});

    return hdvi::make_problem(std::move(space), std::move(b), std::move(kernel), std::move(law),
                              std::move(constraints), std::move(load), grid);
}

// Exhaustive active-set oracle for box-constrained VIs with symmetric W and
// no compliance: tries every subset of the bounded DOFs as the active set,
// solves the reduced system, and accepts on feasibility plus multiplier
// signs. Independent of the projected iteration it cross-checks.
inline Vector active_set_oracle(const hdvi::HdviProblem& p, const Vector& omega, double tol = 1e-11) {
    const auto& bounds = p.constraints.upper_bounds;
    const std::size_t n = p.space.n_dof;
    const std::size_t k = bounds.size();

    for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
        std::vector<bool> active(k, false);
        for (std::size_t i = 0; i < k; ++i) active[i] = (mask >> i) & 1u;

        std::vector<std::size_t> free_dofs;
        Vector z(n, 0.0);
        std::vector<bool> pinned(n, false);
        for (std::size_t i = 0; i < k; ++i)
            if (active[i]) {
                z[bounds[i].dof] = bounds[i].upper_bound;
                pinned[bounds[i].dof] = true;
            }
        for (std::size_t d = 0; d < n; ++d)
            if (!pinned[d]) free_dofs.push_back(d);

        if (!free_dofs.empty()) {
            DenseMatrix wff(free_dofs.size(), free_dofs.size());
            Vector rhs(free_dofs.size());
            for (std::size_t a = 0; a < free_dofs.size(); ++a) {
                double acc = omega[free_dofs[a]];
                for (std::size_t d = 0; d < n; ++d)
                    if (pinned[d]) acc -= p.w_operator(free_dofs[a], d) * z[d];
                rhs[a] = acc;
                for (std::size_t bcol = 0; bcol < free_dofs.size(); ++bcol)
                    wff(a, bcol) = p.w_operator(free_dofs[a], free_dofs[bcol]);
            }
            const Vector zf = hdvi::spd_solve(wff, rhs);
            for (std::size_t a = 0; a < free_dofs.size(); ++a) z[free_dofs[a]] = zf[a];
        }

        bool ok = true;
        for (std::size_t i = 0; i < k && ok; ++i)
            if (!active[i] && z[bounds[i].dof] > bounds[i].upper_bound + tol) ok = false;
        if (ok) {
            Vector wz(n);
            hdvi::kernels::matvec(p.w_operator, z, wz);
            for (std::size_t i = 0; i < k && ok; ++i)
                if (active[i] && omega[bounds[i].dof] - wz[bounds[i].dof] < -tol) ok = false;
        }
        if (ok) return z;
    }
    hdvi::fail(hdvi::ErrorKind::validation, "active_set_oracle: no consistent active set found");
}

}  // namespace testsupport
