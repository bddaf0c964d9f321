#include "hdvi/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "hdvi/kernels.hpp"

namespace hdvi {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

Vector subtract(const Vector& a, const Vector& b) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

// ---------------------------------------------------------------------------

void CholeskyFactor::solve_in_place(std::span<double> x) const {
    const std::size_t n = l.rows;
    // forward: L y = x
    for (std::size_t i = 0; i < n; ++i) {
        double acc = x[i];
        const double* row = l.data.data() + i * n;
        for (std::size_t j = 0; j < i; ++j) acc -= row[j] * x[j];
        x[i] = acc / row[i];
    }
    // backward: L^T z = y
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) acc -= l.data[j * n + ii] * x[j];
        x[ii] = acc / l.data[ii * n + ii];
    }
}

Vector CholeskyFactor::solve(const Vector& b) const {
    Vector x = b;
    solve_in_place(x);
    return x;
}

CholeskyFactor cholesky(const DenseMatrix& a) {
    if (!a.square()) fail(ErrorKind::dimension_mismatch, "cholesky: matrix must be square");
    const std::size_t n = a.rows;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double pivot_floor = 1e-14 * max_diag;

    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(acc > pivot_floor))
                    fail(ErrorKind::not_spd, "cholesky: non-positive pivot at row " + std::to_string(i));
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
    return CholeskyFactor{std::move(l)};
}

Vector spd_solve(const DenseMatrix& a, const Vector& b) {
    if (!a.square() || a.rows != b.size())
        fail(ErrorKind::dimension_mismatch, "spd_solve: dimensions do not match");
    const CholeskyFactor f = cholesky(a);
    Vector x = f.solve(b);

    // Iterative refinement until the residual meets the contract.
    const double target = 1e-12 * (1.0 + norm2(b));
    Vector r(b.size()), dx;
    for (int pass = 0; pass < 3; ++pass) {
        kernels::matvec(a, x, r);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
        if (norm2(r) <= target) break;
        dx = f.solve(r);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
    }
    return x;
}

// ---------------------------------------------------------------------------

std::vector<double> symmetric_eigenvalues(DenseMatrix a) {
    if (!a.square()) fail(ErrorKind::dimension_mismatch, "symmetric_eigenvalues: matrix must be square");
    const std::size_t n = a.rows;
    if (n == 0) return {};
    if (n == 1) return {a(0, 0)};

    double frob = 0.0;
    for (double x : a.data) frob += x * x;
    frob = std::sqrt(frob);
    const double stop = 1e-14 * (frob > 0.0 ? frob : 1.0);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) <= stop) break;
        if (sweep == 99) fail(ErrorKind::max_iterations, "symmetric_eigenvalues: Jacobi sweeps exhausted");

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p), aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }

    std::vector<double> eigs(n);
    for (std::size_t i = 0; i < n; ++i) eigs[i] = a(i, i);
    std::sort(eigs.begin(), eigs.end());
    return eigs;
}

double min_symmetric_eigenvalue(const DenseMatrix& a) { return symmetric_eigenvalues(a).front(); }
double max_symmetric_eigenvalue(const DenseMatrix& a) { return symmetric_eigenvalues(a).back(); }

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

DenseMatrix symmetric_part(const DenseMatrix& a) {
    DenseMatrix s(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

bool is_symmetric(const DenseMatrix& a, double rel_tol) {
    if (!a.square()) return false;
    double scale = 0.0, dev = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) {
            scale = std::max(scale, std::abs(a(i, j)));
            dev = std::max(dev, std::abs(a(i, j) - a(j, i)));
        }
    return dev <= rel_tol * (scale > 0.0 ? scale : 1.0);
}

double spectral_norm(const DenseMatrix& a) {
    DenseMatrix ata;
    kernels::matmul(transpose(a), a, ata);
    const double lmax = max_symmetric_eigenvalue(ata);
    return std::sqrt(std::max(lmax, 0.0));
}

double weighted_operator_norm(const DenseMatrix& a, const Vector& weights) {
    if (!a.square() || a.rows != weights.size())
        fail(ErrorKind::dimension_mismatch, "weighted_operator_norm: dimensions do not match");
    DenseMatrix scaled = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double si = std::sqrt(weights[i]);
        for (std::size_t j = 0; j < a.cols; ++j) scaled(i, j) *= si / std::sqrt(weights[j]);
    }
    return spectral_norm(scaled);
}

double generalized_min_eigenvalue(const DenseMatrix& a, const CholeskyFactor& g_factor) {
    // lambda_min of L^{-1} A L^{-T} where G = L L^T.
    const std::size_t n = a.rows;
    const DenseMatrix& l = g_factor.l;

    // X = L^{-1} A by forward substitution on each column of A.
    DenseMatrix x(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = a(i, col);
            for (std::size_t j = 0; j < i; ++j) acc -= l(i, j) * x(j, col);
            x(i, col) = acc / l(i, i);
        }
    }
    // C = X L^{-T}: solve C L^T = X row by row (forward substitution again).
    DenseMatrix c(n, n);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = x(row, j);
            for (std::size_t k = 0; k < j; ++k) acc -= c(row, k) * l(j, k);
            c(row, j) = acc / l(j, j);
        }
    }
    return min_symmetric_eigenvalue(symmetric_part(c));
}

// ---------------------------------------------------------------------------

MatrixKernel MatrixKernel::zero(std::size_t dim) {
    MatrixKernel k;
    k.kind_ = Kind::zero;
    k.dim_ = dim;
    return k;
}

MatrixKernel MatrixKernel::constant(DenseMatrix value) {
    if (!value.square()) fail(ErrorKind::validation, "kernel: constant sample must be square");
    MatrixKernel k;
    k.kind_ = Kind::constant;
    k.dim_ = value.rows;
    k.samples_.push_back(std::move(value));
    return k;
}

MatrixKernel MatrixKernel::table(std::vector<double> times, std::vector<DenseMatrix> samples) {
    if (times.empty() || times.size() != samples.size())
        fail(ErrorKind::validation, "kernel: table needs matching, nonempty times and samples");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] < times[i + 1])) fail(ErrorKind::validation, "kernel: table times must be strictly increasing");
    const std::size_t dim = samples.front().rows;
    for (const auto& s : samples)
        if (!s.square() || s.rows != dim) fail(ErrorKind::validation, "kernel: table samples must be square and same size");
    MatrixKernel k;
    k.kind_ = Kind::table;
    k.dim_ = dim;
    k.times_ = std::move(times);
    k.samples_ = std::move(samples);
    return k;
}

MatrixKernel MatrixKernel::function(std::size_t dim, std::function<DenseMatrix(double)> eval) {
    MatrixKernel k;
    k.kind_ = Kind::function;
    k.dim_ = dim;
    k.eval_ = std::move(eval);
    return k;
}

void MatrixKernel::apply(double t, std::span<const double> x, std::span<double> y) const {
    switch (kind_) {
        case Kind::zero:
            std::fill(y.begin(), y.end(), 0.0);
            return;
        case Kind::constant:
            kernels::matvec(samples_.front(), x, y);
            return;
        case Kind::table: {
            if (t <= times_.front()) {
                kernels::matvec(samples_.front(), x, y);
                return;
            }
            if (t >= times_.back()) {
                kernels::matvec(samples_.back(), x, y);
                return;
            }
            const auto it = std::upper_bound(times_.begin(), times_.end(), t);
            const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
            const std::size_t lo = hi - 1;
            const double theta = (t - times_[lo]) / (times_[hi] - times_[lo]);
            Vector tmp(y.size());
            kernels::matvec(samples_[lo], x, y);
            kernels::matvec(samples_[hi], x, tmp);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = (1.0 - theta) * y[i] + theta * tmp[i];
            return;
        }
        case Kind::function: {
            const DenseMatrix m = eval_(t);
            kernels::matvec(m, x, y);
            return;
        }
    }
}

DenseMatrix MatrixKernel::at(double t) const {
    switch (kind_) {
        case Kind::zero:
            return DenseMatrix(dim_, dim_);
        case Kind::constant:
            return samples_.front();
        case Kind::table: {
            if (t <= times_.front()) return samples_.front();
            if (t >= times_.back()) return samples_.back();
            const auto it = std::upper_bound(times_.begin(), times_.end(), t);
            const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
            const std::size_t lo = hi - 1;
            const double theta = (t - times_[lo]) / (times_[hi] - times_[lo]);
            DenseMatrix out(dim_, dim_);
            for (std::size_t i = 0; i < out.data.size(); ++i)
                out.data[i] = (1.0 - theta) * samples_[lo].data[i] + theta * samples_[hi].data[i];
            return out;
        }
        case Kind::function:
            return eval_(t);
    }
    return DenseMatrix(dim_, dim_);
}

std::vector<double> MatrixKernel::norm_sample_times(const TimeGrid& grid) const {
    if (time_invariant()) return {0.0};
    if (kind_ == Kind::table) {
        // A linear blend of two samples has norm bounded by the larger of the
        // endpoints, so the breakpoints dominate the whole interval.
        std::vector<double> ts;
        for (double t : times_)
            if (t >= 0.0 && t <= grid.t_end) ts.push_back(t);
        ts.push_back(0.0);
        ts.push_back(grid.t_end);
        return ts;
    }
    std::vector<double> ts(grid.node_count());
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = grid.node(i);
    return ts;
}

// ---------------------------------------------------------------------------

Vector memory_integral(const MatrixKernel& kernel, std::span<const Vector> history, const TimeGrid& grid,
                       std::size_t n, QuadratureRule rule) {
    const std::size_t dim = kernel.dim();
    Vector out(dim, 0.0);
    if (n == 0) return out;

    const std::size_t needed = (rule == QuadratureRule::trapezoid) ? n + 1 : n;
    if (history.size() < needed)
        fail(ErrorKind::empty_history, "memory_integral: history has " + std::to_string(history.size()) +
                                           " entries, needs " + std::to_string(needed));

    const double dt = grid.dt();
    const double tn = grid.node(n);

    if (kernel.is_zero()) return out;

    auto weight = [&](std::size_t j) {
        if (rule == QuadratureRule::left_rectangle) return dt;
        return (j == 0 || j == n) ? 0.5 * dt : dt;
    };
    const std::size_t last = (rule == QuadratureRule::trapezoid) ? n : n - 1;

    if (kernel.time_invariant()) {
        // R is constant in time: accumulate the weighted history once and
        // apply the kernel to the sum.
        Vector acc(history[0].size(), 0.0);
        for (std::size_t j = 0; j <= last; ++j) kernels::add_scaled(acc, weight(j), history[j]);
        kernel.apply(0.0, acc, out);
        return out;
    }

    Vector tmp(dim);
    for (std::size_t j = 0; j <= last; ++j) {
        kernel.apply(tn - grid.node(j), history[j], tmp);
        kernels::add_scaled(out, weight(j), tmp);
    }
    return out;
}

}  // namespace hdvi
