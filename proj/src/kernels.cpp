#include "hdvi/kernels.hpp"

#include <cstdint>

#include "hdvi/threading.hpp"

namespace hdvi::kernels {

namespace serial {

void matvec(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

void matvec_transposed(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    // Traverse by output column so each y[j] accumulates rows 0..n in order.
    for (std::size_t j = 0; j < a.cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) acc += a.data[i * a.cols + j] * x[i];
        y[j] = acc;
    }
}

void matmul(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
    out = DenseMatrix(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

void add_scaled(std::span<double> y, double s, std::span<const double> x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

void step_update(std::span<double> out, std::span<const double> z, std::span<const double> r,
                 std::span<const double> omega, double rho) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] - rho * (r[i] - omega[i]);
}

}  // namespace serial

// The parallel variants hand work below the size thresholds (or with a
// single-thread cap) straight to the serial reference; entering an OpenMP
// region costs microseconds, which dwarfs the small cases that dominate the
// projected fixed-point loops.

void matvec(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    const int nt = max_threads();
    if (nt <= 1 || a.rows < 256) {
        serial::matvec(a, x, y);
        return;
    }
    const std::int64_t n = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double* row = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += row[j] * x[j];
        y[static_cast<std::size_t>(i)] = acc;
    }
}

void matvec_transposed(const DenseMatrix& a, std::span<const double> x, std::span<double> y) {
    const int nt = max_threads();
    if (nt <= 1 || a.cols < 256) {
        serial::matvec_transposed(a, x, y);
        return;
    }
    const std::int64_t n = static_cast<std::int64_t>(a.cols);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (std::int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) acc += a.data[i * a.cols + static_cast<std::size_t>(j)] * x[i];
        y[static_cast<std::size_t>(j)] = acc;
    }
}

void matmul(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
    const int nt = max_threads();
    if (nt <= 1 || a.rows < 16) {
        serial::matmul(a, b, out);
        return;
    }
    out = DenseMatrix(a.rows, b.cols);
    const std::int64_t n = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double* arow = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        double* orow = out.data.data() + static_cast<std::size_t>(i) * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
}

void add_scaled(std::span<double> y, double s, std::span<const double> x) {
    const int nt = max_threads();
    if (nt <= 1 || y.size() < 4096) {
        serial::add_scaled(y, s, x);
        return;
    }
    const std::int64_t n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for num_threads(nt) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] += s * x[static_cast<std::size_t>(i)];
}

void step_update(std::span<double> out, std::span<const double> z, std::span<const double> r,
                 std::span<const double> omega, double rho) {
    const int nt = max_threads();
    if (nt <= 1 || out.size() < 4096) {
        serial::step_update(out, z, r, omega, rho);
        return;
    }
    const std::int64_t n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for num_threads(nt) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        out[k] = z[k] - rho * (r[k] - omega[k]);
    }
}

}  // namespace hdvi::kernels
