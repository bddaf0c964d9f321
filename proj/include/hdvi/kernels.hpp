#pragma once

#include <span>

#include "hdvi/types.hpp"

namespace hdvi::kernels {

// Data-parallel inner loops of the solver suite. Each kernel has a serial
// reference twin in kernels::serial with identical semantics; the parallel
// version splits work so that every output element is accumulated in the
// same order as the reference, hence results are bitwise identical for any
// thread count. Tests assert this.

namespace serial {

/// y = A x
void matvec(const DenseMatrix& a, std::span<const double> x, std::span<double> y);

/// y = A^T x
void matvec_transposed(const DenseMatrix& a, std::span<const double> x, std::span<double> y);

/// out = A B
void matmul(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);

/// y += s * x
void add_scaled(std::span<double> y, double s, std::span<const double> x);

/// out = z - rho * (r - omega); the projected fixed-point step before clamping
void step_update(std::span<double> out, std::span<const double> z, std::span<const double> r,
                 std::span<const double> omega, double rho);

}  // namespace serial

void matvec(const DenseMatrix& a, std::span<const double> x, std::span<double> y);
void matvec_transposed(const DenseMatrix& a, std::span<const double> x, std::span<double> y);
void matmul(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);
void add_scaled(std::span<double> y, double s, std::span<const double> x);
void step_update(std::span<double> out, std::span<const double> z, std::span<const double> r,
                 std::span<const double> omega, double rho);

}  // namespace hdvi::kernels
