#pragma once

#include <functional>
#include <span>

#include "hdvi/types.hpp"

namespace hdvi {

// ---------------------------------------------------------------------------
// Vector helpers (serial; the data-parallel paths live in kernels.hpp)

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double max_abs(std::span<const double> v);
Vector subtract(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// Factorizations and solves

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// A pivot below 1e-14 times the largest diagonal entry raises NotSPD.
struct CholeskyFactor {
    DenseMatrix l;

    void solve_in_place(std::span<double> x) const;
    Vector solve(const Vector& b) const;
};

CholeskyFactor cholesky(const DenseMatrix& a);

/// Solves A x = b for symmetric positive definite A. One or two rounds of
/// iterative refinement keep the residual at the 1e-12 * (1 + |b|) level.
Vector spd_solve(const DenseMatrix& a, const Vector& b);

// ---------------------------------------------------------------------------
// Symmetric eigenvalues (cyclic Jacobi) and derived norms

std::vector<double> symmetric_eigenvalues(DenseMatrix a);
double min_symmetric_eigenvalue(const DenseMatrix& a);
double max_symmetric_eigenvalue(const DenseMatrix& a);

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix symmetric_part(const DenseMatrix& a);
bool is_symmetric(const DenseMatrix& a, double rel_tol = 1e-12);

/// Spectral norm |A|_2 = sqrt(lambda_max(A^T A)).
double spectral_norm(const DenseMatrix& a);

/// Operator norm of A on the weighted space (x, y) -> sum_i w_i x_i y_i,
/// i.e. |diag(sqrt(w)) A diag(1/sqrt(w))|_2. Weights must be positive.
double weighted_operator_norm(const DenseMatrix& a, const Vector& weights);

/// Smallest eigenvalue of the pencil (A, G) with A symmetric and G SPD:
/// min over x of x^T A x / x^T G x.
double generalized_min_eigenvalue(const DenseMatrix& a, const CholeskyFactor& g_factor);

// ---------------------------------------------------------------------------
// Time-dependent matrix kernel t -> R(t) acting on strain vectors

class MatrixKernel {
  public:
    static MatrixKernel zero(std::size_t dim);
    static MatrixKernel constant(DenseMatrix value);
    /// Piecewise-linear interpolation between samples at strictly increasing
    /// times; evaluation clamps outside the sampled range.
    static MatrixKernel table(std::vector<double> times, std::vector<DenseMatrix> samples);
    static MatrixKernel function(std::size_t dim, std::function<DenseMatrix(double)> eval);

    std::size_t dim() const { return dim_; }
    bool time_invariant() const { return kind_ == Kind::zero || kind_ == Kind::constant; }
    bool is_zero() const { return kind_ == Kind::zero; }

    /// y = R(t) x
    void apply(double t, std::span<const double> x, std::span<double> y) const;
    DenseMatrix at(double t) const;

    /// Times at which sampling the kernel norm bounds the norm over the whole
    /// interval (table breakpoints; grid nodes for function kernels).
    std::vector<double> norm_sample_times(const TimeGrid& grid) const;

  private:
    enum class Kind { zero, constant, table, function };
    Kind kind_ = Kind::zero;
    std::size_t dim_ = 0;
    std::vector<double> times_;
    std::vector<DenseMatrix> samples_;
    std::function<DenseMatrix(double)> eval_;
};

enum class QuadratureRule { left_rectangle, trapezoid };

/// Quadrature of the hereditary integral  int_0^{t_n} R(t_n - s) e(s) ds
/// over the strain history e(t_0)..e(t_n). The trapezoid rule reads nodes
/// 0..n with half weights at both ends; left_rectangle reads nodes 0..n-1
/// with full weight dt, which decouples the current step.
Vector memory_integral(const MatrixKernel& kernel, std::span<const Vector> history, const TimeGrid& grid,
                       std::size_t n, QuadratureRule rule);

}  // namespace hdvi
