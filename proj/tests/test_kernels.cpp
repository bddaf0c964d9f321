#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hdvi/kernels.hpp"
#include "hdvi/threading.hpp"
#include "support.hpp"

using namespace hdvi;

namespace {

DenseMatrix random_matrix(testsupport::Rng& rng, std::size_t r, std::size_t c) {
    DenseMatrix m(r, c);
    for (auto& x : m.data) x = rng.uniform(-2.0, 2.0);
    return m;
}

}  // namespace

TEST_CASE("parallel kernels match the serial reference bitwise at every thread count") {
    testsupport::Rng rng(42);
    for (std::size_t n : {3u, 17u, 128u, 301u}) {
        const DenseMatrix a = random_matrix(rng, n, n);
        const DenseMatrix b = random_matrix(rng, n, n);
        const Vector x = rng.vector(n, -1.0, 1.0);
        const Vector w = rng.vector(n, -1.0, 1.0);

        Vector y_ref(n), yt_ref(n), step_ref(n);
        Vector acc_ref = w;
        DenseMatrix prod_ref;
        kernels::serial::matvec(a, x, y_ref);
        kernels::serial::matvec_transposed(a, x, yt_ref);
        kernels::serial::matmul(a, b, prod_ref);
        kernels::serial::add_scaled(acc_ref, 0.37, x);
        kernels::serial::step_update(step_ref, x, y_ref, w, 0.21);

        for (int threads : {1, 2, 4, 8}) {
            set_max_threads(threads);
            Vector y(n), yt(n), step(n);
            Vector acc = w;
            DenseMatrix prod;
            kernels::matvec(a, x, y);
            kernels::matvec_transposed(a, x, yt);
            kernels::matmul(a, b, prod);
            kernels::add_scaled(acc, 0.37, x);
            kernels::step_update(step, x, y_ref, w, 0.21);

            CHECK(y == y_ref);
            CHECK(yt == yt_ref);
            CHECK(prod.data == prod_ref.data);
            CHECK(acc == acc_ref);
            CHECK(step == step_ref);
        }
        set_max_threads(1);
    }
}

TEST_CASE("matvec against a hand computation") {
    DenseMatrix a(2, 3);
    a(0, 0) = 1.0; a(0, 1) = 2.0; a(0, 2) = 3.0;
    a(1, 0) = -1.0; a(1, 1) = 0.5; a(1, 2) = 4.0;
    const Vector x = {1.0, -1.0, 2.0};
    Vector y(2);
    kernels::matvec(a, x, y);
    CHECK(y[0] == doctest::Approx(5.0));
    CHECK(y[1] == doctest::Approx(6.5));

    Vector yt(3);
    kernels::matvec_transposed(a, Vector{2.0, 1.0}, yt);
    CHECK(yt[0] == doctest::Approx(1.0));
    CHECK(yt[1] == doctest::Approx(4.5));
    CHECK(yt[2] == doctest::Approx(10.0));
}

TEST_CASE("matmul identity and associativity spot checks") {
    testsupport::Rng rng(7);
    const DenseMatrix a = random_matrix(rng, 4, 5);
    DenseMatrix out;
    kernels::matmul(a, DenseMatrix::identity(5), out);
    CHECK(out.data == a.data);

    const DenseMatrix b = random_matrix(rng, 5, 3);
    const DenseMatrix c = random_matrix(rng, 3, 2);
    DenseMatrix ab, ab_c, bc, a_bc;
    kernels::matmul(a, b, ab);
    kernels::matmul(ab, c, ab_c);
    kernels::matmul(b, c, bc);
    kernels::matmul(a, bc, a_bc);
    for (std::size_t i = 0; i < ab_c.data.size(); ++i)
        CHECK(ab_c.data[i] == doctest::Approx(a_bc.data[i]).epsilon(1e-12));
}
