// Kernel benchmark: serial reference vs OpenMP variants across sizes and
// thread counts, plus the end-to-end forward solve. Each parallel result is
// checked bitwise against the reference before timing.
//
//   ./bench_kernels [max_threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <vector>

#include "hdvi/forward.hpp"
#include "hdvi/kernels.hpp"
#include "hdvi/threading.hpp"

using namespace hdvi;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

template <typename F>
double time_op(F&& op, int repeats) {
    op();  // warmup
    double best = 1e300;
    for (int r = 0; r < 5; ++r) {
        const double t0 = now_seconds();
        for (int i = 0; i < repeats; ++i) op();
        best = std::min(best, (now_seconds() - t0) / repeats);
    }
    return best;
}

DenseMatrix random_matrix(std::mt19937_64& gen, std::size_t n) {
    DenseMatrix m(n, n);
    for (auto& x : m.data) x = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    const int max_nt = argc > 1 ? std::atoi(argv[1]) : 4;
    std::mt19937_64 gen(12345);

    std::printf("%-10s %6s %10s %10s %8s %8s\n", "kernel", "n", "serial_us", "omp_us", "threads", "speedup");
    for (std::size_t n : {128u, 256u, 512u, 1024u, 2048u}) {
        const DenseMatrix a = random_matrix(gen, n);
        Vector x(n), y(n), y_ref(n);
        for (auto& v : x) v = static_cast<double>(gen() >> 11) * 0x1.0p-53;

        const int repeats = n <= 512 ? 200 : 20;
        set_max_threads(1);
        const double serial = time_op([&] { kernels::serial::matvec(a, x, y_ref); }, repeats);
        set_max_threads(max_nt);
        kernels::matvec(a, x, y);
        if (y != y_ref) {
            std::printf("matvec n=%zu: parallel result differs from the reference\n", n);
            return 1;
        }
        const double omp = time_op([&] { kernels::matvec(a, x, y); }, repeats);
        std::printf("%-10s %6zu %10.2f %10.2f %8d %8.2f\n", "matvec", n, serial * 1e6, omp * 1e6, max_nt,
                    serial / omp);
    }

    for (std::size_t n : {128u, 256u, 512u}) {
        const DenseMatrix a = random_matrix(gen, n);
        const DenseMatrix b = random_matrix(gen, n);
        DenseMatrix out, out_ref;
        const int repeats = n <= 256 ? 20 : 5;
        set_max_threads(1);
        const double serial = time_op([&] { kernels::serial::matmul(a, b, out_ref); }, repeats);
        set_max_threads(max_nt);
        kernels::matmul(a, b, out);
        if (out.data != out_ref.data) {
            std::printf("matmul n=%zu: parallel result differs from the reference\n", n);
            return 1;
        }
        const double omp = time_op([&] { kernels::matmul(a, b, out); }, repeats);
        std::printf("%-10s %6zu %10.2f %10.2f %8d %8.2f\n", "matmul", n, serial * 1e6, omp * 1e6, max_nt,
                    serial / omp);
    }

    // end-to-end: the fixed-point trajectory map is the node-parallel path
    {
        const auto p = build_rod_example(48, TimeGrid{1.0, 400});
        set_max_threads(1);
        const Trajectory u = solve_forward(p, {});
        const double serial = time_op([&] { apply_fixed_point_map(p, u, 1e-10); }, 1);
        set_max_threads(max_nt);
        const Trajectory mapped_ref = apply_fixed_point_map(p, u, 1e-10);
        const double omp = time_op([&] { apply_fixed_point_map(p, u, 1e-10); }, 1);
        set_max_threads(1);
        const Trajectory mapped = apply_fixed_point_map(p, u, 1e-10);
        bool same = true;
        for (std::size_t n = 0; n < mapped.values.size(); ++n) same = same && mapped.values[n] == mapped_ref.values[n];
        if (!same) {
            std::printf("trajectory map: thread count changed the result\n");
            return 1;
        }
        std::printf("%-10s %6s %10.2f %10.2f %8d %8.2f\n", "traj_map", "-", serial * 1e6, omp * 1e6, max_nt,
                    serial / omp);
    }
    return 0;
}
