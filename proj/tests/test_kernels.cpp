#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "sagc/errors.hpp"
#include "sagc/kernels.hpp"
#include "sagc/rng.hpp"

using namespace sagc;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_uniform(-2.0, 2.0);
    return v;
}

// Independent reference: plain i-j-k triple loop with a local accumulator,
// deliberately a different loop order than the production kernels.
void matmul_oracle(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

} // namespace

TEST_CASE("scalar matmul matches an independent triple loop") {
    Rng rng(101);
    for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                           {2, 3, 2},
                           {5, 7, 3},
                           {16, 16, 16},
                           {1, 9, 4}}) {
        const std::vector<double> a = random_vec(rng, m * k);
        const std::vector<double> b = random_vec(rng, k * n);
        std::vector<double> got(m * n), want(m * n);
        kernels::scalar_ops().matmul(a.data(), b.data(), got.data(), m, k, n);
        matmul_oracle(a.data(), b.data(), want.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("scalar elementwise kernels match direct formulas") {
    Rng rng(102);
    const std::size_t n = 37; // not a multiple of the AVX2 lane width
    const std::vector<double> a = random_vec(rng, n);
    const std::vector<double> b = random_vec(rng, n);
    const kernels::Ops& ops = kernels::scalar_ops();

    std::vector<double> out(n);
    ops.add(a.data(), b.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == a[i] + b[i]);

    ops.mul(a.data(), b.data(), out.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == a[i] * b[i]);

    std::vector<double> y = b;
    ops.axpy(0.5, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == b[i] + 0.5 * a[i]);

    std::vector<double> x = a;
    ops.scale(-1.5, x.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == -1.5 * a[i]);

    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
    CHECK(ops.dot(a.data(), b.data(), n) == doctest::Approx(dot).epsilon(1e-12));
}

TEST_CASE("AVX2 kernels are bitwise-equal to scalar (dot under tolerance)") {
    const kernels::Ops* avx2 = kernels::avx2_ops();
    if (avx2 == nullptr) {
        MESSAGE("AVX2 unavailable on this machine; skipping");
        return;
    }
    const kernels::Ops& scalar = kernels::scalar_ops();
    Rng rng(103);

    for (std::size_t n : {1, 3, 4, 8, 33, 128, 1000}) {
        const std::vector<double> a = random_vec(rng, n);
        const std::vector<double> b = random_vec(rng, n);

        std::vector<double> s(n), v(n);
        scalar.add(a.data(), b.data(), s.data(), n);
        avx2->add(a.data(), b.data(), v.data(), n);
        CHECK(std::memcmp(s.data(), v.data(), n * sizeof(double)) == 0);

        scalar.mul(a.data(), b.data(), s.data(), n);
        avx2->mul(a.data(), b.data(), v.data(), n);
        CHECK(std::memcmp(s.data(), v.data(), n * sizeof(double)) == 0);

        s = b;
        v = b;
        scalar.axpy(1.25, a.data(), s.data(), n);
        avx2->axpy(1.25, a.data(), v.data(), n);
        CHECK(std::memcmp(s.data(), v.data(), n * sizeof(double)) == 0);

        s = a;
        v = a;
        scalar.scale(0.75, s.data(), n);
        avx2->scale(0.75, v.data(), n);
        CHECK(std::memcmp(s.data(), v.data(), n * sizeof(double)) == 0);

        const double ds = scalar.dot(a.data(), b.data(), n);
        const double dv = avx2->dot(a.data(), b.data(), n);
        CHECK(dv == doctest::Approx(ds).epsilon(1e-12));
    }

    for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                           {3, 5, 7},
                           {16, 16, 16},
                           {10, 200, 3},
                           {2, 2, 9}}) {
        const std::vector<double> a = random_vec(rng, m * k);
        const std::vector<double> b = random_vec(rng, k * n);
        std::vector<double> s(m * n), v(m * n);
        scalar.matmul(a.data(), b.data(), s.data(), m, k, n);
        avx2->matmul(a.data(), b.data(), v.data(), m, k, n);
        CHECK(std::memcmp(s.data(), v.data(), m * n * sizeof(double)) == 0);
    }
}

TEST_CASE("kernel dispatch honors force() and rejects unknown names") {
    const std::string original = kernels::active().name;

    kernels::force("scalar");
    CHECK(std::string(kernels::active().name) == "scalar");

    if (kernels::avx2_ops() != nullptr) {
        kernels::force("avx2");
        CHECK(std::string(kernels::active().name) == "avx2");
    }

    CHECK_THROWS_AS(kernels::force("gpu"), ConfigError);

    kernels::force(original);
    CHECK(std::string(kernels::active().name) == original);
}
