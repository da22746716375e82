#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "artadapter/gemm.hpp"
#include "artadapter/hash.hpp"
#include "artadapter/rng.hpp"
#include "artadapter/tensor.hpp"
#include "doctest.h"

using namespace artadapter;

TEST_CASE("tensor shape bookkeeping") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(-1) == 3);
    CHECK(t.shape_str() == "(2,3)");
    for (int64_t i = 0; i < 6; ++i) CHECK(t.at(i) == 0.0);

    Tensor r = t.reshaped({3, 2});
    CHECK(r.dim(0) == 3);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_vector({2, 2}, {1.0, 2.0, 3.0}), ShapeError);

    Tensor a = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    Tensor b = a;
    CHECK(a.bitwise_equal(b));
    b.at(3) = 5.0;
    CHECK(!a.bitwise_equal(b));
    CHECK(!a.bitwise_equal(Tensor({4})));

    a.add_scaled_(b, 2.0);
    CHECK(a.at(0) == 3.0);
    CHECK(a.at(3) == 14.0);
    CHECK(a.all_finite());
    a.at(1) = std::nan("");
    CHECK(!a.all_finite());
}

TEST_CASE("rng streams are deterministic and well scaled") {
    Rng a(42), b(42), c(43);
    bool diverged = false;
    for (int i = 0; i < 64; ++i) {
        uint64_t x = a.next_u64();
        CHECK(x == b.next_u64());
        if (x != c.next_u64()) diverged = true;
    }
    CHECK(diverged);

    Rng r(7);
    double mean = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mean += u;
        sq += u * u;
    }
    mean /= n;
    CHECK(std::abs(mean - 0.5) < 0.005);
    CHECK(std::abs(sq / n - 1.0 / 3.0) < 0.005);

    Rng g(11);
    double gm = 0.0, gsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = g.gaussian();
        gm += v;
        gsq += v * v;
    }
    gm /= n;
    CHECK(std::abs(gm) < 0.01);
    CHECK(std::abs(gsq / n - 1.0) < 0.02);

    Rng ui(3);
    bool lo_hit = false, hi_hit = false;
    for (int i = 0; i < 1000; ++i) {
        int64_t v = ui.uniform_int(2, 5);
        CHECK(v >= 2);
        CHECK(v <= 5);
        if (v == 2) lo_hit = true;
        if (v == 5) hi_hit = true;
    }
    CHECK(lo_hit);
    CHECK(hi_hit);
}

TEST_CASE("rng derive gives independent reproducible substreams") {
    Rng base(123);
    Rng s1 = base.derive(4, 9);
    Rng s2 = base.derive(4, 9);
    Rng s3 = base.derive(4, 10);
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(s1.next_u64() != s3.next_u64());

    // Deriving must not consume from or disturb the parent stream.
    Rng u(123);
    (void)u.derive(1, 2, 3);
    Rng v(123);
    CHECK(u.next_u64() == v.next_u64());
}

TEST_CASE("fnv1a64 matches published vectors") {
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
    CHECK(hash_hex(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");

    // update_string is length-prefixed so composite hashes cannot collide by
    // re-splitting the same bytes.
    Fnv1a64 h1, h2, h3;
    h1.update_string("foo");
    h1.update_string("bar");
    h2.update_string("foo");
    h2.update_string("bar");
    h3.update_string("foob");
    h3.update_string("ar");
    CHECK(h1.digest() == h2.digest());
    CHECK(h1.digest() != h3.digest());
}

TEST_CASE("tensor hashing covers shape and content") {
    Tensor a = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_vector({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor c = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 7});
    CHECK(hash_tensor(a) == hash_tensor(a));
    CHECK(hash_tensor(a) != hash_tensor(b));
    CHECK(hash_tensor(a) != hash_tensor(c));
}

TEST_CASE("hash_file_bytes reads files and rejects missing paths") {
    const char* path = "hash_probe.bin";
    {
        FILE* f = std::fopen(path, "wb");
        REQUIRE(f != nullptr);
        std::fputs("foobar", f);
        std::fclose(f);
    }
    CHECK(hash_file_bytes(path) == fnv1a64("foobar", 6));
    std::remove(path);
    CHECK_THROWS_AS(hash_file_bytes("definitely/not/here.bin"), IoError);
}

namespace {

void naive_gemm(const std::vector<double>& a, const std::vector<double>& b,
                std::vector<double>& c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

std::vector<double> random_vec(Rng& r, int64_t n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = r.gaussian();
    return v;
}

}  // namespace

TEST_CASE("gemm agrees with a naive reference") {
    Rng r(99);
    struct Case {
        int64_t m, k, n;
    };
    for (Case cs : {Case{1, 1, 1}, Case{3, 5, 7}, Case{65, 3, 130}, Case{128, 40, 9},
                    Case{200, 17, 64}}) {
        auto a = random_vec(r, cs.m * cs.k);
        auto b = random_vec(r, cs.k * cs.n);
        auto c = random_vec(r, cs.m * cs.n);
        auto want = c;
        naive_gemm(a, b, want, cs.m, cs.k, cs.n, true);
        gemm(a.data(), b.data(), c.data(), cs.m, cs.k, cs.n, true);
        for (size_t i = 0; i < c.size(); ++i)
            CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));

        // Transposed-operand variants against explicit transposes.
        std::vector<double> at(a.size());
        for (int64_t i = 0; i < cs.m; ++i)
            for (int64_t p = 0; p < cs.k; ++p) at[p * cs.m + i] = a[i * cs.k + p];
        std::vector<double> c2(static_cast<size_t>(cs.m * cs.n), 0.0);
        gemm_at(at.data(), b.data(), c2.data(), cs.m, cs.k, cs.n);
        std::vector<double> want2(static_cast<size_t>(cs.m * cs.n), 0.0);
        naive_gemm(a, b, want2, cs.m, cs.k, cs.n, false);
        for (size_t i = 0; i < c2.size(); ++i)
            CHECK(c2[i] == doctest::Approx(want2[i]).epsilon(1e-12));

        std::vector<double> bt(b.size());
        for (int64_t p = 0; p < cs.k; ++p)
            for (int64_t j = 0; j < cs.n; ++j) bt[j * cs.k + p] = b[p * cs.n + j];
        std::vector<double> c3(static_cast<size_t>(cs.m * cs.n), 0.0);
        gemm_bt(a.data(), bt.data(), c3.data(), cs.m, cs.k, cs.n);
        for (size_t i = 0; i < c3.size(); ++i)
            CHECK(c3[i] == doctest::Approx(want2[i]).epsilon(1e-12));
    }
}

TEST_CASE("gemm is bitwise reproducible across thread counts") {
    Rng r(5);
    const int64_t m = 150, k = 64, n = 70;
    auto a = random_vec(r, m * k);
    auto b = random_vec(r, k * n);
    std::vector<double> c1(static_cast<size_t>(m * n));
    std::vector<double> c2(static_cast<size_t>(m * n));

    const int prev = omp_get_max_threads();
    omp_set_num_threads(1);
    gemm(a.data(), b.data(), c1.data(), m, k, n);
    omp_set_num_threads(4);
    gemm(a.data(), b.data(), c2.data(), m, k, n);
    omp_set_num_threads(prev);

    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);
}
