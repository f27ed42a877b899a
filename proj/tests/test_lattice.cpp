#include <doctest.h>

#include <algorithm>

#include "qdlab/lattice.hpp"
#include "qdlab/rng.hpp"

using namespace qdlab;

namespace {

struct GramSchmidtCheck {
    MatQ mu;
    VecQ b_norm2;
};

GramSchmidtCheck gram_schmidt_exact(const MatQ& b) {
    size_t n = b.size(), d = b[0].size();
    GramSchmidtCheck g;
    g.mu.assign(n, VecQ(n, Rat(0)));
    g.b_norm2.assign(n, Rat(0));
    MatQ star = b;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < i; ++j) {
            Rat dot = 0;
            for (size_t k = 0; k < d; ++k) dot += b[i][k] * star[j][k];
            g.mu[i][j] = dot / g.b_norm2[j];
            for (size_t k = 0; k < d; ++k) star[i][k] -= g.mu[i][j] * star[j][k];
        }
        for (size_t k = 0; k < d; ++k) g.b_norm2[i] += star[i][k] * star[i][k];
    }
    return g;
}

// scale away denominators (one common factor for both bases) and compare
// canonical forms: equal iff the two bases generate the same lattice
bool same_lattice(const MatQ& a, const MatQ& b) {
    BigInt l = 1;
    for (const auto& m : {a, b})
        for (const auto& row : m)
            for (const auto& x : row) l = boost::multiprecision::lcm(l, den(x));
    auto scaled = [&](const MatQ& m) {
        MatZ out(m.size(), std::vector<BigInt>(m[0].size()));
        for (size_t i = 0; i < m.size(); ++i)
            for (size_t j = 0; j < m[i].size(); ++j)
                out[i][j] = num(m[i][j]) * (l / den(m[i][j]));
        return hnf_rows(out);
    };
    return scaled(a) == scaled(b);
}

MatQ random_basis(Rng& rng, size_t n, size_t d) {
    while (true) {
        MatQ b(n, VecQ(d));
        for (auto& row : b)
            for (auto& x : row) x = Rat(rng.unif_int(-9, 9), rng.unif_int(1, 3));
        if (rational_rank(b) == n) return b;
    }
}

Rat brute_shortest_sq(const MatQ& b, long range) {
    size_t n = b.size(), d = b[0].size();
    std::vector<long> c(n, -range);
    Rat best = -1;
    while (true) {
        bool zero = true;
        for (long x : c) zero = zero && x == 0;
        if (!zero) {
            VecQ v(d, Rat(0));
            for (size_t i = 0; i < n; ++i)
                for (size_t k = 0; k < d; ++k) v[k] += Rat(c[i]) * b[i][k];
            Rat len = length_sq(v);
            if (best < 0 || len < best) best = len;
        }
        size_t i = n;
        bool done = true;
        while (i > 0) {
            --i;
            if (c[i] < range) {
                ++c[i];
                done = false;
                break;
            }
            c[i] = -range;
        }
        if (done) break;
    }
    return best;
}

} // namespace

TEST_CASE("basis reduction: size bounds, exchange condition, lattice preserved") {
    Rng rng(4101);
    for (int trial = 0; trial < 25; ++trial) {
        size_t n = size_t(rng.unif_int(2, 4));
        MatQ b = random_basis(rng, n, n + size_t(rng.unif_int(0, 1)));
        MatQ original = b;
        lll_reduce(b);
        CHECK(same_lattice(original, b));
        GramSchmidtCheck g = gram_schmidt_exact(b);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < i; ++j) CHECK(rat_abs(g.mu[i][j]) <= Rat(1, 2));
        for (size_t k = 1; k < n; ++k) {
            Rat lhs = (Rat(3, 4) - g.mu[k][k - 1] * g.mu[k][k - 1]) * g.b_norm2[k - 1];
            CHECK(g.b_norm2[k] >= lhs);
        }
    }
}

TEST_CASE("basis reduction rejects dependent rows") {
    MatQ dep = {{Rat(1), Rat(2)}, {Rat(2), Rat(4)}};
    CHECK_THROWS_AS(lll_reduce(dep), std::invalid_argument);
}

TEST_CASE("shortest vector: skew plane example and closed forms") {
    MatQ skew = {{Rat(101), Rat(0)}, {Rat(100), Rat(1)}};
    CHECK(length_sq(shortest_vector(skew)) == Rat(2));

    MatQ single = {{Rat(3, 2), Rat(0)}};
    CHECK(length_sq(shortest_vector(single)) == Rat(9, 4));

    MatQ cube = {{Rat(2), Rat(1), Rat(1)}, {Rat(1), Rat(2), Rat(1)}, {Rat(1), Rat(1), Rat(2)}};
    CHECK(length_sq(shortest_vector(cube)) == Rat(2));
}

TEST_CASE("shortest vector matches exhaustive search in low rank") {
    Rng rng(4102);
    for (int trial = 0; trial < 20; ++trial) {
        MatQ b = random_basis(rng, 2, 2);
        CHECK(length_sq(shortest_vector(b)) == brute_shortest_sq(b, 20));
    }
    for (int trial = 0; trial < 10; ++trial) {
        MatQ b = random_basis(rng, 3, 3);
        MatQ reduced = b;
        lll_reduce(reduced);
        // coefficients of a shortest vector over a reduced basis stay tiny
        CHECK(length_sq(shortest_vector(b)) == brute_shortest_sq(reduced, 6));
    }
}

TEST_CASE("shortest vector input validation") {
    CHECK_THROWS_AS(shortest_vector(MatQ{}), std::invalid_argument);
    MatQ big(9, VecQ(9, Rat(0)));
    for (size_t i = 0; i < 9; ++i) big[i][i] = 1;
    CHECK_THROWS_AS(shortest_vector(big), std::invalid_argument);
}

TEST_CASE("gram determinant gives squared covolume") {
    MatQ rect = {{Rat(2), Rat(0)}, {Rat(0), Rat(3)}};
    CHECK(gram_det(rect) == Rat(36));
    MatQ row = {{Rat(3), Rat(4)}};
    CHECK(gram_det(row) == Rat(25));
    // invariant under adding one row to another
    MatQ sheared = {{Rat(2), Rat(3)}, {Rat(0), Rat(3)}};
    CHECK(gram_det(sheared) == Rat(36));
}

TEST_CASE("rational rank") {
    CHECK(rational_rank({{Rat(1), Rat(2)}, {Rat(2), Rat(4)}}) == 1);
    CHECK(rational_rank({{Rat(1), Rat(2)}, {Rat(3), Rat(4)}}) == 2);
    CHECK(rational_rank({{Rat(0), Rat(0)}}) == 0);
}

TEST_CASE("canonical row form: worked example, idempotence, invariance") {
    MatZ m = {{BigInt(2), BigInt(0)}, {BigInt(1), BigInt(1)}};
    MatZ h = hnf_rows(m);
    MatZ expect = {{BigInt(1), BigInt(1)}, {BigInt(0), BigInt(2)}};
    CHECK(h == expect);
    CHECK(hnf_rows(h) == h);

    Rng rng(4103);
    for (int trial = 0; trial < 20; ++trial) {
        MatZ base(2, std::vector<BigInt>(3));
        for (auto& row : base)
            for (auto& x : row) x = rng.unif_int(-6, 6);
        MatZ mixed = base;
        // random unimodular row operations must not change the canonical form
        mixed[0] = {mixed[0][0] + 3 * mixed[1][0], mixed[0][1] + 3 * mixed[1][1],
                    mixed[0][2] + 3 * mixed[1][2]};
        std::swap(mixed[0], mixed[1]);
        for (auto& x : mixed[1]) x = -x;
        CHECK(hnf_rows(base) == hnf_rows(mixed));
    }
}

TEST_CASE("integer kernel: examples and orthogonality") {
    MatZ k1 = integer_kernel({{BigInt(2), BigInt(4)}});
    MatZ expect1 = {{BigInt(2), BigInt(-1)}};
    CHECK(k1 == expect1);

    CHECK(integer_kernel({{BigInt(1), BigInt(2)}, {BigInt(3), BigInt(4)}}).empty());

    MatZ k2 = integer_kernel({{BigInt(1), BigInt(1), BigInt(1)}});
    MatZ expect2 = {{BigInt(1), BigInt(0), BigInt(-1)}, {BigInt(0), BigInt(1), BigInt(-1)}};
    CHECK(k2 == expect2);

    Rng rng(4104);
    for (int trial = 0; trial < 15; ++trial) {
        MatZ m(2, std::vector<BigInt>(4));
        for (auto& row : m)
            for (auto& x : row) x = rng.unif_int(-5, 5);
        for (const auto& krow : integer_kernel(m))
            for (const auto& mrow : m) {
                BigInt dot = 0;
                for (size_t i = 0; i < 4; ++i) dot += mrow[i] * krow[i];
                CHECK(dot == 0);
            }
    }
}

TEST_CASE("kernel of rational rows is primitive and orthogonal") {
    MatZ k = rational_kernel_primitive({{Rat(1), Rat(2)}});
    REQUIRE(k.size() == 1);
    CHECK(k[0][0] * 1 + k[0][1] * 2 == 0);
    CHECK(boost::multiprecision::gcd(k[0][0], k[0][1]) == 1);
    CHECK(rational_kernel_primitive({{Rat(1), Rat(0)}, {Rat(0), Rat(1)}}).empty());
}

TEST_CASE("saturation of a rational span") {
    MatZ s1 = saturate_span({{Rat(1), Rat(1)}});
    MatZ e1 = {{BigInt(1), BigInt(1)}};
    CHECK(s1 == e1);

    // non-integer direction: saturation clears denominators to the primitive point
    MatZ s2 = saturate_span({{Rat(1, 2), Rat(1, 3)}});
    MatZ e2 = {{BigInt(3), BigInt(2)}};
    CHECK(s2 == e2);

    // index-2 sublattice input still saturates to the primitive generator
    MatZ s3 = saturate_span({{Rat(2), Rat(4)}});
    MatZ e3 = {{BigInt(1), BigInt(2)}};
    CHECK(s3 == e3);

    MatZ s4 = saturate_span({{Rat(1), Rat(0), Rat(1)}, {Rat(0), Rat(1), Rat(1)}});
    MatZ e4 = {{BigInt(1), BigInt(0), BigInt(1)}, {BigInt(0), BigInt(1), BigInt(1)}};
    CHECK(s4 == e4);

    MatZ s5 = saturate_span({{Rat(1), Rat(0)}, {Rat(1, 7), Rat(1, 7)}});
    MatZ e5 = {{BigInt(1), BigInt(0)}, {BigInt(0), BigInt(1)}};
    CHECK(s5 == e5);
}
