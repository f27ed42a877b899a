#include "qdlab/lattice.hpp"

#include <algorithm>
#include <stdexcept>

namespace qdlab {

Rat length_sq(const VecQ& v) {
    Rat s = 0;
    for (const auto& x : v) s += x * x;
    return s;
}

namespace {

Rat dot_q(const VecQ& a, const VecQ& b) {
    Rat s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// round-to-nearest for rationals, ties toward +inf
BigInt round_rat(const Rat& x) { return floor_rat(x + Rat(1, 2)); }

struct GramSchmidt {
    std::vector<VecQ> bstar;
    std::vector<std::vector<Rat>> mu;  // mu[i][j], j < i
    std::vector<Rat> B;                // squared lengths of bstar

    void compute(const MatQ& basis) {
        size_t n = basis.size();
        bstar.assign(n, {});
        mu.assign(n, std::vector<Rat>(n, Rat(0)));
        B.assign(n, Rat(0));
        for (size_t i = 0; i < n; ++i) {
            bstar[i] = basis[i];
            for (size_t j = 0; j < i; ++j) {
                if (B[j] == 0) throw std::invalid_argument("lattice: dependent basis rows");
                mu[i][j] = dot_q(basis[i], bstar[j]) / B[j];
                for (size_t k = 0; k < bstar[i].size(); ++k)
                    bstar[i][k] -= mu[i][j] * bstar[j][k];
            }
            B[i] = length_sq(bstar[i]);
        }
        if (!B.empty() && B.back() == 0) throw std::invalid_argument("lattice: dependent basis rows");
    }
};

} // namespace

void lll_reduce(MatQ& basis, const Rat& delta) {
    if (basis.empty()) return;
    size_t n = basis.size();
    GramSchmidt gs;
    gs.compute(basis);
    size_t k = 1;
    while (k < n) {
        // size-reduce row k against previous rows
        for (size_t j = k; j-- > 0;) {
            BigInt r = round_rat(gs.mu[k][j]);
            if (r != 0) {
                for (size_t t = 0; t < basis[k].size(); ++t)
                    basis[k][t] -= Rat(r) * basis[j][t];
                gs.compute(basis);
            }
        }
        if (gs.B[k] >= (delta - gs.mu[k][k - 1] * gs.mu[k][k - 1]) * gs.B[k - 1]) {
            ++k;
        } else {
            std::swap(basis[k], basis[k - 1]);
            gs.compute(basis);
            k = k > 1 ? k - 1 : 1;
        }
    }
}

namespace {

VecQ shortest_rank2(VecQ a, VecQ b) {
    // Lagrange reduction: subtract the nearest multiple until stable.
    if (length_sq(a) < length_sq(b)) std::swap(a, b);
    for (;;) {
        // now |b| <= |a|
        BigInt t = round_rat(dot_q(a, b) / length_sq(b));
        if (t != 0)
            for (size_t i = 0; i < a.size(); ++i) a[i] -= Rat(t) * b[i];
        if (length_sq(a) >= length_sq(b)) return b;
        std::swap(a, b);
    }
}

struct Enumerator {
    const MatQ& basis;
    const GramSchmidt& gs;
    size_t n;
    Rat best_len;
    std::vector<BigInt> best_x, x;

    Enumerator(const MatQ& b, const GramSchmidt& g)
        : basis(b), gs(g), n(b.size()), x(b.size(), BigInt(0)) {}

    // depth-first over coefficients x_{n-1} .. x_0 with exact interval bounds
    void run() {
        best_len = gs.B[0];  // length of b*_0 = b_0: a valid incumbent bound
        best_x.assign(n, BigInt(0));
        best_x[0] = 1;
        descend(n, Rat(0));
        // tighten: basis[0] itself might not be shortest; enumeration found best_x
    }

    void descend(size_t level, const Rat& used) {
        if (level == 0) {
            bool zero = std::all_of(x.begin(), x.end(), [](const BigInt& v) { return v == 0; });
            if (!zero && used < best_len) { best_len = used; best_x = x; }
            return;
        }
        size_t i = level - 1;
        Rat c = 0;  // projection center: -sum_{j>i} x_j mu[j][i]
        for (size_t j = i + 1; j < n; ++j) c -= Rat(x[j]) * gs.mu[j][i];
        Rat budget = (best_len - used) / gs.B[i];
        if (budget < 0) return;
        BigInt lo = ceil_minus_sqrt(c, budget), hi = floor_plus_sqrt(c, budget);
        for (BigInt v = lo; v <= hi; ++v) {
            x[i] = v;
            Rat d = Rat(v) - c;
            descend(i, Rat(used + gs.B[i] * d * d));
        }
        x[i] = 0;
    }

    VecQ result() const {
        VecQ v(basis[0].size(), Rat(0));
        for (size_t j = 0; j < n; ++j)
            for (size_t t = 0; t < v.size(); ++t) v[t] += Rat(best_x[j]) * basis[j][t];
        return v;
    }
};

} // namespace

VecQ shortest_vector(const MatQ& basis) {
    if (basis.empty()) throw std::invalid_argument("shortest_vector: empty basis");
    if (basis.size() > 8) throw std::invalid_argument("shortest_vector: rank above 8 unsupported");
    if (basis.size() == 1) {
        if (length_sq(basis[0]) == 0) throw std::invalid_argument("shortest_vector: zero row");
        return basis[0];
    }
    if (basis.size() == 2) return shortest_rank2(basis[0], basis[1]);
    MatQ b = basis;
    lll_reduce(b);
    GramSchmidt gs;
    gs.compute(b);
    Enumerator en(b, gs);
    en.run();
    return en.result();
}

Rat gram_det(const MatQ& rows) {
    size_t n = rows.size();
    MatQ g(n, VecQ(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) g[i][j] = dot_q(rows[i], rows[j]);
    // LU-free rational elimination
    Rat det = 1;
    for (size_t c = 0; c < n; ++c) {
        size_t piv = c;
        while (piv < n && g[piv][c] == 0) ++piv;
        if (piv == n) return Rat(0);
        if (piv != c) { std::swap(g[piv], g[c]); det = -det; }
        det *= g[c][c];
        for (size_t r = c + 1; r < n; ++r) {
            if (g[r][c] == 0) continue;
            Rat f = g[r][c] / g[c][c];
            for (size_t k = c; k < n; ++k) g[r][k] -= f * g[c][k];
        }
    }
    return det;
}

int rational_rank(MatQ m) {
    if (m.empty()) return 0;
    size_t rows = m.size(), cols = m[0].size(), r = 0;
    for (size_t c = 0; c < cols && r < rows; ++c) {
        size_t piv = r;
        while (piv < rows && m[piv][c] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(m[piv], m[r]);
        for (size_t i = r + 1; i < rows; ++i) {
            if (m[i][c] == 0) continue;
            Rat f = m[i][c] / m[r][c];
            for (size_t k = c; k < cols; ++k) m[i][k] -= f * m[r][k];
        }
        ++r;
    }
    return static_cast<int>(r);
}

namespace {

// Euclid on the entries at `col` of two rows, applied to the full rows.
void gcd_step(std::vector<BigInt>& a, std::vector<BigInt>& b, size_t col) {
    while (b[col] != 0) {
        BigInt q = a[col] / b[col];  // truncated division is fine for Euclid
        for (size_t k = 0; k < a.size(); ++k) a[k] -= q * b[k];
        std::swap(a, b);
    }
}

} // namespace

MatZ hnf_rows(MatZ m) {
    if (m.empty()) return m;
    size_t rows = m.size(), cols = m[0].size(), r = 0;
    for (size_t c = 0; c < cols && r < rows; ++c) {
        // gather the column gcd into row r
        for (size_t i = r + 1; i < rows; ++i)
            if (m[i][c] != 0) gcd_step(m[r], m[i], c);
        if (m[r][c] == 0) {
            // maybe row r itself is zero in this column but a lower one was not;
            // gcd_step leaves the nonzero result in m[r], so nothing to do
            bool any = false;
            for (size_t i = r; i < rows; ++i) any = any || m[i][c] != 0;
            if (!any) continue;
        }
        if (m[r][c] == 0) continue;
        if (m[r][c] < 0)
            for (size_t k = 0; k < cols; ++k) m[r][k] = -m[r][k];
        // reduce the entries above the pivot into [0, pivot)
        for (size_t i = 0; i < r; ++i) {
            BigInt q = m[i][c] / m[r][c];
            if (m[i][c] - q * m[r][c] < 0) q -= 1;  // floor division
            if (q != 0)
                for (size_t k = 0; k < cols; ++k) m[i][k] -= q * m[r][k];
        }
        ++r;
    }
    m.resize(r);
    return m;
}

MatZ integer_kernel(const MatZ& m) {
    if (m.empty()) return {};
    size_t k = m.size(), n = m[0].size();
    // Rows of A are the images of the unit vectors of Z^n under z -> M z,
    // i.e. A = M^T; carry the unimodular transform U alongside.
    MatZ a(n, std::vector<BigInt>(k));
    MatZ u(n, std::vector<BigInt>(n, BigInt(0)));
    for (size_t i = 0; i < n; ++i) {
        u[i][i] = 1;
        for (size_t j = 0; j < k; ++j) a[i][j] = m[j][i];
    }
    auto joint_gcd = [&](size_t ra, size_t rb, size_t col) {
        while (a[rb][col] != 0) {
            BigInt q = a[ra][col] / a[rb][col];
            for (size_t t = 0; t < k; ++t) a[ra][t] -= q * a[rb][t];
            for (size_t t = 0; t < n; ++t) u[ra][t] -= q * u[rb][t];
            std::swap(a[ra], a[rb]);
            std::swap(u[ra], u[rb]);
        }
    };
    size_t r = 0;
    for (size_t c = 0; c < k && r < n; ++c) {
        for (size_t i = r + 1; i < n; ++i)
            if (a[i][c] != 0) joint_gcd(r, i, c);
        if (a[r][c] != 0) ++r;
    }
    MatZ kernel;
    for (size_t i = r; i < n; ++i) {
        bool zero = true;
        for (size_t j = 0; j < k; ++j) zero = zero && a[i][j] == 0;
        if (zero) kernel.push_back(u[i]);
    }
    return hnf_rows(std::move(kernel));
}

MatZ rational_kernel_primitive(const MatQ& rows_in) {
    if (rows_in.empty()) return {};
    size_t n = rows_in[0].size();
    MatQ s = rows_in;
    size_t rows = s.size(), r = 0;
    std::vector<size_t> pivot_col;
    for (size_t c = 0; c < n && r < rows; ++c) {
        size_t piv = r;
        while (piv < rows && s[piv][c] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(s[piv], s[r]);
        Rat inv = Rat(1) / s[r][c];
        for (size_t k = 0; k < n; ++k) s[r][k] *= inv;
        for (size_t i = 0; i < rows; ++i) {
            if (i == r || s[i][c] == 0) continue;
            Rat f = s[i][c];
            for (size_t k = 0; k < n; ++k) s[i][k] -= f * s[r][k];
        }
        pivot_col.push_back(c);
        ++r;
    }
    // free columns give nullspace vectors; clear denominators to primitive rows
    std::vector<bool> is_pivot(n, false);
    for (size_t c : pivot_col) is_pivot[c] = true;
    MatZ constraints;
    for (size_t c = 0; c < n; ++c) {
        if (is_pivot[c]) continue;
        VecQ v(n, Rat(0));
        v[c] = 1;
        for (size_t i = 0; i < r; ++i) v[pivot_col[i]] = -s[i][c];
        BigInt lcm = 1;
        for (const auto& x : v) lcm = boost::multiprecision::lcm(lcm, den(x));
        std::vector<BigInt> row(n);
        BigInt g = 0;
        for (size_t k = 0; k < n; ++k) {
            row[k] = num(v[k]) * (lcm / den(v[k]));
            g = boost::multiprecision::gcd(g, row[k]);
        }
        if (g > 1)
            for (auto& x : row) x /= g;
        constraints.push_back(std::move(row));
    }
    return constraints;
}

MatZ saturate_span(const MatQ& span_rows) {
    if (span_rows.empty()) return {};
    size_t n = span_rows[0].size();
    // linear forms vanishing on the span cut out the saturation inside Z^n
    MatZ constraints = rational_kernel_primitive(span_rows);
    if (constraints.empty()) {
        // span is all of Q^n: the lattice is Z^n itself
        MatZ id(n, std::vector<BigInt>(n, BigInt(0)));
        for (size_t i = 0; i < n; ++i) id[i][i] = 1;
        return id;
    }
    return integer_kernel(constraints);
}

} // namespace qdlab
