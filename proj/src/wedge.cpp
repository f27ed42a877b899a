#include "qdlab/wedge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace qdlab {

namespace {

// #{(p, q) in P x Q : p > q} — the sign exponent for merging sorted index
// blocks and for counting crossings when a sub-block is pulled out front.
int pairs_above(const std::vector<int>& p, const std::vector<int>& q) {
    int count = 0;
    for (int a : p)
        for (int b : q)
            if (a > b) ++count;
    return count;
}

void validate_flow_point(const RationalFlowPoint& t, size_t dim) {
    if (t.r.size() != dim) throw std::invalid_argument("wedge: flow point dimension mismatch");
    Rat prod(1);
    for (const Rat& ri : t.r) {
        if (!(ri > 0)) throw std::invalid_argument("wedge: flow multipliers must be positive");
        prod *= ri;
    }
    if (prod != 1) throw std::invalid_argument("wedge: flow multipliers must have product 1");
}

void validate_shape(int m, int n) {
    if (m < 1 || n < 1) throw std::invalid_argument("wedge: need m >= 1 and n >= 1");
    if (m + n > 8) throw std::invalid_argument("wedge: ambient dimension above 8 unsupported");
}

std::vector<int> basepoint_key(int m, int n) {
    std::vector<int> k(static_cast<size_t>(n));
    std::iota(k.begin(), k.end(), m + 1);
    return k;
}

// All size-k subsets of {1..d} in lexicographic order.
std::vector<std::vector<int>> subsets_of_range(int d, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int next) -> void {
        if (int(cur.size()) == k) {
            out.push_back(cur);
            return;
        }
        for (int v = next; v <= d - (k - int(cur.size())) + 1; ++v) {
            cur.push_back(v);
            self(self, v + 1);
            cur.pop_back();
        }
    };
    rec(rec, 1);
    return out;
}

// The sheared image of an integer or rational vector, scaled by the flow.
VecQ transport_vector(const MatQ& a, const RationalFlowPoint& t, const VecQ& v) {
    size_t m = a.size(), n = a[0].size();
    VecQ out(m + n);
    for (size_t i = 0; i < m; ++i) {
        Rat acc = v[i];
        for (size_t j = 0; j < n; ++j) acc += a[i][j] * v[m + j];
        out[i] = t.r[i] * acc;
    }
    for (size_t j = 0; j < n; ++j) out[m + j] = t.r[m + j] * v[m + j];
    return out;
}

// Exact solve of a square nonsingular system by Gaussian elimination.
VecQ solve_linear(MatQ g, VecQ z) {
    size_t k = g.size();
    for (size_t col = 0; col < k; ++col) {
        size_t piv = col;
        while (piv < k && g[piv][col] == 0) ++piv;
        if (piv == k) throw std::invalid_argument("wedge: singular Gram system");
        std::swap(g[piv], g[col]);
        std::swap(z[piv], z[col]);
        for (size_t row = 0; row < k; ++row) {
            if (row == col || g[row][col] == 0) continue;
            Rat f = g[row][col] / g[col][col];
            for (size_t c = col; c < k; ++c) g[row][c] -= f * g[col][c];
            z[row] -= f * z[col];
        }
    }
    VecQ y(k);
    for (size_t i = 0; i < k; ++i) y[i] = z[i] / g[i][i];
    return y;
}

// Reduced row echelon form with zero rows dropped: a canonical spanning set.
MatQ rref_rows(MatQ m) {
    size_t rows = m.size();
    if (rows == 0) return m;
    size_t cols = m[0].size();
    size_t rank = 0;
    for (size_t col = 0; col < cols && rank < rows; ++col) {
        size_t piv = rank;
        while (piv < rows && m[piv][col] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(m[piv], m[rank]);
        Rat inv = Rat(1) / m[rank][col];
        for (size_t c = 0; c < cols; ++c) m[rank][c] *= inv;
        for (size_t row = 0; row < rows; ++row) {
            if (row == rank || m[row][col] == 0) continue;
            Rat f = m[row][col];
            for (size_t c = 0; c < cols; ++c) m[row][c] -= f * m[rank][c];
        }
        ++rank;
    }
    m.resize(rank);
    return m;
}

}  // namespace

WedgeVector wedge(int ambient, const std::vector<VecQ>& vectors) {
    if (ambient < 1) throw std::invalid_argument("wedge: ambient dimension must be positive");
    for (const VecQ& v : vectors)
        if (int(v.size()) != ambient) throw std::invalid_argument("wedge: vector dimension mismatch");
    WedgeVector w;
    w.ambient = ambient;
    w.degree = int(vectors.size());
    std::map<std::vector<int>, Rat> cur;
    cur[{}] = Rat(1);
    for (const VecQ& v : vectors) {
        std::map<std::vector<int>, Rat> next;
        for (const auto& [key, c] : cur) {
            for (int p = 1; p <= ambient; ++p) {
                const Rat& val = v[size_t(p) - 1];
                if (val == 0) continue;
                auto pos = std::lower_bound(key.begin(), key.end(), p);
                if (pos != key.end() && *pos == p) continue;
                std::vector<int> grown = key;
                size_t at = size_t(pos - key.begin());
                grown.insert(grown.begin() + long(at), p);
                // Moving e_p from the back past the larger indices flips the
                // sign once per crossing.
                Rat term = c * val;
                if ((key.size() - at) % 2) term = -term;
                auto [it, fresh] = next.try_emplace(std::move(grown), term);
                if (!fresh) it->second += term;
            }
        }
        cur = std::move(next);
    }
    for (auto it = cur.begin(); it != cur.end();)
        it = it->second == 0 ? cur.erase(it) : std::next(it);
    w.coords = std::move(cur);
    return w;
}

Rat wedge_norm_sq(const WedgeVector& w) {
    Rat s(0);
    for (const auto& [key, c] : w.coords) s += c * c;
    return s;
}

Rat covolume_sq(const std::vector<VecQ>& rows) { return gram_det(rows); }

WedgeVector plucker_embed(const MatQ& a) {
    if (a.empty() || a[0].empty()) throw std::invalid_argument("plucker_embed: empty matrix");
    int m = int(a.size()), n = int(a[0].size());
    validate_shape(m, n);
    for (const auto& row : a)
        if (int(row.size()) != n) throw std::invalid_argument("plucker_embed: ragged matrix");
    std::vector<VecQ> sheared;
    for (int j = 0; j < n; ++j) {
        VecQ v(size_t(m + n), Rat(0));
        for (int i = 0; i < m; ++i) v[size_t(i)] = a[size_t(i)][size_t(j)];
        v[size_t(m + j)] = Rat(1);
        sheared.push_back(std::move(v));
    }
    WedgeVector w = wedge(m + n, sheared);
    std::vector<int> k0 = basepoint_key(m, n);
    auto it = w.coords.find(k0);
    // The basepoint coordinate of the raw wedge is the determinant of the
    // identity block, exactly 1, so the shift removes the key entirely.
    if (it == w.coords.end() || it->second != 1)
        throw std::logic_error("plucker_embed: basepoint coordinate is not 1");
    w.coords.erase(it);
    return w;
}

RationalSubspace RationalSubspace::from_span(int ambient, const MatQ& span_rows) {
    if (ambient < 1) throw std::invalid_argument("RationalSubspace: bad ambient dimension");
    for (const auto& row : span_rows)
        if (int(row.size()) != ambient)
            throw std::invalid_argument("RationalSubspace: row dimension mismatch");
    RationalSubspace rs;
    rs.ambient = ambient;
    rs.basis = saturate_span(span_rows);
    if (rs.basis.empty()) throw std::invalid_argument("RationalSubspace: zero span");
    return rs;
}

RationalSubspace RationalSubspace::from_integer_span(int ambient, const MatZ& span_rows) {
    MatQ q;
    for (const auto& row : span_rows) {
        VecQ qr;
        for (const BigInt& v : row) qr.push_back(Rat(v));
        q.push_back(std::move(qr));
    }
    return from_span(ambient, q);
}

WedgeVector RationalSubspace::top_wedge() const {
    std::vector<VecQ> rows;
    for (const auto& row : basis) {
        VecQ qr;
        for (const BigInt& v : row) qr.push_back(Rat(v));
        rows.push_back(std::move(qr));
    }
    return wedge(ambient, rows);
}

Rat transported_covolume_sq(const MatQ& a, const RationalFlowPoint& t,
                            const RationalSubspace& v) {
    if (a.empty() || a[0].empty())
        throw std::invalid_argument("transported_covolume_sq: empty matrix");
    if (int(a.size() + a[0].size()) != v.ambient)
        throw std::invalid_argument("transported_covolume_sq: shape mismatch");
    validate_flow_point(t, size_t(v.ambient));
    std::vector<VecQ> rows;
    for (const auto& row : v.basis) {
        VecQ qr;
        for (const BigInt& x : row) qr.push_back(Rat(x));
        rows.push_back(transport_vector(a, t, qr));
    }
    return covolume_sq(rows);
}

WedgeAffineMap build_transport_map(int m, int n, const RationalFlowPoint& t,
                                   const RationalSubspace& v) {
    validate_shape(m, n);
    if (v.ambient != m + n) throw std::invalid_argument("build_transport_map: shape mismatch");
    validate_flow_point(t, size_t(m + n));

    WedgeAffineMap map;
    map.m = m;
    map.n = n;
    map.deg_out = v.dim();
    const std::vector<int> k0 = basepoint_key(m, n);
    const WedgeVector w = v.top_wedge();

    for (const auto& [iset, wi] : w.coords) {
        std::vector<int> i1, i2;  // first-block indices; second-block offsets
        for (int x : iset) (x <= m ? i1 : i2).push_back(x <= m ? x : x - m);
        std::vector<int> c1;  // first-block indices not in i1
        for (int x = 1; x <= m; ++x)
            if (!std::binary_search(i1.begin(), i1.end(), x)) c1.push_back(x);
        std::vector<int> u;  // second-block offsets not in i2
        for (int x = 1; x <= n; ++x)
            if (!std::binary_search(i2.begin(), i2.end(), x)) u.push_back(x);

        // Every term drops a sub-block D of the second-block offsets (their
        // shear columns turn into first-block minors over rows R) and keeps
        // the rest. The sign counts the two block reorderings.
        for (unsigned dmask = 0; dmask < (1u << i2.size()); ++dmask) {
            std::vector<int> d, kept;
            for (size_t b = 0; b < i2.size(); ++b)
                ((dmask >> b) & 1u ? d : kept).push_back(i2[b]);
            for (unsigned rmask = 0; rmask < (1u << c1.size()); ++rmask) {
                std::vector<int> r;
                for (size_t b = 0; b < c1.size(); ++b)
                    if ((rmask >> b) & 1u) r.push_back(c1[b]);
                if (r.size() != d.size()) continue;

                std::vector<int> out = i1;
                out.insert(out.end(), r.begin(), r.end());
                std::sort(out.begin(), out.end());
                for (int x : kept) out.push_back(m + x);

                std::vector<int> in = r;
                for (int x = 1; x <= n; ++x)
                    if (!std::binary_search(d.begin(), d.end(), x)) in.push_back(m + x);

                int sign = pairs_above(i1, r) + pairs_above(d, u);
                Rat coeff = sign % 2 ? -wi : wi;
                for (int j : out) coeff *= t.r[size_t(j) - 1];

                if (in == k0) {
                    auto [it, fresh] = map.constant.try_emplace(out, coeff);
                    if (!fresh) it->second += coeff;
                } else {
                    auto [it, fresh] = map.linear.try_emplace(std::make_pair(out, in), coeff);
                    if (!fresh) it->second += coeff;
                }
            }
        }
    }
    for (auto it = map.constant.begin(); it != map.constant.end();)
        it = it->second == 0 ? map.constant.erase(it) : std::next(it);
    for (auto it = map.linear.begin(); it != map.linear.end();)
        it = it->second == 0 ? map.linear.erase(it) : std::next(it);
    return map;
}

WedgeVector WedgeAffineMap::apply(const WedgeVector& sigma) const {
    if (sigma.ambient != m + n || sigma.degree != n)
        throw std::invalid_argument("transport map: input shape mismatch");
    if (sigma.coord(basepoint_key(m, n)) != 0)
        throw std::invalid_argument("transport map: input must have zero basepoint coordinate");
    WedgeVector out;
    out.ambient = m + n;
    out.degree = deg_out;
    out.coords = constant;
    for (const auto& [jk, c] : linear) {
        Rat term = c * sigma.coord(jk.second);
        if (term == 0) continue;
        auto [it, fresh] = out.coords.try_emplace(jk.first, term);
        if (!fresh) it->second += term;
    }
    for (auto it = out.coords.begin(); it != out.coords.end();)
        it = it->second == 0 ? out.coords.erase(it) : std::next(it);
    return out;
}

bool verify_transport_identity(const MatQ& a, const RationalFlowPoint& t,
                               const RationalSubspace& v) {
    int m = int(a.size()), n = int(a[0].size());
    WedgeAffineMap map = build_transport_map(m, n, t, v);
    Rat via_map = wedge_norm_sq(map.apply(plucker_embed(a)));
    return via_map == transported_covolume_sq(a, t, v);
}

std::vector<RationalSubspace> enumerate_primitive_subspaces(int d, int height, long budget) {
    if (d < 2 || d > 8) throw std::invalid_argument("enumerate_primitive_subspaces: need 2 <= d <= 8");
    if (height < 1) throw std::invalid_argument("enumerate_primitive_subspaces: need height >= 1");
    if (budget < 1) throw std::invalid_argument("enumerate_primitive_subspaces: bad budget");

    // Primitive vectors with entries in [-height, height], first nonzero
    // positive, in odometer order.
    std::vector<std::vector<long>> pool;
    std::vector<long> v(size_t(d), -height);
    while (true) {
        long lead = 0, content = 0;
        for (long x : v) {
            if (lead == 0) lead = x;
            content = std::gcd(content, std::abs(x));
        }
        if (lead > 0 && content == 1) pool.push_back(v);
        int pos = d - 1;
        while (pos >= 0 && v[size_t(pos)] == height) v[size_t(pos--)] = -height;
        if (pos < 0) break;
        ++v[size_t(pos)];
    }

    // The subset count is committed to before any span work starts.
    long total = 0;
    for (int k = 1; k <= d - 1; ++k) {
        double comb = 1;
        for (int i = 0; i < k; ++i) comb *= double(pool.size() - size_t(i)) / double(i + 1);
        total = comb > double(budget) ? budget + 1 : total + long(comb + 0.5);
        if (total > budget)
            throw std::runtime_error(
                "enumerate_primitive_subspaces: subset budget exceeded (pool " +
                std::to_string(pool.size()) + " vectors, over " + std::to_string(budget) +
                " subsets)");
    }

    std::set<RationalSubspace> found;
    std::vector<size_t> pick;
    auto rec = [&](auto&& self, size_t next, int want) -> void {
        if (want == 0) {
            MatQ span;
            for (size_t idx : pick) {
                VecQ row;
                for (long x : pool[idx]) row.push_back(Rat(x));
                span.push_back(std::move(row));
            }
            MatZ basis = saturate_span(span);
            if (int(basis.size()) != int(pick.size())) return;  // dependent: seen at lower k
            RationalSubspace rs;
            rs.ambient = d;
            rs.basis = std::move(basis);
            found.insert(std::move(rs));
            return;
        }
        for (size_t i = next; i + size_t(want) <= pool.size(); ++i) {
            pick.push_back(i);
            self(self, i + 1, want - 1);
            pick.pop_back();
        }
    };
    for (int k = 1; k <= d - 1; ++k) rec(rec, 0, k);
    return {found.begin(), found.end()};
}

WedgeAffineSubspace WedgeAffineSubspace::full(int m, int n) {
    validate_shape(m, n);
    WedgeAffineSubspace s;
    s.m = m;
    s.n = n;
    const std::vector<int> k0 = basepoint_key(m, n);
    for (auto& key : subsets_of_range(m + n, n))
        if (key != k0) s.keys.push_back(std::move(key));
    s.base.assign(s.keys.size(), Rat(0));
    s.directions.assign(s.keys.size(), VecQ(s.keys.size(), Rat(0)));
    s.frame.assign(s.keys.size(), VecD(s.keys.size(), 0.0));
    for (size_t i = 0; i < s.keys.size(); ++i) {
        s.directions[i][i] = Rat(1);
        s.frame[i][i] = 1.0;
    }
    return s;
}

WedgeAffineSubspace WedgeAffineSubspace::from_points(int m, int n,
                                                    const std::vector<WedgeVector>& pts) {
    validate_shape(m, n);
    if (pts.empty()) throw std::invalid_argument("WedgeAffineSubspace: need at least one point");
    WedgeAffineSubspace s = full(m, n);
    s.directions.clear();
    s.frame.clear();

    auto flat_or_throw = [&s](const WedgeVector& p) {
        auto f = s.flatten(p);
        if (!f)
            throw std::invalid_argument(
                "WedgeAffineSubspace: point has a nonzero basepoint coordinate");
        return *f;
    };
    VecQ p0 = flat_or_throw(pts[0]);
    MatQ dirs;
    for (size_t i = 1; i < pts.size(); ++i) dirs.push_back(vsub(flat_or_throw(pts[i]), p0));
    dirs = rref_rows(std::move(dirs));

    // Minimal-norm representative: subtract the projection of p0 onto the
    // direction span (Gram solve, exact).
    if (!dirs.empty()) {
        size_t k = dirs.size();
        MatQ g(k, VecQ(k));
        VecQ z(k);
        for (size_t i = 0; i < k; ++i) {
            for (size_t j = 0; j < k; ++j) g[i][j] = dot(dirs[i], dirs[j]);
            z[i] = dot(dirs[i], p0);
        }
        VecQ y = solve_linear(std::move(g), std::move(z));
        for (size_t i = 0; i < k; ++i) p0 = vsub(p0, vscale(y[i], dirs[i]));
    }
    s.base = std::move(p0);

    // Float orthonormal frame for numeric callers.
    for (const VecQ& dq : dirs) {
        VecD v = to_double_vec(dq);
        for (const VecD& f : s.frame) {
            double proj = dot(f, v);
            for (size_t c = 0; c < v.size(); ++c) v[c] -= proj * f[c];
        }
        double len = norm_euclid(v);
        if (len < 1e-12) continue;
        for (double& c : v) c /= len;
        s.frame.push_back(std::move(v));
    }
    s.directions = std::move(dirs);
    return s;
}

std::optional<VecQ> WedgeAffineSubspace::flatten(const WedgeVector& sigma) const {
    if (sigma.ambient != m + n || sigma.degree != n)
        throw std::invalid_argument("WedgeAffineSubspace: point shape mismatch");
    if (sigma.coord(basepoint_key(m, n)) != 0) return std::nullopt;
    VecQ flat(keys.size(), Rat(0));
    for (size_t i = 0; i < keys.size(); ++i) flat[i] = sigma.coord(keys[i]);
    return flat;
}

bool WedgeAffineSubspace::contains(const WedgeVector& sigma) const {
    auto flat = flatten(sigma);
    if (!flat) return false;
    VecQ diff = vsub(*flat, base);
    if (directions.empty()) {
        for (const Rat& x : diff)
            if (x != 0) return false;
        return true;
    }
    MatQ stacked = directions;
    stacked.push_back(std::move(diff));
    return rational_rank(stacked) == int(directions.size());
}

WedgeVector WedgeAffineSubspace::base_point() const {
    WedgeVector w;
    w.ambient = m + n;
    w.degree = n;
    for (size_t i = 0; i < keys.size(); ++i)
        if (base[i] != 0) w.coords[keys[i]] = base[i];
    return w;
}

Rat restricted_norm_sq(const WedgeAffineMap& map, const WedgeAffineSubspace& sub) {
    if (map.m != sub.m || map.n != sub.n)
        throw std::invalid_argument("restricted_norm_sq: shape mismatch");
    Rat best = wedge_norm_sq(map.apply(sub.base_point()));
    if (sub.directions.empty()) return best;

    size_t k = sub.directions.size();
    MatQ g(k, VecQ(k));
    for (size_t i = 0; i < k; ++i)
        for (size_t j = 0; j < k; ++j) g[i][j] = dot(sub.directions[i], sub.directions[j]);

    std::map<std::vector<int>, VecQ> rows;  // output set -> functional over keys
    for (const auto& [jk, c] : map.linear) {
        auto [it, fresh] = rows.try_emplace(jk.first, VecQ(sub.keys.size(), Rat(0)));
        auto key_at = std::lower_bound(sub.keys.begin(), sub.keys.end(), jk.second);
        if (key_at == sub.keys.end() || *key_at != jk.second)
            throw std::logic_error("restricted_norm_sq: linear coefficient off the key list");
        it->second[size_t(key_at - sub.keys.begin())] = c;
    }
    for (const auto& [out, row] : rows) {
        // Squared length of the projection of the row functional onto the
        // direction span: z' G^{-1} z with z = D row.
        VecQ z(k);
        for (size_t i = 0; i < k; ++i) z[i] = dot(sub.directions[i], row);
        Rat proj_sq = dot(solve_linear(g, z), z);
        if (proj_sq > best) best = proj_sq;
    }
    return best;
}

AffineExponentEstimate omega_affine_family(const WedgeAffineSubspace& sub,
                                           const FlowChain& chain, int height) {
    if (chain.points.empty()) throw std::invalid_argument("omega_affine_family: empty chain");
    if (chain.m != sub.m || chain.n != sub.n)
        throw std::invalid_argument("omega_affine_family: chain shape mismatch");
    auto pool = enumerate_primitive_subspaces(sub.m + sub.n, height);
    AffineExponentEstimate est;
    est.pool_size = int(pool.size());
    std::vector<double> deltas;
    double inf = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < chain.points.size(); ++k) {
        // The improper full subspace always transports to covolume 1, which
        // anchors the per-point sup at 0.
        double delta = 0;
        for (const auto& v : pool) {
            Rat nsq = restricted_norm_sq(build_transport_map(sub.m, sub.n, chain.points[k], v),
                                         sub);
            if (nsq == 0) {
                delta = inf;  // the map vanishes on the whole family
                break;
            }
            delta = std::max(delta, -0.5 * log_rat(nsq) / v.dim());
        }
        deltas.push_back(delta);
        est.per_point.push_back(delta / chain.s[k]);
    }
    for (size_t i = 2 * deltas.size() / 3; i < deltas.size(); ++i)
        est.value = std::max(i == 2 * deltas.size() / 3 ? -inf : est.value, est.per_point[i]);
    std::vector<double> xs(chain.s.begin() + long(deltas.size() / 2), chain.s.end());
    std::vector<double> ys(deltas.begin() + long(deltas.size() / 2), deltas.end());
    TrendFit fit = fit_trend(xs, ys);
    est.growth_rate = fit.slope;
    est.divergent = trend_divergent(fit) || !std::isfinite(est.value);
    return est;
}

RestrictedNormCheck check_restricted_norm_bound(const MatQ& a, const WedgeAffineSubspace& sub,
                                                const FlowChain& chain, int height,
                                                double tol) {
    RestrictedNormCheck check;
    check.member = sub.contains(plucker_embed(a));
    check.omega_point = omega_dynamical(a, chain).value;
    check.omega_family = omega_affine_family(sub, chain, height).value;
    check.holds = check.member && check.omega_point >= check.omega_family - tol;
    return check;
}

}  // namespace qdlab
