#include "qdlab/flags.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qdlab/lattice.hpp"
#include "qdlab/rng.hpp"

namespace qdlab {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = seed;
    h ^= (a + 0x9e3779b97f4a7c15ull) + (h << 6) + (h >> 2);
    h ^= (b + 0x9e3779b97f4a7c15ull) + (h << 6) + (h >> 2);
    return h;
}

void validate_matrix(const MatQ& a, int m, int n, const char* who) {
    if (int(a.size()) != m) throw std::invalid_argument(std::string(who) + ": row count mismatch");
    for (const auto& row : a)
        if (int(row.size()) != n)
            throw std::invalid_argument(std::string(who) + ": column count mismatch");
}

Rat mat_dist_sup(const MatQ& a, const MatQ& b) {
    Rat worst(0);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < a[i].size(); ++j) {
            Rat d = a[i][j] - b[i][j];
            if (d < 0) d = -d;
            if (d > worst) worst = d;
        }
    return worst;
}

MatQ to_rational_rows(const MatZ& m) {
    MatQ out;
    for (const auto& row : m) {
        VecQ r;
        for (const BigInt& v : row) r.push_back(Rat(v));
        out.push_back(std::move(r));
    }
    return out;
}

// Solve the square rational system M x = rhs (any nonzero pivot works on the
// exact track). Throws when M is singular.
VecQ solve_square(MatQ m, VecQ rhs) {
    const size_t n = m.size();
    for (size_t c = 0; c < n; ++c) {
        size_t piv = c;
        while (piv < n && m[piv][c] == 0) ++piv;
        if (piv == n) throw std::runtime_error("solve_square: singular matrix");
        std::swap(m[piv], m[c]);
        std::swap(rhs[piv], rhs[c]);
        for (size_t r = 0; r < n; ++r) {
            if (r == c || m[r][c] == 0) continue;
            Rat factor = m[r][c] / m[c][c];
            for (size_t k = c; k < n; ++k) m[r][k] -= factor * m[c][k];
            rhs[r] -= factor * rhs[c];
        }
    }
    VecQ x(n);
    for (size_t i = 0; i < n; ++i) x[i] = rhs[i] / m[i][i];
    return x;
}

// Exact membership of a vector in the rational span of a subspace basis.
bool in_span(const RationalSubspace& v, const VecQ& x) {
    if (v.dim() == 0) {
        for (const Rat& c : x)
            if (c != 0) return false;
        return true;
    }
    MatQ rows = to_rational_rows(v.basis);
    int base_rank = rational_rank(rows);
    rows.push_back(x);
    return rational_rank(rows) == base_rank;
}

BigInt int_pow(long base, long exp) {
    BigInt out = 1;
    for (long i = 0; i < exp; ++i) out *= base;
    return out;
}

Rat dyadic(long e) {
    if (e >= 0) return Rat(BigInt(1) << e);
    return Rat(1, BigInt(1) << (-e));
}

// Comparison key for the greedy chain: (f / C_dim)^{1/dim}, exact.
PosReal chain_key(const PosReal& f, const BigInt& c_dim, int dim) {
    return (f / PosReal(Rat(c_dim))).pow(Rat(1, dim));
}

// Sup of the transported covolume over the corners and center of a box —
// exact sup for every entrywise-affine instance (one row or one column).
PosReal f_t_box_sup(const MatQ& center, const Rat& radius, const RationalSubspace& v,
                    const RationalFlowPoint& t) {
    const int m = int(center.size()), n = int(center[0].size());
    const int cells = m * n;
    if (cells > 12) throw std::invalid_argument("f_t_box_sup: corner budget exceeded");
    PosReal best = f_t_point(center, t, v);
    MatQ corner = center;
    for (unsigned mask = 0; mask < (1u << cells); ++mask) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                bool plus = (mask >> (i * n + j)) & 1u;
                corner[size_t(i)][size_t(j)] =
                    plus ? Rat(center[size_t(i)][size_t(j)] + radius)
                         : Rat(center[size_t(i)][size_t(j)] - radius);
            }
        PosReal val = f_t_point(corner, t, v);
        if (val > best) best = val;
    }
    return best;
}

struct SlopeFit {
    double slope = 0;
    double stderr_slope = 0;
    double r_squared = 0;
    int points = 0;
};

SlopeFit fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    SlopeFit out;
    out.points = int(xs.size());
    if (xs.size() < 2) return out;
    const double n = double(xs.size());
    double sx = 0, sy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0) return out;
    out.slope = sxy / sxx;
    if (syy == 0) {
        out.r_squared = 1.0;
        return out;
    }
    double ss_res = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double resid = (ys[i] - my) - out.slope * (xs[i] - mx);
        ss_res += resid * resid;
    }
    out.r_squared = 1.0 - ss_res / syy;
    if (xs.size() > 2) out.stderr_slope = std::sqrt((ss_res / (n - 2)) / sxx);
    return out;
}

std::string describe_vertex(const RationalSubspace& v) {
    std::ostringstream os;
    os << "dim " << v.dim() << " [";
    for (size_t r = 0; r < v.basis.size(); ++r) {
        if (r) os << "; ";
        for (size_t c = 0; c < v.basis[r].size(); ++c) {
            if (c) os << ",";
            os << v.basis[r][c];
        }
    }
    os << "]";
    return os.str();
}

}  // namespace

bool subspace_contains(const RationalSubspace& big, const RationalSubspace& small) {
    if (big.ambient != small.ambient)
        throw std::invalid_argument("subspace_contains: ambient mismatch");
    if (small.dim() > big.dim()) return false;
    if (small.dim() == 0) return true;
    if (big.dim() == big.ambient) return true;
    MatQ rows = to_rational_rows(big.basis);
    for (const auto& r : to_rational_rows(small.basis)) rows.push_back(r);
    return rational_rank(rows) == big.dim();
}

RationalSubspace zero_subspace(int ambient) {
    if (ambient < 1) throw std::invalid_argument("zero_subspace: bad ambient dimension");
    RationalSubspace rs;
    rs.ambient = ambient;
    return rs;
}

RationalSubspace full_subspace(int ambient) {
    if (ambient < 1) throw std::invalid_argument("full_subspace: bad ambient dimension");
    MatZ id(size_t(ambient), std::vector<BigInt>(size_t(ambient), BigInt(0)));
    for (int i = 0; i < ambient; ++i) id[size_t(i)][size_t(i)] = 1;
    return RationalSubspace::from_integer_span(ambient, id);
}

Flag Flag::trivial(int ambient) {
    Flag f;
    f.chain = {zero_subspace(ambient), full_subspace(ambient)};
    return f;
}

Flag Flag::from_chain(std::vector<RationalSubspace> chain) {
    Flag f;
    f.chain = std::move(chain);
    f.validate();
    return f;
}

bool Flag::contains(const RationalSubspace& v) const {
    for (const auto& member : chain)
        if (member == v) return true;
    return false;
}

std::vector<int> Flag::dims() const {
    std::vector<int> out;
    for (const auto& member : chain) out.push_back(member.dim());
    return out;
}

void Flag::validate() const {
    if (chain.size() < 2) throw std::invalid_argument("Flag: chain needs both endpoints");
    const int d = chain.front().ambient;
    if (d < 1) throw std::invalid_argument("Flag: bad ambient dimension");
    for (const auto& member : chain)
        if (member.ambient != d) throw std::invalid_argument("Flag: mixed ambient dimensions");
    if (chain.front().dim() != 0) throw std::invalid_argument("Flag: chain must start at zero");
    if (chain.back().dim() != d)
        throw std::invalid_argument("Flag: chain must end at the full space");
    for (size_t i = 1; i < chain.size(); ++i) {
        if (chain[i].dim() <= chain[i - 1].dim())
            throw std::invalid_argument("Flag: dimensions must strictly increase");
        if (!subspace_contains(chain[i], chain[i - 1]))
            throw std::invalid_argument("Flag: chain member does not contain its predecessor");
    }
}

bool is_addable(const Flag& flag, const RationalSubspace& v) {
    if (v.ambient != flag.ambient()) throw std::invalid_argument("is_addable: ambient mismatch");
    if (flag.contains(v)) return false;
    const int d = v.dim();
    if (d <= 0 || d >= flag.ambient()) return false;
    const auto dims = flag.dims();
    for (size_t i = 0; i + 1 < flag.chain.size(); ++i) {
        if (dims[i] < d && d < dims[i + 1])
            return subspace_contains(v, flag.chain[i]) && subspace_contains(flag.chain[i + 1], v);
        if (dims[i] == d || dims[i + 1] == d) return false;
    }
    return false;
}

const PosReal& EtaProfile::at(int j) const {
    if (j < 0 || j >= int(values.size()))
        throw std::invalid_argument("EtaProfile: index out of range");
    return values[size_t(j)];
}

bool EtaProfile::concave() const {
    const int d = int(values.size()) - 1;
    std::set<int> flag_dims;
    for (const auto& member : flag.chain) flag_dims.insert(member.dim());
    for (int j = 1; j < d; ++j) {
        if (flag_dims.count(j)) continue;
        PosReal lhs = values[size_t(j)] * values[size_t(j)];
        PosReal rhs = PosReal(64) * values[size_t(j) - 1] * values[size_t(j) + 1];
        if (lhs < rhs) return false;
    }
    return true;
}

FlagConstants constants_C_lambda(int m, int n) {
    if (m < 1 || n < 1) throw std::invalid_argument("constants_C_lambda: need m, n >= 1");
    const int d = m + n;
    FlagConstants out;
    for (int i = 0; i <= d; ++i) {
        out.c.push_back(int_pow(4, long(i) * (d - i)));
        out.lambda.push_back(BigInt(2) * int_pow(8, i));
    }
    return out;
}

bool SupportBallSample::has_dilate(const Rat& lambda) const {
    for (const auto& [l, _] : dilates)
        if (l == lambda) return true;
    return false;
}

const std::vector<MatQ>& SupportBallSample::samples_at(const Rat& lambda) const {
    for (const auto& [l, list] : dilates)
        if (l == lambda) return list;
    throw std::invalid_argument("SupportBallSample: no samples recorded for dilate " +
                                std::to_string(to_double(lambda)));
}

void SupportBallSample::validate() const {
    if (m < 1 || n < 1) throw std::invalid_argument("SupportBallSample: bad shape");
    validate_matrix(center, m, n, "SupportBallSample");
    if (!(radius > 0)) throw std::invalid_argument("SupportBallSample: radius must be positive");
    for (const auto& [lambda, list] : dilates) {
        if (!(lambda > 0)) throw std::invalid_argument("SupportBallSample: bad dilate");
        for (const auto& sample : list) {
            validate_matrix(sample, m, n, "SupportBallSample");
            if (mat_dist_sup(sample, center) > lambda * radius)
                throw std::invalid_argument("SupportBallSample: sample outside its dilate");
        }
    }
}

SupportBallSample corner_ball_sample(const MatQ& center, const Rat& radius,
                                     const std::vector<Rat>& lambdas) {
    if (center.empty() || center[0].empty())
        throw std::invalid_argument("corner_ball_sample: empty center");
    const int m = int(center.size()), n = int(center[0].size());
    validate_matrix(center, m, n, "corner_ball_sample");
    if (!(radius > 0)) throw std::invalid_argument("corner_ball_sample: radius must be positive");
    if (lambdas.empty()) throw std::invalid_argument("corner_ball_sample: no dilates requested");
    const int cells = m * n;
    if (cells > 12) throw std::invalid_argument("corner_ball_sample: corner budget exceeded");

    std::vector<Rat> sorted = lambdas;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (!(sorted.front() > 0))
        throw std::invalid_argument("corner_ball_sample: dilates must be positive");

    SupportBallSample out;
    out.m = m;
    out.n = n;
    out.center = center;
    out.radius = radius;
    std::vector<MatQ> accum = {center};
    for (const Rat& lambda : sorted) {
        Rat r = lambda * radius;
        MatQ corner = center;
        for (unsigned mask = 0; mask < (1u << cells); ++mask) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    bool plus = (mask >> (i * n + j)) & 1u;
                    corner[size_t(i)][size_t(j)] = plus ? Rat(center[size_t(i)][size_t(j)] + r)
                                                        : Rat(center[size_t(i)][size_t(j)] - r);
                }
            accum.push_back(corner);
        }
        out.dilates.push_back({lambda, accum});
    }
    return out;
}

PosReal f_t_point(const MatQ& a, const RationalFlowPoint& t, const RationalSubspace& v) {
    Rat sq = transported_covolume_sq(a, t, v);
    if (!(sq > 0)) throw std::runtime_error("f_t_point: transported basis degenerated");
    return PosReal::pow_of(sq, Rat(1, 2));
}

PosReal f_t_set(const SupportBallSample& s, const RationalSubspace& v,
                const RationalFlowPoint& t, const Rat& lambda) {
    const auto& samples = s.samples_at(lambda);
    if (samples.empty()) throw std::invalid_argument("f_t_set: empty sample set");
    PosReal best = f_t_point(samples.front(), t, v);
    for (size_t i = 1; i < samples.size(); ++i) {
        PosReal val = f_t_point(samples[i], t, v);
        if (val > best) best = val;
    }
    return best;
}

VertexClassification classify_vertices(const EtaProfile& eta, const SupportBallSample& s,
                                       const Rat& lambda, const RationalFlowPoint& t,
                                       const std::vector<RationalSubspace>& pool) {
    VertexClassification out;
    for (size_t i = 0; i < pool.size(); ++i) {
        PosReal f = f_t_set(s, pool[i], t, lambda);
        if (f <= eta.at(pool[i].dim()))
            out.approximable.push_back(i);
        else
            out.blocked.push_back(i);
    }
    return out;
}

PermissibleCertificate check_permissible(const Flag& flag, const EtaProfile& eta,
                                         const Rat& lambda, const SupportBallSample& ball,
                                         const RationalFlowPoint& t,
                                         const std::vector<RationalSubspace>& pool,
                                         int pool_height) {
    flag.validate();
    const int d = flag.ambient();
    if (int(eta.values.size()) != d + 1)
        throw std::invalid_argument("check_permissible: profile size mismatch");
    if (ball.m + ball.n != d || t.dim() != d)
        throw std::invalid_argument("check_permissible: dimension mismatch");
    if (lambda < 2) throw std::invalid_argument("check_permissible: need dilate >= 2");

    PermissibleCertificate cert;
    cert.flag = flag;
    cert.lambda = lambda;
    cert.pool_height = pool_height;
    cert.valid = true;

    for (const auto& v : flag.chain) {
        PosReal f = f_t_set(ball, v, t, Rat(2));
        PosReal thr = PosReal(2) * eta.at(v.dim());
        VertexMargin vm;
        vm.vertex = v;
        vm.satisfied = f <= thr;
        vm.log_margin = thr.log_value() - f.log_value();
        if (!vm.satisfied) cert.valid = false;
        cert.flag_margins.push_back(std::move(vm));
    }
    for (const auto& v : pool) {
        if (!is_addable(flag, v)) continue;
        PosReal f = f_t_set(ball, v, t, lambda);
        const PosReal& thr = eta.at(v.dim());
        VertexMargin vm;
        vm.vertex = v;
        vm.satisfied = f > thr;
        vm.log_margin = f.log_value() - thr.log_value();
        if (!vm.satisfied) cert.valid = false;
        cert.addable_margins.push_back(std::move(vm));
    }
    return cert;
}

BaseCaseResult base_case(const SupportBallSample& b0, const RationalFlowPoint& t,
                         const std::vector<RationalSubspace>& pool, int pool_height,
                         const Rat& kappa) {
    b0.validate();
    const int d = b0.m + b0.n;
    if (t.dim() != d) throw std::invalid_argument("base_case: flow dimension mismatch");
    if (!(kappa > 0 && kappa <= 1)) throw std::invalid_argument("base_case: need 0 < kappa <= 1");
    if (!b0.has_dilate(Rat(2)))
        throw std::invalid_argument("base_case: ball sample needs the doubled dilate");
    for (const auto& v : pool) {
        if (v.ambient != d) throw std::invalid_argument("base_case: pool ambient mismatch");
        if (v.dim() < 1 || v.dim() >= d)
            throw std::invalid_argument("base_case: pool must hold proper nonzero subspaces");
    }

    const FlagConstants consts = constants_C_lambda(1, d - 1);
    BaseCaseResult res;

    // Height of every pool vertex over the doubled ball, plus both chain
    // endpoints (the empty wedge and the full lattice both have covolume 1,
    // but the values are computed, not assumed).
    std::vector<PosReal> f_pool;
    f_pool.reserve(pool.size());
    for (const auto& v : pool) f_pool.push_back(f_t_set(b0, v, t, Rat(2)));
    const RationalSubspace full = full_subspace(d);
    const PosReal f_full = f_t_set(b0, full, t, Rat(2));

    res.precondition_ok = true;
    for (size_t i = 0; i < pool.size(); ++i) {
        if (f_pool[i] < PosReal::pow_of(kappa, Rat(pool[i].dim()))) {
            res.precondition_ok = false;
            res.failures.push_back("pool vertex below the height floor: " +
                                   describe_vertex(pool[i]));
        }
        res.pool_plot.push_back({pool[i].dim(), f_pool[i].log_value()});
    }
    if (f_full < PosReal::pow_of(kappa, Rat(d))) {
        res.precondition_ok = false;
        res.failures.push_back("full space below the height floor");
    }
    res.pool_plot.push_back({d, f_full.log_value()});

    // Greedy chain: from each member, step to the strict superset with the
    // smallest normalized log-height (f/C_dim)^(1/dim); the full space is the
    // final fallback candidate, so the walk always terminates.
    std::vector<RationalSubspace> chain = {zero_subspace(d)};
    std::vector<PosReal> chain_f = {PosReal()};
    while (chain.back().dim() < d) {
        const RationalSubspace& cur = chain.back();
        bool have = false;
        size_t best_idx = 0;
        bool best_is_full = false;
        PosReal best_key;
        for (size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].dim() <= cur.dim() || !subspace_contains(pool[i], cur)) continue;
            PosReal key = chain_key(f_pool[i], consts.c[size_t(pool[i].dim())], pool[i].dim());
            if (!have || key < best_key) {
                have = true;
                best_key = key;
                best_idx = i;
                best_is_full = false;
            }
        }
        {
            PosReal key = chain_key(f_full, consts.c[size_t(d)], d);
            if (!have || key < best_key) {
                have = true;
                best_key = key;
                best_is_full = true;
            }
        }
        if (best_is_full) {
            chain.push_back(full);
            chain_f.push_back(f_full);
        } else {
            chain.push_back(pool[best_idx]);
            chain_f.push_back(f_pool[best_idx]);
        }
    }
    res.flag = Flag::from_chain(chain);

    // Profile: half the chain height at flag dimensions, extended between
    // them so that the C-normalized log-height interpolates linearly.
    EtaProfile eta;
    eta.flag = res.flag;
    eta.values.assign(size_t(d) + 1, PosReal());
    const auto dims = res.flag.dims();
    for (size_t i = 0; i < chain.size(); ++i)
        eta.values[size_t(dims[i])] = chain_f[i] / PosReal(2);
    for (size_t i = 0; i + 1 < chain.size(); ++i) {
        const int j0 = dims[i], j1 = dims[i + 1];
        const int gap = j1 - j0;
        if (gap < 2) continue;
        PosReal x = chain_f[i] / PosReal(Rat(consts.c[size_t(j0)]));
        PosReal y = chain_f[i + 1] / PosReal(Rat(consts.c[size_t(j1)]));
        for (int k = 1; k < gap; ++k) {
            int j = j0 + k;
            eta.values[size_t(j)] = PosReal(Rat(consts.c[size_t(j)], 2)) *
                                    x.pow(Rat(gap - k, gap)) * y.pow(Rat(k, gap));
        }
    }
    res.eta = eta;
    for (int j = 0; j <= d; ++j) res.eta_log.push_back(eta.values[size_t(j)].log_value());

    res.certificate = check_permissible(res.flag, eta, Rat(2), b0, t, pool, pool_height);
    res.permissible_ok = res.certificate.valid;
    if (!res.permissible_ok)
        for (const auto& vm : res.certificate.addable_margins)
            if (!vm.satisfied)
                res.failures.push_back("addable vertex not blocked at the doubled dilate: " +
                                       describe_vertex(vm.vertex));

    res.blocked_ok = true;
    for (size_t i = 0; i < chain.size(); ++i)
        if (!(chain_f[i] > eta.values[size_t(dims[i])])) {
            res.blocked_ok = false;
            res.failures.push_back("chain member failed to rise above its own level: " +
                                   describe_vertex(chain[i]));
        }

    res.bound_ok = true;
    for (int j = 0; j <= d; ++j)
        if (!(eta.values[size_t(j)] <= PosReal(Rat(consts.c[size_t(j)], 2)))) {
            res.bound_ok = false;
            res.failures.push_back("profile exceeds the half-constant bound at index " +
                                   std::to_string(j));
        }

    res.ratio_constant = Rat(1, int_pow(4, 2L * (d - 1)));
    res.ratio_ok = true;
    res.min_ratio_log = 0;
    for (int j = 0; j < d; ++j) {
        const PosReal& hi = eta.values[size_t(j) + 1];
        const PosReal& lo = eta.values[size_t(j)];
        if (hi < lo * PosReal(Rat(kappa * res.ratio_constant))) {
            res.ratio_ok = false;
            res.failures.push_back("successive-level ratio fell below the floor at index " +
                                   std::to_string(j));
        }
        double gap = hi.log_value() - lo.log_value();
        if (j == 0 || gap < res.min_ratio_log) res.min_ratio_log = gap;
    }

    res.concavity_ok = eta.concave();
    return res;
}

InductiveStepResult inductive_step(const SupportBallSample& b, const Flag& flag,
                                   const EtaProfile& eta, const Rat& lambda, const MatQ& a,
                                   const RationalFlowPoint& t,
                                   const std::vector<RationalSubspace>& pool,
                                   int pool_height) {
    flag.validate();
    if (flag.maximal()) throw std::invalid_argument("inductive_step: flag is already maximal");
    b.validate();
    const int d = b.m + b.n;
    if (flag.ambient() != d || t.dim() != d)
        throw std::invalid_argument("inductive_step: dimension mismatch");
    validate_matrix(a, b.m, b.n, "inductive_step");
    if (mat_dist_sup(a, b.center) > b.radius)
        throw std::invalid_argument("inductive_step: center must lie inside the ball");
    PermissibleCertificate pre = check_permissible(flag, eta, lambda, b, t, pool, pool_height);
    if (!pre.valid)
        throw std::invalid_argument("inductive_step: ball is not permissible for the flag");

    InductiveStepResult res;
    const Rat eight_lambda = Rat(8) * lambda;

    // Per addable vertex, the smallest dyadic radius at which it rises above
    // its level over the 8-lambda dilate. Rising is monotone under ball
    // enlargement, so this is a threshold search on the dyadic exponent.
    long e_base = long(std::floor(std::log2(std::max(to_double(b.radius), 1e-300))));
    bool any_positive = false;
    for (const auto& v : pool) {
        if (!is_addable(flag, v)) continue;
        const PosReal& level = eta.at(v.dim());
        auto rises = [&](long e) {
            return f_t_box_sup(a, Rat(eight_lambda * dyadic(e)), v, t) > level;
        };
        long hi = e_base;
        bool bracketed = rises(hi);
        for (int grow = 0; !bracketed && grow < 80; ++grow) bracketed = rises(++hi);
        if (!bracketed) {
            res.failures.push_back("addable vertex never rises above its level in range: " +
                                   describe_vertex(v));
            continue;
        }
        const long floor_e = hi - 140;
        Rat rho_v;
        if (rises(floor_e)) {
            if (f_t_point(a, t, v) > level) {
                rho_v = Rat(0);  // blocked already at the point: every radius qualifies
            } else {
                rho_v = dyadic(floor_e);
                res.failures.push_back("threshold below the search floor for " +
                                       describe_vertex(v));
            }
        } else {
            long lo = floor_e;
            while (hi - lo > 1) {
                long mid = lo + (hi - lo) / 2;
                (rises(mid) ? hi : lo) = mid;
            }
            rho_v = dyadic(hi);
        }
        if (rho_v > 0) any_positive = true;
        res.radii.push_back({v, rho_v});
    }

    if (!any_positive) {
        res.failures.push_back(
            "every addable vertex is blocked at point scale; no positive radius exists");
        return res;
    }
    size_t best = 0;
    for (size_t i = 1; i < res.radii.size(); ++i)
        if (res.radii[i].second > res.radii[best].second) best = i;
    res.vertex = res.radii[best].first;
    res.rho = res.radii[best].second;

    res.vertex_blocked_ok =
        f_t_box_sup(a, Rat(eight_lambda * res.rho), res.vertex, t) > eta.at(res.vertex.dim());
    if (!res.vertex_blocked_ok)
        res.failures.push_back("winning vertex is not blocked at its own radius");

    res.containment_ok = mat_dist_sup(a, b.center) + Rat(2) * res.rho <= Rat(2) * b.radius;
    if (!res.containment_ok)
        res.failures.push_back("doubled new ball escapes the doubled old ball");

    const Rat sr = t.sup_ratio();
    res.radius_floor_ok = Rat(8) * lambda * res.rho >= Rat(1, BigInt(1) << d) / (sr * sr);
    if (!res.radius_floor_ok) res.failures.push_back("radius fell below the flow floor");

    // Extended flag on the new ball, certified at the swollen dilate.
    std::vector<RationalSubspace> chain = flag.chain;
    auto pos = chain.begin();
    while (pos != chain.end() && pos->dim() < res.vertex.dim()) ++pos;
    chain.insert(pos, res.vertex);
    Flag extended = Flag::from_chain(chain);
    SupportBallSample new_ball =
        corner_ball_sample(a, res.rho, {Rat(2), eight_lambda});
    EtaProfile shifted = eta;
    shifted.flag = extended;
    res.certificate =
        check_permissible(extended, shifted, eight_lambda, new_ball, t, pool, pool_height);
    return res;
}

SmallVertexResult extract_small_vertex(const Flag& flag, const EtaProfile& eta,
                                       const SupportBallSample& s, const Rat& s_lambda,
                                       const MatQ& a, const RationalFlowPoint& t,
                                       const Rat& gamma, const Rat& kappa) {
    flag.validate();
    if (!flag.maximal()) throw std::invalid_argument("extract_small_vertex: flag must be maximal");
    const int d = flag.ambient();
    if (int(eta.values.size()) != d + 1)
        throw std::invalid_argument("extract_small_vertex: profile size mismatch");
    if (s.m + s.n != d || t.dim() != d)
        throw std::invalid_argument("extract_small_vertex: dimension mismatch");
    validate_matrix(a, s.m, s.n, "extract_small_vertex");
    if (gamma < 0) throw std::invalid_argument("extract_small_vertex: need gamma >= 0");
    if (!(kappa > 0 && kappa <= 1))
        throw std::invalid_argument("extract_small_vertex: need 0 < kappa <= 1");

    bool found = false;
    for (const auto& sample : s.samples_at(s_lambda))
        if (sample == a) {
            found = true;
            break;
        }
    if (!found)
        throw std::invalid_argument("extract_small_vertex: matrix must be a recorded sample");
    if (!in_W_kappa_t(a, kappa, t, gamma))
        throw std::invalid_argument("extract_small_vertex: matrix is outside the shrinking target");
    for (size_t i = 0; i < flag.chain.size(); ++i)
        if (!(f_t_set(s, flag.chain[i], t, s_lambda) <= eta.at(int(i))))
            throw std::invalid_argument(
                "extract_small_vertex: flag is not below the profile on the samples");

    // Shortest transported vector, pulled back to integer coordinates.
    const MatQ rows = flow_lattice_rows(a, t);
    const VecQ w = shortest_vector(rows);
    MatQ transpose(rows.size(), VecQ(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows.size(); ++j) transpose[i][j] = rows[j][i];
    VecQ coeffs = solve_square(transpose, w);
    for (const Rat& c : coeffs)
        if (boost::multiprecision::denominator(c) != 1)
            throw std::runtime_error(
                "extract_small_vertex: short vector failed to resolve to integer coordinates");

    SmallVertexResult res;
    res.lattice_vector = coeffs;
    int last_missing = 0;
    for (int i = 0; i < int(flag.chain.size()); ++i)
        if (!in_span(flag.chain[size_t(i)], coeffs)) last_missing = i;
    res.chain_index = last_missing + 1;
    res.vertex = flag.chain[size_t(res.chain_index)];

    const Rat covol_next = transported_covolume_sq(a, t, res.vertex);
    const Rat covol_prev = transported_covolume_sq(a, t, flag.chain[size_t(last_missing)]);
    const Rat w_len = length_sq(w);

    res.chain_bound_ok = covol_next <= w_len * covol_prev;
    if (!res.chain_bound_ok)
        res.failures.push_back("one-step covolume bound failed against the short vector");

    PosReal lhs(covol_next);
    PosReal rhs = PosReal::pow_of(t.sup_ratio(), Rat(-2) * gamma) * PosReal(kappa * kappa) *
                  eta.at(res.chain_index - 1).pow(Rat(2));
    res.inequality_ok = lhs <= rhs;
    res.log_margin = (rhs.log_value() - lhs.log_value()) / 2;
    if (!res.inequality_ok)
        res.failures.push_back("extracted vertex exceeds the shrinking-target bound");
    return res;
}

KappaRule default_kappa_schedule(double tau) {
    if (!(tau >= 0)) throw std::invalid_argument("default_kappa_schedule: need tau >= 0");
    return [tau](const RationalFlowPoint& t) {
        double v = std::exp(-tau * t.sup_log());
        if (v >= 1.0) return Rat(1);
        Rat r = rat_from_double(std::max(v, 1e-300));
        return r > 0 ? r : Rat(1, BigInt(1) << 512);
    };
}

DecayExperiment measure_decay_experiment(const Measure& mu, const MatQ& center,
                                         const Rat& radius, const Rat& gamma,
                                         const FlowChain& ray, const KappaRule& kappa_rule,
                                         int n_samples, int pool_height, std::uint64_t seed) {
    if (ray.points.empty()) throw std::invalid_argument("measure_decay_experiment: empty ray");
    const int m = ray.m, n = ray.n, d = m + n;
    validate_matrix(center, m, n, "measure_decay_experiment");
    if (mu.dim() != m * n)
        throw std::invalid_argument("measure_decay_experiment: measure dimension mismatch");
    if (!(radius > 0))
        throw std::invalid_argument("measure_decay_experiment: radius must be positive");
    if (gamma < 0) throw std::invalid_argument("measure_decay_experiment: need gamma >= 0");
    if (n_samples < 1) throw std::invalid_argument("measure_decay_experiment: need samples");

    const auto pool = enumerate_primitive_subspaces(d, pool_height);
    auto reshape = [&](const VecQ& v) {
        MatQ a(static_cast<size_t>(m), VecQ(static_cast<size_t>(n)));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a[size_t(i)][size_t(j)] = v[size_t(i * n + j)];
        return a;
    };
    auto draw_in_ball = [&](Rng& rng) {
        for (int tries = 0; tries < 200; ++tries) {
            MatQ a = reshape(mu.sample_exact(rng));
            if (mat_dist_sup(a, center) <= radius) return a;
        }
        throw std::runtime_error("measure_decay_experiment: ball misses the support");
    };

    DecayExperiment out;

    // The height-floor assumption for the kappa schedule, checked per chain
    // point against the sampled sup over the doubled ball.
    const SupportBallSample doubled = corner_ball_sample(center, radius, {Rat(2)});
    out.precondition_ok = true;
    std::vector<Rat> kappas;
    for (const auto& t : ray.points) {
        Rat kappa = kappa_rule(t);
        if (!(kappa > 0 && kappa <= 1)) {
            out.precondition_ok = false;
            kappa = kappa > 1 ? Rat(1) : Rat(1, BigInt(1) << 64);
        }
        kappas.push_back(kappa);
        for (const auto& v : pool)
            if (f_t_set(doubled, v, t, Rat(2)) < PosReal::pow_of(kappa, Rat(v.dim())))
                out.precondition_ok = false;
    }

    out.below_resolution = true;
    for (size_t idx = 0; idx < ray.points.size(); ++idx) {
        const auto& t = ray.points[idx];
        Rng rng(mix_seed(seed, idx, 0x5eed));
        int hits = 0;
        for (int i = 0; i < n_samples; ++i)
            if (in_W_kappa_t(draw_in_ball(rng), kappas[idx], t, gamma)) ++hits;
        DecayExperimentPoint pt;
        pt.s = ray.s[idx];
        pt.kappa = kappas[idx];
        pt.hits = hits;
        pt.samples = n_samples;
        pt.fraction = double(hits) / double(n_samples);
        if (hits > 0) out.below_resolution = false;
        out.points.push_back(std::move(pt));
    }

    std::vector<double> xs, ys;
    for (const auto& pt : out.points)
        if (pt.hits > 0) {
            xs.push_back(pt.s);
            ys.push_back(std::log(pt.fraction));
        }
    SlopeFit fit = fit_slope(xs, ys);
    out.eps_hat = -fit.slope;
    out.eps_lo = out.eps_hat - 2 * fit.stderr_slope;
    out.eps_hi = out.eps_hat + 2 * fit.stderr_slope;
    out.r_squared = fit.r_squared;
    out.decays = fit.points >= 3 && out.eps_lo > 0;

    // Single-level covering demonstration: build the base flag at the middle
    // chain point; when it is non-maximal, refine around measure samples and
    // greedily keep balls whose quarter-shrinks stay disjoint.
    const size_t mid = ray.points.size() / 2;
    const auto& t_demo = ray.points[mid];
    const Rat kappa_demo = kappas[mid];
    const FlagConstants consts = constants_C_lambda(m, n);
    std::vector<Rat> dilate_list = {Rat(2)};
    for (const auto& l : consts.lambda) dilate_list.push_back(Rat(l));
    const SupportBallSample b0 = corner_ball_sample(center, radius, dilate_list);
    BaseCaseResult bc = base_case(b0, t_demo, pool, pool_height, kappa_demo);
    if (!bc.ok()) {
        out.children_note = "base construction failed; covering demonstration skipped";
    } else if (bc.flag.maximal()) {
        out.children_note = "base flag is maximal at this scale; nothing to refine";
        out.children_disjoint = true;
        out.children_cover = true;
    } else {
        const Rat lambda = Rat(consts.lambda[size_t(bc.flag.length())]);
        Rng rng(mix_seed(seed, 0xc0de, 0x5e));
        std::vector<std::pair<MatQ, Rat>> balls;
        int failures = 0;
        for (int i = 0; i < 12; ++i) {
            MatQ a = draw_in_ball(rng);
            try {
                auto step = inductive_step(b0, bc.flag, bc.eta, lambda, a, t_demo, pool,
                                           pool_height);
                if (step.ok() && step.rho > 0)
                    balls.push_back({a, step.rho});
                else
                    ++failures;
            } catch (const std::exception&) {
                ++failures;
            }
        }
        std::stable_sort(balls.begin(), balls.end(),
                         [](const auto& x, const auto& y) { return x.second > y.second; });
        std::vector<std::pair<MatQ, Rat>> kept;
        for (const auto& cand : balls) {
            bool clear = true;
            for (const auto& k : kept)
                if (mat_dist_sup(cand.first, k.first) <= (cand.second + k.second) / 4) {
                    clear = false;
                    break;
                }
            if (clear) kept.push_back(cand);
        }
        out.children = int(kept.size());
        out.children_disjoint = true;
        for (size_t i = 0; i < kept.size(); ++i)
            for (size_t j = i + 1; j < kept.size(); ++j)
                if (mat_dist_sup(kept[i].first, kept[j].first) <=
                    (kept[i].second + kept[j].second) / 4)
                    out.children_disjoint = false;
        out.children_cover = true;
        for (const auto& cand : balls) {
            bool covered = false;
            for (const auto& k : kept)
                if (mat_dist_sup(cand.first, k.first) <= k.second) {
                    covered = true;
                    break;
                }
            if (!covered) out.children_cover = false;
        }
        std::ostringstream note;
        note << kept.size() << " of " << balls.size() << " refined balls kept";
        if (failures > 0) note << ", " << failures << " refinement failures";
        out.children_note = note.str();
    }
    return out;
}

}  // namespace qdlab
