#include "qdlab/decay.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace qdlab {

namespace {

// ------------------------------------------------------------ fitting helpers

struct LineFit {
    double slope = 0, intercept = 0, r_squared = 0;
};

LineFit least_squares(const std::vector<std::pair<double, double>>& pts) {
    size_t n = pts.size();
    if (n < 2) throw std::invalid_argument("least_squares: need at least two points");
    double mx = 0, my = 0;
    for (const auto& [a, b] : pts) { mx += a; my += b; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [a, b] : pts) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if (sxx == 0) throw std::invalid_argument("least_squares: all abscissae equal");
    LineFit out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double ssres = 0;
    for (const auto& [a, b] : pts) {
        double e = b - (out.intercept + out.slope * a);
        ssres += e * e;
    }
    out.r_squared = syy == 0 ? 1.0 : std::max(0.0, 1.0 - ssres / syy);
    return out;
}

// Extreme slope over all assignments of each ordinate to its bracket end.  The
// centered weights sum to zero, so the mean ordinate drops out and the extreme
// is attained pointwise: push up where the weight is positive, down where it
// is negative (or the reverse).
double slope_extreme(const std::vector<double>& xs, const std::vector<double>& ylo,
                     const std::vector<double>& yhi, bool maximize) {
    size_t n = xs.size();
    double mx = 0;
    for (double a : xs) mx += a;
    mx /= static_cast<double>(n);
    double sxx = 0, num = 0;
    for (size_t i = 0; i < n; ++i) {
        double w = xs[i] - mx;
        sxx += w * w;
        num += w * ((w > 0) == maximize ? yhi[i] : ylo[i]);
    }
    return num / sxx;
}

// --------------------------------------------------------- small linear algebra

// Eigenvector of the smallest eigenvalue of a symmetric matrix, via cyclic
// Jacobi rotations; dimensions here never exceed 8.
VecD smallest_eigenvector(std::vector<VecD> a) {
    int d = static_cast<int>(a.size());
    std::vector<VecD> v(d, VecD(d, 0.0));
    for (int i = 0; i < d; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                if (std::fabs(a[p][q]) < 1e-300) continue;
                double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
                double c = std::cos(theta), s = std::sin(theta);
                for (int i = 0; i < d; ++i) {
                    double rp = a[p][i], rq = a[q][i];
                    a[p][i] = c * rp - s * rq;
                    a[q][i] = s * rp + c * rq;
                }
                for (int i = 0; i < d; ++i) {
                    double cp = a[i][p], cq = a[i][q];
                    a[i][p] = c * cp - s * cq;
                    a[i][q] = s * cp + c * cq;
                }
                for (int i = 0; i < d; ++i) {
                    double vp = v[i][p], vq = v[i][q];
                    v[i][p] = c * vp - s * vq;
                    v[i][q] = s * vp + c * vq;
                }
            }
        }
    }
    int k = 0;
    for (int i = 1; i < d; ++i)
        if (a[i][i] < a[k][k]) k = i;
    VecD out(d);
    for (int i = 0; i < d; ++i) out[i] = v[i][k];
    double nn = norm_euclid(out);
    if (nn > 0)
        for (double& c : out) c /= nn;
    else
        out[0] = 1.0;
    return out;
}

// ------------------------------------------------------------ spatial hashing
//
// First-fit maximal separated subset in the sup norm.  Points are bucketed by
// cell of side `sep`; a newcomer only needs to look at the 3^d neighboring
// cells.  Hash collisions merely add candidates to scan, never hide one.

uint64_t cell_key(const std::vector<long long>& c) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (long long v : c) {
        for (int b = 0; b < 8; ++b) {
            h ^= static_cast<unsigned char>(v >> (8 * b));
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

class SeparatedNet {
public:
    SeparatedNet(int d, double sep) : d_(d), sep_(sep) {
        if (!(sep > 0)) throw std::invalid_argument("SeparatedNet: separation must be positive");
    }

    // Keeps p iff no kept point lies strictly within `sep` (sup norm).
    bool try_insert(const VecD& p) {
        std::vector<long long> c(d_);
        for (int i = 0; i < d_; ++i) c[i] = static_cast<long long>(std::floor(p[i] / sep_));
        std::vector<long long> probe(d_);
        std::vector<int> off(d_, -1);
        while (true) {
            for (int i = 0; i < d_; ++i) probe[i] = c[i] + off[i];
            auto it = cells_.find(cell_key(probe));
            if (it != cells_.end()) {
                for (size_t idx : it->second)
                    if (norm_sup(vsub(kept_[idx], p)) < sep_) return false;
            }
            int i = 0;
            while (i < d_ && off[i] == 1) off[i++] = -1;
            if (i == d_) break;
            ++off[i];
        }
        cells_[cell_key(c)].push_back(kept_.size());
        kept_.push_back(p);
        return true;
    }

    const std::vector<VecD>& kept() const { return kept_; }

private:
    int d_;
    double sep_;
    std::vector<VecD> kept_;
    std::unordered_map<uint64_t, std::vector<size_t>> cells_;
};

// ------------------------------------------------------------ exact power aids

BigInt integer_kth_root(const BigInt& n, unsigned k) {
    if (n < 0) throw std::invalid_argument("integer_kth_root: negative argument");
    if (n <= 1 || k == 1) return n;
    unsigned bits = boost::multiprecision::msb(n) + 1;
    BigInt x = BigInt(1) << (bits / k + 1);
    while (true) {
        BigInt xk1 = boost::multiprecision::pow(x, k - 1);
        BigInt y = ((k - 1) * x + n / xk1) / k;
        if (y >= x) break;
        x = y;
    }
    return x;
}

// Largest convenient rational at or below base^expo; exact whenever the power
// is itself rational.  The guard loop compares exactly on the positive-real
// track, so the "below" promise is unconditional.
Rat pow_rat_below(const Rat& base, const Rat& expo) {
    if (base <= 0) throw std::invalid_argument("pow_rat_below: base must be positive");
    if (expo == 0) return Rat(1);
    BigInt p = num(expo), q = den(expo);
    bool neg = p < 0;
    if (neg) p = -p;
    if (p < 1000000 && q < 64) {
        unsigned pe = p.convert_to<unsigned>(), qe = q.convert_to<unsigned>();
        Rat t(boost::multiprecision::pow(num(base), pe), boost::multiprecision::pow(den(base), pe));
        if (neg) t = 1 / t;
        BigInt rn = integer_kth_root(num(t), qe), rd = integer_kth_root(den(t), qe);
        if (boost::multiprecision::pow(rn, qe) == num(t) &&
            boost::multiprecision::pow(rd, qe) == den(t))
            return Rat(rn, rd);
    }
    double v = std::exp(to_double(expo) * log_rat(base));
    Rat b = rat_from_double(v);
    PosReal target = PosReal::pow_of(base, expo);
    for (int i = 0; i < 64 && PosReal(b) > target; ++i) b *= Rat(999999999, 1000000000);
    return b;
}

// --------------------------------------------------------------- mass helpers

struct RatioBracket {
    Rat lo{0}, hi{0};
    double upper = 0;  // conservative value clamped to [0,1]
    bool ok = false;   // denominator had a positive lower bound
};

RatioBracket mass_ratio(const MassBracket& numer, const MassBracket& denom) {
    RatioBracket out;
    if (denom.lo <= 0) return out;
    out.ok = true;
    out.hi = numer.hi / denom.lo;
    if (out.hi > 1) out.hi = 1;
    out.lo = denom.hi > 0 ? Rat(numer.lo / denom.hi) : Rat(0);
    if (out.lo > out.hi) out.lo = out.hi;
    out.upper = to_double(out.hi);
    return out;
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
    h ^= a + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

// Monte Carlo slab mass with a membership predicate (used whenever a point
// filter makes the exact oracles inapplicable).
MassBracket slab_mass_filtered(const Measure& mu, const HyperplaneQ& plane, const Rat& thickness,
                               const BallQ& ball, const PointFilter& filter, const Rat& tol,
                               uint64_t seed) {
    double tol_d = std::max(to_double(tol), 1e-9);
    long needed = static_cast<long>(std::ceil(9.0 / (4.0 * tol_d * tol_d)));
    long n = std::clamp(needed, 1000L, 200000L);
    Rng rng(seed);
    BallD bd(to_double_vec(ball.center), to_double(ball.radius), ball.norm);
    HyperplaneD pd(to_double_vec(plane.normal), to_double(plane.offset));
    double eps = to_double(thickness);
    long hits = 0;
    for (long i = 0; i < n; ++i) {
        VecD x = mu.sample(rng);
        if (ball_contains(bd, x) && in_thickening(x, pd, eps, false) && (!filter || filter(x)))
            ++hits;
    }
    double p = static_cast<double>(hits) / static_cast<double>(n);
    double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n)) + 1.0 / static_cast<double>(n);
    MassBracket t = mu.total_mass();
    MassBracket out;
    out.lo = rat_from_double(std::max(0.0, p - 3.0 * sigma)) * t.lo;
    out.hi = rat_from_double(std::min(1.0, p + 3.0 * sigma)) * t.hi;
    out.exact = false;
    out.flagged = n < needed || t.flagged;
    return out;
}

std::vector<Rat> geometric_grid(const Rat& first, const Rat& factor, int count) {
    std::vector<Rat> out;
    Rat v = first;
    for (int i = 0; i < count; ++i) {
        out.push_back(v);
        v *= factor;
    }
    return out;
}

void validate_scales(const std::vector<Rat>& grid, const char* who) {
    if (grid.empty()) throw std::invalid_argument(std::string(who) + ": empty scale grid");
    for (const Rat& r : grid)
        if (!(r > 0 && r <= 1))
            throw std::invalid_argument(std::string(who) + ": scales must lie in (0,1]");
}

} // namespace

// -------------------------------------------------------------- local_dimension

ScalingFit local_dimension(const Measure& mu, const VecQ& x, const std::vector<Rat>& rho_grid,
                           const Rat& tol) {
    if (static_cast<int>(x.size()) != mu.dim())
        throw std::invalid_argument("local_dimension: point dimension mismatch");
    if (rho_grid.size() < 4)
        throw std::invalid_argument("local_dimension: need at least four scales");
    validate_scales(rho_grid, "local_dimension");
    std::vector<Rat> grid = rho_grid;
    std::sort(grid.begin(), grid.end(), std::greater<Rat>());
    if (std::adjacent_find(grid.begin(), grid.end()) != grid.end())
        throw std::invalid_argument("local_dimension: duplicate scales");

    ScalingFit out;
    std::vector<double> xs, ylo, yhi;
    for (const Rat& rho : grid) {
        MassBracket m = mu.ball_mass(BallQ(x, rho, Norm::sup), tol);
        if (m.lo <= 0) {
            ++out.dropped;
            continue;
        }
        xs.push_back(log_rat(rho));
        ylo.push_back(log_rat(m.lo));
        yhi.push_back(log_rat(m.hi));
        out.points.push_back({xs.back(), std::log(m.mid_d())});
    }
    if (out.points.size() < 2)
        throw std::runtime_error("local_dimension: fewer than two scales carry positive mass");
    LineFit fit = least_squares(out.points);
    out.slope = fit.slope;
    out.r_squared = fit.r_squared;
    out.slope_lo = slope_extreme(xs, ylo, yhi, false);
    out.slope_hi = slope_extreme(xs, ylo, yhi, true);
    return out;
}

// --------------------------------------------------------------- federer_ratio

DoublingEstimate federer_ratio(const Measure& mu, const Rat& K, int samples,
                               const std::vector<Rat>& rho_grid, uint64_t seed, const Rat& tol) {
    if (!(K > 1)) throw std::invalid_argument("federer_ratio: K must exceed 1");
    if (samples < 1) throw std::invalid_argument("federer_ratio: need at least one sample");
    std::vector<Rat> grid =
        rho_grid.empty() ? geometric_grid(Rat(1, 2), Rat(1, 2), 10) : rho_grid;
    validate_scales(grid, "federer_ratio");

    DoublingEstimate out;
    Rng rng(seed);
    for (int s = 0; s < samples; ++s) {
        VecQ x = mu.sample_exact(rng);
        for (const Rat& rho : grid) {
            MassBracket inner = mu.ball_mass(BallQ(x, rho, Norm::sup), tol);
            if (inner.lo <= 0) {
                ++out.skipped;
                continue;
            }
            MassBracket outer = mu.ball_mass(BallQ(x, Rat(K * rho), Norm::sup), tol);
            Rat ratio = outer.hi / inner.lo;
            if (ratio > out.worst_ratio) out.worst_ratio = ratio;
            ++out.evaluated;
            out.flagged = out.flagged || inner.flagged || outer.flagged;
        }
    }
    if (out.evaluated == 0)
        throw std::runtime_error("federer_ratio: every probe had vanishing inner mass");
    return out;
}

// ---------------------------------------------------------- quasi_federer_check

ScaledDoublingReport quasi_federer_check(const Measure& mu, double eps,
                                         std::optional<double> delta, int probes,
                                         const std::vector<Rat>& rho_grid, uint64_t seed,
                                         const Rat& tol) {
    if (!(eps > 0)) throw std::invalid_argument("quasi_federer_check: eps must be positive");
    if (probes < 1) throw std::invalid_argument("quasi_federer_check: need at least one probe");
    int d = mu.dim();
    // Default exponent from the covering-multiplicity bound: the sup-norm
    // doubling constant of R^d is at most 6^d, and half the available epsilon
    // is spent on the radius inflation.
    double dl = delta ? *delta : eps / (2.0 * d * std::log2(6.0));
    if (!(dl > 0 && dl < 1))
        throw std::invalid_argument("quasi_federer_check: delta must lie in (0,1)");
    std::vector<Rat> grid =
        rho_grid.empty() ? geometric_grid(Rat(1, 10), Rat(1, 10), 6) : rho_grid;
    validate_scales(grid, "quasi_federer_check");

    ScaledDoublingReport out;
    out.delta = dl;
    std::map<int, double> decade;
    Rng rng(seed);
    for (int s = 0; s < probes; ++s) {
        VecQ x = mu.sample_exact(rng);
        for (const Rat& rho : grid) {
            MassBracket inner = mu.ball_mass(BallQ(x, rho, Norm::sup), tol);
            if (inner.lo <= 0) {
                ++out.skipped;
                continue;
            }
            double rho_d = to_double(rho);
            Rat r2 = rho == 1 ? Rat(1) : rat_from_double(std::pow(rho_d, 1.0 - dl));
            MassBracket outer = mu.ball_mass(BallQ(x, r2, Norm::sup), tol);
            double ratio = to_double(outer.hi / inner.lo) * std::pow(rho_d, eps);
            int bucket = static_cast<int>(std::floor(-std::log10(rho_d) + 1e-9));
            auto it = decade.find(bucket);
            if (it == decade.end())
                decade[bucket] = ratio;
            else
                it->second = std::max(it->second, ratio);
            out.c2_hat = std::max(out.c2_hat, ratio);
            ++out.evaluated;
        }
    }
    if (out.evaluated == 0)
        throw std::runtime_error("quasi_federer_check: every probe had vanishing mass");
    for (const auto& [bucket, sup] : decade) out.decade_sup.push_back(sup);
    if (decade.size() < 2) {
        out.holds = true;  // a single decade cannot exhibit a growth trend
    } else {
        auto it = decade.rbegin();
        double smallest = it->second;
        ++it;
        double previous = it->second;
        out.holds = smallest <= previous * 1.1 + 1e-12;
    }
    return out;
}

// ------------------------------------------------------------- worst_hyperplane

namespace {

// Ranks one candidate plane by the mass its slab captures; the ball mass is a
// shared constant, so only the slab mass matters while searching.
double slab_score(const Measure& mu, const HyperplaneQ& plane, const Rat& thickness,
                  const BallQ& ball, const Rat& tol) {
    return mu.slab_mass(plane, thickness, ball, tol).mid_d();
}

HyperplaneQ plane_through(const VecD& normal, const VecD& anchor) {
    VecQ n = rat_vec_from_double(normal);
    bool all_zero = true;
    for (const Rat& c : n)
        if (c != 0) all_zero = false;
    if (all_zero) n[0] = 1;
    VecQ a = rat_vec_from_double(anchor);
    return HyperplaneQ(n, dot(n, a));
}

} // namespace

PlaneSearchResult worst_hyperplane(const Measure& mu, const BallQ& ball, const Rat& beta,
                                   const PlaneSearchOptions& opt) {
    int d = mu.dim();
    if (static_cast<int>(ball.center.size()) != d)
        throw std::invalid_argument("worst_hyperplane: ball dimension mismatch");
    if (!(beta > 0)) throw std::invalid_argument("worst_hyperplane: beta must be positive");
    if (opt.samples < 1) throw std::invalid_argument("worst_hyperplane: need sample budget");

    Rng rng(opt.seed);
    BallD bd(to_double_vec(ball.center), to_double(ball.radius), ball.norm);
    std::vector<VecD> pts;
    long budget = 64L * opt.samples;
    for (long t = 0; t < budget && static_cast<int>(pts.size()) < opt.samples; ++t) {
        VecD x = mu.sample(rng);
        if (ball_contains(bd, x)) pts.push_back(std::move(x));
    }

    PlaneSearchResult res;
    res.samples_in_ball = static_cast<int>(pts.size());
    res.degenerate = static_cast<int>(pts.size()) < d + 1;
    res.thickness = beta * ball.radius;

    // Mean, covariance, densest sample.
    VecD mean(d, 0.0), densest = bd.center;
    if (!pts.empty()) {
        for (const VecD& p : pts) mean = vadd(mean, p);
        mean = vscale(1.0 / static_cast<double>(pts.size()), mean);
        double close_r = bd.radius / 4.0;
        size_t best_count = 0, best_idx = 0;
        for (size_t i = 0; i < pts.size(); ++i) {
            size_t cnt = 0;
            for (size_t j = 0; j < pts.size(); ++j)
                if (norm_sup(vsub(pts[i], pts[j])) <= close_r) ++cnt;
            if (cnt > best_count) {
                best_count = cnt;
                best_idx = i;
            }
        }
        densest = pts[best_idx];
    }
    VecD pca_normal(d, 0.0);
    pca_normal[0] = 1.0;
    if (pts.size() >= 2) {
        std::vector<VecD> cov(d, VecD(d, 0.0));
        for (const VecD& p : pts) {
            VecD c = vsub(p, mean);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) cov[i][j] += c[i] * c[j];
        }
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) cov[i][j] /= static_cast<double>(pts.size());
        pca_normal = smallest_eigenvector(cov);
    }

    // Candidate pool.  On the line a plane is a point, so candidates vary the
    // anchor instead of the normal.
    std::vector<std::pair<VecD, VecD>> candidates;  // (normal, anchor)
    candidates.push_back({pca_normal, densest});
    candidates.push_back({pca_normal, mean});
    if (d == 1) {
        candidates.push_back({VecD{1.0}, bd.center});
        std::vector<double> vals;
        for (const VecD& p : pts) vals.push_back(p[0]);
        std::sort(vals.begin(), vals.end());
        for (int k = 1; k <= 9 && !vals.empty(); ++k)
            candidates.push_back({VecD{1.0}, VecD{vals[(vals.size() - 1) * k / 10]}});
    } else {
        // Exact coordinate directions first: product-like measures concentrate
        // on axis slices, and no generic angular net ever hits them exactly.
        for (int i = 0; i < d; ++i) {
            VecD e(d, 0.0);
            e[i] = 1.0;
            candidates.push_back({e, densest});
            candidates.push_back({e, mean});
        }
        int count = opt.net_per_dim * d;
        for (int k = 0; k < count; ++k) {
            VecD n(d);
            if (d == 2) {
                double theta = M_PI * (k + 0.5) / count;
                n[0] = std::cos(theta);
                n[1] = std::sin(theta);
            } else {
                double nn = 0;
                for (int i = 0; i < d; ++i) {
                    // Box-Muller from the deterministic stream.
                    double u = std::max(rng.unif(), 1e-12), v = rng.unif();
                    n[i] = std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
                    nn += n[i] * n[i];
                }
                if (nn == 0) n[0] = 1.0;
                else
                    for (double& c : n) c /= std::sqrt(nn);
            }
            candidates.push_back({n, densest});
        }
    }

    // Score tolerances scale with the ball mass: an absolute tolerance larger
    // than the masses in play would make every candidate tie.
    MassBracket bm = mu.ball_mass(ball, opt.final_tol);
    Rat coarse_tol = bm.lo > 0 ? Rat(opt.search_tol * bm.lo) : opt.search_tol;
    Rat fine_tol = bm.lo > 0 ? Rat(opt.final_tol * bm.lo) : opt.final_tol;

    double best_score = -1.0;
    VecD best_normal = pca_normal, best_anchor = densest;
    HyperplaneQ best_plane = plane_through(pca_normal, densest);
    std::vector<std::pair<double, size_t>> ranked;
    for (size_t ci = 0; ci < candidates.size(); ++ci) {
        const auto& [n, a] = candidates[ci];
        HyperplaneQ plane = plane_through(n, a);
        double sc = slab_score(mu, plane, res.thickness, ball, coarse_tol);
        ranked.push_back({sc, ci});
        if (sc > best_score) {
            best_score = sc;
            best_normal = n;
            best_anchor = a;
            best_plane = plane;
        }
    }

    // Hill climbing: perturb normal coordinates (the anchor on the line),
    // keep improvements, shrink the step.
    double step = 0.25;
    for (int it = 0; it < opt.refine_steps; ++it) {
        bool improved = false;
        for (int i = 0; i < d; ++i) {
            for (int sgn = -1; sgn <= 1; sgn += 2) {
                VecD n = best_normal, a = best_anchor;
                if (d == 1)
                    a[0] += sgn * step * bd.radius;
                else {
                    n[i] += sgn * step;
                    double nn = norm_euclid(n);
                    if (nn == 0) continue;
                    for (double& c : n) c /= nn;
                }
                HyperplaneQ plane = plane_through(n, a);
                double sc = slab_score(mu, plane, res.thickness, ball, coarse_tol);
                if (sc > best_score) {
                    best_score = sc;
                    best_normal = n;
                    best_anchor = a;
                    best_plane = plane;
                    improved = true;
                }
            }
            if (d == 1) break;  // single coordinate
        }
        if (!improved) step *= 0.6;
    }

    // Coarse scores rank by cylinder-neighborhood bulk, which can overrate a
    // plane whose mass thins out at the true slab width.  Re-rank the climbed
    // winner and the leading coarse candidates at the fine tolerance.
    std::vector<HyperplaneQ> pool{best_plane};
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t k = 0; k < ranked.size() && k < 8; ++k) {
        const auto& [n, a] = candidates[ranked[k].second];
        pool.push_back(plane_through(n, a));
    }
    MassBracket slab{Rat(0), Rat(0), false, false};
    double best_fine = -1.0;
    for (const auto& plane : pool) {
        MassBracket sm = mu.slab_mass(plane, res.thickness, ball, fine_tol);
        if (sm.mid_d() > best_fine) {
            best_fine = sm.mid_d();
            best_plane = plane;
            slab = sm;
        }
    }
    res.plane = best_plane;
    RatioBracket rb = mass_ratio(slab, bm);
    if (!rb.ok) {
        res.degenerate = true;
        res.ratio_lo = 0;
        res.ratio_hi = 1;
        return res;
    }
    res.ratio_lo = rb.lo;
    res.ratio_hi = rb.hi;
    return res;
}

// ---------------------------------------------------------------- decay_profile

DecayFit fit_decay(const std::vector<std::pair<double, double>>& beta_ratio) {
    if (beta_ratio.empty()) throw std::invalid_argument("fit_decay: no probes");
    std::vector<double> betas;
    for (const auto& [b, r] : beta_ratio) betas.push_back(b);
    std::sort(betas.begin(), betas.end());
    betas.erase(std::unique(betas.begin(), betas.end()), betas.end());
    // Only the smallest half of the distinct widths enters the fit: the decay
    // exponent is an asymptotic statement.
    double cutoff = betas[(betas.size() - 1) / 2];

    DecayFit out;
    std::vector<std::pair<double, double>> logs;
    for (const auto& [b, r] : beta_ratio) {
        if (b > cutoff) continue;
        out.fit_points.push_back({b, r});
        if (r <= 0) {
            ++out.zero_ratios;
            continue;
        }
        logs.push_back({std::log(b), std::log(r)});
    }
    if (logs.size() < 2)
        throw std::runtime_error("fit_decay: fewer than two usable probes in the asymptotic half");
    LineFit fit = least_squares(logs);
    out.alpha_hat = fit.slope;
    out.c1_hat = std::exp(fit.intercept);
    out.r_squared = fit.r_squared;
    return out;
}

DecayFit decay_profile(const Measure& mu, DecayMode mode, const Rat& gamma,
                       const PointFilter& filter, const ProbePlan& plan) {
    bool quasi = mode == DecayMode::quasi || mode == DecayMode::weak_quasi;
    bool sup_scaled = mode == DecayMode::decaying || mode == DecayMode::weak_quasi;
    if (quasi && !(gamma > 0))
        throw std::invalid_argument("decay_profile: quasi modes need positive gamma");
    if (plan.points < 1) throw std::invalid_argument("decay_profile: need at least one point");
    std::vector<Rat> rhos =
        plan.rho_grid.empty() ? geometric_grid(Rat(1, 4), Rat(1, 2), 5) : plan.rho_grid;
    validate_scales(rhos, "decay_profile");
    std::vector<Rat> mults = plan.beta_multipliers.empty()
                                 ? geometric_grid(Rat(1, 2), Rat(1, 2), 8)
                                 : plan.beta_multipliers;
    for (const Rat& m : mults)
        if (!(m > 0 && m <= 1))
            throw std::invalid_argument("decay_profile: beta multipliers must lie in (0,1]");

    Rng rng(plan.seed);
    std::vector<VecD> centers;
    long budget = 1000L * plan.points;
    for (long t = 0; t < budget && static_cast<int>(centers.size()) < plan.points; ++t) {
        VecD x = mu.sample(rng);
        if (!filter || filter(x)) centers.push_back(std::move(x));
    }
    if (centers.empty())
        throw std::runtime_error("decay_profile: no sample passed the point filter");

    std::vector<ProbeRecord> records;
    std::vector<std::pair<double, double>> pairs;
    int skipped = 0;
    for (size_t ci = 0; ci < centers.size(); ++ci) {
        VecQ xq = rat_vec_from_double(centers[ci]);
        for (size_t ri = 0; ri < rhos.size(); ++ri) {
            const Rat& rho = rhos[ri];
            BallQ ball(xq, rho, Norm::sup);
            MassBracket bm = mu.ball_mass(ball, plan.tol);
            // Slab masses are compared against this ball mass, so their
            // tolerance is taken relative to it.
            Rat slab_tol = bm.lo > 0 ? Rat(plan.tol * bm.lo) : plan.tol;

            // One adversarial plane per (center, scale), shared over widths.
            Rat scale_cap = quasi ? pow_rat_below(rho, gamma) : Rat(1);
            Rat beta_ref = mults[mults.size() / 2] * scale_cap;
            HyperplaneQ plane{{Rat(1)}, Rat(0)};
            if (plan.fixed_plane) {
                plane = *plan.fixed_plane;
            } else {
                PlaneSearchOptions po = plan.plane_search;
                po.seed = mix_seed(plan.seed, ci, ri);
                plane = worst_hyperplane(mu, ball, beta_ref, po).plane;
            }

            // Width scale: the ball radius, or the measured sup distance to
            // the plane on the supported part of the ball.
            Rat width_scale = rho;
            bool have_scale = true;
            if (sup_scaled) {
                Rng srng(mix_seed(plan.seed ^ 0x5eed, ci, ri));
                HyperplaneD pd(to_double_vec(plane.normal), to_double(plane.offset));
                BallD bdd(to_double_vec(ball.center), to_double(ball.radius), ball.norm);
                auto sd = sup_dist_on_support(mu, pd, bdd, 64, srng, 0);
                if (sd && *sd > 0)
                    width_scale = rat_from_double(*sd);
                else
                    have_scale = false;
            }

            for (const Rat& m : mults) {
                ProbeRecord rec;
                rec.x = centers[ci];
                rec.rho = rho;
                rec.beta = m * scale_cap;
                rec.plane = plane;
                rec.gamma = quasi ? gamma : Rat(0);
                rec.mode = mode;
                if (bm.lo <= 0 || !have_scale) {
                    rec.skipped = true;
                    ++skipped;
                    records.push_back(std::move(rec));
                    continue;
                }
                rec.thickness = rec.beta * width_scale;
                MassBracket slab =
                    filter ? slab_mass_filtered(mu, plane, rec.thickness, ball, filter, plan.tol,
                                                mix_seed(plan.seed ^ 0xf11e, ci * 64 + ri,
                                                         static_cast<uint64_t>(&m - mults.data())))
                           : mu.slab_mass(plane, rec.thickness, ball, slab_tol);
                RatioBracket rb = mass_ratio(slab, bm);
                if (!rb.ok) {
                    rec.skipped = true;
                    ++skipped;
                    records.push_back(std::move(rec));
                    continue;
                }
                rec.ratio_lo = rb.lo;
                rec.ratio_hi = rb.hi;
                rec.ratio = rb.upper;
                pairs.push_back({to_double(rec.beta), rec.ratio});
                records.push_back(std::move(rec));
            }
        }
    }
    if (pairs.empty()) throw std::runtime_error("decay_profile: every probe was degenerate");
    DecayFit out = fit_decay(pairs);
    out.probes = std::move(records);
    out.skipped = skipped;
    return out;
}

// --------------------------------------------------------------- cover_sublevel

namespace {

Poly partial_derivative(const Poly& f, int i) {
    Poly g;
    g.arity = f.arity;
    for (const auto& [c, exps] : f.terms) {
        if (static_cast<int>(exps.size()) <= i || exps[i] == 0 || c == 0) continue;
        auto e2 = exps;
        e2[i] -= 1;
        g.terms.push_back({Rat(c * exps[i]), e2});
    }
    return g;
}

int poly_degree(const Poly& f) {
    int deg = -1;
    for (const auto& [c, exps] : f.terms) {
        if (c == 0) continue;
        int t = 0;
        for (int e : exps) t += e;
        deg = std::max(deg, t);
    }
    return deg;
}

// Regular lattice over [-1,1]^d, last axis fastest; coordinates are exact
// rationals of the form -1 + 2k/(n-1).
struct Lattice {
    int d, n;
    double step;
    long total;

    Lattice(int d_, int n_) : d(d_), n(n_), step(2.0 / (n_ - 1)) {
        total = 1;
        for (int i = 0; i < d; ++i) total *= n;
    }
    void coords(long idx, std::vector<int>& c) const {
        for (int i = d - 1; i >= 0; --i) {
            c[i] = static_cast<int>(idx % n);
            idx /= n;
        }
    }
    void point(const std::vector<int>& c, VecD& p) const {
        for (int i = 0; i < d; ++i) p[i] = -1.0 + step * c[i];
    }
    VecQ exact_point(const std::vector<int>& c) const {
        VecQ p(d);
        for (int i = 0; i < d; ++i) p[i] = Rat(-1) + Rat(2 * c[i], n - 1);
        return p;
    }
};

double lattice_sup(const Poly& g, const Lattice& lat) {
    double sup = 0;
    std::vector<int> c(lat.d);
    VecD p(lat.d);
    for (long idx = 0; idx < lat.total; ++idx) {
        lat.coords(idx, c);
        lat.point(c, p);
        sup = std::max(sup, std::fabs(g.eval(p)));
    }
    return sup;
}

// One cover level: Taylor zero-set planes at a separated net avoiding the
// small-derivative region, margins from the measured linearization error.
std::vector<CoverElement> taylor_level(const Poly& f, const std::vector<Poly>& partials,
                                       int steep, double f_norm, double df_norm, double beta,
                                       double beta_child, const Lattice& lat) {
    double beta1 = std::sqrt(beta);
    double threshold = beta_child * df_norm;
    SeparatedNet net(lat.d, beta1);
    std::vector<std::vector<int>> net_coords;
    std::vector<int> c(lat.d);
    VecD p(lat.d);
    const Poly& df = partials[steep];
    for (long idx = 0; idx < lat.total; ++idx) {
        lat.coords(idx, c);
        lat.point(c, p);
        if (std::fabs(df.eval(p)) <= threshold) continue;
        if (net.try_insert(p)) net_coords.push_back(c);
    }

    double radius_d = beta1 + 2.0 * lat.step;
    int span = static_cast<int>(std::ceil(radius_d / lat.step)) + 1;
    Rat radius = rat_from_double(radius_d * (1.0 + 1e-9));

    std::vector<CoverElement> out;
    std::vector<int> w(lat.d);
    VecD y(lat.d);
    for (const auto& nc : net_coords) {
        VecQ pq = lat.exact_point(nc);
        VecQ normal(lat.d);
        bool zero = true;
        for (int i = 0; i < lat.d; ++i) {
            normal[i] = partials[i].eval(pq);
            if (normal[i] != 0) zero = false;
        }
        if (zero) continue;
        Rat fp = f.eval(pq);
        Rat level = dot(normal, pq) - fp;

        // Measured linearization error over the lattice window of this ball.
        VecD nd = to_double_vec(normal);
        VecD pd(lat.d);
        lat.point(nc, pd);
        double fpd = to_double(fp);
        double err = 0;
        std::vector<std::pair<int, int>> ranges(lat.d);
        for (int i = 0; i < lat.d; ++i)
            ranges[i] = {std::max(0, nc[i] - span), std::min(lat.n - 1, nc[i] + span)};
        for (int i = 0; i < lat.d; ++i) w[i] = ranges[i].first;
        while (true) {
            lat.point(w, y);
            if (norm_sup(vsub(y, pd)) <= radius_d) {
                double lin = fpd;
                for (int i = 0; i < lat.d; ++i) lin += nd[i] * (y[i] - pd[i]);
                err = std::max(err, std::fabs(f.eval(y) - lin));
            }
            int i = lat.d - 1;
            while (i >= 0 && w[i] == ranges[i].second) {
                w[i] = ranges[i].first;
                --i;
            }
            if (i < 0) break;
            ++w[i];
        }
        Rat margin = rat_from_double((beta * f_norm + err) * (1.0 + 1e-9) + 1e-12 * f_norm);
        out.push_back({std::move(normal), std::move(level), std::move(margin), std::move(pq),
                       radius});
    }
    return out;
}

std::vector<std::vector<CoverElement>> build_cover(const Poly& f, int ell, double beta,
                                                   double eps, const Lattice& lat) {
    if (ell <= 0) return {};
    double f_norm = lattice_sup(f, lat);
    std::vector<std::vector<CoverElement>> levels(1);
    if (f_norm == 0) {
        // Derivative vanished identically on the grid; nothing to anchor
        // planes on, deeper levels are empty too.
        levels.resize(ell);
        return levels;
    }
    std::vector<Poly> partials;
    std::vector<double> dnorms;
    int steep = 0;
    for (int i = 0; i < f.arity; ++i) {
        partials.push_back(partial_derivative(f, i));
        dnorms.push_back(lattice_sup(partials.back(), lat));
        if (dnorms[i] > dnorms[steep]) steep = i;
    }
    double gamma_level = ell == 1 ? eps : 1.0;
    double beta_child = std::pow(beta, gamma_level / 4.0);
    auto sub = build_cover(partials[steep], ell - 1, beta_child, eps, lat);
    levels[0] = dnorms[steep] > 0
                    ? taylor_level(f, partials, steep, f_norm, dnorms[steep], beta, beta_child, lat)
                    : std::vector<CoverElement>{};
    for (auto& s : sub) levels.push_back(std::move(s));
    return levels;
}

// Holder norm of the order-ell derivative tensor over the lattice: entrywise
// sup plus the steepest finite-difference quotient along the fastest axis.
double holder_norm_estimate(const Poly& f, int ell, double eps, const Lattice& lat) {
    std::vector<Poly> current = {f};
    for (int k = 0; k < ell; ++k) {
        std::vector<Poly> next;
        for (const auto& g : current)
            for (int i = 0; i < f.arity; ++i) next.push_back(partial_derivative(g, i));
        current = std::move(next);
    }
    double sup = 0, sem = 0;
    double denom = std::pow(lat.step, eps);
    std::vector<int> c(lat.d);
    VecD p(lat.d);
    for (const auto& g : current) {
        double prev = 0;
        bool have_prev = false;
        for (long idx = 0; idx < lat.total; ++idx) {
            lat.coords(idx, c);
            lat.point(c, p);
            double v = g.eval(p);
            sup = std::max(sup, std::fabs(v));
            if (have_prev && c[lat.d - 1] != 0) sem = std::max(sem, std::fabs(v - prev) / denom);
            prev = v;
            have_prev = true;
        }
    }
    return sup + sem;
}

} // namespace

SublevelCover cover_sublevel(const Poly& f, int ell, double eps, const Rat& beta,
                             int grid_per_dim) {
    int d = f.arity;
    if (d < 1 || d > 8) throw std::invalid_argument("cover_sublevel: arity must be in 1..8");
    if (ell < 0) throw std::invalid_argument("cover_sublevel: negative derivative count");
    if (!(eps > 0 && eps <= 1)) throw std::invalid_argument("cover_sublevel: eps must be in (0,1]");
    if (!(beta > 0 && beta < 1))
        throw std::invalid_argument("cover_sublevel: beta must be in (0,1)");
    int deg = poly_degree(f);
    if (deg < 0) throw std::invalid_argument("cover_sublevel: zero polynomial");
    int n = grid_per_dim > 0 ? grid_per_dim : (d <= 2 ? 2001 : 61);
    if (n < 5) throw std::invalid_argument("cover_sublevel: grid too coarse");
    Lattice lat(d, n);
    double beta_d = to_double(beta);

    SublevelCover out;
    Rat exact_norm = 0;
    if (deg <= 1) {
        // Affine input: the sublevel set is itself a slab, so emit it exactly
        // (sup norm of an affine map on the cube is the coefficient sum).
        VecQ a(d, Rat(0));
        Rat c0 = 0;
        for (const auto& [cf, exps] : f.terms) {
            int t = 0, at = -1;
            for (size_t i = 0; i < exps.size(); ++i) {
                t += exps[i];
                if (exps[i] == 1) at = static_cast<int>(i);
            }
            if (t == 0)
                c0 += cf;
            else
                a[at] += cf;
        }
        exact_norm = rat_abs(c0);
        for (const Rat& ai : a) exact_norm += rat_abs(ai);
        out.f_norm = to_double(exact_norm);
        out.collections.assign(std::max(ell, 1), {});
        if (deg == 1) {
            out.collections[0].push_back(
                {a, Rat(-c0), Rat(beta * exact_norm), VecQ(d, Rat(0)), Rat(1)});
            out.exact_single_slab = true;
        }
    } else {
        out.collections = build_cover(f, ell, beta_d, eps, lat);
        out.f_norm = lattice_sup(f, lat);
    }
    out.hypothesis_ratio =
        out.f_norm > 0 ? holder_norm_estimate(f, ell, eps, lat) / out.f_norm : 0.0;

    // A-posteriori coverage check on the lattice.
    struct Elem {
        VecD normal, center;
        double level, margin, radius;
    };
    std::vector<std::vector<Elem>> flat;
    std::vector<std::unordered_map<uint64_t, std::vector<size_t>>> hashes;
    std::vector<double> cell_sizes;
    for (const auto& level : out.collections) {
        flat.emplace_back();
        hashes.emplace_back();
        double cell = lat.step;
        for (const auto& e : level) cell = std::max(cell, to_double(e.radius));
        cell_sizes.push_back(cell);
        for (const auto& e : level) {
            Elem el{to_double_vec(e.normal), to_double_vec(e.center), to_double(e.level),
                    to_double(e.margin), to_double(e.radius)};
            std::vector<long long> cc(d);
            for (int i = 0; i < d; ++i)
                cc[i] = static_cast<long long>(std::floor(el.center[i] / cell));
            hashes.back()[cell_key(cc)].push_back(flat.back().size());
            flat.back().push_back(std::move(el));
        }
    }

    auto covered = [&](const VecD& g) {
        std::vector<long long> cc(d), probe(d);
        for (size_t lv = 0; lv < flat.size(); ++lv) {
            if (flat[lv].empty()) continue;
            double cell = cell_sizes[lv];
            for (int i = 0; i < d; ++i)
                cc[i] = static_cast<long long>(std::floor(g[i] / cell));
            std::vector<int> off(d, -1);
            while (true) {
                for (int i = 0; i < d; ++i) probe[i] = cc[i] + off[i];
                auto it = hashes[lv].find(cell_key(probe));
                if (it != hashes[lv].end()) {
                    for (size_t idx : it->second) {
                        const Elem& el = flat[lv][idx];
                        if (norm_sup(vsub(g, el.center)) > el.radius * (1.0 + 1e-9)) continue;
                        if (std::fabs(dot(el.normal, g) - el.level) <= el.margin * (1.0 + 1e-9))
                            return true;
                    }
                }
                int i = 0;
                while (i < d && off[i] == 1) off[i++] = -1;
                if (i == d) break;
                ++off[i];
            }
        }
        return false;
    };

    double z_cut = beta_d * out.f_norm * (1.0 + 1e-12);
    long missed = 0;
    std::vector<int> c(d);
    VecD p(d);
    for (long idx = 0; idx < lat.total; ++idx) {
        lat.coords(idx, c);
        lat.point(c, p);
        if (std::fabs(f.eval(p)) > z_cut) continue;
        ++out.sublevel_grid_points;
        if (!covered(p)) {
            ++missed;
            if (out.uncovered.size() < 1000) out.uncovered.push_back(p);
        }
    }
    out.verified = missed == 0;
    return out;
}

// ------------------------------------------------------------ simplex_cover_sum

SimplexCoverResult simplex_cover_sum(const Measure& mu, const Rat& gamma, int H, int n,
                                     const PointFilter& filter, int support_samples,
                                     uint64_t seed, const Rat& tol) {
    if (H < 2) throw std::invalid_argument("simplex_cover_sum: H must be at least 2");
    if (n < 1) throw std::invalid_argument("simplex_cover_sum: n must be at least 1");
    if (!(gamma > 0)) throw std::invalid_argument("simplex_cover_sum: gamma must be positive");
    int d = mu.dim();

    SimplexCoverResult out;
    out.n = n;
    BigInt hp = boost::multiprecision::pow(BigInt(H), static_cast<unsigned>((d + 1) * n));
    out.rho_n = Rat(BigInt(1), BigInt(2) * hp);
    out.q_bound = simplex_q_bound(d, Rat(2) * out.rho_n, std::nullopt);

    // Net density tracks 1/rho so the net genuinely resolves the scale.
    long want;
    if (support_samples > 0) {
        want = support_samples;
    } else {
        BigInt ideal = BigInt(8) * hp;  // 4 / rho_n
        want = ideal > 600000 ? 600000L : ideal.convert_to<long>();
    }

    Rng rng(seed);
    double sep = to_double(out.rho_n);
    SeparatedNet net(d, sep);
    long budget = 50L * want, accepted = 0;
    for (long t = 0; t < budget && accepted < want; ++t) {
        VecD x = mu.sample(rng);
        if (filter && !filter(x)) continue;
        ++accepted;
        net.try_insert(x);
    }
    if (accepted == 0)
        throw std::runtime_error("simplex_cover_sum: no support sample passed the filter");
    out.net_size = static_cast<int>(net.kept().size());

    Rat thickness = pow_rat_below(out.rho_n, Rat(1) + gamma);
    for (const VecD& y : net.kept()) {
        SimplexCoverTerm term;
        term.y = rat_vec_from_double(y);
        BallQ ball(term.y, out.rho_n, Norm::sup);
        SimplexHullResult hull = simplex_hyperplane(term.y, Rat(2) * out.rho_n);
        if (hull.status == HullStatus::empty) {
            term.undefined = true;
            ++out.undefined_terms;
        } else if (hull.status == HullStatus::violation) {
            term.undefined = true;
            ++out.hull_violations;
        } else if (hull.status == HullStatus::hull) {
            term.plane = hull.hull;
        } else {
            // A single rational point determines no direction; any plane
            // through it is admissible for the covering bound.
            VecQ normal(d, Rat(0));
            normal[0] = 1;
            term.plane = HyperplaneQ(normal, hull.points.at(0)[0]);
        }
        if (term.plane) {
            term.ball = mu.ball_mass(ball, tol);
            Rat slab_tol = term.ball.lo > 0 ? Rat(tol * term.ball.lo) : tol;
            term.slab = filter ? slab_mass_filtered(mu, *term.plane, thickness, ball, filter, tol,
                                                    mix_seed(seed, out.terms.size(), 1))
                               : mu.slab_mass(*term.plane, thickness, ball, slab_tol);
            out.sum_lo += term.slab.lo;
            out.sum_hi += term.slab.hi;
            out.ball_sum_lo += term.ball.lo;
            out.ball_sum_hi += term.ball.hi;
        }
        out.terms.push_back(std::move(term));
    }
    return out;
}

// -------------------------------------------------------- counterexample_search

ViolationSearchResult counterexample_search(const CounterexampleSpec& spec, const Rat& C,
                                            const Rat& alpha, const Rat& rho0, const VecQ& x) {
    if (!(C > 0)) throw std::invalid_argument("counterexample_search: C must be positive");
    if (!(alpha > 0)) throw std::invalid_argument("counterexample_search: alpha must be positive");
    if (!(rho0 > 0)) throw std::invalid_argument("counterexample_search: rho0 must be positive");
    if (x.size() != 1)
        throw std::invalid_argument("counterexample_search: the spiked oracle lives on the line");

    auto mu = counterexample_oracle(spec);
    auto spikes = counterexample_spikes(spec.n_max);
    BallQ outer(x, rho0, Norm::sup);
    MassBracket total = mu->ball_mass(outer, Rat(1));
    if (total.lo <= 0)
        throw std::runtime_error("counterexample_search: outer ball misses the support");

    ViolationSearchResult out;
    PosReal bound(C);
    for (int k = 1; k <= spec.n_max; ++k) {
        const SpikeInfo& s = spikes[static_cast<size_t>(k - 1)];
        if (rat_abs(Rat(s.center - x[0])) > rho0 / 2) continue;  // bump too far out

        Rat lo = std::max(Rat(s.center - s.half_width), Rat(x[0] - rho0));
        Rat hi = std::min(Rat(s.center + s.half_width), Rat(x[0] + rho0));
        if (hi <= lo) continue;
        BallQ inner(VecQ{Rat((lo + hi) / 2)}, Rat((hi - lo) / 2), Norm::sup);
        MassBracket hit = mu->ball_mass(inner, Rat(1));

        ViolationWitness w;
        w.n = k;
        w.rho = rho0;
        w.y = VecQ{s.center};
        w.beta = s.half_width / rho0;
        w.mass_ratio = hit.lo / total.lo;
        if (w.mass_ratio <= 0) continue;  // cannot happen for an interior bump
        w.score = PosReal(w.mass_ratio) * PosReal::pow_of(w.beta, Rat(-alpha));
        w.qualifies = w.score > bound;
        if (w.qualifies && !out.found) {
            out.found = true;
            out.witness = w;
        }
        out.scanned.push_back(std::move(w));
    }
    return out;
}

} // namespace qdlab
