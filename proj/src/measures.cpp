#include "qdlab/measures.hpp"

#include <algorithm>
#include <cstring>
#include <json.hpp>
#include <sstream>

namespace qdlab {

using nlohmann::json;

// ---------------------------------------------------------------- polynomials

Rat Poly::eval(const VecQ& x) const {
    if (static_cast<int>(x.size()) != arity) throw std::invalid_argument("Poly::eval: arity mismatch");
    Rat acc = 0;
    for (const auto& [c, exps] : terms) {
        Rat t = c;
        for (size_t i = 0; i < exps.size(); ++i)
            for (int k = 0; k < exps[i]; ++k) t *= x[i];
        acc += t;
    }
    return acc;
}

double Poly::eval(const VecD& x) const {
    if (static_cast<int>(x.size()) != arity) throw std::invalid_argument("Poly::eval: arity mismatch");
    double acc = 0;
    for (const auto& [c, exps] : terms) {
        double t = to_double(c);
        for (size_t i = 0; i < exps.size(); ++i)
            t *= std::pow(x[i], exps[i]);
        acc += t;
    }
    return acc;
}

std::vector<Poly> moment_curve(int degree) {
    if (degree < 1) throw std::invalid_argument("moment_curve: degree must be >= 1");
    std::vector<Poly> out;
    for (int k = 1; k <= degree; ++k) {
        Poly p;
        p.arity = 1;
        p.terms = {{Rat(1), {k}}};
        out.push_back(std::move(p));
    }
    return out;
}

// ------------------------------------------------------------- box primitives

namespace {

// Closed-ball vs box tests, exact in rationals.
bool box_disjoint_ball(const BoxQ& box, const BallQ& ball) {
    int d = ball.dim();
    if (ball.norm == Norm::sup) {
        for (int i = 0; i < d; ++i)
            if (box.lo[i] > ball.center[i] + ball.radius ||
                box.hi[i] < ball.center[i] - ball.radius)
                return true;
        return false;
    }
    Rat min2 = 0;
    for (int i = 0; i < d; ++i) {
        Rat m = 0;
        if (ball.center[i] < box.lo[i]) m = box.lo[i] - ball.center[i];
        else if (ball.center[i] > box.hi[i]) m = ball.center[i] - box.hi[i];
        min2 += m * m;
    }
    return min2 > ball.radius * ball.radius;
}

bool box_inside_ball(const BoxQ& box, const BallQ& ball) {
    int d = ball.dim();
    if (ball.norm == Norm::sup) {
        for (int i = 0; i < d; ++i)
            if (box.lo[i] < ball.center[i] - ball.radius ||
                box.hi[i] > ball.center[i] + ball.radius)
                return false;
        return true;
    }
    Rat max2 = 0;
    for (int i = 0; i < d; ++i) {
        Rat a = rat_abs(box.lo[i] - ball.center[i]);
        Rat b = rat_abs(box.hi[i] - ball.center[i]);
        Rat m = a > b ? a : b;
        max2 += m * m;
    }
    return max2 <= ball.radius * ball.radius;
}

bool boxes_disjoint(const BoxQ& a, const BoxQ& b) {
    for (size_t i = 0; i < a.lo.size(); ++i)
        if (a.lo[i] > b.hi[i] || a.hi[i] < b.lo[i]) return true;
    return false;
}

enum class RegionCut { disjoint, inside, straddle };

RegionCut box_vs_ball(const BoxQ& box, const BallQ& ball) {
    if (box_disjoint_ball(box, ball)) return RegionCut::disjoint;
    if (box_inside_ball(box, ball)) return RegionCut::inside;
    return RegionCut::straddle;
}

// a <= t where t = thickness * ||normal||_2 (so t^2 = t2 is rational and the
// comparison closes without extracting the square root).
bool le_scaled_thickness(const Rat& a, const Rat& t2) {
    if (a <= 0) return true;
    return a * a <= t2;
}

RegionCut box_vs_slab(const BoxQ& box, const HyperplaneQ& plane, const Rat& thickness) {
    // range of normal . x over the box
    Rat lo = 0, hi = 0;
    for (size_t i = 0; i < box.lo.size(); ++i) {
        const Rat& n = plane.normal[i];
        if (n >= 0) {
            lo += n * box.lo[i];
            hi += n * box.hi[i];
        } else {
            lo += n * box.hi[i];
            hi += n * box.lo[i];
        }
    }
    Rat t2 = thickness * thickness * norm_sq(plane.normal);
    lo -= plane.offset;
    hi -= plane.offset;
    bool hi_in = le_scaled_thickness(hi, t2) && le_scaled_thickness(-hi, t2);
    bool lo_in = le_scaled_thickness(lo, t2) && le_scaled_thickness(-lo, t2);
    if (hi_in && lo_in) return RegionCut::inside;
    if ((lo > 0 && !lo_in) || (hi < 0 && !hi_in)) return RegionCut::disjoint;
    return RegionCut::straddle;
}

// Convex polygon clip against half-plane a . x <= b, exact.
std::vector<VecQ> clip_halfplane(const std::vector<VecQ>& poly, const VecQ& a, const Rat& b) {
    std::vector<VecQ> out;
    size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const VecQ& p = poly[i];
        const VecQ& q = poly[(i + 1) % n];
        Rat fp = dot(a, p) - b, fq = dot(a, q) - b;
        if (fp <= 0) out.push_back(p);
        if ((fp < 0 && fq > 0) || (fp > 0 && fq < 0)) {
            Rat s = fp / (fp - fq);
            out.push_back(vadd(p, vscale(s, vsub(q, p))));
        }
    }
    return out;
}

Rat polygon_area(const std::vector<VecQ>& poly) {
    if (poly.size() < 3) return Rat(0);
    Rat twice = 0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const VecQ& p = poly[i];
        const VecQ& q = poly[(i + 1) % poly.size()];
        twice += p[0] * q[1] - q[0] * p[1];
    }
    return rat_abs(twice) / 2;
}

// Rational b with b <= sqrt(x) (from_below) or b >= sqrt(x), tight to double
// precision; used to sandwich an irrational slab boundary between two exactly
// computable ones.  Perfect squares come back exactly, so the sandwich closes.
Rat rat_sqrt_bound(const Rat& x, bool from_below) {
    if (x <= 0) return Rat(0);
    BigInt sn = boost::multiprecision::sqrt(num(x)), sd = boost::multiprecision::sqrt(den(x));
    if (sn * sn == num(x) && sd * sd == den(x)) return Rat(sn, sd);
    double r = std::sqrt(to_double(x));
    Rat b = rat_from_double(r);
    for (int i = 0; i < 64; ++i) {
        if (from_below ? b * b <= x : b * b >= x) return from_below && b < 0 ? Rat(0) : b;
        double step = std::max(std::fabs(r), 1.0) * 1e-15;
        r = from_below ? r - step : r + step;
        b = rat_from_double(r);
    }
    // fall back to a crude but safe bound
    return from_below ? Rat(0) : std::max(x, Rat(1));
}

void check_signed_permutation(const std::vector<std::vector<int>>& m, int d) {
    if (static_cast<int>(m.size()) != d)
        throw std::invalid_argument("IFS orth part: wrong row count");
    std::vector<int> col_used(d, 0);
    for (const auto& row : m) {
        if (static_cast<int>(row.size()) != d)
            throw std::invalid_argument("IFS orth part: wrong column count");
        int nonzeros = 0;
        for (int j = 0; j < d; ++j) {
            if (row[j] == 0) continue;
            if (row[j] != 1 && row[j] != -1)
                throw std::invalid_argument("IFS orth part: entries must be in {-1,0,1}");
            ++nonzeros;
            ++col_used[j];
        }
        if (nonzeros != 1)
            throw std::invalid_argument("IFS orth part: not a signed permutation");
    }
    for (int j = 0; j < d; ++j)
        if (col_used[j] != 1)
            throw std::invalid_argument("IFS orth part: not a signed permutation");
}

VecD apply_map_d(const IFSMapSpec& f, const VecD& x) {
    int d = static_cast<int>(x.size());
    double r = to_double(f.ratio);
    VecD y(d);
    if (f.orth.empty()) {
        for (int i = 0; i < d; ++i) y[i] = r * x[i] + to_double(f.translation[i]);
        return y;
    }
    for (int i = 0; i < d; ++i) {
        double acc = 0;
        for (int j = 0; j < d; ++j)
            if (f.orth[i][j] != 0) acc = f.orth[i][j] > 0 ? x[j] : -x[j];
        y[i] = r * acc + to_double(f.translation[i]);
    }
    return y;
}

// Box image is again a box because the orth part is a signed permutation.
BoxQ apply_map_box(const IFSMapSpec& f, const BoxQ& box) {
    int d = static_cast<int>(box.lo.size());
    BoxQ out{VecQ(d), VecQ(d)};
    for (int i = 0; i < d; ++i) {
        int j = i, s = 1;
        if (!f.orth.empty()) {
            for (int k = 0; k < d; ++k)
                if (f.orth[i][k] != 0) { j = k; s = f.orth[i][k]; break; }
        }
        Rat a = f.ratio * (s > 0 ? box.lo[j] : Rat(-box.hi[j])) + f.translation[i];
        Rat b = f.ratio * (s > 0 ? box.hi[j] : Rat(-box.lo[j])) + f.translation[i];
        out.lo[i] = a;
        out.hi[i] = b;
    }
    return out;
}

// Word maps composed left-to-right (outermost symbol first), so that the
// cylinder of a child word is a subset of its parent's cylinder -- the
// property the refinement recursion prunes by.
IFSMapSpec compose_maps(const IFSMapSpec& outer, const IFSMapSpec& inner) {
    IFSMapSpec out;
    out.ratio = outer.ratio * inner.ratio;
    int d = static_cast<int>(outer.translation.size());
    // translation: outer.ratio * O_outer * inner.translation + outer.translation
    out.translation.resize(d);
    for (int i = 0; i < d; ++i) {
        Rat acc;
        if (outer.orth.empty()) acc = inner.translation[i];
        else {
            acc = 0;
            for (int j = 0; j < d; ++j)
                if (outer.orth[i][j] != 0)
                    acc = outer.orth[i][j] > 0 ? inner.translation[j] : Rat(-inner.translation[j]);
        }
        out.translation[i] = outer.ratio * acc + outer.translation[i];
    }
    if (outer.orth.empty()) out.orth = inner.orth;
    else if (inner.orth.empty()) out.orth = outer.orth;
    else {
        out.orth.assign(d, std::vector<int>(d, 0));
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < d; ++k)
                if (outer.orth[i][k] != 0)
                    for (int j = 0; j < d; ++j)
                        out.orth[i][j] += outer.orth[i][k] * inner.orth[k][j];
    }
    return out;
}

IFSMapSpec identity_map(int d) {
    IFSMapSpec f;
    f.ratio = 1;
    f.translation.assign(d, Rat(0));
    return f;
}

uint64_t fnv_mix(uint64_t h, const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) { h ^= p[i]; h *= 0x100000001b3ull; }
    return h;
}

uint64_t ball_seed(const BallQ& ball, const std::string& salt) {
    uint64_t h = 0xcbf29ce484222325ull;
    h = fnv_mix(h, salt.data(), salt.size());
    int nm = ball.norm == Norm::sup ? 1 : 0;
    h = fnv_mix(h, &nm, sizeof nm);
    double r = to_double(ball.radius);
    h = fnv_mix(h, &r, sizeof r);
    for (const auto& c : ball.center) {
        double x = to_double(c);
        h = fnv_mix(h, &x, sizeof x);
    }
    return h;
}

BallD ball_to_double(const BallQ& b) {
    return BallD(to_double_vec(b.center), to_double(b.radius), b.norm);
}

uint64_t slab_seed(const HyperplaneQ& plane, const Rat& thickness, const BallQ& ball,
                   const std::string& salt) {
    uint64_t h = ball_seed(ball, salt);
    for (const auto& c : plane.normal) {
        double x = to_double(c);
        h = fnv_mix(h, &x, sizeof x);
    }
    double off = to_double(plane.offset), th = to_double(thickness);
    h = fnv_mix(h, &off, sizeof off);
    h = fnv_mix(h, &th, sizeof th);
    return h;
}

} // namespace

// ----------------------------------------------------------- IFS boxes, flags

BoxQ ifs_invariant_box(const IFSSpec& spec) {
    int d = static_cast<int>(spec.maps.at(0).translation.size());
    if (!spec.hull_lo.empty()) {
        // Caller supplied an exact hull: verify invariance and use it as-is.
        if (static_cast<int>(spec.hull_lo.size()) != d || spec.hull_lo.size() != spec.hull_hi.size())
            throw std::invalid_argument("ifs_invariant_box: hull has wrong dimension");
        BoxQ cand{spec.hull_lo, spec.hull_hi};
        for (const auto& f : spec.maps) {
            BoxQ img = apply_map_box(f, cand);
            for (int i = 0; i < d; ++i)
                if (img.lo[i] < cand.lo[i] || img.hi[i] > cand.hi[i])
                    throw std::invalid_argument("ifs_invariant_box: supplied hull is not invariant");
        }
        return cand;
    }
    // Iterate the box map in floating point to locate the attractor, then pad
    // and verify invariance exactly; expand until verification succeeds.
    VecD cur_lo(d, -1.0), cur_hi(d, 1.0);
    for (int it = 0; it < 400; ++it) {
        VecD nlo(d, 1e300), nhi(d, -1e300);
        for (const auto& f : spec.maps) {
            BoxQ img = apply_map_box(f, BoxQ{rat_vec_from_double(cur_lo), rat_vec_from_double(cur_hi)});
            for (int i = 0; i < d; ++i) {
                nlo[i] = std::min(nlo[i], to_double(img.lo[i]));
                nhi[i] = std::max(nhi[i], to_double(img.hi[i]));
            }
        }
        cur_lo = nlo;
        cur_hi = nhi;
    }
    const VecD &lo = cur_lo, &hi = cur_hi;

    for (int attempt = 0; attempt < 60; ++attempt) {
        double pad = std::ldexp(1.0, attempt - 20);  // 2^(attempt-20)
        BoxQ cand{VecQ(d), VecQ(d)};
        for (int i = 0; i < d; ++i) {
            cand.lo[i] = rat_from_double(lo[i] - pad);
            cand.hi[i] = rat_from_double(hi[i] + pad);
        }
        bool ok = true;
        for (const auto& f : spec.maps) {
            BoxQ img = apply_map_box(f, cand);
            for (int i = 0; i < d && ok; ++i)
                if (img.lo[i] < cand.lo[i] || img.hi[i] > cand.hi[i]) ok = false;
            if (!ok) break;
        }
        if (ok) return cand;
    }
    throw std::runtime_error("ifs_invariant_box: failed to certify an invariant box");
}

bool ifs_strong_separation(const IFSSpec& spec) {
    // Conservative certificate: disjointness of the first-level box images.
    BoxQ box = ifs_invariant_box(spec);
    std::vector<BoxQ> pieces;
    for (const auto& f : spec.maps) pieces.push_back(apply_map_box(f, box));
    for (size_t i = 0; i < pieces.size(); ++i)
        for (size_t j = i + 1; j < pieces.size(); ++j)
            if (!boxes_disjoint(pieces[i], pieces[j])) return false;
    return true;
}

IFSSpec cantor_ifs() {
    IFSSpec s;
    s.maps = {IFSMapSpec{Rat(1, 3), {Rat(0)}, {}}, IFSMapSpec{Rat(1, 3), {Rat(2, 3)}, {}}};
    s.weights = {Rat(1, 2), Rat(1, 2)};
    s.hull_lo = {Rat(0)};
    s.hull_hi = {Rat(1)};
    return s;
}

// ------------------------------------------------------------------ Farey etc.

Rat farey_point(int n) {
    if (n < 1) throw std::invalid_argument("farey_point: 1-based index");
    std::vector<Rat> order = {Rat(0), Rat(1)};
    std::vector<Rat> sorted = {Rat(0), Rat(1)};
    while (static_cast<int>(order.size()) < n) {
        std::vector<Rat> next_sorted;
        next_sorted.reserve(sorted.size() * 2 - 1);
        for (size_t i = 0; i + 1 < sorted.size(); ++i) {
            Rat med(num(sorted[i]) + num(sorted[i + 1]), den(sorted[i]) + den(sorted[i + 1]));
            next_sorted.push_back(sorted[i]);
            next_sorted.push_back(med);
            order.push_back(med);
        }
        next_sorted.push_back(sorted.back());
        sorted = std::move(next_sorted);
    }
    return order[n - 1];
}

std::vector<SpikeInfo> counterexample_spikes(int n_max) {
    if (n_max < 1) throw std::invalid_argument("counterexample_spikes: n_max must be >= 1");
    if (n_max > 20)
        throw std::invalid_argument("counterexample_spikes: bump width 2^-(2^n) exceeds the "
                                    "big-rational budget for n_max > 20");
    std::vector<SpikeInfo> out;
    for (int n = 1; n <= n_max; ++n) {
        BigInt two_pow_n = BigInt(1) << n;              // 2^n
        unsigned shift = static_cast<unsigned>(two_pow_n.convert_to<unsigned long>());
        BigInt b = BigInt(1) << shift;                  // 2^(2^n)
        SpikeInfo s;
        s.center = farey_point(n);
        s.half_width = Rat(1, b);
        s.height = Rat(b, BigInt(1) << n);              // a_n * b_n = 2^(2^n - n)
        out.push_back(std::move(s));
    }
    return out;
}

// ------------------------------------------------------------ Measure classes

bool Measure::is_probability() const {
    MassBracket t = total_mass();
    if (t.exact) return t.lo == 1;
    return t.lo <= 1 && 1 <= t.hi;
}

MassBracket Measure::mass_mc(const BallQ& ball, const Rat& tol) const {
    double tol_d = std::max(to_double(tol), 1e-9);
    long needed = static_cast<long>(std::ceil(9.0 / (4.0 * tol_d * tol_d)));
    long n = std::clamp(needed, 1000L, 200000L);
    Rng rng(ball_seed(ball, support_descriptor()));
    BallD bd = ball_to_double(ball);
    long hits = 0;
    for (long i = 0; i < n; ++i)
        if (ball_contains(bd, sample(rng))) ++hits;
    double p = static_cast<double>(hits) / static_cast<double>(n);
    double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n)) + 1.0 / static_cast<double>(n);
    MassBracket out;
    out.lo = rat_from_double(std::max(0.0, p - 3.0 * sigma));
    out.hi = rat_from_double(std::min(1.0, p + 3.0 * sigma));
    out.exact = false;
    out.flagged = n < needed;
    return out;
}

MassBracket Measure::slab_mass(const HyperplaneQ& plane, const Rat& thickness,
                               const BallQ& ball, const Rat& tol) const {
    if (static_cast<int>(plane.normal.size()) != dim() ||
        static_cast<int>(ball.center.size()) != dim())
        throw std::invalid_argument("slab_mass: dimension mismatch");
    if (thickness < 0) throw std::invalid_argument("slab_mass: negative thickness");
    double tol_d = std::max(to_double(tol), 1e-9);
    long needed = static_cast<long>(std::ceil(9.0 / (4.0 * tol_d * tol_d)));
    long n = std::clamp(needed, 1000L, 200000L);
    Rng rng(slab_seed(plane, thickness, ball, support_descriptor()));
    BallD bd = ball_to_double(ball);
    HyperplaneD pd(to_double_vec(plane.normal), to_double(plane.offset));
    double eps = to_double(thickness);
    long hits = 0;
    for (long i = 0; i < n; ++i) {
        VecD x = sample(rng);
        if (ball_contains(bd, x) && in_thickening(x, pd, eps, false)) ++hits;
    }
    double p = static_cast<double>(hits) / static_cast<double>(n);
    double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n)) + 1.0 / static_cast<double>(n);
    MassBracket t = total_mass();
    MassBracket out;
    out.lo = rat_from_double(std::max(0.0, p - 3.0 * sigma)) * t.lo;
    out.hi = rat_from_double(std::min(1.0, p + 3.0 * sigma)) * t.hi;
    out.exact = false;
    out.flagged = n < needed || t.flagged;
    return out;
}

namespace {

class LebesgueMeasure final : public Measure {
public:
    explicit LebesgueMeasure(MeasureSpec spec, int d) : spec_(std::move(spec)), d_(d) {
        if (d < 1) throw std::invalid_argument("lebesgue_cube: dimension must be >= 1");
    }
    int dim() const override { return d_; }
    bool exact() const override { return true; }
    std::string support_descriptor() const override {
        return "lebesgue on [0,1]^" + std::to_string(d_);
    }
    const MeasureSpec& spec() const override { return spec_; }
    VecD sample(Rng& rng) const override { return rng.unit_cube_point(d_); }

    MassBracket ball_mass(const BallQ& ball, const Rat& tol) const override {
        if (static_cast<int>(ball.center.size()) != d_)
            throw std::invalid_argument("ball_mass: dimension mismatch");
        if (ball.norm == Norm::euclidean && d_ > 1) return mass_mc(ball, tol);
        Rat vol = 1;
        for (int i = 0; i < d_; ++i) {
            Rat lo = ball.center[i] - ball.radius, hi = ball.center[i] + ball.radius;
            if (lo < 0) lo = 0;
            if (hi > 1) hi = 1;
            if (hi <= lo) return MassBracket{0, 0, true, false};
            vol *= hi - lo;
        }
        return MassBracket{vol, vol, true, false};
    }

    MassBracket slab_mass(const HyperplaneQ& plane, const Rat& thickness,
                          const BallQ& ball, const Rat& tol) const override {
        if (static_cast<int>(plane.normal.size()) != d_ ||
            static_cast<int>(ball.center.size()) != d_)
            throw std::invalid_argument("slab_mass: dimension mismatch");
        if (thickness < 0) throw std::invalid_argument("slab_mass: negative thickness");
        if (d_ == 1) {
            // On the line the slab is just the interval of half-length
            // `thickness` around the plane's single point.
            Rat c = plane.offset / plane.normal[0];
            Rat lo = std::max({Rat(c - thickness), Rat(ball.center[0] - ball.radius), Rat(0)});
            Rat hi = std::min({Rat(c + thickness), Rat(ball.center[0] + ball.radius), Rat(1)});
            Rat len = hi > lo ? hi - lo : Rat(0);
            return MassBracket{len, len, true, false};
        }
        if (d_ == 2 && ball.norm == Norm::sup) {
            // The ball clipped to the unit square is a rectangle; cutting it by
            // the two slab faces leaves a convex polygon whose area is the
            // mass.  The face offset thickness * ||normal||_2 is irrational in
            // general, so sandwich it between rationals and report the bracket.
            Rat x0 = std::max(Rat(ball.center[0] - ball.radius), Rat(0));
            Rat x1 = std::min(Rat(ball.center[0] + ball.radius), Rat(1));
            Rat y0 = std::max(Rat(ball.center[1] - ball.radius), Rat(0));
            Rat y1 = std::min(Rat(ball.center[1] + ball.radius), Rat(1));
            if (x1 <= x0 || y1 <= y0) return MassBracket{0, 0, true, false};
            std::vector<VecQ> rect = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
            Rat t2 = thickness * thickness * norm_sq(plane.normal);
            Rat m_lo = rat_sqrt_bound(t2, true), m_hi = rat_sqrt_bound(t2, false);
            VecQ neg = vscale(Rat(-1), plane.normal);
            auto slab_area = [&](const Rat& m) {
                auto poly = clip_halfplane(rect, plane.normal, Rat(plane.offset + m));
                poly = clip_halfplane(poly, neg, Rat(m - plane.offset));
                return polygon_area(poly);
            };
            Rat a_lo = slab_area(m_lo), a_hi = slab_area(m_hi);
            return MassBracket{a_lo, a_hi, m_lo == m_hi, false};
        }
        return Measure::slab_mass(plane, thickness, ball, tol);
    }

    MassBracket total_mass() const override { return MassBracket{1, 1, true, false}; }

private:
    MeasureSpec spec_;
    int d_;
};

class IFSMeasure final : public Measure {
public:
    IFSMeasure(MeasureSpec spec, IFSSpec ifs) : spec_(std::move(spec)), ifs_(std::move(ifs)) {
        if (ifs_.maps.empty()) throw std::invalid_argument("self_similar_oracle: no maps");
        d_ = static_cast<int>(ifs_.maps[0].translation.size());
        Rat wsum = 0;
        for (const auto& w : ifs_.weights) {
            if (w <= 0) throw std::invalid_argument("self_similar_oracle: weights must be positive");
            wsum += w;
        }
        if (ifs_.weights.size() != ifs_.maps.size() || wsum != 1)
            throw std::invalid_argument("self_similar_oracle: weights must match maps and sum to 1");
        for (const auto& f : ifs_.maps) {
            if (static_cast<int>(f.translation.size()) != d_)
                throw std::invalid_argument("self_similar_oracle: mixed dimensions");
            if (!(f.ratio > 0 && f.ratio < 1))
                throw std::invalid_argument("self_similar_oracle: contraction ratio must be in (0,1)");
            if (!f.orth.empty()) check_signed_permutation(f.orth, d_);
        }
        box_ = ifs_invariant_box(ifs_);
        separated_ = ifs_strong_separation(ifs_);
        for (const auto& w : ifs_.weights) cum_w_.push_back((cum_w_.empty() ? 0.0 : cum_w_.back()) + to_double(w));
    }

    int dim() const override { return d_; }
    bool exact() const override { return true; }
    std::string support_descriptor() const override {
        std::ostringstream os;
        os << "self-similar, " << ifs_.maps.size() << " maps, dim " << d_
           << (separated_ ? ", strongly separated" : "");
        return os.str();
    }
    const MeasureSpec& spec() const override { return spec_; }
    bool strongly_separated() const { return separated_; }
    const BoxQ& invariant_box() const { return box_; }

    VecD sample(Rng& rng) const override {
        VecD x(d_);
        for (int i = 0; i < d_; ++i) x[i] = 0.5 * (to_double(box_.lo[i]) + to_double(box_.hi[i]));
        // Compose 64 random maps head-first; the error is r_max^64 * diam.
        std::vector<int> word(64);
        for (int k = 0; k < 64; ++k) word[k] = pick(rng);
        for (int k = 63; k >= 0; --k) x = apply_map_d(ifs_.maps[word[k]], x);
        return x;
    }

    MassBracket ball_mass(const BallQ& ball, const Rat& tol) const override {
        if (static_cast<int>(ball.center.size()) != d_)
            throw std::invalid_argument("ball_mass: dimension mismatch");
        MassBracket out{0, 0, true, false};
        Rat straddle = 0;
        refine(ball, tol, Rat(1), identity_map(d_), 0, out.lo, straddle, out.flagged);
        out.hi = out.lo + straddle;
        out.exact = straddle == 0;
        return out;
    }

    MassBracket slab_mass(const HyperplaneQ& plane, const Rat& thickness,
                          const BallQ& ball, const Rat& tol) const override {
        if (static_cast<int>(plane.normal.size()) != d_ ||
            static_cast<int>(ball.center.size()) != d_)
            throw std::invalid_argument("slab_mass: dimension mismatch");
        if (thickness < 0) throw std::invalid_argument("slab_mass: negative thickness");
        MassBracket out{0, 0, true, false};
        Rat straddle = 0;
        refine_slab(plane, thickness, ball, tol, Rat(1), identity_map(d_), 0,
                    out.lo, straddle, out.flagged);
        out.hi = out.lo + straddle;
        out.exact = straddle == 0;
        return out;
    }

    MassBracket total_mass() const override { return MassBracket{1, 1, true, false}; }

private:
    int pick(Rng& rng) const {
        double u = rng.unif();
        for (size_t i = 0; i < cum_w_.size(); ++i)
            if (u < cum_w_[i]) return static_cast<int>(i);
        return static_cast<int>(cum_w_.size()) - 1;
    }

    // word_map is the composition for the whole word so far; appending a
    // symbol composes on the right, keeping child cylinders inside the parent.
    void refine(const BallQ& ball, const Rat& tol, const Rat& w, const IFSMapSpec& word_map,
                int depth, Rat& lo, Rat& straddle, bool& flagged) const {
        BoxQ box = apply_map_box(word_map, box_);
        if (box_disjoint_ball(box, ball)) return;
        if (box_inside_ball(box, ball)) { lo += w; return; }
        if (w <= tol) { straddle += w; return; }
        if (depth >= 64) { straddle += w; flagged = true; return; }
        for (size_t i = 0; i < ifs_.maps.size(); ++i)
            refine(ball, tol, Rat(w * ifs_.weights[i]), compose_maps(word_map, ifs_.maps[i]),
                   depth + 1, lo, straddle, flagged);
    }

    // Same cylinder pruning, cut simultaneously by the ball and the slab; a
    // cylinder counts toward the certain lower bound only when its box lies
    // inside both regions.
    void refine_slab(const HyperplaneQ& plane, const Rat& thickness, const BallQ& ball,
                     const Rat& tol, const Rat& w, const IFSMapSpec& word_map, int depth,
                     Rat& lo, Rat& straddle, bool& flagged) const {
        BoxQ box = apply_map_box(word_map, box_);
        RegionCut cb = box_vs_ball(box, ball);
        if (cb == RegionCut::disjoint) return;
        RegionCut cs = box_vs_slab(box, plane, thickness);
        if (cs == RegionCut::disjoint) return;
        if (cb == RegionCut::inside && cs == RegionCut::inside) { lo += w; return; }
        if (w <= tol) { straddle += w; return; }
        if (depth >= 64) { straddle += w; flagged = true; return; }
        for (size_t i = 0; i < ifs_.maps.size(); ++i)
            refine_slab(plane, thickness, ball, tol, Rat(w * ifs_.weights[i]),
                        compose_maps(word_map, ifs_.maps[i]), depth + 1, lo, straddle, flagged);
    }

    MeasureSpec spec_;
    IFSSpec ifs_;
    int d_ = 0;
    BoxQ box_;
    bool separated_ = false;
    std::vector<double> cum_w_;
};

class ProductMeasure final : public Measure {
public:
    ProductMeasure(MeasureSpec spec, MeasurePtr a, MeasurePtr b)
        : spec_(std::move(spec)), a_(std::move(a)), b_(std::move(b)) {
        if (!a_->is_probability() || !b_->is_probability())
            throw std::invalid_argument("product_oracle: factors must be probability-normalized");
    }
    int dim() const override { return a_->dim() + b_->dim(); }
    bool exact() const override { return a_->exact() && b_->exact(); }
    std::string support_descriptor() const override {
        return "(" + a_->support_descriptor() + ") x (" + b_->support_descriptor() + ")";
    }
    const MeasureSpec& spec() const override { return spec_; }

    VecD sample(Rng& rng) const override {
        VecD x = a_->sample(rng), y = b_->sample(rng);
        x.insert(x.end(), y.begin(), y.end());
        return x;
    }
    VecQ sample_exact(Rng& rng) const override {
        VecQ x = a_->sample_exact(rng), y = b_->sample_exact(rng);
        x.insert(x.end(), y.begin(), y.end());
        return x;
    }

    MassBracket ball_mass(const BallQ& ball, const Rat& tol) const override {
        if (static_cast<int>(ball.center.size()) != dim())
            throw std::invalid_argument("ball_mass: dimension mismatch");
        if (ball.norm == Norm::euclidean && dim() > 1) return mass_mc(ball, tol);
        int da = a_->dim();
        BallQ ba(VecQ(ball.center.begin(), ball.center.begin() + da), ball.radius, Norm::sup);
        BallQ bb(VecQ(ball.center.begin() + da, ball.center.end()), ball.radius, Norm::sup);
        Rat half_tol = tol / 2;
        MassBracket ma = a_->ball_mass(ba, half_tol), mb = b_->ball_mass(bb, half_tol);
        return MassBracket{Rat(ma.lo * mb.lo), Rat(ma.hi * mb.hi),
                           ma.exact && mb.exact, ma.flagged || mb.flagged};
    }
    MassBracket total_mass() const override { return MassBracket{1, 1, true, false}; }

private:
    MeasureSpec spec_;
    MeasurePtr a_, b_;
};

class PushforwardMeasure final : public Measure {
public:
    PushforwardMeasure(MeasureSpec spec, MeasurePtr base, std::vector<Poly> comps)
        : spec_(std::move(spec)), base_(std::move(base)), comps_(std::move(comps)) {
        if (comps_.empty()) throw std::invalid_argument("pushforward_oracle: no components");
        for (const auto& p : comps_)
            if (p.arity != base_->dim())
                throw std::invalid_argument("pushforward_oracle: component arity must equal base dimension");
    }
    int dim() const override { return static_cast<int>(comps_.size()); }
    bool exact() const override { return false; }
    std::string support_descriptor() const override {
        return "polynomial image of (" + base_->support_descriptor() + ")";
    }
    const MeasureSpec& spec() const override { return spec_; }

    VecD sample(Rng& rng) const override {
        VecD x = base_->sample(rng);
        VecD y(comps_.size());
        for (size_t i = 0; i < comps_.size(); ++i) y[i] = comps_[i].eval(x);
        return y;
    }
    VecQ sample_exact(Rng& rng) const override {
        VecQ x = base_->sample_exact(rng);
        VecQ y(comps_.size());
        for (size_t i = 0; i < comps_.size(); ++i) y[i] = comps_[i].eval(x);
        return y;
    }

    MassBracket ball_mass(const BallQ& ball, const Rat& tol) const override {
        if (static_cast<int>(ball.center.size()) != dim())
            throw std::invalid_argument("ball_mass: dimension mismatch");
        return mass_mc(ball, tol);
    }
    MassBracket total_mass() const override { return MassBracket{1, 1, true, false}; }

private:
    MeasureSpec spec_;
    MeasurePtr base_;
    std::vector<Poly> comps_;
};

class CounterexampleMeasure final : public Measure {
public:
    CounterexampleMeasure(MeasureSpec spec, int n_max) : spec_(std::move(spec)) {
        spikes_ = counterexample_spikes(n_max);
        total_ = 1;  // base Lebesgue mass of [0,1]
        for (const auto& s : spikes_) {
            Rat lo = s.center - s.half_width, hi = s.center + s.half_width;
            if (lo < 0) lo = 0;
            if (hi > 1) hi = 1;
            Rat len = hi > lo ? hi - lo : Rat(0);
            clipped_.push_back({lo, hi});
            comp_mass_.push_back(Rat(s.height * len));
            total_ += comp_mass_.back();
        }
        cum_.push_back(1.0);
        for (const auto& m : comp_mass_) cum_.push_back(cum_.back() + to_double(m));
    }

    int dim() const override { return 1; }
    bool exact() const override { return true; }
    std::string support_descriptor() const override {
        return "lebesgue on [0,1] plus " + std::to_string(spikes_.size()) + " density bumps";
    }
    const MeasureSpec& spec() const override { return spec_; }
    const std::vector<SpikeInfo>& spikes() const { return spikes_; }

    VecD sample(Rng& rng) const override {
        // Mixture sampler: base measure or one of the bumps, by exact weights.
        double u = rng.unif() * cum_.back();
        size_t k = 0;
        while (k + 1 < cum_.size() && u >= cum_[k]) ++k;
        if (k == 0) return {rng.unif()};
        const auto& [lo, hi] = clipped_[k - 1];
        double a = to_double(lo), b = to_double(hi);
        if (b <= a) return {to_double(spikes_[k - 1].center)};  // width underflows doubles
        return {rng.unif(a, b)};
    }

    MassBracket ball_mass(const BallQ& ball, const Rat&) const override {
        if (ball.center.size() != 1) throw std::invalid_argument("ball_mass: dimension mismatch");
        Rat lo = ball.center[0] - ball.radius, hi = ball.center[0] + ball.radius;
        if (lo < 0) lo = 0;
        if (hi > 1) hi = 1;
        if (hi <= lo) return MassBracket{0, 0, true, false};
        Rat mass = hi - lo;
        for (size_t i = 0; i < spikes_.size(); ++i) {
            Rat a = std::max(lo, clipped_[i].first), b = std::min(hi, clipped_[i].second);
            if (b > a) mass += spikes_[i].height * (b - a);
        }
        return MassBracket{mass, mass, true, false};
    }

    MassBracket slab_mass(const HyperplaneQ& plane, const Rat& thickness,
                          const BallQ& ball, const Rat&) const override {
        if (plane.normal.size() != 1 || ball.center.size() != 1)
            throw std::invalid_argument("slab_mass: dimension mismatch");
        if (thickness < 0) throw std::invalid_argument("slab_mass: negative thickness");
        // slab /\ ball is an interval, so reuse the exact density integral
        Rat c = plane.offset / plane.normal[0];
        Rat lo = std::max(Rat(c - thickness), Rat(ball.center[0] - ball.radius));
        Rat hi = std::min(Rat(c + thickness), Rat(ball.center[0] + ball.radius));
        if (lo < 0) lo = 0;
        if (hi > 1) hi = 1;
        if (hi <= lo) return MassBracket{0, 0, true, false};
        Rat mass = hi - lo;
        for (size_t i = 0; i < spikes_.size(); ++i) {
            Rat a = std::max(lo, clipped_[i].first), b = std::min(hi, clipped_[i].second);
            if (b > a) mass += spikes_[i].height * (b - a);
        }
        return MassBracket{mass, mass, true, false};
    }

    MassBracket total_mass() const override { return MassBracket{total_, total_, true, false}; }

private:
    MeasureSpec spec_;
    std::vector<SpikeInfo> spikes_;
    std::vector<std::pair<Rat, Rat>> clipped_;
    std::vector<Rat> comp_mass_;
    std::vector<double> cum_;
    Rat total_;
};

class PointMassMeasure final : public Measure {
public:
    PointMassMeasure(MeasureSpec spec, VecQ point, Rat weight)
        : spec_(std::move(spec)), point_(std::move(point)), weight_(std::move(weight)) {
        if (point_.empty()) throw std::invalid_argument("point_mass_oracle: empty point");
        if (weight_ <= 0) throw std::invalid_argument("point_mass_oracle: weight must be positive");
    }
    int dim() const override { return static_cast<int>(point_.size()); }
    bool exact() const override { return true; }
    std::string support_descriptor() const override {
        return "point mass, dim " + std::to_string(point_.size());
    }
    const MeasureSpec& spec() const override { return spec_; }
    VecD sample(Rng&) const override { return to_double_vec(point_); }
    VecQ sample_exact(Rng&) const override { return point_; }

    MassBracket ball_mass(const BallQ& ball, const Rat&) const override {
        if (ball.center.size() != point_.size())
            throw std::invalid_argument("ball_mass: dimension mismatch");
        Rat m = ball_contains(ball, point_) ? weight_ : Rat(0);
        return MassBracket{m, m, true, false};
    }

    MassBracket slab_mass(const HyperplaneQ& plane, const Rat& thickness,
                          const BallQ& ball, const Rat&) const override {
        if (plane.normal.size() != point_.size() || ball.center.size() != point_.size())
            throw std::invalid_argument("slab_mass: dimension mismatch");
        if (thickness < 0) throw std::invalid_argument("slab_mass: negative thickness");
        bool in = ball_contains(ball, point_) && in_thickening(point_, plane, thickness, false);
        Rat m = in ? weight_ : Rat(0);
        return MassBracket{m, m, true, false};
    }

    MassBracket total_mass() const override { return MassBracket{weight_, weight_, true, false}; }

private:
    MeasureSpec spec_;
    VecQ point_;
    Rat weight_;
};

} // namespace

// --------------------------------------------------------------- construction

MeasurePtr make_measure(const MeasureSpec& spec) {
    return std::visit(
        [&](const auto& s) -> MeasurePtr {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, LebesgueSpec>) {
                return std::make_shared<LebesgueMeasure>(spec, s.d);
            } else if constexpr (std::is_same_v<T, IFSSpec>) {
                return std::make_shared<IFSMeasure>(spec, s);
            } else if constexpr (std::is_same_v<T, ProductSpec>) {
                return std::make_shared<ProductMeasure>(spec, make_measure(*s.a), make_measure(*s.b));
            } else if constexpr (std::is_same_v<T, PushforwardSpec>) {
                return std::make_shared<PushforwardMeasure>(spec, make_measure(*s.base), s.components);
            } else if constexpr (std::is_same_v<T, CounterexampleSpec>) {
                return std::make_shared<CounterexampleMeasure>(spec, s.n_max);
            } else {
                static_assert(std::is_same_v<T, PointMassSpec>);
                return std::make_shared<PointMassMeasure>(spec, s.point, s.weight);
            }
        },
        spec.v);
}

MeasurePtr lebesgue_cube(int d) { return make_measure(MeasureSpec{LebesgueSpec{d}}); }
MeasurePtr self_similar_oracle(const IFSSpec& spec) { return make_measure(MeasureSpec{spec}); }

MeasurePtr product_oracle(const MeasurePtr& a, const MeasurePtr& b) {
    ProductSpec p{std::make_shared<MeasureSpec>(a->spec()), std::make_shared<MeasureSpec>(b->spec())};
    return make_measure(MeasureSpec{p});
}

MeasurePtr pushforward_oracle(const MeasurePtr& base, const std::vector<Poly>& components) {
    PushforwardSpec p{std::make_shared<MeasureSpec>(base->spec()), components};
    return make_measure(MeasureSpec{p});
}

MeasurePtr counterexample_oracle(const CounterexampleSpec& spec) {
    return make_measure(MeasureSpec{spec});
}

MeasurePtr point_mass_oracle(const VecQ& point, const Rat& weight) {
    return make_measure(MeasureSpec{PointMassSpec{point, weight}});
}

// ------------------------------------------------------- support sup-distance

std::optional<double> sup_dist_on_support(const Measure& mu, const HyperplaneD& plane,
                                          const BallD& ball, int n, Rng& rng,
                                          int rejection_budget) {
    if (n < 1) throw std::invalid_argument("sup_dist_on_support: need n >= 1");
    if (rejection_budget <= 0) rejection_budget = 1000 * n;
    int accepted = 0, tried = 0;
    double best = -1.0;
    while (accepted < n && tried < rejection_budget) {
        VecD x = mu.sample(rng);
        ++tried;
        if (!ball_contains(ball, x)) continue;
        ++accepted;
        best = std::max(best, dist_to_hyperplane(x, plane));
    }
    if (accepted == 0) return std::nullopt;
    return best;
}

// -------------------------------------------------------------- serialization

namespace {

json rat_to_json(const Rat& r) { return rat_str(r); }
Rat rat_from_json(const json& j) { return rat_parse(j.get<std::string>()); }

json vecq_to_json(const VecQ& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(rat_to_json(x));
    return a;
}
VecQ vecq_from_json(const json& j) {
    VecQ v;
    for (const auto& x : j) v.push_back(rat_from_json(x));
    return v;
}

json spec_to_json(const MeasureSpec& spec);

json poly_to_json(const Poly& p) {
    json terms = json::array();
    for (const auto& [c, e] : p.terms) terms.push_back({{"coeff", rat_to_json(c)}, {"exps", e}});
    return {{"arity", p.arity}, {"terms", terms}};
}
Poly poly_from_json(const json& j) {
    Poly p;
    p.arity = j.at("arity").get<int>();
    for (const auto& t : j.at("terms"))
        p.terms.push_back({rat_from_json(t.at("coeff")), t.at("exps").get<std::vector<int>>()});
    return p;
}

json spec_to_json(const MeasureSpec& spec) {
    return std::visit(
        [](const auto& s) -> json {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, LebesgueSpec>) {
                return {{"kind", "lebesgue"}, {"dim", s.d}};
            } else if constexpr (std::is_same_v<T, IFSSpec>) {
                json maps = json::array();
                for (const auto& f : s.maps)
                    maps.push_back({{"ratio", rat_to_json(f.ratio)},
                                    {"translation", vecq_to_json(f.translation)},
                                    {"orth", f.orth}});
                json w = json::array();
                for (const auto& x : s.weights) w.push_back(rat_to_json(x));
                json out = {{"kind", "self_similar"}, {"maps", maps}, {"weights", w}};
                if (!s.hull_lo.empty()) {
                    out["hull_lo"] = vecq_to_json(s.hull_lo);
                    out["hull_hi"] = vecq_to_json(s.hull_hi);
                }
                return out;
            } else if constexpr (std::is_same_v<T, ProductSpec>) {
                return {{"kind", "product"}, {"a", spec_to_json(*s.a)}, {"b", spec_to_json(*s.b)}};
            } else if constexpr (std::is_same_v<T, PushforwardSpec>) {
                json comps = json::array();
                for (const auto& p : s.components) comps.push_back(poly_to_json(p));
                return {{"kind", "pushforward"}, {"base", spec_to_json(*s.base)}, {"components", comps}};
            } else if constexpr (std::is_same_v<T, CounterexampleSpec>) {
                return {{"kind", "density_spikes"}, {"n_max", s.n_max}};
            } else {
                static_assert(std::is_same_v<T, PointMassSpec>);
                return {{"kind", "point_mass"}, {"point", vecq_to_json(s.point)},
                        {"weight", rat_to_json(s.weight)}};
            }
        },
        spec.v);
}

MeasureSpec spec_from_json(const json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "lebesgue") return MeasureSpec{LebesgueSpec{j.at("dim").get<int>()}};
    if (kind == "self_similar") {
        IFSSpec s;
        for (const auto& m : j.at("maps"))
            s.maps.push_back(IFSMapSpec{rat_from_json(m.at("ratio")),
                                        vecq_from_json(m.at("translation")),
                                        m.at("orth").get<std::vector<std::vector<int>>>()});
        for (const auto& w : j.at("weights")) s.weights.push_back(rat_from_json(w));
        if (j.contains("hull_lo")) {
            s.hull_lo = vecq_from_json(j.at("hull_lo"));
            s.hull_hi = vecq_from_json(j.at("hull_hi"));
        }
        return MeasureSpec{s};
    }
    if (kind == "product") {
        ProductSpec p;
        p.a = std::make_shared<MeasureSpec>(spec_from_json(j.at("a")));
        p.b = std::make_shared<MeasureSpec>(spec_from_json(j.at("b")));
        return MeasureSpec{p};
    }
    if (kind == "pushforward") {
        PushforwardSpec p;
        p.base = std::make_shared<MeasureSpec>(spec_from_json(j.at("base")));
        for (const auto& c : j.at("components")) p.components.push_back(poly_from_json(c));
        return MeasureSpec{p};
    }
    if (kind == "density_spikes")
        return MeasureSpec{CounterexampleSpec{j.at("n_max").get<int>()}};
    if (kind == "point_mass")
        return MeasureSpec{PointMassSpec{vecq_from_json(j.at("point")), rat_from_json(j.at("weight"))}};
    throw std::invalid_argument("measure_spec_from_json: unknown kind '" + kind + "'");
}

} // namespace

std::string measure_spec_to_json(const MeasureSpec& spec) { return spec_to_json(spec).dump(); }

MeasureSpec measure_spec_from_json(const std::string& text) {
    return spec_from_json(json::parse(text));
}

} // namespace qdlab
