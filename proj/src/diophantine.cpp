#include "qdlab/diophantine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "qdlab/lattice.hpp"

namespace qdlab {

namespace {

double exponent_of(const Rat& error, const BigInt& height) {
    if (height <= 1) return 0;
    return -log_rat(error) / log_bigint(height);
}

BigInt nearest_int(const Rat& x) { return floor_rat(x + Rat(1, 2)); }

// Record list kept as the exact Pareto frontier of (height, error): an entry
// survives iff nothing of smaller-or-equal height has smaller-or-equal error.
// Sorted by height ascending, so errors are strictly decreasing. Scan order
// therefore does not matter; only the candidate set does.
class RecordBuilder {
public:
    // cheap double-precision test: can a candidate with this approximate
    // height and error possibly be non-dominated? slack covers rounding.
    bool worth_checking(double height_d, double err_d, double slack) const {
        if (recs_.empty()) return true;
        size_t lo = 0, hi = recs_.size();
        // last entry with height <= candidate height (allow a little slop)
        while (lo < hi) {
            size_t mid = (lo + hi) / 2;
            if (h_d_[mid] <= height_d * (1 + 1e-12) + 1e-12) lo = mid + 1;
            else hi = mid;
        }
        if (lo == 0) return true;
        return err_d < e_d_[lo - 1] + slack;
    }

    // exact insertion; returns false when the candidate is dominated
    bool insert(std::vector<BigInt> q, std::vector<BigInt> p, Rat error, BigInt height) {
        size_t pos = 0;
        while (pos < recs_.size() && recs_[pos].height <= height) ++pos;
        if (pos > 0 && recs_[pos - 1].error <= error) return false;
        // candidate wins below `pos`; drop everything at height >= that it dominates
        size_t k0 = pos;
        while (k0 > 0 && recs_[k0 - 1].height == height) --k0;  // equal heights sit before pos
        size_t k1 = k0;
        while (k1 < recs_.size() && recs_[k1].error >= error) ++k1;
        recs_.erase(recs_.begin() + k0, recs_.begin() + k1);
        ApproxRecord r;
        r.q = std::move(q);
        r.p = std::move(p);
        r.error = std::move(error);
        r.height = std::move(height);
        r.exponent = exponent_of(r.error, r.height);
        recs_.insert(recs_.begin() + k0, std::move(r));
        rebuild_mirror();
        return true;
    }

    std::vector<ApproxRecord> take() { return std::move(recs_); }

private:
    void rebuild_mirror() {
        h_d_.resize(recs_.size());
        e_d_.resize(recs_.size());
        for (size_t i = 0; i < recs_.size(); ++i) {
            h_d_[i] = recs_[i].height.convert_to<double>();
            e_d_[i] = to_double(recs_[i].error);
        }
    }

    std::vector<ApproxRecord> recs_;
    std::vector<double> h_d_, e_d_;
};

// reported value: max exponent over the final third of the records, no
// extrapolation; everything earlier is warm-up at heights too small to trust
double tail_max_exponent(const std::vector<ApproxRecord>& recs) {
    if (recs.empty()) return 0;
    size_t start = (2 * recs.size()) / 3;
    double v = -std::numeric_limits<double>::infinity();
    for (size_t i = start; i < recs.size(); ++i) v = std::max(v, recs[i].exponent);
    return v;
}

ExponentEstimate finish(RecordBuilder& rb, BigInt height_reached) {
    ExponentEstimate est;
    est.records = rb.take();
    est.value = tail_max_exponent(est.records);
    est.height_reached = std::move(height_reached);
    return est;
}

ExponentEstimate exact_hit(RecordBuilder& rb, std::vector<BigInt> q, std::vector<BigInt> p,
                           BigInt height) {
    ExponentEstimate est;
    est.records = rb.take();
    est.value = std::numeric_limits<double>::infinity();
    est.infinite = true;
    est.height_reached = std::move(height);
    est.exact_witness = std::make_pair(std::move(q), std::move(p));
    return est;
}

long to_long_checked(const BigInt& n, const char* what) {
    if (n > BigInt(std::numeric_limits<long>::max() / 4))
        throw std::invalid_argument(std::string(what) + ": bound too large");
    return n.convert_to<long>();
}

ExponentEstimate omega_vector_cf(const Rat& x0, const BigInt& q_max) {
    RecordBuilder rb;
    //  p_k = a_k p_{k-1} + p_{k-2},  q_k likewise; seeds (1,0) and (a_0,1)
    BigInt p_prev = 1, q_prev = 0;
    Rat y = x0;
    BigInt a = floor_rat(y);
    BigInt p_cur = a, q_cur = 1;
    BigInt reached = 1;
    for (int iter = 0; iter < 10000; ++iter) {
        Rat error = rat_abs(x0 - Rat(p_cur) / Rat(q_cur));
        if (error == 0) return exact_hit(rb, {q_cur}, {p_cur}, q_cur);
        rb.insert({q_cur}, {p_cur}, error, q_cur);
        reached = q_cur;
        Rat frac = y - Rat(a);
        if (frac == 0) break;  // rational target fully expanded
        y = Rat(1) / frac;
        a = floor_rat(y);
        BigInt p_next = a * p_cur + p_prev;
        BigInt q_next = a * q_cur + q_prev;
        if (q_next > q_max) break;
        p_prev = p_cur;
        q_prev = q_cur;
        p_cur = p_next;
        q_cur = q_next;
    }
    return finish(rb, reached);
}

ExponentEstimate omega_vector_brute(const VecQ& x, const BigInt& q_max, bool multiplicative) {
    size_t d = x.size();
    long qm = to_long_checked(q_max, "omega_vector");
    std::vector<double> xd = to_double_vec(x);
    RecordBuilder rb;
    for (long q = 1; q <= qm; ++q) {
        double qd = double(q);
        double err_d = multiplicative ? 1.0 : 0.0;
        for (size_t i = 0; i < d; ++i) {
            double t = xd[i] * qd;
            double e = std::fabs(t - std::nearbyint(t)) / qd;
            if (multiplicative) err_d *= e;
            else err_d = std::max(err_d, e);
        }
        double slack = 1e-14 * (1 + qd);
        if (!rb.worth_checking(qd, err_d, slack)) continue;
        Rat qr(q);
        std::vector<BigInt> p(d);
        Rat error = multiplicative ? Rat(1) : Rat(0);
        bool zero = false;
        for (size_t i = 0; i < d; ++i) {
            p[i] = nearest_int(x[i] * qr);
            Rat e = rat_abs(x[i] - Rat(p[i]) / qr);
            if (multiplicative) {
                if (e == 0) zero = true;
                error *= e;
            } else {
                error = std::max(error, e);
            }
        }
        if ((multiplicative && zero) || error == 0)
            return exact_hit(rb, {BigInt(q)}, std::move(p), BigInt(q));
        rb.insert({BigInt(q)}, std::move(p), std::move(error), BigInt(q));
    }
    return finish(rb, q_max);
}

ExponentEstimate omega_vector_lattice(const VecQ& x, const BigInt& q_max) {
    size_t d = x.size();
    RecordBuilder rb;
    // baseline so the record list is never empty
    {
        std::vector<BigInt> p(d);
        Rat error = 0;
        for (size_t i = 0; i < d; ++i) {
            p[i] = nearest_int(x[i]);
            error = std::max(error, rat_abs(x[i] - Rat(p[i])));
        }
        if (error == 0) return exact_hit(rb, {BigInt(1)}, std::move(p), BigInt(1));
        rb.insert({BigInt(1)}, std::move(p), std::move(error), BigInt(1));
    }
    for (BigInt t = 2; t <= q_max; t *= 2) {
        // approximation lattice at scale T: rows (1/T, x) and (0, -e_i); a short
        // vector balances q/T against the residuals q x_i - p_i
        MatQ basis(d + 1, VecQ(d + 1, Rat(0)));
        basis[0][0] = Rat(1) / Rat(t);
        for (size_t i = 0; i < d; ++i) {
            basis[0][i + 1] = x[i];
            basis[i + 1][i + 1] = -1;
        }
        VecQ v = shortest_vector(basis);
        Rat q_rat = v[0] * Rat(t);
        if (den(q_rat) != 1) throw std::logic_error("approximation lattice gave non-integer q");
        BigInt q = num(q_rat);
        if (q == 0) continue;
        if (q < 0) {
            q = -q;
            for (auto& c : v) c = -c;
        }
        if (q > q_max) continue;
        std::vector<BigInt> p(d);
        Rat error = 0;
        for (size_t i = 0; i < d; ++i) {
            Rat pi = Rat(q) * x[i] - v[i + 1];
            if (den(pi) != 1) throw std::logic_error("approximation lattice gave non-integer p");
            p[i] = num(pi);
            error = std::max(error, rat_abs(x[i] - Rat(p[i]) / Rat(q)));
        }
        if (error == 0) return exact_hit(rb, {q}, std::move(p), q);
        rb.insert({q}, std::move(p), std::move(error), q);
    }
    return finish(rb, q_max);
}

// all q in [-Q,Q]^N with first nonzero coordinate positive, lexicographic;
// body returns false to stop early
template <typename F>
void for_each_halfspace_q(size_t n, long qm, F&& body) {
    std::vector<long> q(n, -qm);
    while (true) {
        long lead = 0;
        for (size_t i = 0; i < n; ++i)
            if (q[i] != 0) {
                lead = q[i];
                break;
            }
        if (lead > 0 && !body(q)) return;
        size_t i = n;
        while (i > 0) {
            --i;
            if (q[i] < qm) {
                ++q[i];
                break;
            }
            q[i] = -qm;
            if (i == 0) return;
        }
    }
}

ExponentEstimate omega_matrix_impl(const MatQ& a, const BigInt& q_max, bool multiplicative) {
    if (a.empty() || a[0].empty()) throw std::invalid_argument("omega_matrix: empty matrix");
    size_t m = a.size(), n = a[0].size();
    for (const auto& row : a)
        if (row.size() != n) throw std::invalid_argument("omega_matrix: ragged matrix");
    long qm = to_long_checked(q_max, "omega_matrix");
    double count = std::pow(2.0 * double(qm) + 1.0, double(n));
    if (count > 5e8) throw std::invalid_argument("omega_matrix: enumeration budget exceeded");
    MatD ad(m, std::vector<double>(n));
    double amax = 0;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
            ad[i][j] = to_double(a[i][j]);
            amax = std::max(amax, std::fabs(ad[i][j]));
        }
    RecordBuilder rb;
    std::optional<ExponentEstimate> hit;
    for_each_halfspace_q(n, qm, [&](const std::vector<long>& q) -> bool {
        long sup = 0, l1 = 0;
        for (long c : q) {
            sup = std::max(sup, std::labs(c));
            l1 += std::labs(c);
        }
        double height_d = 1, err_d = multiplicative ? 1.0 : 0.0;
        if (multiplicative) {
            for (long c : q) height_d *= double(std::max(std::labs(c), 1L));
        } else {
            height_d = double(sup);
        }
        for (size_t i = 0; i < m; ++i) {
            double t = 0;
            for (size_t j = 0; j < n; ++j) t += ad[i][j] * double(q[j]);
            double e = std::fabs(t - std::nearbyint(t));
            if (multiplicative) err_d *= e;
            else err_d = std::max(err_d, e);
        }
        double slack = 1e-14 * (1 + amax) * (1 + double(l1));
        if (!rb.worth_checking(height_d, err_d, slack)) return true;
        // exact confirmation
        std::vector<BigInt> qz(n), p(m);
        BigInt height = 1;
        for (size_t j = 0; j < n; ++j) qz[j] = q[j];
        if (multiplicative) {
            for (long c : q) height *= BigInt(std::max(std::labs(c), 1L));
        } else {
            height = sup;
        }
        Rat error = multiplicative ? Rat(1) : Rat(0);
        bool zero_factor = false;
        for (size_t i = 0; i < m; ++i) {
            Rat t = 0;
            for (size_t j = 0; j < n; ++j) t += a[i][j] * Rat(qz[j]);
            p[i] = nearest_int(t);
            Rat e = rat_abs(t - Rat(p[i]));
            if (multiplicative) {
                if (e == 0) zero_factor = true;
                error *= e;
            } else {
                error = std::max(error, e);
            }
        }
        if ((multiplicative && zero_factor) || error == 0) {
            hit = exact_hit(rb, std::move(qz), std::move(p), std::move(height));
            return false;
        }
        rb.insert(std::move(qz), std::move(p), std::move(error), std::move(height));
        return true;
    });
    if (hit) return *std::move(hit);
    return finish(rb, q_max);
}

}  // namespace

ExponentEstimate omega_vector(const VecQ& x, const BigInt& q_max, VectorMethod method) {
    if (x.empty()) throw std::invalid_argument("omega_vector: empty target");
    if (q_max < 1) throw std::invalid_argument("omega_vector: q_max must be positive");
    switch (method) {
        case VectorMethod::cf:
            if (x.size() != 1)
                throw std::invalid_argument("omega_vector: cf method needs a scalar target");
            return omega_vector_cf(x[0], q_max);
        case VectorMethod::brute:
            if (x.size() > 3 || q_max > 100000)
                throw std::invalid_argument("omega_vector: brute limited to d <= 3, q_max <= 1e5");
            return omega_vector_brute(x, q_max, false);
        case VectorMethod::lattice:
            if (x.size() > 7) throw std::invalid_argument("omega_vector: lattice limited to d <= 7");
            return omega_vector_lattice(x, q_max);
    }
    throw std::logic_error("omega_vector: unknown method");
}

ExponentEstimate omega_mult_vector(const VecQ& x, const BigInt& q_max) {
    if (x.empty()) throw std::invalid_argument("omega_mult_vector: empty target");
    if (q_max < 1 || q_max > 1000000)
        throw std::invalid_argument("omega_mult_vector: need 1 <= q_max <= 1e6");
    if (x.size() > 3) throw std::invalid_argument("omega_mult_vector: limited to d <= 3");
    return omega_vector_brute(x, q_max, true);
}

ExponentEstimate omega_matrix(const MatQ& a, const BigInt& q_max) {
    return omega_matrix_impl(a, q_max, false);
}

ExponentEstimate omega_mult_matrix(const MatQ& a, const BigInt& q_max) {
    return omega_matrix_impl(a, q_max, true);
}

BigInt simplex_q_bound(int d, const Rat& rho, const std::optional<Rat>& eps_override) {
    if (d < 1) throw std::invalid_argument("simplex_q_bound: need d >= 1");
    if (rho <= 0) throw std::invalid_argument("simplex_q_bound: need rho > 0");
    // largest q with q^(d+1) <= eps^(d+1) rho^(-d)
    Rat eps_power;
    if (eps_override) {
        if (*eps_override <= 0) throw std::invalid_argument("simplex_q_bound: need eps > 0");
        eps_power = rat_pow(*eps_override, d + 1);
    } else {
        BigInt fact = 1;
        for (int k = 2; k <= d + 1; ++k) fact *= k;
        eps_power = Rat(1, (BigInt(1) << (2 * d + 1)) * fact);
    }
    Rat bound = eps_power / rat_pow(rho, d);
    if (bound < 1) return 0;
    BigInt hi = kth_root_floor(floor_rat(bound) + 1, unsigned(d + 1)) + 1;
    BigInt lo = 0;
    while (lo < hi) {  // invariant: lo feasible, hi+? ... find last feasible in (lo, hi]
        BigInt mid = (lo + hi + 1) / 2;
        Rat pw = Rat(1);
        for (int k = 0; k < d + 1; ++k) pw *= Rat(mid);
        if (pw <= bound) lo = mid;
        else hi = mid - 1;
    }
    return lo;
}

SimplexHullResult simplex_hyperplane(const VecQ& y, const Rat& rho,
                                     std::optional<Rat> eps_override) {
    if (y.empty()) throw std::invalid_argument("simplex_hyperplane: empty center");
    int d = int(y.size());
    SimplexHullResult res;
    res.q_bound = simplex_q_bound(d, rho, eps_override);
    Rat rho2 = rho * rho;
    std::set<VecQ> found;
    long budget = 2000000;
    long qm = to_long_checked(res.q_bound, "simplex_hyperplane");
    for (long q = 1; q <= qm; ++q) {
        Rat qr(q);
        std::vector<BigInt> lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            lo[i] = ceil_rat(qr * (y[i] - rho));
            hi[i] = floor_rat(qr * (y[i] + rho));
        }
        std::vector<BigInt> p = lo;
        bool live = true;
        for (int i = 0; i < d; ++i) live = live && lo[i] <= hi[i];
        while (live) {
            if (--budget < 0)
                throw std::runtime_error("simplex_hyperplane: enumeration budget exceeded");
            Rat dist2 = 0;
            VecQ pt(d);
            for (int i = 0; i < d; ++i) {
                pt[i] = Rat(p[i]) / qr;
                Rat diff = y[i] - pt[i];
                dist2 += diff * diff;
            }
            if (dist2 <= rho2) found.insert(std::move(pt));
            int i = d - 1;
            for (; i >= 0; --i) {
                if (p[i] < hi[i]) {
                    ++p[i];
                    break;
                }
                p[i] = lo[i];
            }
            if (i < 0) live = false;
        }
    }
    res.points.assign(found.begin(), found.end());
    if (res.points.empty()) {
        res.status = HullStatus::empty;
        return res;
    }
    if (res.points.size() == 1) {
        res.status = HullStatus::single_point;
        return res;
    }
    // exact affine rank of the differences, tracking which rows carry pivots
    MatQ diffs(res.points.size() - 1, VecQ(d));
    for (size_t j = 1; j < res.points.size(); ++j)
        for (int i = 0; i < d; ++i) diffs[j - 1][i] = res.points[j][i] - res.points[0][i];
    MatQ work = diffs;
    std::vector<size_t> orig(work.size());
    for (size_t i = 0; i < orig.size(); ++i) orig[i] = i;
    std::vector<size_t> pivot_rows;  // indices into diffs / points[1..]
    size_t r = 0;
    for (int c = 0; c < d && r < work.size(); ++c) {
        size_t piv = r;
        while (piv < work.size() && work[piv][c] == 0) ++piv;
        if (piv == work.size()) continue;
        std::swap(work[piv], work[r]);
        std::swap(orig[piv], orig[r]);
        pivot_rows.push_back(orig[r]);
        for (size_t i = r + 1; i < work.size(); ++i) {
            if (work[i][c] == 0) continue;
            Rat f = work[i][c] / work[r][c];
            for (int k = c; k < d; ++k) work[i][k] -= f * work[r][k];
        }
        ++r;
    }
    if (int(r) <= d - 1) {
        res.status = HullStatus::hull;
        MatZ kernel = rational_kernel_primitive(diffs);
        VecQ normal(d);
        for (int i = 0; i < d; ++i) normal[i] = Rat(kernel.at(0)[i]);
        res.hull = hyperplane_through(res.points[0], normal).canonical();
    } else {
        res.status = HullStatus::violation;
        res.violating_points.push_back(res.points[0]);
        for (size_t row : pivot_rows) res.violating_points.push_back(res.points[row + 1]);
    }
    return res;
}

} // namespace qdlab
