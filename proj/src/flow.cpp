#include "qdlab/flow.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "qdlab/posreal.hpp"

namespace qdlab {

namespace {

void check_dims(int m, int n) {
    if (m < 1 || n < 1) throw std::invalid_argument("flow: need m >= 1 and n >= 1");
}

// Trend fit over the final half of a trajectory's (s, delta) pairs.
TrendFit tail_trend(const std::vector<TrajectoryPoint>& traj) {
    size_t start = traj.size() / 2;
    std::vector<double> xs, ys;
    for (size_t i = start; i < traj.size(); ++i) {
        xs.push_back(traj[i].s);
        ys.push_back(traj[i].delta);
    }
    return fit_trend(xs, ys);
}

}  // namespace

// Flat y (no variance) reports slope 0 with the fit quality suppressed to
// zero, so a constant trajectory never looks like linear growth.
TrendFit fit_trend(const std::vector<double>& x, const std::vector<double>& y) {
    TrendFit f;
    size_t k = x.size();
    if (k < 3) return f;
    double mx = 0, my = 0;
    for (size_t i = 0; i < k; ++i) { mx += x[i]; my += y[i]; }
    mx /= double(k);
    my /= double(k);
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < k; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 1e-18) return f;
    f.slope = sxy / sxx;
    f.r2 = (sxy * sxy) / (sxx * syy);
    return f;
}

bool trend_divergent(const TrendFit& f) { return f.slope > 0.2 && f.r2 > 0.8; }

double RationalFlowPoint::sup_log() const { return log_rat(sup_ratio()); }

Rat RationalFlowPoint::sup_ratio() const {
    Rat best(1);
    for (const Rat& ri : r) {
        if (!(ri > 0)) throw std::invalid_argument("flow point: multipliers must be positive");
        Rat v = ri >= 1 ? ri : Rat(1) / ri;
        if (v > best) best = v;
    }
    return best;
}

FlowChain s0_ray_chain(int m, int n, int steps) {
    check_dims(m, n);
    if (steps < 1) throw std::invalid_argument("s0_ray_chain: need steps >= 1");
    FlowChain chain;
    chain.m = m;
    chain.n = n;
    for (int k = 1; k <= steps; ++k) {
        RationalFlowPoint p;
        p.r.assign(size_t(m), rat_pow(Rat(2), long(k) * n));
        p.r.insert(p.r.end(), size_t(n), rat_pow(Rat(2), -long(k) * m));
        chain.points.push_back(std::move(p));
        chain.s.push_back(double(k) * m * n * std::log(2.0));
    }
    return chain;
}

FlowChain cone_ray_chain(int m, int n, const std::vector<int>& direction, int steps) {
    check_dims(m, n);
    if (steps < 1) throw std::invalid_argument("cone_ray_chain: need steps >= 1");
    if (int(direction.size()) != m + n)
        throw std::invalid_argument("cone_ray_chain: direction has wrong dimension");
    long sum = 0;
    int amp = 0;
    for (int i = 0; i < m + n; ++i) {
        int di = direction[size_t(i)];
        if (i < m ? di < 0 : di > 0)
            throw std::invalid_argument("cone_ray_chain: direction leaves the expanding cone");
        sum += di;
        amp = std::max(amp, std::abs(di));
    }
    if (sum != 0) throw std::invalid_argument("cone_ray_chain: direction entries must sum to 0");
    if (amp == 0) throw std::invalid_argument("cone_ray_chain: zero direction");
    FlowChain chain;
    chain.m = m;
    chain.n = n;
    for (int k = 1; k <= steps; ++k) {
        RationalFlowPoint p;
        for (int i = 0; i < m + n; ++i)
            p.r.push_back(rat_pow(Rat(2), long(k) * direction[size_t(i)]));
        chain.points.push_back(std::move(p));
        chain.s.push_back(double(k) * amp * std::log(2.0));
    }
    return chain;
}

std::vector<std::vector<int>> cone_direction_net(int m, int n, int count) {
    check_dims(m, n);
    if (count < 1) throw std::invalid_argument("cone_direction_net: need count >= 1");
    std::vector<std::vector<int>> net;

    // All ways to write total as an ordered sum of parts nonnegative entries.
    auto compositions = [](int total, int parts) {
        std::vector<std::vector<int>> out;
        std::vector<int> cur(size_t(parts), 0);
        auto rec = [&](auto&& self, int idx, int left) -> void {
            if (idx == parts - 1) {
                cur[size_t(idx)] = left;
                out.push_back(cur);
                return;
            }
            for (int v = left; v >= 0; --v) {  // lexicographically decreasing = stable order
                cur[size_t(idx)] = v;
                self(self, idx + 1, left - v);
            }
        };
        rec(rec, 0, total);
        return out;
    };

    for (int total = 1; total <= 60 && int(net.size()) < count; ++total) {
        for (const auto& up : compositions(total, m)) {
            for (const auto& down : compositions(total, n)) {
                std::vector<int> dir;
                int g = 0;
                for (int v : up) { dir.push_back(v); g = std::gcd(g, v); }
                for (int v : down) { dir.push_back(-v); g = std::gcd(g, v); }
                if (g != 1) continue;  // keep primitive directions only
                net.push_back(std::move(dir));
                if (int(net.size()) == count) return net;
            }
        }
    }
    return net;
}

MatQ unipotent(const MatQ& a) {
    if (a.empty() || a[0].empty()) throw std::invalid_argument("unipotent: empty matrix");
    size_t m = a.size(), n = a[0].size();
    for (const auto& row : a)
        if (row.size() != n) throw std::invalid_argument("unipotent: ragged matrix");
    MatQ u(m + n, VecQ(m + n, Rat(0)));
    for (size_t i = 0; i < m + n; ++i) u[i][i] = Rat(1);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) u[i][m + j] = a[i][j];
    return u;
}

MatQ flow_matrix(const RationalFlowPoint& t) {
    if (t.r.empty()) throw std::invalid_argument("flow_matrix: empty multiplier vector");
    Rat prod(1);
    for (const Rat& ri : t.r) {
        if (!(ri > 0)) throw std::invalid_argument("flow_matrix: multipliers must be positive");
        prod *= ri;
    }
    if (prod != 1) throw std::invalid_argument("flow_matrix: multipliers must have product 1");
    MatQ g(t.r.size(), VecQ(t.r.size(), Rat(0)));
    for (size_t i = 0; i < t.r.size(); ++i) g[i][i] = t.r[i];
    return g;
}

MatQ flow_lattice_rows(const MatQ& a, const RationalFlowPoint& t) {
    if (a.empty() || a[0].empty()) throw std::invalid_argument("flow_lattice_rows: empty matrix");
    size_t m = a.size(), n = a[0].size();
    flow_matrix(t);  // validates the multipliers
    if (t.r.size() != m + n)
        throw std::invalid_argument("flow_lattice_rows: multiplier dimension mismatch");
    MatQ rows(m + n, VecQ(m + n, Rat(0)));
    for (size_t i = 0; i < m; ++i) rows[i][i] = t.r[i];
    for (size_t j = 0; j < n; ++j) {
        for (size_t i = 0; i < m; ++i) rows[m + j][i] = t.r[i] * a[i][j];
        rows[m + j][m + j] = t.r[m + j];
    }
    return rows;
}

double lattice_delta(const MatQ& basis_rows) {
    return -0.5 * log_rat(length_sq(shortest_vector(basis_rows)));
}

DynamicalEstimate omega_dynamical(const MatQ& a, const FlowChain& chain) {
    if (chain.points.empty()) throw std::invalid_argument("omega_dynamical: empty chain");
    DynamicalEstimate est;
    for (size_t k = 0; k < chain.points.size(); ++k) {
        TrajectoryPoint tp;
        tp.step = int(k) + 1;
        tp.s = chain.s[k];
        if (!(tp.s > 0)) throw std::invalid_argument("omega_dynamical: s values must be positive");
        try {
            tp.shortest = shortest_vector(flow_lattice_rows(a, chain.points[k]));
        } catch (const std::runtime_error&) {
            ++est.skipped;  // enumeration budget blown at this point; keep going
            continue;
        }
        tp.length_sq = length_sq(tp.shortest);
        tp.delta = -0.5 * log_rat(tp.length_sq);
        tp.value = tp.delta / tp.s;
        est.trajectory.push_back(std::move(tp));
    }
    size_t sz = est.trajectory.size();
    if (sz == 0) return est;
    for (size_t i = 2 * sz / 3; i < sz; ++i)
        est.value = std::max(est.value, est.trajectory[i].value);
    TrendFit fit = tail_trend(est.trajectory);
    est.growth_rate = fit.slope;
    est.divergent = trend_divergent(fit);
    return est;
}

double xi(double c, int m, int n) {
    check_dims(m, n);
    if (!(c < 1.0 / n)) throw std::domain_error("xi: argument at or beyond the pole 1/N");
    return (double(n) / double(m)) * (1 + m * c) / (1 - n * c);
}

CorrespondenceReport correspondence_check(const MatQ& a, const BigInt& q_max,
                                          const FlowChain& chain) {
    CorrespondenceReport rep;
    if (a.size() == 1 && a[0].size() == 1) {
        // 1 x 1 targets: the convergent ladder reaches q_max instantly and its
        // records are exactly the sup-norm improvement records. Vector error
        // |x - p/q| and matrix error |qx - p| differ by the factor q, so every
        // exponent (and the reported value) shifts down by exactly 1.
        rep.direct = omega_vector({a[0][0]}, q_max, VectorMethod::cf);
        for (ApproxRecord& rec : rep.direct.records) {
            rec.error = rec.error * Rat(rec.q[0]);
            if (rec.height > 1) rec.exponent -= 1;
        }
        if (!rep.direct.infinite) rep.direct.value -= 1;
    } else {
        rep.direct = omega_matrix(a, q_max);
    }
    rep.dynamical = omega_dynamical(a, chain);
    int n = chain.n;
    double inf = std::numeric_limits<double>::infinity();
    rep.both_divergent = rep.direct.infinite && rep.dynamical.divergent;
    if (rep.both_divergent) {
        rep.xi_of_dynamical = inf;
        rep.discrepancy = 0;
    } else if (rep.direct.infinite || rep.dynamical.divergent ||
               !(rep.dynamical.value < 1.0 / n)) {
        // One-sided degeneracy at this height: report an infinite discrepancy
        // rather than pretending the finite side is comparable.
        rep.xi_of_dynamical = inf;
        rep.discrepancy = inf;
    } else {
        rep.xi_of_dynamical = xi(rep.dynamical.value, chain.m, n);
        rep.discrepancy = std::fabs(rep.direct.value - rep.xi_of_dynamical);
    }
    return rep;
}

ConeScore vwma_score(const MatQ& a, int steps, int directions) {
    if (a.empty() || a[0].empty()) throw std::invalid_argument("vwma_score: empty matrix");
    int m = int(a.size()), n = int(a[0].size());
    if (steps < 3) throw std::invalid_argument("vwma_score: need steps >= 3");
    if (directions <= 0) directions = 10 * (m + n);
    ConeScore score;
    score.per_magnitude.assign(size_t(steps), -std::numeric_limits<double>::infinity());
    for (const auto& dir : cone_direction_net(m, n, directions)) {
        // Sample by sup-norm shells: a direction of amplitude A is scanned at
        // magnitudes k with k*A <= steps, so every direction is compared at
        // the same ||t|| scale instead of racing steep directions to depths
        // the flat ones never see.
        int amp = 0;
        for (int v : dir) amp = std::max(amp, std::abs(v));
        int depth = steps / amp;
        if (depth < 1) continue;
        DynamicalEstimate est = omega_dynamical(a, cone_ray_chain(m, n, dir, depth));
        score.divergent = score.divergent || est.divergent;
        for (const auto& tp : est.trajectory) {
            double& slot = score.per_magnitude[size_t(tp.step) * size_t(amp) - 1];
            slot = std::max(slot, tp.value);
        }
        ++score.directions_used;
    }
    if (score.directions_used == 0) throw std::invalid_argument("vwma_score: empty direction net");
    score.value = -std::numeric_limits<double>::infinity();
    for (size_t k = 2 * size_t(steps) / 3; k < size_t(steps); ++k)
        score.value = std::max(score.value, score.per_magnitude[k]);
    return score;
}

bool in_W_kappa_t(const MatQ& a, const Rat& kappa, const RationalFlowPoint& t,
                  const Rat& gamma) {
    if (!(kappa > 0 && kappa <= 1))
        throw std::invalid_argument("in_W_kappa_t: need 0 < kappa <= 1");
    if (gamma < 0) throw std::invalid_argument("in_W_kappa_t: need gamma >= 0");
    Rat len_sq = length_sq(shortest_vector(flow_lattice_rows(a, t)));
    // Compare length^2 against (e^{-gamma ||t||} kappa)^2 exactly: the sup norm
    // of t exponentiates to the rational sup_ratio, so the threshold is a
    // rational power of a rational.
    PosReal threshold_sq =
        PosReal::pow_of(t.sup_ratio(), Rat(-2) * gamma) * PosReal(kappa * kappa);
    return PosReal(len_sq).cmp(threshold_sq) <= 0;
}

}  // namespace qdlab
