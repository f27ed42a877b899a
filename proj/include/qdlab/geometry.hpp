#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qdlab/rational.hpp"

namespace qdlab {

enum class Norm { euclidean, sup };

// ---- vector helpers, shared by the float and exact tracks ----

template <class S>
S dot(const std::vector<S>& a, const std::vector<S>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    S s{};
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

template <class S>
std::vector<S> vsub(const std::vector<S>& a, const std::vector<S>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vsub: dimension mismatch");
    std::vector<S> r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

template <class S>
std::vector<S> vadd(const std::vector<S>& a, const std::vector<S>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vadd: dimension mismatch");
    std::vector<S> r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

template <class S>
std::vector<S> vscale(const S& c, const std::vector<S>& a) {
    std::vector<S> r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
    return r;
}

template <class S>
S norm_sq(const std::vector<S>& a) { return dot(a, a); }

inline double norm_euclid(const VecD& a) { return std::sqrt(norm_sq(a)); }

template <class S>
S norm_sup(const std::vector<S>& a) {
    S m{};
    for (const auto& x : a) { S ax = x < S{} ? S(-x) : x; if (ax > m) m = ax; }
    return m;
}

inline double dist(const VecD& a, const VecD& b, Norm n) {
    return n == Norm::euclidean ? norm_euclid(vsub(a, b)) : norm_sup(vsub(a, b));
}

// ---- geometric types; scalar parameter selects the arithmetic track ----

template <class S>
struct BallT {
    std::vector<S> center;
    S radius;
    Norm norm = Norm::euclidean;

    BallT() = default;
    BallT(std::vector<S> c, S r, Norm n = Norm::euclidean)
        : center(std::move(c)), radius(std::move(r)), norm(n) {
        if (!(radius > S{})) throw std::invalid_argument("Ball: radius must be positive");
    }
    int dim() const { return static_cast<int>(center.size()); }
    BallT scaled(const S& c) const { return BallT(center, S(radius * c), norm); }
};

using BallD = BallT<double>;
using BallQ = BallT<Rat>;

inline bool ball_contains(const BallD& b, const VecD& y) {
    return dist(b.center, y, b.norm) <= b.radius;
}

inline bool ball_contains(const BallQ& b, const VecQ& y) {
    VecQ d = vsub(y, b.center);
    if (b.norm == Norm::sup) return norm_sup(d) <= b.radius;
    return norm_sq(d) <= b.radius * b.radius;
}

// Affine hyperplane {y : normal . y = offset}. Canonical form scales so the
// first nonzero normal coordinate is positive (and, on the exact track, equal
// to 1), so equality testing is well-defined.
template <class S>
struct HyperplaneT {
    std::vector<S> normal;
    S offset{};

    HyperplaneT() = default;
    HyperplaneT(std::vector<S> n, S off) : normal(std::move(n)), offset(std::move(off)) {
        bool all_zero = true;
        for (const auto& x : normal) if (!(x == S{})) { all_zero = false; break; }
        if (all_zero) throw std::invalid_argument("Hyperplane: zero normal");
    }
    int dim() const { return static_cast<int>(normal.size()); }

    HyperplaneT canonical() const {
        HyperplaneT h = *this;
        for (const auto& x : h.normal) {
            if (x == S{}) continue;
            if constexpr (std::is_same_v<S, Rat>) {
                S inv = S(1) / x;
                h.normal = vscale(inv, h.normal);
                h.offset = h.offset * inv;
            } else {
                if (x < S{}) { h.normal = vscale(S(-1), h.normal); h.offset = -h.offset; }
            }
            break;
        }
        return h;
    }
};

using HyperplaneD = HyperplaneT<double>;
using HyperplaneQ = HyperplaneT<Rat>;

// Hyperplane through a point with a given normal.
template <class S>
HyperplaneT<S> hyperplane_through(const std::vector<S>& point, const std::vector<S>& normal) {
    return HyperplaneT<S>(normal, dot(normal, point));
}

// Euclidean point-to-plane distance |n.y - off| / ||n||.
inline double dist_to_hyperplane(const VecD& y, const HyperplaneD& L) {
    if (y.size() != L.normal.size())
        throw std::invalid_argument("dist_to_hyperplane: dimension mismatch");
    return std::fabs(dot(y, L.normal) - L.offset) / norm_euclid(L.normal);
}

// Exact squared distance, for rational-track comparisons.
inline Rat dist2_to_hyperplane(const VecQ& y, const HyperplaneQ& L) {
    if (y.size() != L.normal.size())
        throw std::invalid_argument("dist_to_hyperplane: dimension mismatch");
    Rat r = dot(y, L.normal) - L.offset;
    return r * r / norm_sq(L.normal);
}

inline bool in_thickening(const VecD& y, const HyperplaneD& L, double eps, bool open_flag) {
    if (eps < 0) throw std::invalid_argument("in_thickening: negative thickness");
    double d = dist_to_hyperplane(y, L);
    return open_flag ? d < eps : d <= eps;
}

inline bool in_thickening(const VecQ& y, const HyperplaneQ& L, const Rat& eps, bool open_flag) {
    if (eps < 0) throw std::invalid_argument("in_thickening: negative thickness");
    Rat d2 = dist2_to_hyperplane(y, L), e2 = eps * eps;
    return open_flag ? d2 < e2 : d2 <= e2;
}

template <class S>
struct NetT {
    std::vector<std::vector<S>> points;
    S separation{};
};

using NetD = NetT<double>;

// Greedy first-fit pass over the candidates: keeps a point iff it is at least
// rho away from everything kept so far. The result is rho-separated and
// maximal relative to the pool (every candidate lands within rho of a kept point).
inline NetD greedy_maximal_net(const std::vector<VecD>& candidates, double rho,
                               Norm norm = Norm::euclidean) {
    if (!(rho > 0)) throw std::invalid_argument("greedy_maximal_net: rho must be positive");
    NetD net;
    net.separation = rho;
    for (const auto& c : candidates) {
        bool ok = true;
        for (const auto& p : net.points)
            if (dist(c, p, norm) < rho) { ok = false; break; }
        if (ok) net.points.push_back(c);
    }
    return net;
}

// Exhaustive invariant checkers (pairwise separation, pool coverage, shrink
// disjointness, center coverage).
bool net_is_separated(const NetD& net, Norm norm = Norm::euclidean);
bool net_covers(const NetD& net, const std::vector<VecD>& candidates, Norm norm = Norm::euclidean);
bool quarter_shrinks_disjoint(const std::vector<BallD>& balls);
bool centers_covered(const std::vector<BallD>& all, const std::vector<BallD>& picked);

// Vitali-style selection: walk the balls by decreasing radius and keep one iff
// its center is not already covered by a kept ball. Kept balls then have
// pairwise disjoint quarter-radius shrinks, and every input center is covered.
template <class S>
std::vector<BallT<S>> four_r_select(const std::vector<BallT<S>>& balls) {
    if (balls.empty()) return {};
    int d = balls[0].dim();
    Norm nm = balls[0].norm;
    for (const auto& b : balls)
        if (b.dim() != d || b.norm != nm)
            throw std::invalid_argument("four_r_select: mixed dimensions or norms");

    std::vector<size_t> order(balls.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return balls[a].radius > balls[b].radius; });

    std::vector<BallT<S>> picked;
    for (size_t idx : order) {
        const auto& b = balls[idx];
        bool covered = false;
        for (const auto& s : picked)
            if (ball_contains(s, b.center)) { covered = true; break; }
        if (!covered) picked.push_back(b);
    }
    return picked;
}

} // namespace qdlab
