#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdlab {

using BigInt = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

using VecQ = std::vector<Rat>;
using VecD = std::vector<double>;
using MatQ = std::vector<VecQ>;   // row-major
using MatD = std::vector<VecD>;

inline double to_double(const Rat& x) { return x.convert_to<double>(); }

// Exact: every finite double is a dyadic rational.
inline Rat rat_from_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("rat_from_double: non-finite input");
    return Rat(x);
}

inline BigInt num(const Rat& x) { return boost::multiprecision::numerator(x); }
inline BigInt den(const Rat& x) { return boost::multiprecision::denominator(x); }

inline Rat rat_abs(const Rat& x) { return x < 0 ? Rat(-x) : x; }

// log of a positive integer too large for a plain double conversion
inline double log_bigint(const BigInt& n) {
    if (n <= 0) throw std::domain_error("log_bigint: need a positive integer");
    unsigned bits = boost::multiprecision::msb(n);
    if (bits < 900) return std::log(n.convert_to<double>());
    BigInt top = n >> (bits - 64);
    return std::log(top.convert_to<double>()) + double(bits - 64) * std::log(2.0);
}

inline double log_rat(const Rat& x) {
    if (x <= 0) throw std::domain_error("log_rat: need a positive value");
    return log_bigint(num(x)) - log_bigint(den(x));
}

inline Rat rat_pow(const Rat& base, long e) {
    if (e == 0) return Rat(1);
    if (base == 0) {
        if (e < 0) throw std::domain_error("rat_pow: negative power of zero");
        return Rat(0);
    }
    bool inv = e < 0;
    unsigned long k = inv ? static_cast<unsigned long>(-e) : static_cast<unsigned long>(e);
    BigInt n = boost::multiprecision::pow(num(base), static_cast<unsigned>(k));
    BigInt d = boost::multiprecision::pow(den(base), static_cast<unsigned>(k));
    return inv ? Rat(d, n) : Rat(n, d);
}

inline BigInt floor_rat(const Rat& x) {
    BigInt q = num(x) / den(x);
    if (x < 0 && q * den(x) != num(x)) --q;
    return q;
}

inline BigInt ceil_rat(const Rat& x) {
    BigInt q = num(x) / den(x);
    if (x > 0 && q * den(x) != num(x)) ++q;
    return q;
}

// floor(sqrt(n)) for n >= 0.
inline BigInt isqrt(const BigInt& n) {
    if (n < 0) throw std::domain_error("isqrt: negative input");
    return boost::multiprecision::sqrt(n);
}

// floor(n^(1/k)) for n >= 0, k >= 1, by binary search on the bit length.
inline BigInt kth_root_floor(const BigInt& n, int k) {
    if (n < 0 || k < 1) throw std::domain_error("kth_root_floor: bad input");
    if (n == 0 || k == 1) return n;
    unsigned bits = boost::multiprecision::msb(n) + 1;
    BigInt lo = 0, hi = BigInt(1) << (bits / k + 1);
    while (lo < hi) {
        BigInt mid = (lo + hi + 1) / 2;
        if (boost::multiprecision::pow(mid, static_cast<unsigned>(k)) <= n) lo = mid;
        else hi = mid - 1;
    }
    return lo;
}

// Largest integer m with m <= x + sqrt(r) (x rational, r >= 0 rational):
// seeded from doubles, then fixed up by exact comparisons.
inline BigInt floor_plus_sqrt(const Rat& x, const Rat& r) {
    if (r < 0) throw std::domain_error("floor_plus_sqrt: negative radicand");
    double guess = to_double(x) + std::sqrt(std::max(0.0, to_double(r)));
    BigInt m(static_cast<long long>(std::floor(guess)));
    auto le = [&](const BigInt& n) {  // n <= x + sqrt(r) ?
        Rat d = Rat(n) - x;
        if (d <= 0) return true;
        return d * d <= r;
    };
    while (le(m + 1)) ++m;
    while (!le(m)) --m;
    return m;
}

// Smallest integer m with m >= x - sqrt(r).
inline BigInt ceil_minus_sqrt(const Rat& x, const Rat& r) {
    return -floor_plus_sqrt(-x, r);
}

inline VecD to_double_vec(const VecQ& v) {
    VecD out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = to_double(v[i]);
    return out;
}

inline VecQ rat_vec_from_double(const VecD& v) {
    VecQ out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = rat_from_double(v[i]);
    return out;
}

inline std::string rat_str(const Rat& x) { return x.str(); }

// Parses "p/q", integer, or decimal strings like "-3.25" exactly.
inline Rat rat_parse(const std::string& s) {
    if (s.empty()) throw std::invalid_argument("rat_parse: empty string");
    auto slash = s.find('/');
    if (slash != std::string::npos)
        return Rat(BigInt(s.substr(0, slash)), BigInt(s.substr(slash + 1)));
    auto dot = s.find('.');
    if (dot == std::string::npos) return Rat(BigInt(s));
    std::string head = s.substr(0, dot), tail = s.substr(dot + 1);
    if (tail.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("rat_parse: bad decimal '" + s + "'");
    bool neg = !head.empty() && head[0] == '-';
    if (head == "-" || head.empty()) head = "0";
    BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(tail.size()));
    BigInt whole = BigInt(head);
    BigInt frac = tail.empty() ? BigInt(0) : BigInt(tail);
    BigInt total = boost::multiprecision::abs(whole) * scale + frac;
    if (neg || whole < 0) total = -total;
    return Rat(total, scale);
}

} // namespace qdlab
