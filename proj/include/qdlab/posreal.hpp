#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qdlab/rational.hpp"

namespace qdlab {

// Exact positive real of the form prod_i base_i^(exp_i) with positive
// rational bases and rational exponents: the closure of Q_{>0} under
// multiplication, division, and rational powers (so all the covolumes, flow
// multipliers, and root-mean bounds the flag layer trades in). Comparisons
// are exact: clear the exponent denominators and compare integer powers.
class PosReal {
public:
    PosReal() = default;                  // the number 1
    explicit PosReal(const Rat& value);   // value > 0 required
    explicit PosReal(long value) : PosReal(Rat(value)) {}

    // base^exponent for base > 0
    static PosReal pow_of(const Rat& base, const Rat& exponent);

    PosReal& operator*=(const PosReal& o);
    PosReal& operator/=(const PosReal& o);
    friend PosReal operator*(PosReal a, const PosReal& b) { return a *= b; }
    friend PosReal operator/(PosReal a, const PosReal& b) { return a /= b; }

    PosReal pow(const Rat& e) const;
    PosReal sqrt() const { return pow(Rat(1, 2)); }

    // three-way exact comparison; throws overflow_error if clearing the
    // exponent denominators needs an integer power beyond the guard
    int cmp(const PosReal& o) const;

    bool operator==(const PosReal& o) const { return cmp(o) == 0; }
    bool operator!=(const PosReal& o) const { return cmp(o) != 0; }
    bool operator<(const PosReal& o) const { return cmp(o) < 0; }
    bool operator<=(const PosReal& o) const { return cmp(o) <= 0; }
    bool operator>(const PosReal& o) const { return cmp(o) > 0; }
    bool operator>=(const PosReal& o) const { return cmp(o) >= 0; }

    bool is_one() const;

    // exact rational value when no root extraction is pending (all exponents
    // integral); nullopt otherwise
    std::optional<Rat> as_rat() const;

    double log_value() const;
    double to_double() const;

    // factored rendering for logs and test failure messages
    std::string str() const;

    const std::vector<std::pair<Rat, Rat>>& factors() const { return factors_; }

private:
    void normalize();

    std::vector<std::pair<Rat, Rat>> factors_;  // (base, exponent), base-sorted
};

inline const PosReal& pos_min(const PosReal& a, const PosReal& b) { return b < a ? b : a; }
inline const PosReal& pos_max(const PosReal& a, const PosReal& b) { return a < b ? b : a; }

} // namespace qdlab
