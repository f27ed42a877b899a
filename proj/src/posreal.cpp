#include "qdlab/posreal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qdlab {

namespace {
constexpr long kExponentGuard = 1 << 20;
}

PosReal::PosReal(const Rat& value) {
    if (value <= 0) throw std::invalid_argument("PosReal: value must be positive");
    if (value != 1) factors_.push_back({value, Rat(1)});
}

PosReal PosReal::pow_of(const Rat& base, const Rat& exponent) {
    if (base <= 0) throw std::invalid_argument("PosReal: base must be positive");
    PosReal r;
    if (base != 1 && exponent != 0) r.factors_.push_back({base, exponent});
    return r;
}

void PosReal::normalize() {
    std::sort(factors_.begin(), factors_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<Rat, Rat>> merged;
    for (auto& f : factors_) {
        if (!merged.empty() && merged.back().first == f.first) {
            merged.back().second += f.second;
            if (merged.back().second == 0) merged.pop_back();
        } else if (f.first != 1 && f.second != 0) {
            merged.push_back(std::move(f));
        }
    }
    factors_ = std::move(merged);
}

PosReal& PosReal::operator*=(const PosReal& o) {
    factors_.insert(factors_.end(), o.factors_.begin(), o.factors_.end());
    normalize();
    return *this;
}

PosReal& PosReal::operator/=(const PosReal& o) {
    for (const auto& f : o.factors_) factors_.push_back({f.first, -f.second});
    normalize();
    return *this;
}

PosReal PosReal::pow(const Rat& e) const {
    PosReal r;
    if (e == 0) return r;
    r.factors_ = factors_;
    for (auto& f : r.factors_) f.second *= e;
    return r;
}

int PosReal::cmp(const PosReal& o) const {
    // compare this/o against 1
    PosReal ratio = *this;
    ratio /= o;
    if (ratio.factors_.empty()) return 0;
    BigInt lcm = 1;
    for (const auto& f : ratio.factors_)
        lcm = boost::multiprecision::lcm(lcm, den(f.second));
    Rat prod = 1;
    for (const auto& f : ratio.factors_) {
        BigInt k = num(f.second) * (lcm / den(f.second));
        if (k > kExponentGuard || k < -kExponentGuard)
            throw std::overflow_error("PosReal: comparison exponent beyond guard");
        prod *= rat_pow(f.first, k.convert_to<long>());
    }
    // prod is (this/o)^lcm and lcm > 0, so its position against 1 decides
    if (prod == 1) return 0;
    return prod < 1 ? -1 : 1;
}

bool PosReal::is_one() const { return factors_.empty() || cmp(PosReal()) == 0; }

std::optional<Rat> PosReal::as_rat() const {
    Rat v = 1;
    for (const auto& f : factors_) {
        if (den(f.second) != 1) return std::nullopt;
        BigInt k = num(f.second);
        if (k > kExponentGuard || k < -kExponentGuard)
            throw std::overflow_error("PosReal: rational value beyond guard");
        v *= rat_pow(f.first, k.convert_to<long>());
    }
    return v;
}

double PosReal::log_value() const {
    double s = 0;
    for (const auto& f : factors_) s += qdlab::to_double(f.second) * log_rat(f.first);
    return s;
}

double PosReal::to_double() const { return std::exp(log_value()); }

std::string PosReal::str() const {
    if (factors_.empty()) return "1";
    std::ostringstream os;
    bool first = true;
    for (const auto& f : factors_) {
        if (!first) os << " * ";
        first = false;
        os << "(" << f.first << ")";
        if (f.second != 1) os << "^(" << f.second << ")";
    }
    return os.str();
}

} // namespace qdlab
