#include <doctest.h>

#include <cmath>
#include <map>

#include "qdlab/diophantine.hpp"

using namespace qdlab;

namespace {

VecQ from_doubles(std::initializer_list<double> xs) {
    VecQ out;
    for (double x : xs) out.push_back(rat_from_double(x));
    return out;
}

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

void check_record_shape(const ExponentEstimate& est) {
    for (size_t i = 0; i + 1 < est.records.size(); ++i) {
        CHECK(est.records[i].height < est.records[i + 1].height);
        CHECK(est.records[i].error > est.records[i + 1].error);
    }
    for (const auto& r : est.records) {
        CHECK(r.error > 0);
        CHECK(r.height >= 1);
        if (r.height <= 1) CHECK(r.exponent == 0.0);
    }
}

} // namespace

TEST_CASE("golden ratio by continued fractions: frozen convergent ladder") {
    // oracle: exact-fraction convergent scan of the double value of (sqrt5-1)/2,
    // value = max exponent over the final third of the records
    auto est = omega_vector(from_doubles({kGolden}), BigInt(1000000), VectorMethod::cf);
    CHECK(!est.infinite);
    REQUIRE(est.records.size() == 29);
    CHECK(est.records.back().height == 832040);  // largest Fibonacci number below 1e6
    CHECK(est.value == doctest::Approx(2.086522).epsilon(0.0025));
    check_record_shape(est);
    // every recorded error re-derives exactly from its witness
    VecQ x = from_doubles({kGolden});
    for (const auto& r : est.records)
        CHECK(r.error == rat_abs(x[0] - Rat(r.p[0]) / Rat(r.q[0])));
}

TEST_CASE("rational targets produce the infinite sentinel with a witness") {
    auto cf = omega_vector({Rat(1, 2)}, BigInt(100), VectorMethod::cf);
    CHECK(cf.infinite);
    CHECK(std::isinf(cf.value));
    REQUIRE(cf.exact_witness.has_value());
    CHECK(cf.exact_witness->first == std::vector<BigInt>{BigInt(2)});
    CHECK(cf.exact_witness->second == std::vector<BigInt>{BigInt(1)});

    auto whole = omega_vector({Rat(3)}, BigInt(100), VectorMethod::cf);
    CHECK(whole.infinite);
    CHECK(whole.exact_witness->first == std::vector<BigInt>{BigInt(1)});
    CHECK(whole.exact_witness->second == std::vector<BigInt>{BigInt(3)});

    CHECK(omega_vector({Rat(1, 2)}, BigInt(100), VectorMethod::brute).infinite);
    CHECK(omega_vector({Rat(1, 2)}, BigInt(16), VectorMethod::lattice).infinite);
    CHECK(omega_mult_vector({Rat(1, 3), rat_from_double(0.7071067811865476)}, BigInt(50)).infinite);
}

TEST_CASE("shallow runs are exact prefixes of deeper runs") {
    VecQ g = from_doubles({kGolden});
    auto shallow = omega_vector(g, BigInt(1000), VectorMethod::cf);
    auto deep = omega_vector(g, BigInt(1000000), VectorMethod::cf);
    REQUIRE(shallow.records.size() == 15);
    for (size_t i = 0; i < shallow.records.size(); ++i) {
        CHECK(shallow.records[i].height == deep.records[i].height);
        CHECK(shallow.records[i].error == deep.records[i].error);
    }

    VecQ s = from_doubles({std::sqrt(2.0) - 1.0});
    double best_all = 0;
    for (long q : {100L, 1000L, 5000L}) {
        auto est = omega_vector(s, BigInt(q), VectorMethod::brute);
        double m = 0;
        for (const auto& r : est.records) m = std::max(m, r.exponent);
        CHECK(m >= best_all);  // max over ALL records grows with the cutoff
        best_all = m;
    }
}

TEST_CASE("one-shot floors from pigeonhole behavior at moderate height") {
    auto d1 = omega_vector(from_doubles({std::sqrt(2.0) - 1.0}), BigInt(5000), VectorMethod::brute);
    CHECK(d1.value >= 2.0 - 0.05);
    auto d2 = omega_vector(from_doubles({std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0}), BigInt(5000),
                           VectorMethod::brute);
    CHECK(d2.value >= 1.5 - 0.05);
    auto d3 = omega_vector(from_doubles({std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0,
                                         std::sqrt(5.0) - 2.0}),
                           BigInt(5000), VectorMethod::brute);
    CHECK(d3.value >= 1.0 + 1.0 / 3.0 - 0.05);

    auto m2 = omega_mult_vector(from_doubles({std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0}),
                                BigInt(5000));
    CHECK(m2.value >= 3.0 - 0.1);
}

TEST_CASE("multiplicative and simple exponents coincide in one dimension") {
    VecQ x = from_doubles({std::log(2.0)});
    auto simple = omega_vector(x, BigInt(20000), VectorMethod::brute);
    auto mult = omega_mult_vector(x, BigInt(20000));
    REQUIRE(simple.records.size() == mult.records.size());
    for (size_t i = 0; i < simple.records.size(); ++i) {
        CHECK(simple.records[i].height == mult.records[i].height);
        CHECK(simple.records[i].error == mult.records[i].error);
    }
    CHECK(simple.value == mult.value);
}

TEST_CASE("root-two root-three pair: frozen multiplicative ladder") {
    VecQ x = from_doubles({std::sqrt(2.0), std::sqrt(3.0)});
    auto est = omega_mult_vector(x, BigInt(100000));
    CHECK(!est.infinite);
    REQUIRE(est.records.size() == 38);
    CHECK(est.records.back().height == 72663);
    CHECK(est.value == doctest::Approx(3.577713).epsilon(0.0025));
    CHECK(est.value >= 3.0);
    check_record_shape(est);

    // term-wise domination: at each witness the product error cannot exceed
    // the worst single coordinate error
    for (const auto& r : est.records) {
        Rat sup = 0;
        for (size_t i = 0; i < 2; ++i)
            sup = std::max(sup, rat_abs(x[i] - Rat(r.p[i]) / Rat(r.q[0])));
        CHECK(r.error <= sup);
    }
}

TEST_CASE("golden matrix entry: frozen scan and shared-witness shift identity") {
    MatQ a = {{rat_from_double(kGolden)}};
    auto mat = omega_matrix(a, BigInt(100000));
    CHECK(!mat.infinite);
    CHECK(mat.value == doctest::Approx(1.102419).epsilon(0.0025));
    check_record_shape(mat);

    auto vec = omega_vector(from_doubles({kGolden}), BigInt(100000), VectorMethod::cf);
    std::map<BigInt, double> vec_exp;
    for (const auto& r : vec.records) vec_exp[r.height] = r.exponent;
    int shared = 0;
    for (const auto& r : mat.records) {
        auto it = vec_exp.find(r.height);
        if (it == vec_exp.end() || r.height <= 1) continue;
        ++shared;
        CHECK(r.exponent == doctest::Approx(it->second - 1.0).epsilon(1e-9));
    }
    CHECK(shared >= 5);
}

TEST_CASE("fixed transcendental-mix entries land near the typical matrix value") {
    auto e1 = omega_matrix({{rat_from_double(std::exp(-0.3))}}, BigInt(100000));
    CHECK(e1.value == doctest::Approx(1.330566).epsilon(0.0025));
    auto e2 = omega_matrix({{rat_from_double(M_PI - 3.0)}}, BigInt(100000));
    CHECK(e2.value == doctest::Approx(1.107951).epsilon(0.0025));
    // typical value is 1; the finite-height record bias is positive
    for (double v : {e1.value, e2.value}) {
        CHECK(v >= 0.9);
        CHECK(v <= 1.5);
    }
}

TEST_CASE("matrix with a rational integer relation hits the sentinel") {
    MatQ a = {{Rat(1, 3), Rat(2, 3)}};
    auto est = omega_matrix(a, BigInt(50));
    CHECK(est.infinite);
    REQUIRE(est.exact_witness.has_value());
    const auto& [q, p] = *est.exact_witness;
    Rat image = a[0][0] * Rat(q[0]) + a[0][1] * Rat(q[1]);
    CHECK(image == Rat(p[0]));
}

TEST_CASE("single-entry matrices: multiplicative and simple scans agree exactly") {
    MatQ a = {{rat_from_double(std::log(2.0))}};
    auto simple = omega_matrix(a, BigInt(30000));
    auto mult = omega_mult_matrix(a, BigInt(30000));
    REQUIRE(simple.records.size() == mult.records.size());
    for (size_t i = 0; i < simple.records.size(); ++i) {
        CHECK(simple.records[i].height == mult.records[i].height);
        CHECK(simple.records[i].error == mult.records[i].error);
    }
    CHECK(simple.value == mult.value);
}

TEST_CASE("column matrix vs point target: multiplicative shift identity") {
    VecQ x = from_doubles({std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0});
    MatQ a = {{x[0]}, {x[1]}};  // M=2, N=1
    auto mat = omega_mult_matrix(a, BigInt(5000));
    auto vec = omega_mult_vector(x, BigInt(5000));
    std::map<BigInt, double> vec_exp;
    for (const auto& r : vec.records) vec_exp[r.height] = r.exponent;
    int shared = 0;
    for (const auto& r : mat.records) {
        auto it = vec_exp.find(r.height);
        if (it == vec_exp.end() || r.height <= 1) continue;
        ++shared;
        CHECK(r.exponent == doctest::Approx(it->second - 2.0).epsilon(1e-9));
    }
    CHECK(shared >= 3);
}

TEST_CASE("wide matrix scans: frozen sup and multiplicative values") {
    MatQ a = {{rat_from_double(std::sqrt(2.0) - 1.0), rat_from_double(std::exp(1.0) - 2.5)}};
    auto sup = omega_matrix(a, BigInt(10000));
    CHECK(!sup.infinite);
    REQUIRE(sup.records.size() == 17);
    CHECK(sup.value == doctest::Approx(2.677574).epsilon(0.0025));
    CHECK(sup.value >= 2.0 - 0.1);  // two columns per row: typical value N/M = 2
    check_record_shape(sup);

    auto mult = omega_mult_matrix(a, BigInt(10000));
    REQUIRE(mult.records.size() == 15);
    CHECK(mult.value == doctest::Approx(1.480250).epsilon(0.0025));
    CHECK(mult.value >= 1.0 - 0.1);
    check_record_shape(mult);
    // per-record consistency between the two conventions: the multiplicative
    // denominator never exceeds the sup-norm denominator raised to N
    for (const auto& r : mult.records) {
        BigInt sup_h = 0;
        for (const auto& c : r.q) {
            BigInt a = c < 0 ? BigInt(-c) : c;
            if (a > sup_h) sup_h = a;
        }
        CHECK(r.height <= sup_h * sup_h);
        CHECK(r.height >= sup_h);
    }
}

TEST_CASE("lattice-assisted search tracks the continued fraction ladder") {
    VecQ g = from_doubles({kGolden});
    auto est = omega_vector(g, BigInt(1000000), VectorMethod::lattice);
    CHECK(!est.infinite);
    CHECK(est.records.size() >= 8);
    CHECK(est.value >= 1.9);
    CHECK(est.value <= 2.4);
    check_record_shape(est);
    for (const auto& r : est.records) {
        CHECK(r.q[0] <= 1000000);
        CHECK(r.error == rat_abs(g[0] - Rat(r.p[0]) / Rat(r.q[0])));
    }

    // two dimensions: every record is exact-consistent and beats the trivial box
    VecQ x = from_doubles({std::sqrt(2.0) - 1.0, std::sqrt(3.0) - 1.0});
    auto est2 = omega_vector(x, BigInt(4096), VectorMethod::lattice);
    CHECK(est2.value >= 1.4);
    for (const auto& r : est2.records)
        for (size_t i = 0; i < 2; ++i) {
            Rat e = rat_abs(x[i] - Rat(r.p[i]) / Rat(r.q[0]));
            CHECK(e <= r.error);
        }
}

TEST_CASE("enumeration guards and input validation") {
    VecQ two = {Rat(1, 3), Rat(1, 5)};
    CHECK_THROWS_AS(omega_vector(two, BigInt(10), VectorMethod::cf), std::invalid_argument);
    CHECK_THROWS_AS(omega_vector(VecQ{}, BigInt(10), VectorMethod::brute), std::invalid_argument);
    CHECK_THROWS_AS(omega_vector(two, BigInt(0), VectorMethod::brute), std::invalid_argument);
    CHECK_THROWS_AS(omega_vector(two, BigInt(200000), VectorMethod::brute), std::invalid_argument);
    VecQ four(4, Rat(1, 7));
    CHECK_THROWS_AS(omega_vector(four, BigInt(10), VectorMethod::brute), std::invalid_argument);
    CHECK_THROWS_AS(omega_mult_vector(four, BigInt(10)), std::invalid_argument);
    CHECK_THROWS_AS(omega_matrix(MatQ{}, BigInt(10)), std::invalid_argument);
    MatQ wide = {{Rat(1, 3), Rat(1, 5)}};
    CHECK_THROWS_AS(omega_matrix(wide, BigInt(20000)), std::invalid_argument);
}

TEST_CASE("low-denominator cluster bounds: frozen cutoffs") {
    CHECK(simplex_q_bound(1, Rat(1, 100), std::nullopt) == 2);
    CHECK(simplex_q_bound(2, Rat(1, 1000), std::nullopt) == 17);
    CHECK(simplex_q_bound(2, Rat(1, 10), std::nullopt) == 0);
    CHECK(simplex_q_bound(1, Rat(1), std::nullopt) == 0);
    CHECK(simplex_q_bound(1, Rat(1, 100), Rat(1, 2)) == 5);
    CHECK_THROWS_AS(simplex_q_bound(0, Rat(1, 10), std::nullopt), std::invalid_argument);
    CHECK_THROWS_AS(simplex_q_bound(1, Rat(0), std::nullopt), std::invalid_argument);
}

TEST_CASE("low-denominator cluster around one half is a single point") {
    auto res = simplex_hyperplane({Rat(1, 2)}, Rat(1, 100));
    CHECK(res.q_bound == 2);
    CHECK(res.status == HullStatus::single_point);
    REQUIRE(res.points.size() == 1);
    CHECK(res.points[0][0] == Rat(1, 2));
}

TEST_CASE("low-denominator cluster in the plane stays degenerate") {
    auto res = simplex_hyperplane({Rat(1, 3), Rat(1, 3)}, Rat(1, 1000));
    CHECK(res.q_bound == 17);
    CHECK(res.status == HullStatus::single_point);
    REQUIRE(res.points.size() == 1);
    CHECK(res.points[0][0] == Rat(1, 3));
    CHECK(res.points[0][1] == Rat(1, 3));
}

TEST_CASE("cluster with no admissible denominators is empty") {
    auto res = simplex_hyperplane({Rat(1, 2)}, Rat(1));
    CHECK(res.q_bound == 0);
    CHECK(res.status == HullStatus::empty);
    CHECK(res.points.empty());
}

TEST_CASE("collinear cluster yields the exact connecting hyperplane") {
    // forced cutoff q <= 1: only the two integer points beside the center
    auto res = simplex_hyperplane({Rat(0), Rat(1, 2)}, Rat(51, 100), Rat(1));
    CHECK(res.q_bound == 1);
    CHECK(res.status == HullStatus::hull);
    REQUIRE(res.points.size() == 2);
    REQUIRE(res.hull.has_value());
    CHECK(res.hull->normal == VecQ{Rat(1), Rat(0)});
    CHECK(res.hull->offset == Rat(0));
    for (const auto& pt : res.points) {
        Rat dot = 0;
        for (size_t i = 0; i < 2; ++i) dot += res.hull->normal[i] * pt[i];
        CHECK(dot == res.hull->offset);
    }
}

TEST_CASE("oversized cutoff constant is falsified by a full-rank cluster") {
    auto res = simplex_hyperplane({Rat(1, 2)}, Rat(1, 2), Rat(2));
    CHECK(res.q_bound == 2);
    CHECK(res.status == HullStatus::violation);
    REQUIRE(res.violating_points.size() == 2);
    CHECK(res.violating_points[0] != res.violating_points[1]);

    auto res2 = simplex_hyperplane({Rat(1, 2), Rat(1, 2)}, Rat(51, 100), Rat(10));
    CHECK(res2.status == HullStatus::violation);
    REQUIRE(res2.violating_points.size() == 3);
    // the three witnesses are affinely independent: the two difference vectors
    // are not parallel
    VecQ u = {res2.violating_points[1][0] - res2.violating_points[0][0],
              res2.violating_points[1][1] - res2.violating_points[0][1]};
    VecQ v = {res2.violating_points[2][0] - res2.violating_points[0][0],
              res2.violating_points[2][1] - res2.violating_points[0][1]};
    CHECK(u[0] * v[1] - u[1] * v[0] != 0);
}
