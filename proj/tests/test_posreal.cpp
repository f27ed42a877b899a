#include <doctest.h>

#include <cmath>

#include "qdlab/posreal.hpp"

using namespace qdlab;

TEST_CASE("multiplicative identities across representations") {
    CHECK(PosReal(Rat(6)) == PosReal(Rat(2)) * PosReal(Rat(3)));
    CHECK(PosReal::pow_of(Rat(2), Rat(1, 2)) * PosReal::pow_of(Rat(2), Rat(1, 2)) == PosReal(2));
    CHECK(PosReal::pow_of(Rat(8), Rat(1, 3)) == PosReal(2));
    CHECK(PosReal::pow_of(Rat(4), Rat(1, 2)) == PosReal(2));
    CHECK(PosReal::pow_of(Rat(2), Rat(1, 2)) * PosReal::pow_of(Rat(8), Rat(1, 2)) == PosReal(4));
    CHECK(PosReal::pow_of(Rat(2), Rat(1, 2)) * PosReal::pow_of(Rat(3), Rat(1, 2)) ==
          PosReal::pow_of(Rat(6), Rat(1, 2)));
    CHECK(PosReal::pow_of(Rat(32), Rat(97)) == PosReal::pow_of(Rat(2), Rat(485)));
}

TEST_CASE("exact ordering, including the classic root comparison") {
    PosReal sqrt2 = PosReal(2).sqrt();
    CHECK(sqrt2 < PosReal(Rat(3, 2)));
    CHECK(sqrt2 > PosReal(Rat(7, 5)));
    // 3^(1/3) > 2^(1/2) because 3^2 > 2^3
    CHECK(PosReal::pow_of(Rat(3), Rat(1, 3)) > PosReal::pow_of(Rat(2), Rat(1, 2)));
    CHECK(PosReal::pow_of(Rat(2), Rat(100)) > PosReal::pow_of(Rat(3), Rat(63)));
    CHECK(pos_min(sqrt2, PosReal(1)) == PosReal(1));
    CHECK(pos_max(sqrt2, PosReal(1)) == sqrt2);
}

TEST_CASE("division and power laws") {
    PosReal x = PosReal::pow_of(Rat(5, 3), Rat(2)) * PosReal(7);
    CHECK((x / x).is_one());
    CHECK(PosReal::pow_of(Rat(2, 3), Rat(2)) / PosReal(Rat(4, 9)) == PosReal(1));
    CHECK(x.pow(Rat(1, 2)).pow(Rat(4)) == x * x);
    CHECK(x.pow(Rat(0)) == PosReal(1));
    CHECK(x.pow(Rat(-1)) * x == PosReal(1));
}

TEST_CASE("exact rational extraction only without pending roots") {
    PosReal plain = PosReal(Rat(9, 4)) * PosReal(Rat(2, 3));
    REQUIRE(plain.as_rat().has_value());
    CHECK(*plain.as_rat() == Rat(3, 2));
    CHECK(!PosReal(2).sqrt().as_rat().has_value());
    // value is rational but the representation still carries the half power
    CHECK(!PosReal::pow_of(Rat(4), Rat(1, 2)).as_rat().has_value());
    CHECK(*PosReal().as_rat() == Rat(1));
}

TEST_CASE("float views") {
    PosReal sqrt2 = PosReal(2).sqrt();
    CHECK(sqrt2.log_value() == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
    CHECK(sqrt2.to_double() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(PosReal().to_double() == 1.0);
    // huge magnitudes survive through the log view
    PosReal big = PosReal::pow_of(Rat(2), Rat(100000));
    CHECK(big.log_value() == doctest::Approx(100000 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("input validation and comparison guard") {
    CHECK_THROWS_AS(PosReal(Rat(0)), std::invalid_argument);
    CHECK_THROWS_AS(PosReal(Rat(-1, 2)), std::invalid_argument);
    CHECK_THROWS_AS(PosReal::pow_of(Rat(-2), Rat(1, 2)), std::invalid_argument);
    PosReal huge = PosReal::pow_of(Rat(2), Rat(2000000));
    CHECK_THROWS_AS((void)(huge < PosReal(3)), std::overflow_error);
}

TEST_CASE("factored rendering") {
    PosReal x = PosReal::pow_of(Rat(2), Rat(1, 2)) * PosReal(Rat(5, 3));
    CHECK(x.str() == "(5/3) * (2)^(1/2)");  // factors ordered by base
    CHECK(PosReal().str() == "1");
}
