#include <doctest.h>

#include <algorithm>

#include "qdlab/measures.hpp"

using namespace qdlab;

namespace {
BallQ interval(const Rat& lo, const Rat& hi) {
    return BallQ({(lo + hi) / 2}, (hi - lo) / 2, Norm::sup);
}
} // namespace

TEST_CASE("unit-cube volume oracle") {
    auto leb1 = lebesgue_cube(1);
    Rat tol(1, 1000000);
    auto m = leb1->ball_mass(interval(Rat(1, 4), Rat(3, 4)), tol);
    CHECK(m.exact);
    CHECK(m.lo == Rat(1, 2));

    auto whole = leb1->ball_mass(BallQ({Rat(1, 2)}, Rat(2), Norm::sup), tol);
    CHECK(whole.lo == 1);

    auto leb2 = lebesgue_cube(2);
    auto corner = leb2->ball_mass(BallQ({Rat(0), Rat(0)}, Rat(1, 2), Norm::sup), tol);
    CHECK(corner.exact);
    CHECK(corner.lo == Rat(1, 4));
}

TEST_CASE("ternary-deletion self-similar oracle") {
    auto cantor = self_similar_oracle(cantor_ifs());
    Rat tol(1, BigInt(1) << 40);

    auto first = cantor->ball_mass(interval(Rat(0), Rat(1, 3)), tol);
    CHECK(first.exact);
    CHECK(first.lo == Rat(1, 2));

    auto whole = cantor->ball_mass(interval(Rat(-1), Rat(2)), tol);
    CHECK(whole.exact);
    CHECK(whole.lo == 1);

    auto gap = cantor->ball_mass(interval(Rat(1, 3) + Rat(1, 100), Rat(2, 3) - Rat(1, 100)), tol);
    CHECK(gap.exact);
    CHECK(gap.lo == 0);
}

TEST_CASE("level-3 cylinder has exactly the product weight") {
    auto cantor = self_similar_oracle(cantor_ifs());
    // word (right, left, left): [2/3, 2/3 + 1/27]
    auto mass = cantor->ball_mass(interval(Rat(2, 3), Rat(2, 3) + Rat(1, 27)), Rat(1, BigInt(1) << 40));
    CHECK(mass.exact);
    CHECK(mass.lo == Rat(1, 8));
}

TEST_CASE("separation certificate") {
    CHECK(ifs_strong_separation(cantor_ifs()));

    IFSSpec overlapping;
    overlapping.maps = {IFSMapSpec{Rat(2, 3), {Rat(0)}, {}}, IFSMapSpec{Rat(2, 3), {Rat(1, 3)}, {}}};
    overlapping.weights = {Rat(1, 2), Rat(1, 2)};
    CHECK(!ifs_strong_separation(overlapping));
}

TEST_CASE("certified invariant box contains the attractor hull") {
    BoxQ box = ifs_invariant_box(cantor_ifs());
    CHECK(box.lo[0] <= 0);
    CHECK(box.hi[0] >= 1);
    CHECK(box.hi[0] - box.lo[0] < Rat(3, 2));
}

TEST_CASE("product oracle multiplies sup-ball masses") {
    Rat tol(1, 1000000);
    auto leb_sq = product_oracle(lebesgue_cube(1), lebesgue_cube(1));
    auto m = leb_sq->ball_mass(BallQ({Rat(1, 2), Rat(1, 2)}, Rat(1, 4), Norm::sup), tol);
    CHECK(m.exact);
    CHECK(m.lo == Rat(1, 4));

    auto cantor = self_similar_oracle(cantor_ifs());
    auto cantor_sq = product_oracle(cantor, cantor);
    auto c = cantor_sq->ball_mass(BallQ({Rat(1, 6), Rat(1, 6)}, Rat(1, 6), Norm::sup), tol);
    CHECK(c.exact);
    CHECK(c.lo == Rat(1, 4));
}

TEST_CASE("product rejects non-probability factors") {
    auto spikes = counterexample_oracle(CounterexampleSpec{2});  // total mass > 1
    CHECK(!spikes->is_probability());
    CHECK_THROWS_AS(product_oracle(spikes, lebesgue_cube(1)), std::invalid_argument);

    auto heavy = point_mass_oracle({Rat(1, 2)}, Rat(2));
    CHECK_THROWS_AS(product_oracle(lebesgue_cube(1), heavy), std::invalid_argument);
}

TEST_CASE("polynomial image oracle") {
    auto base = lebesgue_cube(1);
    SUBCASE("identity map leaves the sample distribution unchanged") {
        Poly id;
        id.arity = 1;
        id.terms = {{Rat(1), {1}}};
        auto push = pushforward_oracle(base, {id});
        Rng r1(42), r2(43);
        const int n = 2000;
        std::vector<double> a, b;
        for (int i = 0; i < n; ++i) a.push_back(push->sample(r1)[0]);
        for (int i = 0; i < n; ++i) b.push_back(base->sample(r2)[0]);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        // two-sample Kolmogorov-Smirnov statistic
        double dmax = 0;
        size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i] <= b[j]) ++i; else ++j;
            dmax = std::max(dmax, std::fabs(double(i) / n - double(j) / n));
        }
        CHECK(dmax < 0.06);  // crit. value at alpha=0.001 is ~0.062 for n=2000
    }
    SUBCASE("parabola: mass of a corner ball is the preimage interval length") {
        auto curve = pushforward_oracle(base, moment_curve(2));
        auto m = curve->ball_mass(BallQ({Rat(0), Rat(0)}, Rat(1, 4), Norm::sup), Rat(1, 100));
        CHECK(m.lo <= Rat(1, 4));
        CHECK(Rat(1, 4) <= m.hi);
        CHECK(m.hi - m.lo < Rat(1, 10));
    }
    SUBCASE("exact samples sit on the variety") {
        auto curve = pushforward_oracle(base, moment_curve(2));
        Rng rng(7);
        for (int i = 0; i < 20; ++i) {
            VecQ y = curve->sample_exact(rng);
            REQUIRE(y.size() == 2);
            CHECK(y[1] == y[0] * y[0]);
        }
    }
}

TEST_CASE("mediant enumeration of the rationals in [0,1]") {
    CHECK(farey_point(1) == Rat(0));
    CHECK(farey_point(2) == Rat(1));
    CHECK(farey_point(3) == Rat(1, 2));
    CHECK(farey_point(4) == Rat(1, 3));
    CHECK(farey_point(5) == Rat(2, 3));
    CHECK(farey_point(6) == Rat(1, 4));
    CHECK(farey_point(7) == Rat(2, 5));
    CHECK(farey_point(8) == Rat(3, 5));
    CHECK(farey_point(9) == Rat(3, 4));
}

TEST_CASE("density-bump oracle") {
    SUBCASE("bump table") {
        auto spikes = counterexample_spikes(3);
        REQUIRE(spikes.size() == 3);
        CHECK(spikes[0].center == Rat(0));
        CHECK(spikes[0].half_width == Rat(1, 4));
        CHECK(spikes[0].height == Rat(2));
        CHECK(spikes[2].center == Rat(1, 2));
        CHECK(spikes[2].half_width == Rat(1, 256));
        CHECK(spikes[2].height == Rat(32));
    }
    SUBCASE("total mass with one bump, clipped exactly") {
        auto mu = counterexample_oracle(CounterexampleSpec{1});
        auto t = mu->total_mass();
        CHECK(t.exact);
        CHECK(t.lo == Rat(3, 2));  // 1 + height 2 * clipped length 1/4; and <= 2 = 1 + 2 a_1
        CHECK(t.lo <= 2);
    }
    SUBCASE("mass right on a bump dominates the bump's own weight") {
        auto mu = counterexample_oracle(CounterexampleSpec{3});
        auto spikes = counterexample_spikes(3);
        auto m = mu->ball_mass(BallQ({spikes[2].center}, spikes[2].half_width, Norm::sup), Rat(0));
        CHECK(m.exact);
        CHECK(m.lo >= Rat(1, 4));  // 2 * a_3 from the bump alone
        CHECK(m.lo == Rat(33, 128));
    }
    SUBCASE("width budget guard") {
        CHECK_THROWS_AS(counterexample_oracle(CounterexampleSpec{21}), std::invalid_argument);
    }
}

TEST_CASE("mass brackets nest with the balls") {
    auto cantor = self_similar_oracle(cantor_ifs());
    Rng rng(31);
    Rat tol(1, 1 << 20);
    for (int it = 0; it < 25; ++it) {
        Rat c = rat_from_double(rng.unif());
        Rat r = rat_from_double(rng.unif(0.01, 0.4));
        Rat grow = rat_from_double(rng.unif(0.0, 0.3));
        auto small = cantor->ball_mass(BallQ({c}, r, Norm::sup), tol);
        auto big = cantor->ball_mass(BallQ({c}, r + grow, Norm::sup), tol);
        CHECK(small.lo <= big.hi);
        CHECK(small.hi <= big.hi + tol);
    }
}

TEST_CASE("sampling statistics match exact masses") {
    // Monte Carlo bracket vs exact mass on random sup balls (both tracks exist
    // for the planar cube oracle).
    auto leb2 = lebesgue_cube(2);
    Rng rng(77);
    int fails = 0;
    for (int it = 0; it < 100; ++it) {
        VecQ c = {rat_from_double(rng.unif(-0.2, 1.2)), rat_from_double(rng.unif(-0.2, 1.2))};
        BallQ ball(c, rat_from_double(rng.unif(0.05, 0.5)), Norm::sup);
        auto ex = leb2->ball_mass(ball, Rat(1, 1000000));
        auto mc = leb2->mass_mc(ball, Rat(1, 50));
        if (!(mc.lo <= ex.lo && ex.hi <= mc.hi)) ++fails;
    }
    CHECK(fails == 0);

    // repeated query returns the identical bracket (pure oracle)
    BallQ ball({Rat(1, 3), Rat(2, 5)}, Rat(1, 5), Norm::sup);
    auto m1 = leb2->mass_mc(ball, Rat(1, 50));
    auto m2 = leb2->mass_mc(ball, Rat(1, 50));
    CHECK(m1.lo == m2.lo);
    CHECK(m1.hi == m2.hi);
}

TEST_CASE("oracle specs round-trip through JSON") {
    auto cantor = self_similar_oracle(cantor_ifs());
    auto prod = product_oracle(cantor, lebesgue_cube(1));
    std::string text = measure_spec_to_json(prod->spec());
    auto back = make_measure(measure_spec_from_json(text));
    CHECK(back->dim() == prod->dim());
    BallQ ball({Rat(1, 6), Rat(1, 2)}, Rat(1, 6), Norm::sup);
    Rat tol(1, 1 << 20);
    auto a = prod->ball_mass(ball, tol);
    auto b = back->ball_mass(ball, tol);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);

    auto push = pushforward_oracle(lebesgue_cube(1), moment_curve(3));
    auto push2 = make_measure(measure_spec_from_json(measure_spec_to_json(push->spec())));
    Rng r1(5), r2(5);
    for (int i = 0; i < 5; ++i) {
        VecD x = push->sample(r1), y = push2->sample(r2);
        REQUIRE(x.size() == y.size());
        for (size_t k = 0; k < x.size(); ++k) CHECK(x[k] == y[k]);
    }
}
