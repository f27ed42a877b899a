#include <doctest.h>

#include "qdlab/geometry.hpp"
#include "qdlab/measures.hpp"
#include "qdlab/rng.hpp"

using namespace qdlab;

TEST_CASE("point-to-plane distance") {
    HyperplaneD wall({1.0, 0.0}, 0.0);  // {x1 = 0}
    CHECK(dist_to_hyperplane({0.0, 0.0}, wall) == doctest::Approx(0.0));
    CHECK(dist_to_hyperplane({3.0, 4.0}, wall) == doctest::Approx(3.0));

    HyperplaneD tilted({3.0, 4.0}, 0.0);
    CHECK(dist_to_hyperplane({1.0, 1.0}, tilted) == doctest::Approx(7.0 / 5.0));

    CHECK_THROWS_AS(dist_to_hyperplane({1.0}, tilted), std::invalid_argument);
}

TEST_CASE("exact squared distance matches the hand value") {
    HyperplaneQ tilted({Rat(3), Rat(4)}, Rat(0));
    CHECK(dist2_to_hyperplane({Rat(1), Rat(1)}, tilted) == Rat(49, 25));
}

TEST_CASE("distance is invariant under rescaling the plane equation") {
    Rng rng(71);
    for (int it = 0; it < 50; ++it) {
        int d = 1 + static_cast<int>(rng.unif_int(0, 3));
        VecQ normal(d), y(d);
        bool nonzero = false;
        for (int i = 0; i < d; ++i) {
            normal[i] = Rat(rng.unif_int(-9, 9), 1 + rng.unif_int(0, 7));
            y[i] = Rat(rng.unif_int(-9, 9), 1 + rng.unif_int(0, 7));
            if (normal[i] != 0) nonzero = true;
        }
        if (!nonzero) normal[0] = 1;
        Rat off(rng.unif_int(-5, 5), 1 + rng.unif_int(0, 4));
        Rat c(rng.unif_int(1, 7), 1 + rng.unif_int(0, 3));
        if (rng.unif() < 0.5) c = -c;
        HyperplaneQ L(normal, off);
        HyperplaneQ Lc(vscale(c, normal), Rat(c * off));
        CHECK(dist2_to_hyperplane(y, L) == dist2_to_hyperplane(y, Lc));

        // float track agrees with the exact square
        double d2f = dist_to_hyperplane(to_double_vec(y), HyperplaneD(to_double_vec(normal), to_double(off)));
        double d2q = to_double(dist2_to_hyperplane(y, L));
        CHECK(d2f * d2f == doctest::Approx(d2q).epsilon(1e-12));
    }
}

TEST_CASE("thickening membership, open vs closed") {
    HyperplaneD wall({1.0, 0.0}, 0.0);
    VecD on_plane{0.0, 5.0};
    CHECK(in_thickening(on_plane, wall, 0.0, false));
    CHECK(!in_thickening(on_plane, wall, 0.0, true));
    CHECK(in_thickening({3.0, 4.0}, wall, 3.0, false));  // boundary point
    CHECK(!in_thickening({3.0, 4.0}, wall, 3.0, true));

    HyperplaneQ wallq({Rat(1), Rat(0)}, Rat(0));
    CHECK(in_thickening(VecQ{Rat(3), Rat(4)}, wallq, Rat(3), false));
    CHECK(!in_thickening(VecQ{Rat(3), Rat(4)}, wallq, Rat(3), true));
}

TEST_CASE("greedy separated net") {
    std::vector<VecD> pool = {{0.0}, {0.25}, {0.5}, {0.75}, {1.0}};
    NetD net = greedy_maximal_net(pool, 0.5);
    REQUIRE(net.points.size() == 3);
    CHECK(net.points[0][0] == doctest::Approx(0.0));
    CHECK(net.points[1][0] == doctest::Approx(0.5));
    CHECK(net.points[2][0] == doctest::Approx(1.0));

    NetD single = greedy_maximal_net({{2.0, 3.0}}, 0.1);
    CHECK(single.points.size() == 1);

    NetD wide = greedy_maximal_net(pool, 5.0);
    CHECK(wide.points.size() == 1);

    CHECK(greedy_maximal_net({}, 1.0).points.empty());
    CHECK_THROWS_AS(greedy_maximal_net(pool, 0.0), std::invalid_argument);
}

TEST_CASE("net invariants hold on random pools") {
    Rng rng(1234);
    for (int it = 0; it < 20; ++it) {
        int d = 1 + static_cast<int>(rng.unif_int(0, 2));
        std::vector<VecD> pool;
        int n = 30 + static_cast<int>(rng.unif_int(0, 40));
        for (int i = 0; i < n; ++i) pool.push_back(rng.unit_cube_point(d));
        double rho = rng.unif(0.05, 0.6);
        NetD net = greedy_maximal_net(pool, rho);
        CHECK(net_is_separated(net));
        CHECK(net_covers(net, pool));
    }
}

TEST_CASE("covering selection keeps disjoint quarter shrinks and covers centers") {
    SUBCASE("single ball is kept") {
        std::vector<BallD> one = {BallD({0.0}, 1.0)};
        auto sel = four_r_select(one);
        REQUIRE(sel.size() == 1);
        CHECK(sel[0].radius == doctest::Approx(1.0));
    }
    SUBCASE("duplicates collapse") {
        std::vector<BallD> two = {BallD({0.5}, 0.3), BallD({0.5}, 0.3)};
        CHECK(four_r_select(two).size() == 1);
    }
    SUBCASE("worked example") {
        std::vector<BallD> balls = {BallD({0.0}, 1.0), BallD({0.1}, 0.5), BallD({3.0}, 1.0)};
        auto sel = four_r_select(balls);
        REQUIRE(sel.size() == 2);
        CHECK(sel[0].center[0] == doctest::Approx(0.0));
        CHECK(sel[1].center[0] == doctest::Approx(3.0));
    }
    SUBCASE("random families") {
        Rng rng(99);
        for (int it = 0; it < 20; ++it) {
            int d = 1 + static_cast<int>(rng.unif_int(0, 2));
            std::vector<BallD> balls;
            int n = 20 + static_cast<int>(rng.unif_int(0, 30));
            for (int i = 0; i < n; ++i)
                balls.push_back(BallD(rng.unit_cube_point(d), rng.unif(0.02, 0.5)));
            auto sel = four_r_select(balls);
            CHECK(quarter_shrinks_disjoint(sel));
            CHECK(centers_covered(balls, sel));
        }
    }
}

TEST_CASE("sup distance over support samples") {
    SUBCASE("full square against the x1=0 wall") {
        auto leb2 = lebesgue_cube(2);
        Rng rng(5);
        HyperplaneD wall({1.0, 0.0}, 0.0);
        BallD box({0.5, 0.5}, 0.5, Norm::sup);
        auto est = sup_dist_on_support(*leb2, wall, box, 2000, rng);
        REQUIRE(est.has_value());
        CHECK(*est == doctest::Approx(1.0).epsilon(0.02));
        CHECK(*est <= 1.0);
    }
    SUBCASE("support inside the plane gives zero") {
        auto flat = product_oracle(lebesgue_cube(1), point_mass_oracle({Rat(0)}));
        Rng rng(6);
        HyperplaneD floor_plane({0.0, 1.0}, 0.0);  // {x2 = 0}
        BallD ball({0.5, 0.0}, 0.5, Norm::sup);
        auto est = sup_dist_on_support(*flat, floor_plane, ball, 500, rng);
        REQUIRE(est.has_value());
        CHECK(*est == doctest::Approx(0.0));
    }
    SUBCASE("symmetric interval") {
        auto leb1 = lebesgue_cube(1);
        Rng rng(7);
        HyperplaneD mid({1.0}, 0.5);
        BallD ball({0.5}, 0.25);
        auto est = sup_dist_on_support(*leb1, mid, ball, 3000, rng);
        REQUIRE(est.has_value());
        CHECK(*est == doctest::Approx(0.25).epsilon(0.02));
    }
    SUBCASE("monotone in n for a fixed seed") {
        auto leb1 = lebesgue_cube(1);
        HyperplaneD mid({1.0}, 0.5);
        BallD ball({0.5}, 0.25);
        double prev = -1.0;
        for (int n : {10, 50, 200, 1000}) {
            Rng rng(8);
            auto est = sup_dist_on_support(*leb1, mid, ball, n, rng);
            REQUIRE(est.has_value());
            CHECK(*est >= prev);
            prev = *est;
        }
    }
    SUBCASE("ball off the support reports empty intersection") {
        auto leb1 = lebesgue_cube(1);
        Rng rng(9);
        HyperplaneD mid({1.0}, 0.5);
        BallD far_ball({5.0}, 0.25);
        auto est = sup_dist_on_support(*leb1, mid, far_ball, 10, rng, 500);
        CHECK(!est.has_value());
    }
}
