#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "phase1/estimation.hpp"

using namespace phase1;
using doctest::Approx;

namespace {

struct Input {
    std::vector<double> x, y, wt;
};

Input random_input(std::mt19937_64& rng) {
    Input in;
    const int n = 1 + int(rng() % 8);
    double x = 0.0;
    for (int i = 0; i < n; ++i) {
        x += 0.25 + double(rng() % 8) / 8.0;
        in.x.push_back(x);
        // Coarse values so ties and equal block means occur often.
        in.y.push_back(double(rng() % 9) / 8.0);
        in.wt.push_back(double(1 + rng() % 4));
    }
    return in;
}

}  // namespace

TEST_CASE("cir examples") {
    {
        const std::vector<double> x{1, 2, 3}, y{0.1, 0.2, 0.4};
        const auto r = cir(x, y);
        CHECK(r.output_y == y);
        CHECK(r.alg_y == y);
    }
    {
        const std::vector<double> x{1, 2}, y{0.2, 0.1}, w{1, 1};
        const auto r = cir(x, y, w);
        REQUIRE(r.alg_x.size() == 1);
        CHECK(r.alg_x[0] == Approx(1.5));
        CHECK(r.alg_y[0] == Approx(0.15));
        CHECK(r.output_y[0] == Approx(0.15));
        CHECK(r.output_y[1] == Approx(0.15));
    }
    {
        const std::vector<double> x{1, 2};
        const std::vector<YesNoRow> t{{1, 3}, {3, 1}};
        const auto r = cir(x, t);
        CHECK(r.output_y[0] == Approx(0.25));
        CHECK(r.output_y[1] == Approx(0.75));
        CHECK(r.alg_wt == std::vector<double>{4, 4});
    }
    {
        // Rows without observations are dropped.
        const std::vector<double> x{1, 2, 3};
        const std::vector<YesNoRow> t{{0, 2}, {0, 0}, {1, 1}};
        const auto r = cir(x, t);
        CHECK(r.x == std::vector<double>{1, 3});
    }
}

TEST_CASE("cir errors") {
    const std::vector<double> x{1, 2}, y{0.1}, bad_x{2, 1}, y2{0.1, 0.2};
    CHECK_THROWS_AS(cir(x, y), Error);
    CHECK_THROWS_AS(cir(bad_x, y2), Error);
    const std::vector<double> one{3}, oy{0.7};
    CHECK(cir(one, oy).output_y == oy);
}

TEST_CASE("cir linear boundary") {
    const std::vector<double> x{1, 2, 3, 4}, y{0.1, 0.3, 0.2, 0.6};
    CirOptions opt;
    opt.boundary = CirBoundary::Linear;
    const auto r = cir(x, y, opt);
    CHECK(r.alg_x.front() == Approx(1.0));
    CHECK(r.alg_x.back() == Approx(4.0));
    // Single node: the imposed bounds bracket it.
    const std::vector<double> x2{1, 2}, y2{0.6, 0.4};
    const auto s = cir(x2, y2, opt);
    CHECK(s.alg_x == std::vector<double>{0.0, 1.5, 1.0});
}

TEST_CASE("pooled blocks match brute-force PAVA") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const Input in = random_input(rng);
        const auto r = cir(in.x, in.y, in.wt);
        const auto blocks = oracle::pava_blocks(in.x, in.y, in.wt);
        REQUIRE(r.alg_y.size() == blocks.size());
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            CHECK(r.alg_y[b] == Approx(blocks[b].y).epsilon(1e-12));
            CHECK(r.alg_x[b] == Approx(blocks[b].x).epsilon(1e-12));
            CHECK(r.alg_wt[b] == Approx(blocks[b].wt).epsilon(1e-12));
        }
        // Standard PAVA fitted values are the block means.
        const auto fit = isotonic_fit(in.y, in.wt);
        for (const auto& b : blocks) {
            for (std::size_t i = b.begin; i < b.end; ++i) CHECK(fit[i] == Approx(b.y).epsilon(1e-12));
        }
    }
}

TEST_CASE("cir properties") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 2000; ++trial) {
        const Input in = random_input(rng);
        const auto r = cir(in.x, in.y, in.wt);
        for (std::size_t i = 1; i < r.output_y.size(); ++i) CHECK(r.output_y[i] >= r.output_y[i - 1]);
        for (std::size_t i = 1; i < r.alg_y.size(); ++i) CHECK(r.alg_y[i] > r.alg_y[i - 1]);

        // Pooling preserves the weighted sum and the total weight.
        double sw = 0, swy = 0, aw = 0, awy = 0;
        for (std::size_t i = 0; i < in.y.size(); ++i) {
            sw += in.wt[i];
            swy += in.wt[i] * in.y[i];
        }
        for (std::size_t b = 0; b < r.alg_y.size(); ++b) {
            aw += r.alg_wt[b];
            awy += r.alg_wt[b] * r.alg_y[b];
        }
        CHECK(aw == Approx(sw));
        CHECK(awy == Approx(swy));

        // Idempotence on the pooled nodes and on the PAVA fit.
        const auto again = cir(r.alg_x, r.alg_y, r.alg_wt);
        CHECK(again.alg_y == r.alg_y);
        CHECK(again.alg_x == r.alg_x);
        const auto fit = isotonic_fit(in.y, in.wt);
        CHECK(isotonic_fit(fit, in.wt) == fit);

        // Uniform weight scaling changes nothing but the weights.
        std::vector<double> w3 = in.wt;
        for (double& w : w3) w *= 3.0;
        const auto scaled = cir(in.x, in.y, w3);
        REQUIRE(scaled.alg_y.size() == r.alg_y.size());
        for (std::size_t i = 0; i < r.output_y.size(); ++i) CHECK(scaled.output_y[i] == Approx(r.output_y[i]));

        // Decreasing mode is negate, fit, negate.
        CirOptions dec;
        dec.decreasing = true;
        std::vector<double> neg = in.y;
        for (double& v : neg) v = -v;
        const auto d = cir(in.x, in.y, in.wt, dec);
        const auto n = cir(in.x, neg, in.wt);
        for (std::size_t i = 0; i < d.output_y.size(); ++i) CHECK(d.output_y[i] == Approx(-n.output_y[i]));
    }
}

TEST_CASE("interpolated output is not idempotent under re-centering") {
    // Pooling the first three points puts the node at x = 2, so output at
    // x = 1 and x = 2 ties; a second pass pools that tie again at x = 1.5.
    const std::vector<double> x{1, 2, 3, 4}, y{0.5, 0.3, 0.1, 0.9};
    const auto r = cir(x, y);
    CHECK(r.output_y[0] == Approx(r.output_y[1]));
    const auto again = cir(x, r.output_y);
    CHECK(again.output_y[1] != Approx(r.output_y[1]));
}

TEST_CASE("cir mtd selection") {
    {
        TrialState st(DoseGrid(3), 0.3);
        st.add_cohort(1, 10, 1);
        st.add_cohort(2, 25, 7);
        st.add_cohort(3, 10, 5);
        CHECK(cir_mtd_select(st, 0.3) == 2);
    }
    {
        // Rates (0.2, 0.4, 0.3) with weights (2, 2, 4): levels 2 and 3 pool to
        // (x = 8/9, y = 1/3); the curve from (1/3, 0.2) crosses 0.3 at 3/4 of
        // the way, dose 0.75, nearest level 2.
        TrialState st(DoseGrid(3), 0.3);
        st.add_cohort(1, 10, 2);
        st.add_cohort(2, 10, 4);
        st.add_cohort(3, 20, 6);
        CHECK(cir_target_dose(st, 0.3) == Approx(0.75));
        CHECK(cir_mtd_select(st, 0.3) == 2);
    }
    {
        TrialState st(DoseGrid(5), 0.3);
        st.add_cohort(4, 3, 3);
        CHECK(cir_mtd_select(st, 0.3) == 4);
    }
    {
        // Target below every fitted value: lowest observed dose.
        TrialState st(DoseGrid(5), 0.3);
        st.add_cohort(3, 2, 2);
        st.add_cohort(4, 2, 2);
        CHECK(cir_mtd_select(st, 0.3) == 3);
    }
    TrialState empty(DoseGrid(3), 0.3);
    CHECK_THROWS_AS(cir_mtd_select(empty, 0.3), Error);
}
