#include <gtest/gtest.h>

#include <bsvar/geometry.hpp>

#include <cmath>
#include <random>

using namespace bsvar;

TEST(Geometry, LapseValues)
{
    EXPECT_EQ(lapse({0.0, 1.0}, 5.0), 1.0);
    EXPECT_DOUBLE_EQ(lapse({1.0, 4.0}, 4.0), 0.5);
    EXPECT_LT(lapse({1.0, 4.0}, 2.0 + 1e-9), 1e-8);
    EXPECT_THROW(lapse({1.0, 4.0}, 2.0), std::domain_error);
    EXPECT_THROW(lapse({1.0, 4.0}, 1.5), std::domain_error);
}

TEST(Geometry, EscapeVelocity)
{
    EXPECT_EQ(escape_velocity({0.0, 1.0}, 3.0), 0.0);
    EXPECT_DOUBLE_EQ(escape_velocity({1.0, 4.0}, 8.0), 0.5);
    double near = escape_velocity({1.0, 4.0}, 2.0 + 1e-9);
    EXPECT_LT(near, 1.0);
    EXPECT_GT(near, 1.0 - 1e-9);
}

TEST(Geometry, ConservedQuantity)
{
    Background bg{1.0, 4.0};
    EXPECT_NEAR(conserved_c(bg, 8.0, 0.5), 0.0, 1e-16);
    EXPECT_DOUBLE_EQ(conserved_c(bg, 4.0, 0.0), -1.0);
    EXPECT_DOUBLE_EQ(conserved_c({0.0, 1.0}, 3.0, 0.3), 0.09);
    EXPECT_THROW(conserved_c(bg, 4.0, 1.0), std::domain_error);
    // range (-2M/(r-2M), 1)
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ur(2.5, 50.0), uu(-0.999, 0.999);
    for (int i = 0; i < 1000; ++i) {
        double r = ur(rng), u = uu(rng);
        double c = conserved_c(bg, r, u);
        EXPECT_GE(c, min_conserved_c(bg, r) - 1e-15);
        EXPECT_LT(c, 1.0);
        EXPECT_NEAR(speed_squared_on_level(bg, c, r), u * u, 1e-13);
    }
}

TEST(Geometry, AsymptoticVelocity)
{
    EXPECT_EQ(asymptotic_velocity(0.0), 0.0);
    EXPECT_DOUBLE_EQ(asymptotic_velocity(0.25), 0.5);
    EXPECT_THROW(asymptotic_velocity(-0.1), std::domain_error);
    EXPECT_THROW(asymptotic_velocity(1.0), std::domain_error);
}

TEST(Geometry, Monotonicity)
{
    Background bg{0.7, 3.0};
    double prev_l = 0.0, prev_e = 1.0;
    for (double r = 1.41; r < 100.0; r *= 1.05) {
        double l = lapse(bg, r), e = escape_velocity(bg, r);
        EXPECT_GT(l, prev_l);
        EXPECT_LT(e, prev_e);
        prev_l = l;
        prev_e = e;
    }
}

TEST(Geometry, FlatLimit)
{
    Background flat{0.0, 0.5};
    for (double r : {0.1, 1.0, 17.0}) {
        EXPECT_EQ(lapse(flat, r), 1.0);
        EXPECT_EQ(escape_velocity(flat, r), 0.0);
        EXPECT_EQ(conserved_c(flat, r, -0.4), 0.16000000000000003);
    }
}

TEST(Geometry, BackgroundValidation)
{
    EXPECT_THROW(make_background(1.0, 2.0), config_error);
    EXPECT_THROW(make_background(-1.0, 4.0), config_error);
    EXPECT_NO_THROW(make_background(1.0, 4.0));
}

TEST(Geometry, StaticProfile)
{
    Background bg{1.0, 4.0};
    // level C = p^2 reaches p at infinity and is C-invariant at every radius
    for (double r : {4.0, 10.0, 1e3}) {
        double u = static_velocity(bg, 0.5, r);
        EXPECT_NEAR(conserved_c(bg, r, u), 0.25, 1e-14);
    }
    EXPECT_NEAR(static_velocity(bg, 0.5, 1e12), 0.5, 1e-9);
}
