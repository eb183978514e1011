#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace testing_support;

TEST(Coeffs, PeriodicAtOrigin)
{
    // sin terms vanish and cos terms equal 1 at the origin.
    const double expected = (1.0 + 2 * (1.1 / 2.1) + 2 * (2.1 / 1.1) + 1.0) / 6.0;
    EXPECT_NEAR(periodic_multiscale_A({0.0, 0.0}), expected, 1e-14);
}

TEST(Coeffs, PeriodicIsPositiveOnGrid)
{
    for (int j = 0; j <= 64; ++j)
        for (int i = 0; i <= 64; ++i)
            EXPECT_GT(periodic_multiscale_A({i / 64.0, j / 64.0}), 0.0);
}

TEST(Coeffs, HighContrastInclusions)
{
    const double M = 100.0;
    EXPECT_EQ(high_contrast_A({0.2, 0.2}, M), M);
    EXPECT_EQ(high_contrast_A({0.8, 0.5 + 0.01}, M), M);
    EXPECT_EQ(high_contrast_A({0.5 + 0.02, 0.5}, M), 1.0);
    EXPECT_EQ(high_contrast_A({0.1, 0.1}, M), 1.0);
    EXPECT_EQ(high_contrast_A({0.9, 0.9}, M), 1.0);
    EXPECT_THROW(high_contrast_A({0.5, 0.5}, 0.5), std::invalid_argument);
}

TEST(Coeffs, HighContrastInclusionCount)
{
    // Count lattice points that carry contrast on a fine sampling grid.
    int hits = 0;
    const int n = 1000;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            if (high_contrast_A({double(i) / n, double(j) / n}, 2.0) == 2.0)
                ++hits;
    // 49 discs of radius 0.015 sampled at spacing 1e-3: about 49 * pi * 15^2.
    const double expected = 49 * std::numbers::pi * 225.0;
    EXPECT_NEAR(hits, expected, 0.05 * expected);
}

TEST(Coeffs, RandomFieldMatchesIndependentDraws)
{
    const std::uint64_t seed = 7;
    const RandomField field(seed);
    std::mt19937_64 gen(seed);
    std::vector<double> z;
    while (z.size() < 129u * 129u) {
        const std::uint64_t a = gen(), b = gen();
        const double u1 = (double(a >> 11) + 1.0) / 9007199254740992.0;
        const double u2 = double(b >> 11) / 9007199254740992.0;
        z.push_back(std::sqrt(-2 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2));
        z.push_back(std::sqrt(-2 * std::log(u1)) * std::sin(2 * std::numbers::pi * u2));
    }
    for (int j : {0, 1, 64, 128})
        for (int i : {0, 5, 127, 128}) {
            EXPECT_DOUBLE_EQ(field.node_value(i, j), z[std::size_t(j) * 129 + i]);
            EXPECT_NEAR(field({i / 128.0, j / 128.0}), z[std::size_t(j) * 129 + i], 1e-12);
        }
}

TEST(Coeffs, RandomFieldIsBilinearBetweenNodes)
{
    const RandomField f(3);
    const double x = (10 + 0.25) / 128.0, y = (20 + 0.5) / 128.0;
    const double v = 0.75 * 0.5 * f.node_value(10, 20) + 0.25 * 0.5 * f.node_value(11, 20) +
                     0.75 * 0.5 * f.node_value(10, 21) + 0.25 * 0.5 * f.node_value(11, 21);
    EXPECT_NEAR(f({x, y}), v, 1e-13);
}

TEST(Coeffs, RandomFieldStatistics)
{
    const RandomField f(11);
    double mean = 0, var = 0;
    const int n = 129 * 129;
    for (int j = 0; j <= 128; ++j)
        for (int i = 0; i <= 128; ++i)
            mean += f.node_value(i, j);
    mean /= n;
    for (int j = 0; j <= 128; ++j)
        for (int i = 0; i <= 128; ++i)
            var += (f.node_value(i, j) - mean) * (f.node_value(i, j) - mean);
    var /= n - 1;
    EXPECT_NEAR(mean, 0.0, 0.05);
    EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Coeffs, RandomFieldSeedsDiffer)
{
    const RandomField a(1), b(2), c(1);
    EXPECT_NE(a.node_value(3, 3), b.node_value(3, 3));
    EXPECT_EQ(a.node_value(3, 3), c.node_value(3, 3));
    EXPECT_EQ(a({1.0, 1.0}), a.node_value(128, 128));
}

TEST(Coeffs, HelmholtzScenario)
{
    const double k = 16;
    const ProblemSpec s = make_scenario("helmholtz_rough", helmholtz_params(k));
    EXPECT_EQ(s.layout, BoundaryLayout::mixed);
    EXPECT_EQ(s.scalar_kind, ScalarKind::complex);
    for (double x : {0.0, 0.3, 0.77, 1.0})
        for (double y : {0.0, 0.5, 0.91}) {
            EXPECT_GE(s.A({x, y}), 0.5);
            EXPECT_LE(s.V({x, y}), -0.5 * k * k);
            EXPECT_EQ(s.beta({x, y}).real(), 0.0);
            EXPECT_GE(s.beta({x, y}).imag(), 0.5 * k);
        }
    EXPECT_DOUBLE_EQ(s.f({1.0, 1.0}), 1.0);
    EXPECT_DOUBLE_EQ(s.f({0.5, 0.0}), 1.0625);
}

TEST(Coeffs, ScenarioErrors)
{
    EXPECT_THROW(make_scenario("helmholtz_rough"), std::invalid_argument);
    EXPECT_THROW(make_scenario("helmholtz_rough", helmholtz_params(-1)), std::invalid_argument);
    EXPECT_THROW(make_scenario("nope"), std::invalid_argument);
    ScenarioParams p;
    p.contrast = 0.0;
    EXPECT_THROW(make_scenario("high_contrast", p), std::invalid_argument);
    p = {};
    p.A = -1.0;
    EXPECT_THROW(make_scenario("custom", p), std::invalid_argument);
}

TEST(Coeffs, RealScenarios)
{
    const ProblemSpec per = make_scenario("periodic");
    EXPECT_EQ(per.scalar_kind, ScalarKind::real);
    EXPECT_EQ(per.f({0.3, 0.3}), -1.0);
    EXPECT_EQ(per.V({0.3, 0.3}), 0.0);
    ScenarioParams p;
    p.contrast = 64;
    const ProblemSpec hc = make_scenario("high_contrast", p);
    EXPECT_EQ(hc.A({0.4, 0.6}), 64.0);
    EXPECT_EQ(hc.layout, BoundaryLayout::all_dirichlet);
}
