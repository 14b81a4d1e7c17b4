/// @file test_grid.cpp
/// @brief Grids, grid functions, discrete jets, matrix order, CSV.
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace nlcomp;
using nlcomp::testing::Gen;

namespace {

Grid<1> line(double lo, double hi, double h, double halo = 0.0) {
    return Grid<1>::make({Interval{lo, hi}}, h, halo);
}

}  // namespace

TEST(MakeGrid, UnitIntervalQuarterSpacing) {
    const auto g = line(0, 1, 0.25, 1);
    const auto nodes = g.interior_nodes();
    ASSERT_EQ(nodes.size(), 3u);
    EXPECT_DOUBLE_EQ(g.coord(nodes[0])[0], 0.25);
    EXPECT_DOUBLE_EQ(g.coord(nodes[1])[0], 0.5);
    EXPECT_DOUBLE_EQ(g.coord(nodes[2])[0], 0.75);
    EXPECT_EQ(g.halo_layers(), 4);
    EXPECT_DOUBLE_EQ(g.coord({-4})[0], -1.0);
    EXPECT_DOUBLE_EQ(g.coord({8})[0], 2.0);
    EXPECT_TRUE(g.contains({-4}));
    EXPECT_FALSE(g.contains({-5}));
    EXPECT_FALSE(g.contains({9}));
    EXPECT_EQ(g.node_count(), 13u);
}

TEST(MakeGrid, UnitSquareHalfSpacingHasOneInteriorNode) {
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.5, 0.0);
    const auto nodes = g.interior_nodes();
    ASSERT_EQ(nodes.size(), 1u);
    EXPECT_DOUBLE_EQ(g.coord(nodes[0])[0], 0.5);
    EXPECT_DOUBLE_EQ(g.coord(nodes[0])[1], 0.5);
    EXPECT_EQ(g.node_count(), 9u);
}

TEST(MakeGrid, RejectsIncommensurateSpacing) {
    try {
        line(0, 1, 0.3);
        FAIL() << "expected rejection";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("axis 0"), std::string::npos);
    }
}

TEST(MakeGrid, RejectsNonPositiveSpacingAndHalo) {
    EXPECT_THROW(line(0, 1, 0.0), InvalidArgument);
    EXPECT_THROW(line(0, 1, -0.1), InvalidArgument);
    EXPECT_THROW(line(0, 1, 0.1, -1.0), InvalidArgument);
    EXPECT_THROW(line(0, 1, 1.0), InvalidArgument);  // no interior node
}

TEST(MakeGrid, BoundaryAndClosureClassification) {
    const auto g = line(0, 1, 0.25, 0.5);
    EXPECT_TRUE(g.on_boundary({0}));
    EXPECT_TRUE(g.on_boundary({4}));
    EXPECT_FALSE(g.on_boundary({2}));
    EXPECT_FALSE(g.in_closure({-1}));
    EXPECT_DOUBLE_EQ(g.boundary_distance({1}), 0.25);
    EXPECT_DOUBLE_EQ(g.boundary_distance({2}), 0.5);
    EXPECT_EQ(g.index_of({0.75})[0], 3);
    EXPECT_THROW(g.index_of({0.3}), InvalidArgument);
}

TEST(MakeGrid, FlatOrderIsLexicographic) {
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 2}}, 0.5, 0.5);
    Index<2> prev = g.unflatten(0);
    for (std::size_t f = 1; f < g.node_count(); ++f) {
        const auto k = g.unflatten(f);
        EXPECT_LT(prev, k);
        EXPECT_EQ(g.flat(k), f);
        prev = k;
    }
}

TEST(GridFunction, ExteriorMatchesSampledRuleBitForBit) {
    const auto g = line(0, 1, 0.1, 0.5);
    auto ext = [](const Vec<1>& x) { return std::sin(7.0 * x[0]) + 0.1; };
    const auto u = GridFunction<1>::sample(g, [](const Vec<1>&) { return 3.0; }, ext);
    for (std::size_t f = 0; f < g.node_count(); ++f) {
        const auto k = g.unflatten(f);
        if (g.is_interior(k))
            EXPECT_EQ(u[k], 3.0);
        else
            EXPECT_EQ(u[k], ext(g.coord(k)));
    }
    const auto v = u.with_interior(std::vector<double>(g.interior_count(), -1.0));
    for (std::size_t f = 0; f < g.node_count(); ++f) {
        const auto k = g.unflatten(f);
        EXPECT_EQ(v[k], g.is_interior(k) ? -1.0 : u[k]);
    }
}

TEST(GridFunction, RejectsNonFiniteValues) {
    const auto g = line(0, 1, 0.25);
    EXPECT_THROW(GridFunction<1>::sample(g, [](const Vec<1>& x) { return 1.0 / (x[0] - 0.5); }),
                 InvalidArgument);
    EXPECT_THROW(GridFunction<1>::from_values(g, std::vector<double>(3, 0.0)), InvalidArgument);
    const auto u = GridFunction<1>::sample(g, [](const Vec<1>&) { return 0.0; });
    EXPECT_THROW(u.at({7}), ReachError);
}

TEST(DiscreteJet, QuadraticAtOrigin) {
    const auto g = line(-1, 1, 0.1);
    const auto u = GridFunction<1>::sample(g, [](const Vec<1>& x) { return x[0] * x[0]; });
    const auto jet = discrete_jet<1>(u, g.index_of({0.0}));
    EXPECT_NEAR(jet.p[0], 0.0, 1e-12);
    EXPECT_NEAR(jet.X[0][0], 2.0, 1e-10);
}

TEST(DiscreteJet, ConstantHasZeroJet) {
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.25, 0.0);
    const auto u = GridFunction<2>::sample(g, [](const Vec<2>&) { return 5.0; });
    for (const auto& k : g.interior_nodes()) {
        const auto jet = discrete_jet<2>(u, k);
        EXPECT_EQ(jet.p[0], 0.0);
        EXPECT_EQ(jet.p[1], 0.0);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) EXPECT_EQ(jet.X[i][j], 0.0);
    }
}

TEST(DiscreteJet, CubicTaylorCorrection) {
    // central difference of x^3: 3x^2 + h^2; second difference: 6x
    const auto g = line(0, 1, 0.1);
    const auto u = GridFunction<1>::sample(g, [](const Vec<1>& x) { return x[0] * x[0] * x[0]; });
    const auto jet = discrete_jet<1>(u, g.index_of({0.5}));
    EXPECT_NEAR(jet.p[0], 0.76, 1e-12);
    EXPECT_NEAR(jet.X[0][0], 3.0, 1e-10);
}

TEST(DiscreteJet, MissingNeighborNamesTheNode) {
    const auto g = line(0, 1, 0.25);
    const auto u = GridFunction<1>::sample(g, [](const Vec<1>&) { return 0.0; });
    try {
        discrete_jet<1>(u, {0});
        FAIL() << "expected rejection";
    } catch (const ReachError& e) {
        EXPECT_NE(std::string(e.what()).find("(0)"), std::string::npos);
    }
}

TEST(DiscreteJet, SymmetricHessian) {
    Gen gen(11);
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.1, 0.1);
    const auto u = gen.noise<2>(g, 1.0);
    for (const auto& k : g.interior_nodes()) {
        const auto jet = discrete_jet<2>(u, k);
        EXPECT_EQ(jet.X[0][1], jet.X[1][0]);
    }
}

TEST(DiscreteJetProperty, LinearInU) {
    Gen gen(101);
    for (int trial = 0; trial < 25; ++trial) {
        const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.125, 0.0);
        const auto u = gen.noise<2>(g, 2.0);
        const auto w = gen.noise<2>(g, 2.0);
        const double a = gen.uniform(-3, 3), b = gen.uniform(-3, 3);
        std::vector<double> mix(g.node_count());
        for (std::size_t f = 0; f < mix.size(); ++f) mix[f] = a * u.values()[f] + b * w.values()[f];
        const auto m = GridFunction<2>::from_values(g, mix);
        for (const auto& k : g.interior_nodes()) {
            const auto ju = discrete_jet<2>(u, k), jw = discrete_jet<2>(w, k), jm = discrete_jet<2>(m, k);
            for (int i = 0; i < 2; ++i) {
                const double want = a * ju.p[i] + b * jw.p[i];
                const double scale = std::abs(a * ju.p[i]) + std::abs(b * jw.p[i]) + 1e-300;
                EXPECT_LE(std::abs(jm.p[i] - want), 1e-12 * scale);
                for (int j = 0; j < 2; ++j) {
                    const double wantX = a * ju.X[i][j] + b * jw.X[i][j];
                    const double scaleX = std::abs(a * ju.X[i][j]) + std::abs(b * jw.X[i][j]) + 1e-300;
                    EXPECT_LE(std::abs(jm.X[i][j] - wantX), 1e-12 * scaleX);
                }
            }
        }
    }
}

TEST(DiscreteJetProperty, ReproducesQuadraticsExactly) {
    Gen gen(202);
    for (int trial = 0; trial < 30; ++trial) {
        const double h = std::vector<double>{0.5, 0.25, 0.125, 0.1, 0.05}[trial % 5];
        const auto g = Grid<2>::make({Interval{-1, 1}, Interval{-1, 1}}, h, 0.0);
        const auto A = gen.symmetric<2>(-2, 2);
        const auto b = gen.vec<2>(-2, 2);
        const double c = gen.uniform(-1, 1);
        const auto u = GridFunction<2>::sample(g, [&](const Vec<2>& x) {
            return 0.5 * quadratic_form<2>(A, x) + dot<2>(b, x) + c;
        });
        for (const auto& k : g.interior_nodes()) {
            const auto x = g.coord(k);
            const auto jet = discrete_jet<2>(u, k);
            for (int i = 0; i < 2; ++i) {
                const double grad = A[i][0] * x[0] + A[i][1] * x[1] + b[i];
                EXPECT_NEAR(jet.p[i], grad, 1e-10);
                for (int j = 0; j < 2; ++j) EXPECT_NEAR(jet.X[i][j], A[i][j], 1e-10);
            }
        }
    }
}

TEST(MatrixOrder, DiagonalDominance) {
    const Mat<2> X{{{1, 0}, {0, 1}}}, Y{{{2, 0}, {0, 3}}};
    EXPECT_TRUE(is_matrix_ordered<2>(X, Y, 0.0));
}

TEST(MatrixOrder, Reflexive) {
    const Mat<2> X{{{0.3, -1.2}, {-1.2, 4.0}}};
    EXPECT_TRUE(is_matrix_ordered<2>(X, X, 0.0));
}

TEST(MatrixOrder, IndefiniteDifferenceFails) {
    const Mat<2> X{{{0, 2}, {2, 0}}}, Y{{{1, 0}, {0, 1}}};
    EXPECT_FALSE(is_matrix_ordered<2>(X, Y, 1e-9));
    EXPECT_NEAR(min_eigenvalue<2>(subtracted<2>(Y, X)), -1.0, 1e-15);
}

TEST(MatrixOrder, DimensionMismatchIsRejected) {
    const std::vector<std::vector<double>> a{{1, 0}, {0, 1}}, b{{1}};
    EXPECT_THROW(is_matrix_ordered(a, b, 0.0), InvalidArgument);
    EXPECT_TRUE(is_matrix_ordered(b, b, 0.0));
    EXPECT_FALSE(is_matrix_ordered({{0, 2}, {2, 0}}, a, 1e-9));
}

/// Oracle: <(Y - X)v, v> >= -tol over many unit vectors.
TEST(MatrixOrderProperty, AgreesWithDirectionalOracle) {
    Gen gen(303);
    for (int trial = 0; trial < 200; ++trial) {
        const auto X = gen.symmetric<2>(-2, 2);
        const auto Y = gen.symmetric<2>(-2, 2);
        double worst = 1e300;
        for (int s = 0; s < 20000; ++s) {
            const double t = 2.0 * M_PI * s / 20000.0;
            const Vec<2> v{std::cos(t), std::sin(t)};
            worst = std::min(worst, quadratic_form<2>(subtracted<2>(Y, X), v));
        }
        EXPECT_NEAR(min_eigenvalue<2>(subtracted<2>(Y, X)), worst, 1e-6);
        if (std::abs(worst) > 1e-6) {
            EXPECT_EQ(is_matrix_ordered<2>(X, Y, 0.0), worst >= 0.0);
        }
    }
}

TEST(MatrixOrderProperty, PartialOrderOnPsdTriples) {
    Gen gen(404);
    for (int trial = 0; trial < 500; ++trial) {
        const auto X = gen.symmetric<2>(-3, 3);
        const auto Y = added<2>(X, gen.psd<2>(1.0));
        const auto Z = added<2>(Y, gen.psd<2>(1.0));
        EXPECT_TRUE(is_matrix_ordered<2>(X, X, 1e-12));
        EXPECT_TRUE(is_matrix_ordered<2>(X, Y, 1e-12));
        EXPECT_TRUE(is_matrix_ordered<2>(Y, Z, 1e-12));
        EXPECT_TRUE(is_matrix_ordered<2>(X, Z, 1e-12));
    }
}

TEST(Csv, RoundTripIsBitExact) {
    Gen gen(505);
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.25, 0.25);
    const auto u = gen.noise<2>(g, 10.0);
    std::stringstream ss;
    write_csv<2>(ss, u);
    const auto rows = read_csv<2>(ss);
    ASSERT_EQ(rows.size(), g.node_count());
    for (std::size_t f = 0; f < rows.size(); ++f) {
        const auto k = g.unflatten(f);
        EXPECT_EQ(rows[f].value, u.values()[f]);
        EXPECT_EQ(rows[f].x[0], g.coord(k)[0]);
        EXPECT_EQ(rows[f].x[1], g.coord(k)[1]);
        EXPECT_EQ(rows[f].interior, g.is_interior(k));
    }
}

TEST(Csv, HeaderNamesColumns) {
    const auto g = line(0, 1, 0.5, 0.0);
    const auto u = GridFunction<1>::sample(g, [](const Vec<1>& x) { return x[0]; });
    std::stringstream ss;
    write_csv<1>(ss, u);
    EXPECT_EQ(ss.str(), "x1,value,interior\n0,0,0\n0.5,0.5,1\n1,1,0\n");
}
