/// @file test_solver.cpp
/// @brief Scheme residual, Dirichlet solver, comparison, convergence tables.
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace nlcomp;
using nlcomp::testing::Gen;

namespace {

Grid<1> line(double lo, double hi, double h, double halo) {
    return Grid<1>::make({Interval{lo, hi}}, h, halo);
}

template <typename F>
GridFunction<1> sample1(const Grid<1>& g, F f) {
    return GridFunction<1>::sample(g, [&](const Vec<1>& x) { return f(x[0]); });
}

LevyQuadrature<1> atoms1(std::initializer_list<std::pair<double, double>> list) {
    std::vector<Atom<1>> atoms;
    for (const auto& [z, w] : list) atoms.push_back({{z}, w});
    return LevyQuadrature<1>::from_atoms(atoms);
}

template <int Dim>
ExteriorData<Dim> constant_data(double c) {
    return [c](const Vec<Dim>&) { return c; };
}

/// lambda, isotropic diffusion, and drift satisfying a >= h/2 |b|_inf.
template <int Dim>
FSpec<Dim> random_monotone_fspec(Gen& gen, double h, std::function<double(const Vec<Dim>&)> f) {
    const auto drift = gen.vec<Dim>(-1, 1);
    double bmax = 0.0;
    for (double b : drift) bmax = std::max(bmax, std::abs(b));
    const double a = 0.5 * h * bmax + gen.uniform(0.0, 0.5);
    return linear_fspec<Dim>(gen.uniform(0.5, 2.0), a, drift, std::move(f));
}

template <int Dim>
LevyQuadrature<Dim> random_measure(Gen& gen, double h, bool with_tail) {
    auto atoms = gen.symmetric_lattice_atoms<Dim>(h, 3, 3, 1.0);
    if (with_tail) {
        Vec<Dim> z{};
        z[0] = 4.0 * h;
        if constexpr (Dim == 2) z[1] = -2.0 * h;
        atoms.push_back({z, gen.uniform(0.1, 1.0)});
    }
    return LevyQuadrature<Dim>::from_atoms(atoms);
}

}  // namespace

TEST(SchemeResidual, ZeroFunctionZeroSource) {
    const auto g = line(0, 1, 0.1, 2.0);
    const auto u = sample1(g, [](double) { return 0.0; });
    const auto F = linear_fspec<1>(1.0, 1.0, {0.5});
    const auto q = atoms1({{2.0, 1.0}, {0.3, 0.5}});
    for (const auto& k : g.interior_nodes()) EXPECT_EQ(scheme_residual<1>(u, k, F, q), 0.0);
}

TEST(SchemeResidual, ManufacturedSquareWithTailAtom) {
    const auto g = line(0, 1, 0.1, 2.0);
    const auto u = sample1(g, [](double x) { return x * x; });
    const auto F = linear_fspec<1>(1.0, 1.0, {0.0}, [](const Vec<1>& x) {
        return x[0] * x[0] - 2.0 - (4.0 * x[0] + 4.0);
    });
    const auto q = atoms1({{2.0, 1.0}});
    for (const auto& k : g.interior_nodes()) EXPECT_NEAR(scheme_residual<1>(u, k, F, q), 0.0, 1e-12);
}

TEST(SchemeResidual, ConstantOneGivesOne) {
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.1, 0.5);
    const auto u = GridFunction<2>::sample(g, [](const Vec<2>&) { return 1.0; });
    const auto F = linear_fspec<2>(1.0, 0.0, {0.0, 0.0});
    const auto q = LevyQuadrature<2>::from_atoms({{{0.3, 0.1}, 1.0}, {{-0.2, 0.4}, 0.5}});
    for (const auto& k : g.interior_nodes()) EXPECT_NEAR(scheme_residual<2>(u, k, F, q), 1.0, 1e-15);
}

TEST(SchemeResidual, RejectsExteriorNodesAndShortHalo) {
    const auto g = line(0, 1, 0.1, 0.5);
    const auto u = sample1(g, [](double) { return 0.0; });
    const auto F = linear_fspec<1>(1.0, 0.0, {0.0});
    EXPECT_THROW(scheme_residual<1>(u, {0}, F, atoms1({{0.1, 1.0}})), InvalidArgument);
    EXPECT_THROW(scheme_residual<1>(u, {5}, F, atoms1({{2.0, 1.0}})), ReachError);
}

TEST(SolveDirichlet, ZeroDataZeroSolution) {
    const auto g = line(0, 1, 0.05, 2.0);
    const auto F = linear_fspec<1>(1.0, 1.0, {0.0});
    const auto sol = solve_dirichlet<1>(F, constant_data<1>(0.0), atoms1({{2.0, 1.0}}), g, {});
    EXPECT_LE(sol.iterations, 2);
    for (double v : sol.u.values()) EXPECT_EQ(v, 0.0);
}

TEST(SolveDirichlet, ConstantSolvesWithMatchingSource) {
    const auto g = line(0, 1, 0.05, 2.0);
    const auto F = linear_fspec<1>(1.0, 0.0, {0.0}, [](const Vec<1>&) { return 1.0; });
    const auto sol = solve_dirichlet<1>(F, constant_data<1>(1.0), atoms1({{2.0, 1.0}}), g, {});
    EXPECT_EQ(sol.iterations, 1);
    for (const auto& k : g.interior_nodes()) EXPECT_EQ(sol.u[k], 1.0);
}

TEST(SolveDirichlet, ManufacturedSquareIsRecovered) {
    const auto g = line(0, 1, 0.05, 2.0);
    const auto F = linear_fspec<1>(1.0, 1.0, {0.0}, [](const Vec<1>& x) {
        return x[0] * x[0] - 2.0 - (4.0 * x[0] + 4.0);
    });
    const auto sol = solve_dirichlet<1>(F, [](const Vec<1>& x) { return x[0] * x[0]; },
                                        atoms1({{2.0, 1.0}}), g, {});
    for (const auto& k : g.interior_nodes()) {
        const double x = g.coord(k)[0];
        EXPECT_NEAR(sol.u[k], x * x, 1e-8);
    }
}

TEST(SolveDirichlet, ReportsNonConvergenceAndBadInput) {
    const auto g = line(0, 1, 0.01, 0.1);
    const auto F = linear_fspec<1>(1.0, 1.0, {0.0}, [](const Vec<1>&) { return 1.0; });
    const auto q = atoms1({{0.05, 1.0}});
    SolveParams few;
    few.max_iters = 3;
    try {
        solve_dirichlet<1>(F, constant_data<1>(0.0), q, g, few);
        FAIL() << "expected non-convergence";
    } catch (const ConvergenceFailure& e) {
        EXPECT_GT(e.last_residual(), few.stop_tol);
    }
    EXPECT_THROW(solve_dirichlet<1>(F, constant_data<1>(0.0), atoms1({{0.5, 1.0}}), g, {}),
                 ReachError);
    auto zero = F;
    zero.lambda = 0.0;
    EXPECT_THROW(solve_dirichlet<1>(zero, constant_data<1>(0.0), q, g, {}), InvalidArgument);
    SolveParams bad;
    bad.damping = 1.5;
    EXPECT_THROW(solve_dirichlet<1>(F, constant_data<1>(0.0), q, g, bad), InvalidArgument);
    bad = {};
    bad.stop_tol = 0.0;
    EXPECT_THROW(solve_dirichlet<1>(F, constant_data<1>(0.0), q, g, bad), InvalidArgument);
    EXPECT_THROW(solve_dirichlet<1>(F, ExteriorData<1>{}, q, g, {}), InvalidArgument);
}

TEST(SolveDirichlet, ParsesSchemeNames) {
    EXPECT_EQ(parse_scheme("picard"), Scheme::picard);
    EXPECT_EQ(parse_scheme("flipped_nonlocal"), Scheme::flipped_nonlocal);
    EXPECT_STREQ(to_string(Scheme::flipped_nonlocal), "flipped_nonlocal");
    EXPECT_THROW(parse_scheme("newton"), InvalidArgument);
}

TEST(Comparison, EqualDataGivesZeroViolation) {
    const auto g = line(0, 1, 0.05, 0.5);
    const auto F = linear_fspec<1>(1.0, 0.5, {0.2}, [](const Vec<1>& x) { return std::sin(3 * x[0]); });
    const auto q = atoms1({{0.1, 1.0}, {-0.1, 1.0}, {0.5, 0.3}});
    const auto g1 = [](const Vec<1>& x) { return x[0]; };
    const auto res = comparison_experiment<1>(F, q, g, g1, g1, {});
    EXPECT_EQ(res.violation, 0.0);
    EXPECT_TRUE(res.pass);
}

TEST(Comparison, OrderedConstantsStayOrdered) {
    const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.1, 0.4);
    const auto F = linear_fspec<2>(1.0, 0.2, {0.0, 0.0}, [](const Vec<2>& x) { return x[0] - x[1]; });
    const auto q = LevyQuadrature<2>::from_atoms({{{0.1, 0.0}, 1.0}, {{-0.1, 0.0}, 1.0}, {{0.3, 0.2}, 0.5}});
    const auto res = comparison_experiment<2>(F, q, g, constant_data<2>(0.0), constant_data<2>(1.0), {});
    EXPECT_TRUE(res.pass);
    EXPECT_LT(res.violation, 0.0);
    EXPECT_GT(res.iterations_1, 1);
}

TEST(Comparison, ShiftedDataOrdersBothWays) {
    const auto g = line(0, 1, 0.05, 1.0);
    const auto F = linear_fspec<1>(2.0, 0.1, {0.0});
    const auto q = atoms1({{0.05, 1.0}, {-0.05, 1.0}, {1.0, 0.4}});
    const auto g1 = [](const Vec<1>& x) { return std::cos(x[0]); };
    const auto g2 = [](const Vec<1>& x) { return std::cos(x[0]) + 0.3; };
    const auto up = comparison_experiment<1>(F, q, g, g1, g2, {});
    EXPECT_TRUE(up.pass);
    const auto s1 = solve_dirichlet<1>(F, g1, q, g, {});
    const auto s2 = solve_dirichlet<1>(F, g2, q, g, {});
    for (const auto& k : g.interior_nodes()) EXPECT_LE(s2.u[k], s1.u[k] + 0.3 + 1e-8);
    EXPECT_THROW(comparison_experiment<1>(F, q, g, g2, g1, {}), InvalidArgument);
}

TEST(Comparison, FlippedNonlocalSignBreaksOrdering) {
    const auto g = line(0, 1, 0.1, 2.0);
    const auto F = linear_fspec<1>(1.0, 0.0, {0.0});
    const auto q = atoms1({{2.0, 0.5}});
    SolveParams p;
    p.scheme = Scheme::flipped_nonlocal;
    const auto res = comparison_experiment<1>(F, q, g, constant_data<1>(0.0), constant_data<1>(1.0), p);
    // the flipped fixed point is u = -W g / (lambda - W) = -1 for g = 1
    EXPECT_NEAR(res.violation, 1.0, 1e-8);
    EXPECT_FALSE(res.pass);
    EXPECT_TRUE(comparison_experiment<1>(F, q, g, constant_data<1>(0.0), constant_data<1>(1.0), {}).pass);
}

TEST(SolverProperty, PicardStepPreservesOrder) {
    Gen gen(41);
    for (int trial = 0; trial < 30; ++trial) {
        const double h = 0.1;
        const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, h, 0.5);
        const auto F = random_monotone_fspec<2>(gen, h, [](const Vec<2>& x) { return x[0]; });
        const auto q = random_measure<2>(gen, h, trial % 2 == 0);
        const auto u = gen.noise<2>(g, 1.0);
        std::vector<double> wv(u.values().begin(), u.values().end());
        for (auto& x : wv) x += gen.uniform(0.0, 0.5);
        const auto w = GridFunction<2>::from_values(g, wv);
        SolveParams p;
        p.damping = gen.uniform(0.1, 1.0);
        const auto a = picard_step<2>(u, F, q, p);
        const auto b = picard_step<2>(w, F, q, p);
        for (std::size_t f = 0; f < g.node_count(); ++f) EXPECT_LE(a.values()[f], b.values()[f] + 1e-12);
    }
}

TEST(SolverProperty, ConstantConsistency) {
    Gen gen(42);
    for (int trial = 0; trial < 10; ++trial) {
        const double c = gen.uniform(-3, 3), lambda = gen.uniform(0.2, 3);
        const auto g = Grid<2>::make({Interval{0, 1}, Interval{0, 1}}, 0.1, 0.5);
        const auto F = linear_fspec<2>(lambda, gen.uniform(0, 1), gen.vec<2>(-1, 1),
                                       [lambda, c](const Vec<2>&) { return lambda * c; });
        const auto q = random_measure<2>(gen, 0.1, true);
        const auto sol = solve_dirichlet<2>(F, constant_data<2>(c), q, g, {});
        EXPECT_EQ(sol.iterations, 1);
        for (const auto& k : g.interior_nodes()) EXPECT_NEAR(sol.u[k], c, 1e-10 / lambda);
    }
}

TEST(SolverProperty, ReturnedSolutionsAreCertified) {
    Gen gen(43);
    for (int trial = 0; trial < 10; ++trial) {
        const double h = 0.05;
        const auto g = line(0, 1, h, 0.5);
        const double s = gen.uniform(1, 5);
        const auto F = random_monotone_fspec<1>(gen, h, [s](const Vec<1>& x) { return std::sin(s * x[0]); });
        const auto q = random_measure<1>(gen, h, true);
        SolveParams p;
        p.stop_tol = 1e-9;
        const auto sol = solve_dirichlet<1>(F, [s](const Vec<1>& x) { return std::cos(s * x[0]); }, q, g, p);
        EXPECT_LE(sol.residual, p.stop_tol);
        for (const auto& k : g.interior_nodes()) EXPECT_LE(std::abs(scheme_residual<1>(sol.u, k, F, q)), p.stop_tol);
    }
}

TEST(SolverProperty, DiscreteComparisonOnRandomTriples) {
    Gen gen(44);
    for (int trial = 0; trial < 12; ++trial) {
        const double h = 0.05;
        const auto g = line(0, 1, h, 0.5);
        const auto F = random_monotone_fspec<1>(gen, h, [](const Vec<1>& x) { return x[0] * x[0]; });
        const auto q = random_measure<1>(gen, h, trial % 3 != 0);
        const auto base = fields::random<1>(gen.seed(), 1.0, 3);
        const auto bump = fields::random<1>(gen.seed(), 0.5, 2);
        const auto g1 = base.value;
        const auto g2 = [base, bump](const Vec<1>& x) { return base.value(x) + std::abs(bump.value(x)); };
        const auto res = comparison_experiment<1>(F, q, g, g1, g2, {});
        EXPECT_TRUE(res.pass) << res.violation;
    }
}

TEST(Convergence, QuadraticIsExactOnLatticeAtoms) {
    const auto q = atoms1({{0.2, 1.0}, {-0.2, 1.0}, {1.0, 0.5}});
    const auto table = convergence_study<1>(fields::quadratic<1>(1, 0, 0), linear_fspec<1>(1.0, 1.0, {0.0}),
                                            q, {Interval{0, 1}}, {0.1, 0.05, 0.025}, {});
    ASSERT_EQ(table.rows.size(), 3u);
    EXPECT_TRUE(std::isnan(table.rows[0].order));
    for (const auto& r : table.rows) EXPECT_LE(r.error, 1e-10);
}

TEST(Convergence, QuarticIsSecondOrder) {
    const auto q = atoms1({{2.0, 1.0}});
    const auto table = convergence_study<1>(fields::quartic<1>(1), linear_fspec<1>(1.0, 1.0, {0.0}), q,
                                            {Interval{0, 1}}, {0.02, 0.01}, {});
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_GE(table.rows[1].order, 1.9);
    EXPECT_LT(table.rows[1].error, table.rows[0].error);
    std::ostringstream os;
    write_csv(os, table);
    EXPECT_EQ(os.str().substr(0, 14), "h,error,order\n");
}

TEST(Convergence, EmptyListEmptyTable) {
    const auto table = convergence_study<1>(fields::quartic<1>(1), linear_fspec<1>(1.0, 1.0, {0.0}),
                                            atoms1({{2.0, 1.0}}), {Interval{0, 1}}, {}, {});
    EXPECT_TRUE(table.rows.empty());
    std::ostringstream os;
    write_csv(os, table);
    EXPECT_EQ(os.str(), "h,error,order\n");
}
