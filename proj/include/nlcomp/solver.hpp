/// @file solver.hpp
/// @brief Damped Jacobi fixed-point solver for the Dirichlet problem
///          F(x, u, Du, D^2u) - I[u](x) = 0 in Omega,   u = g outside Omega,
///        comparison experiments, and manufactured-solution convergence studies.
///
/// One sweep evaluates the scheme residual at every interior node (discrete
/// jets, full nonlocal sum) and updates all nodes at once:
///   u <- u - theta * residual / D,   D = lambda + 2 trace(a(x)) / h^2 + total atom mass.
/// The update map is order preserving when the scheme is monotone, which for
/// F = lambda r - trace(a X) + H(x, p) - f holds when a is diagonal and
///   a_ii >= h/2 * (|dH/dp_i| + |sum_{small} w z_i|).
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/fields.hpp"
#include "nlcomp/grid.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/levy.hpp"
#include "nlcomp/linalg.hpp"
#include "nlcomp/nonlocal.hpp"
#include "nlcomp/parallel.hpp"
#include "nlcomp/viscosity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace nlcomp {

/// picard: the consistent monotone scheme.
/// flipped_nonlocal: the nonlocal term enters with the wrong sign. Not monotone;
/// it exists so comparison suites can demonstrate that they detect violations.
enum class Scheme { picard, flipped_nonlocal };

inline const char* to_string(Scheme s) {
    return s == Scheme::picard ? "picard" : "flipped_nonlocal";
}

inline Scheme parse_scheme(const std::string& text) {
    if (text == "picard") return Scheme::picard;
    if (text == "flipped_nonlocal") return Scheme::flipped_nonlocal;
    throw InvalidArgument("unknown scheme '" + text + "' (expected picard or flipped_nonlocal)");
}

struct SolveParams {
    double damping = 1.0;
    long max_iters = 200000;
    double stop_tol = 1e-10;
    Scheme scheme = Scheme::picard;

    void validate() const {
        if (!(damping > 0.0 && damping <= 1.0))
            throw InvalidArgument("damping must lie in (0, 1], got " + format_double(damping));
        if (!(stop_tol > 0.0)) throw InvalidArgument("stop_tol must be positive");
        if (max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
    }
};

/// Exterior data: evaluated once per stored node outside the open box.
template <int Dim>
using ExteriorData = std::function<double(const Vec<Dim>&)>;

/// Residual evaluator with the nonlocal stencils built once per grid spacing.
template <int Dim>
class SchemeOperator {
public:
    SchemeOperator(const FSpec<Dim>& F, const LevyQuadrature<Dim>& q, double h,
                   Scheme scheme = Scheme::picard)
        : F_(F), op_(q, h), h_(h), scheme_(scheme) {}

    double residual(const GridFunction<Dim>& u, const Index<Dim>& k) const {
        const auto jet = discrete_jet<Dim>(u, k);
        const auto x = u.grid().coord(k);
        const double nonlocal = op_.evaluate(u, k, jet.p);
        const double local = F_(x, u[k], jet.p, jet.X);
        return scheme_ == Scheme::picard ? local - nonlocal : local + nonlocal;
    }

    /// Upper bound of the residual's derivative in u(x).
    double diagonal(const Vec<Dim>& x) const {
        return F_.lambda + 2.0 * trace<Dim>(F_.diffusion_at(x)) / (h_ * h_) + op_.total_mass();
    }

    const FSpec<Dim>& fspec() const noexcept { return F_; }
    const NonlocalOperator<Dim>& nonlocal() const noexcept { return op_; }

private:
    FSpec<Dim> F_;
    NonlocalOperator<Dim> op_;
    double h_;
    Scheme scheme_;
};

/// F(x, u(x), p, X) - I[u](x) with the discrete jet (p, X) of u at x.
template <int Dim>
double scheme_residual(const GridFunction<Dim>& u, const Index<Dim>& k, const FSpec<Dim>& F,
                       const LevyQuadrature<Dim>& q) {
    if (!u.grid().is_interior(k))
        throw InvalidArgument("scheme residual is defined at interior nodes only; " +
                              u.grid().describe_node(k) + " is not interior");
    return SchemeOperator<Dim>(F, q, u.grid().spacing()).residual(u, k);
}

namespace detail {

template <int Dim>
std::vector<double> residual_sweep(const SchemeOperator<Dim>& S, const GridFunction<Dim>& u,
                                   const std::vector<Index<Dim>>& nodes) {
    std::vector<double> res(nodes.size());
    parallel_for(nodes.size(), [&](std::size_t i) { res[i] = S.residual(u, nodes[i]); }, 512);
    return res;
}

inline double sup_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

}  // namespace detail

/// One damped Jacobi update of every interior node; exterior values are kept.
template <int Dim>
GridFunction<Dim> picard_step(const GridFunction<Dim>& u, const FSpec<Dim>& F,
                              const LevyQuadrature<Dim>& q, const SolveParams& params) {
    params.validate();
    const SchemeOperator<Dim> S(F, q, u.grid().spacing(), params.scheme);
    const auto nodes = u.grid().interior_nodes();
    const auto res = detail::residual_sweep<Dim>(S, u, nodes);
    std::vector<double> next(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        next[i] = u[nodes[i]] - params.damping * res[i] / S.diagonal(u.grid().coord(nodes[i]));
    return u.with_interior(next);
}

template <int Dim>
struct Solution {
    GridFunction<Dim> u;
    long iterations = 0;      ///< residual sweeps performed
    double residual = 0.0;    ///< sup-norm scheme residual of u
};

/// Exterior values are sampled from g once; the interior starts at the mean
/// of the exterior data. Stops when the sup-norm residual is <= stop_tol.
template <int Dim>
Solution<Dim> solve_dirichlet(const FSpec<Dim>& F, const ExteriorData<Dim>& g,
                              const LevyQuadrature<Dim>& q, const Grid<Dim>& grid,
                              const SolveParams& params) {
    params.validate();
    F.validate(grid);
    if (!g) throw InvalidArgument("exterior data is missing");
    if (q.max_jump() > grid.halo_radius() + 1e-12)
        throw ReachError("halo radius " + format_double(grid.halo_radius()) +
                         " is smaller than the largest jump " + format_double(q.max_jump()));

    auto u = GridFunction<Dim>::sample(grid, [](const Vec<Dim>&) { return 0.0; }, g);
    double exterior_sum = 0.0;
    std::size_t exterior_count = 0;
    for (std::size_t f = 0; f < grid.node_count(); ++f)
        if (!grid.is_interior(grid.unflatten(f))) {
            exterior_sum += u.values()[f];
            ++exterior_count;
        }
    const double start = exterior_sum / static_cast<double>(exterior_count);
    u = u.with_interior(std::vector<double>(grid.interior_count(), start));

    const SchemeOperator<Dim> S(F, q, grid.spacing(), params.scheme);
    const auto nodes = grid.interior_nodes();
    std::vector<double> diag(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) diag[i] = S.diagonal(grid.coord(nodes[i]));

    std::vector<double> interior = u.interior_values();
    double last = std::numeric_limits<double>::infinity();
    for (long it = 1; it <= params.max_iters; ++it) {
        const auto res = detail::residual_sweep<Dim>(S, u, nodes);
        last = detail::sup_norm(res);
        if (!std::isfinite(last))
            throw ConvergenceFailure("iteration diverged after " + std::to_string(it) +
                                         " sweeps", last);
        if (last <= params.stop_tol) return Solution<Dim>{u, it, last};
        for (std::size_t i = 0; i < nodes.size(); ++i)
            interior[i] -= params.damping * res[i] / diag[i];
        u = u.with_interior(interior);
    }
    throw ConvergenceFailure("no convergence within " + std::to_string(params.max_iters) +
                                 " sweeps; last residual " + format_double(last),
                             last);
}

template <int Dim>
struct ComparisonResult {
    double violation = 0.0;  ///< max over interior nodes of u1 - u2
    Index<Dim> witness{};
    long iterations_1 = 0;
    long iterations_2 = 0;
    double tol = 1e-8;
    bool pass = false;
};

/// Solves with exterior data g1 and g2 (g1 <= g2 on every exterior node) and
/// reports the worst interior violation of u1 <= u2.
template <int Dim>
ComparisonResult<Dim> comparison_experiment(const FSpec<Dim>& F, const LevyQuadrature<Dim>& q,
                                            const Grid<Dim>& grid, const ExteriorData<Dim>& g1,
                                            const ExteriorData<Dim>& g2,
                                            const SolveParams& params, double tol = 1e-8) {
    for (std::size_t f = 0; f < grid.node_count(); ++f) {
        const auto k = grid.unflatten(f);
        if (grid.is_interior(k)) continue;
        const auto x = grid.coord(k);
        if (g1(x) > g2(x))
            throw InvalidArgument("comparison needs g1 <= g2 on the exterior; fails at node " +
                                  grid.describe_node(k));
    }
    const auto s1 = solve_dirichlet<Dim>(F, g1, q, grid, params);
    const auto s2 = solve_dirichlet<Dim>(F, g2, q, grid, params);
    ComparisonResult<Dim> out;
    out.violation = -std::numeric_limits<double>::infinity();
    out.iterations_1 = s1.iterations;
    out.iterations_2 = s2.iterations;
    out.tol = tol;
    for (const auto& k : grid.interior_nodes()) {
        const double d = s1.u[k] - s2.u[k];
        if (d > out.violation) {
            out.violation = d;
            out.witness = k;
        }
    }
    out.pass = out.violation <= tol;
    return out;
}

/// I[u*](x) with u* evaluated in closed form at every jump target.
template <int Dim>
double closed_form_nonlocal(const SmoothField<Dim>& u_star, const LevyQuadrature<Dim>& q,
                            const Vec<Dim>& x) {
    const double center = u_star.value(x);
    const auto p = u_star.gradient(x);
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const auto& a = q.atoms()[j];
        Vec<Dim> y = x;
        for (int i = 0; i < Dim; ++i) y[i] += a.z[i];
        const double compensator = q.is_small(j) ? dot<Dim>(a.z, p) : 0.0;
        sum += a.weight * (u_star.value(y) - center - compensator);
    }
    return sum;
}

/// The template's F with its source replaced so that u* solves the equation.
template <int Dim>
FSpec<Dim> manufactured_fspec(const FSpec<Dim>& F_template, const LevyQuadrature<Dim>& q,
                              const SmoothField<Dim>& u_star) {
    FSpec<Dim> base = F_template;
    base.source = {};
    FSpec<Dim> F = base;
    F.source = [base, q, u_star](const Vec<Dim>& x) {
        return base(x, u_star.value(x), u_star.gradient(x), u_star.hessian(x)) -
               closed_form_nonlocal<Dim>(u_star, q, x);
    };
    return F;
}

struct ConvergenceRow {
    double h = 0.0;
    double error = 0.0;  ///< sup-norm over interior nodes
    double order = std::numeric_limits<double>::quiet_NaN();  ///< vs the previous row
    long iterations = 0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
};

inline void write_csv(std::ostream& os, const ConvergenceTable& table) {
    os << "h,error,order\n";
    for (const auto& r : table.rows)
        os << format_double(r.h) << ',' << format_double(r.error) << ','
           << (std::isnan(r.order) ? std::string("") : format_double(r.order)) << '\n';
}

/// Solves the manufactured problem for each h in order. The halo is the
/// largest jump plus one cell. order = log(e_prev / e) / log(h_prev / h).
template <int Dim>
ConvergenceTable convergence_study(const SmoothField<Dim>& u_star, const FSpec<Dim>& F_template,
                                   const LevyQuadrature<Dim>& q,
                                   const typename Grid<Dim>::Box& box,
                                   const std::vector<double>& hs, const SolveParams& params) {
    ConvergenceTable table;
    const auto F = manufactured_fspec<Dim>(F_template, q, u_star);
    for (double h : hs) {
        const auto grid = Grid<Dim>::make(box, h, q.max_jump() + h);
        const auto sol = solve_dirichlet<Dim>(F, u_star.value, q, grid, params);
        ConvergenceRow row;
        row.h = h;
        row.iterations = sol.iterations;
        for (const auto& k : grid.interior_nodes())
            row.error = std::max(row.error, std::abs(sol.u[k] - u_star.value(grid.coord(k))));
        if (!table.rows.empty()) {
            const auto& prev = table.rows.back();
            row.order = std::log(prev.error / row.error) / std::log(prev.h / h);
        }
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace nlcomp
