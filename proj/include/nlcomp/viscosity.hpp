/// @file viscosity.hpp
/// @brief Residuals of the approximate viscosity inequalities, the
///        doubling-of-variables search, the perturbed-maximum (Jensen) engine,
///        the key nonlocal inequality, and the Neumann approximating residuals.
///
/// The nonlinearity is the proper, degenerate-elliptic family
///   F(x, r, p, X) = lambda r - trace(a(x) X) + H(x, p) - f(x),   lambda > 0, a(x) >= 0.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/grid.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/levy.hpp"
#include "nlcomp/linalg.hpp"
#include "nlcomp/moreau.hpp"
#include "nlcomp/nonlocal.hpp"
#include "nlcomp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace nlcomp {

template <int Dim>
struct FSpec {
    double lambda = 1.0;
    std::function<Mat<Dim>(const Vec<Dim>&)> diffusion;                     ///< a(x); empty means 0
    std::function<double(const Vec<Dim>&, const Vec<Dim>&)> hamiltonian;    ///< H(x, p); empty means 0
    std::function<double(const Vec<Dim>&)> source;                          ///< f(x); empty means 0

    Mat<Dim> diffusion_at(const Vec<Dim>& x) const {
        return diffusion ? diffusion(x) : zero_matrix<Dim>();
    }

    double operator()(const Vec<Dim>& x, double r, const Vec<Dim>& p, const Mat<Dim>& X) const {
        double value = lambda * r - trace_product<Dim>(diffusion_at(x), X);
        if (hamiltonian) value += hamiltonian(x, p);
        if (source) value -= source(x);
        return value;
    }

    /// lambda > 0 (properness) and a(x) PSD at every stored node of `grid`.
    void validate(const Grid<Dim>& grid) const {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw InvalidArgument("properness requires lambda > 0, got lambda = " +
                                  format_double(lambda));
        if (!diffusion) return;
        for (std::size_t f = 0; f < grid.node_count(); ++f) {
            const auto k = grid.unflatten(f);
            const auto a = diffusion(grid.coord(k));
            if (min_eigenvalue<Dim>(symmetrized<Dim>(a)) < -1e-12)
                throw InvalidArgument("degenerate ellipticity requires a(x) >= 0; fails at node " +
                                      grid.describe_node(k));
        }
    }
};

/// F with constant isotropic diffusion a I, linear drift H(x, p) = <b, p>, and source f.
template <int Dim>
FSpec<Dim> linear_fspec(double lambda, double a, const Vec<Dim>& drift,
                        std::function<double(const Vec<Dim>&)> source = {}) {
    FSpec<Dim> F;
    F.lambda = lambda;
    if (a != 0.0) F.diffusion = [a](const Vec<Dim>&) { return scaled_identity<Dim>(a); };
    bool has_drift = false;
    for (double b : drift) has_drift = has_drift || b != 0.0;
    if (has_drift)
        F.hamiltonian = [drift](const Vec<Dim>&, const Vec<Dim>& p) { return dot<Dim>(drift, p); };
    F.source = std::move(source);
    return F;
}

/// Which side of a viscosity inequality a jet belongs to.
enum class Side { sub, super };

inline const char* to_string(Side s) { return s == Side::sub ? "sub" : "super"; }

/// Lattice offsets d with 0 < h|d| <= radius, ordered by |d| then lexicographically.
template <int Dim>
std::vector<Index<Dim>> lattice_offsets_within(double h, double radius) {
    const long reach = static_cast<long>(std::floor(radius / h + 1e-9));
    std::vector<Index<Dim>> out;
    const double limit = (radius / h) * (radius / h) * (1.0 + 1e-12) + 1e-9;
    if constexpr (Dim == 1) {
        for (long a = -reach; a <= reach; ++a)
            if (a != 0 && static_cast<double>(a * a) <= limit) out.push_back({a});
    } else {
        for (long a = -reach; a <= reach; ++a)
            for (long b = -reach; b <= reach; ++b)
                if ((a || b) && static_cast<double>(a * a + b * b) <= limit) out.push_back({a, b});
    }
    auto len2 = [](const Index<Dim>& d) {
        long s = 0;
        for (long c : d) s += c * c;
        return s;
    };
    std::stable_sort(out.begin(), out.end(),
                     [&](const Index<Dim>& l, const Index<Dim>& r) { return len2(l) < len2(r); });
    return out;
}

namespace detail {

template <int Dim>
Vec<Dim> offset_vector(const Index<Dim>& d, double h) {
    Vec<Dim> z{};
    for (int i = 0; i < Dim; ++i) z[i] = h * static_cast<double>(d[i]);
    return z;
}

template <int Dim>
Index<Dim> add(const Index<Dim>& a, const Index<Dim>& b) {
    Index<Dim> c{};
    for (int i = 0; i < Dim; ++i) c[i] = a[i] + b[i];
    return c;
}

/// Positive when the one-sided second-order bound fails at offset d:
///   sub:   u(x+z) <= u(x) + <p,z> + 1/2 <Xz,z> + delta |z|^2
///   super: u(x+z) >= u(x) + <p,z> + 1/2 <Xz,z> - delta |z|^2
template <int Dim>
double jet_bound_excess(const GridFunction<Dim>& u, const Index<Dim>& k, const Jet<Dim>& jet,
                        double delta, const Index<Dim>& d, Side side) {
    const auto z = offset_vector<Dim>(d, u.grid().spacing());
    const double model = u[k] + dot<Dim>(jet.p, z) + 0.5 * quadratic_form<Dim>(jet.X, z);
    const double slack = delta * norm_squared<Dim>(z);
    const double value = u[add<Dim>(k, d)];
    return side == Side::sub ? value - (model + slack) : (model - slack) - value;
}

}  // namespace detail

/// Throws JetBoundViolation with the first offending offset (by |z|) when the
/// one-sided bound fails by more than tol at some stored lattice offset
/// 0 < |z| <= eps.
template <int Dim>
void check_jet_bound(const GridFunction<Dim>& u, const Index<Dim>& k, const Jet<Dim>& jet,
                     double delta, double eps, Side side, double tol) {
    const double h = u.grid().spacing();
    for (const auto& d : lattice_offsets_within<Dim>(h, eps)) {
        if (!u.grid().contains(detail::add<Dim>(k, d))) continue;
        const double excess = detail::jet_bound_excess<Dim>(u, k, jet, delta, d, side);
        if (excess > tol)
            throw JetBoundViolation(std::string(to_string(side)) + "-jet bound at node " +
                                        u.grid().describe_node(k) + " fails at z = h*" +
                                        to_string<Dim>(d) + " by " + format_double(excess),
                                    excess);
    }
}

/// Smallest delta >= 0 making the one-sided bound hold on the eps-ball.
template <int Dim>
double minimal_jet_slack(const GridFunction<Dim>& u, const Index<Dim>& k, const Jet<Dim>& jet,
                         double eps, Side side) {
    const double h = u.grid().spacing();
    double delta = 0.0;
    for (const auto& d : lattice_offsets_within<Dim>(h, eps)) {
        if (!u.grid().contains(detail::add<Dim>(k, d))) continue;
        const double excess = detail::jet_bound_excess<Dim>(u, k, jet, 0.0, d, side);
        const double z2 = norm_squared<Dim>(detail::offset_vector<Dim>(d, h));
        delta = std::max(delta, excess / z2);
    }
    return delta;
}

/// Largest lattice radius (<= cap) such that the bound holds, within tol, for
/// every offset up to it. Scanning stops at the first radius with a violation
/// or with a target outside the stored lattice. Returns 0 when even the
/// nearest ring fails.
template <int Dim>
double largest_jet_radius(const GridFunction<Dim>& u, const Index<Dim>& k, const Jet<Dim>& jet,
                          double delta, Side side, double tol, double cap = 1.0) {
    const double h = u.grid().spacing();
    const auto offsets = lattice_offsets_within<Dim>(h, cap);
    double good = 0.0;
    std::size_t i = 0;
    while (i < offsets.size()) {
        long len2 = 0;
        for (long c : offsets[i]) len2 += c * c;
        std::size_t j = i;
        bool ok = true;
        for (; j < offsets.size(); ++j) {
            long l2 = 0;
            for (long c : offsets[j]) l2 += c * c;
            if (l2 != len2) break;
            if (!u.grid().contains(detail::add<Dim>(k, offsets[j])) ||
                detail::jet_bound_excess<Dim>(u, k, jet, delta, offsets[j], side) > tol)
                ok = false;
        }
        if (!ok) break;
        good = std::min(cap, h * std::sqrt(static_cast<double>(len2)));
        i = j;
    }
    return good;
}

/// F(x, u(x), p, X) minus the split nonlocal term with X + 2 delta I on |z| <= eps.
/// A subsolution at slack nu has residual <= nu.
template <int Dim>
double sub_residual(const GridFunction<Dim>& u, const Index<Dim>& k, const Jet<Dim>& jet,
                    const FSpec<Dim>& F, const LevyQuadrature<Dim>& q, double eps, double delta,
                    double bound_tol = 1e-9) {
    if (!(delta >= 0.0)) throw InvalidArgument("jet slack delta must be nonnegative");
    if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("split radius eps must lie in (0, 1]");
    check_jet_bound<Dim>(u, k, jet, delta, eps, Side::sub, bound_tol);
    const auto x = u.grid().coord(k);
    const NonlocalOperator<Dim> op(q, u.grid().spacing());
    return F(x, u[k], jet.p, jet.X) - op.evaluate_split(u, k, jet.p, jet.X, delta, eps);
}

/// Mirror of sub_residual: Y - 2 delta I on |z| <= eps. A supersolution at
/// slack nu has residual >= -nu.
template <int Dim>
double super_residual(const GridFunction<Dim>& v, const Index<Dim>& k, const Jet<Dim>& jet,
                      const FSpec<Dim>& F, const LevyQuadrature<Dim>& q, double eps, double delta,
                      double bound_tol = 1e-9) {
    if (!(delta >= 0.0)) throw InvalidArgument("jet slack delta must be nonnegative");
    if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("split radius eps must lie in (0, 1]");
    check_jet_bound<Dim>(v, k, jet, delta, eps, Side::super, bound_tol);
    const auto x = v.grid().coord(k);
    const NonlocalOperator<Dim> op(q, v.grid().spacing());
    return F(x, v[k], jet.p, jet.X) - op.evaluate_split(v, k, jet.p, jet.X, -delta, eps);
}

// ---------------------------------------------------------------------------
// Doubling of variables
// ---------------------------------------------------------------------------

/// Discrete open window O = (x-box) x (y-box) in Omega x Omega. Each box is a
/// closed index box; O's nodes are those strictly inside both boxes and its
/// boundary is the rest of the closure.
template <int Dim>
struct Window {
    Index<Dim> x_lower{}, x_upper{}, y_lower{}, y_upper{};

    /// Window from coordinate boxes whose corners are lattice points. The
    /// closure must consist of interior grid nodes and each box must have an
    /// interior node.
    static Window from_boxes(const Grid<Dim>& grid, const std::array<Interval, Dim>& x_box,
                             const std::array<Interval, Dim>& y_box) {
        Window w;
        Vec<Dim> xl{}, xu{}, yl{}, yu{};
        for (int i = 0; i < Dim; ++i) {
            xl[i] = x_box[i].lower;
            xu[i] = x_box[i].upper;
            yl[i] = y_box[i].lower;
            yu[i] = y_box[i].upper;
        }
        w.x_lower = grid.index_of(xl);
        w.x_upper = grid.index_of(xu);
        w.y_lower = grid.index_of(yl);
        w.y_upper = grid.index_of(yu);
        for (int i = 0; i < Dim; ++i)
            if (w.x_upper[i] - w.x_lower[i] < 2 || w.y_upper[i] - w.y_lower[i] < 2)
                throw InvalidArgument("window boxes need at least one interior node per axis");
        for (const auto& corner : {w.x_lower, w.x_upper, w.y_lower, w.y_upper})
            if (!grid.is_interior(corner))
                throw InvalidArgument("window closure must lie inside the open domain; corner " +
                                      grid.describe_node(corner) + " does not");
        return w;
    }

    static bool inside(const Index<Dim>& k, const Index<Dim>& lo, const Index<Dim>& hi, bool open) {
        for (int i = 0; i < Dim; ++i) {
            if (open ? (k[i] <= lo[i] || k[i] >= hi[i]) : (k[i] < lo[i] || k[i] > hi[i]))
                return false;
        }
        return true;
    }

    bool contains(const Index<Dim>& kx, const Index<Dim>& ky) const {
        return inside(kx, x_lower, x_upper, true) && inside(ky, y_lower, y_upper, true);
    }

    bool in_closure(const Index<Dim>& kx, const Index<Dim>& ky) const {
        return inside(kx, x_lower, x_upper, false) && inside(ky, y_lower, y_upper, false);
    }

    static std::vector<Index<Dim>> box_nodes(const Index<Dim>& lo, const Index<Dim>& hi) {
        std::vector<Index<Dim>> out;
        if constexpr (Dim == 1) {
            for (long a = lo[0]; a <= hi[0]; ++a) out.push_back({a});
        } else {
            for (long a = lo[0]; a <= hi[0]; ++a)
                for (long b = lo[1]; b <= hi[1]; ++b) out.push_back({a, b});
        }
        return out;
    }

    std::vector<Index<Dim>> x_closure_nodes() const { return box_nodes(x_lower, x_upper); }
    std::vector<Index<Dim>> y_closure_nodes() const { return box_nodes(y_lower, y_upper); }

    /// Euclidean diameter of the closure in R^{2N}.
    double diameter(double h) const {
        double s = 0.0;
        for (int i = 0; i < Dim; ++i) {
            const double dx = h * static_cast<double>(x_upper[i] - x_lower[i]);
            const double dy = h * static_cast<double>(y_upper[i] - y_lower[i]);
            s += dx * dx + dy * dy;
        }
        return std::sqrt(s);
    }
};

/// Phi(x, y) = U(x) - V(y) - alpha |x - y|^2.
template <int Dim>
double doubling_objective(const GridFunction<Dim>& U, const GridFunction<Dim>& V, double alpha,
                          const Index<Dim>& kx, const Index<Dim>& ky) {
    const double h = U.grid().spacing();
    double dist2 = 0.0;
    for (int i = 0; i < Dim; ++i) {
        const double d = h * static_cast<double>(kx[i] - ky[i]);
        dist2 += d * d;
    }
    return U[kx] - V[ky] - alpha * dist2;
}

template <int Dim>
struct DoublingPoint {
    Index<Dim> x_bar{};
    Index<Dim> y_bar{};
    double alpha = 0.0;
    double phi_max = 0.0;       ///< max of Phi over O
    double boundary_max = 0.0;  ///< max of Phi over the discrete boundary of O
    double mu = 0.0;            ///< phi_max - boundary_max; usable iff > 0
    Window<Dim> window{};

    bool admissible() const { return mu > 0.0; }
};

namespace detail {

struct RowBest {
    double interior = -std::numeric_limits<double>::infinity();
    std::size_t interior_y = 0;
    double boundary = -std::numeric_limits<double>::infinity();
};

/// Exhaustive scan of objective(kx, ky) over the closure of the window.
/// Interior ties go to the lexicographically smallest (x, y).
template <int Dim, class Objective>
void scan_window(const Window<Dim>& w, Objective&& objective, double& best_interior,
                 Index<Dim>& best_x, Index<Dim>& best_y, double& best_boundary) {
    const auto xs = w.x_closure_nodes();
    const auto ys = w.y_closure_nodes();
    std::vector<RowBest> rows(xs.size());
    parallel_for(xs.size(), [&](std::size_t ix) {
        RowBest rb;
        for (std::size_t iy = 0; iy < ys.size(); ++iy) {
            const double v = objective(xs[ix], ys[iy]);
            if (w.contains(xs[ix], ys[iy])) {
                if (v > rb.interior) {
                    rb.interior = v;
                    rb.interior_y = iy;
                }
            } else {
                rb.boundary = std::max(rb.boundary, v);
            }
        }
        rows[ix] = rb;
    }, 1);
    best_interior = -std::numeric_limits<double>::infinity();
    best_boundary = -std::numeric_limits<double>::infinity();
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
        if (rows[ix].interior > best_interior) {
            best_interior = rows[ix].interior;
            best_x = xs[ix];
            best_y = ys[rows[ix].interior_y];
        }
        best_boundary = std::max(best_boundary, rows[ix].boundary);
    }
}

}  // namespace detail

/// Exhaustive maximization of Phi over the discrete window.
template <int Dim>
DoublingPoint<Dim> doubling_maximize(const GridFunction<Dim>& U, const GridFunction<Dim>& V,
                                     double alpha, const Window<Dim>& window) {
    if (!(alpha > 0.0)) throw InvalidArgument("penalty weight alpha must be positive");
    if (U.grid().spacing() != V.grid().spacing())
        throw InvalidArgument("U and V must live on the same grid");
    DoublingPoint<Dim> pt;
    pt.alpha = alpha;
    pt.window = window;
    detail::scan_window<Dim>(
        window,
        [&](const Index<Dim>& kx, const Index<Dim>& ky) {
            return doubling_objective<Dim>(U, V, alpha, kx, ky);
        },
        pt.phi_max, pt.x_bar, pt.y_bar, pt.boundary_max);
    pt.mu = pt.phi_max - pt.boundary_max;
    return pt;
}

// ---------------------------------------------------------------------------
// Perturbed maxima
// ---------------------------------------------------------------------------

struct JensenParams {
    double semiconvexity = 0.0;  ///< U semiconvex and V semiconcave with this constant
    double delta0 = 0.1;         ///< delta_m = 2^-m delta0
    double order_tol = 1e-9;
    double bound_tol = 1e-9;
    double certify_tol = 1e-8;
    std::uint64_t seed = 0;
};

template <int Dim>
struct PerturbedMax {
    int m = 0;
    Index<Dim> x{}, y{};
    Vec<Dim> p{};        ///< gradient of the super-jet of U at x
    Vec<Dim> p_prime{};  ///< gradient of the sub-jet of V at y
    Mat<Dim> X{}, Y{};
    Vec<Dim> tilt_x{}, tilt_y{};  ///< linear perturbation P_m
    Vec<Dim> p_ref{};             ///< 2 alpha (x - y)
    double phi_m = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    double order_margin = 0.0;   ///< smallest eigenvalue of Y - X
    double gradient_gap = 0.0;   ///< max componentwise |p - p_ref|, |p' - p_ref|
    double gradient_tol = 0.0;
    double distance_to_doubling_point = 0.0;
};

namespace detail {

/// Uniform point in the closed ball of the given radius in R^n, rejection
/// sampled from raw 64-bit draws so the stream is identical on every platform.
inline std::vector<double> uniform_in_ball(std::mt19937_64& gen, int n, double radius) {
    std::vector<double> v(static_cast<std::size_t>(n));
    while (true) {
        double s = 0.0;
        for (auto& c : v) {
            const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
            c = 2.0 * u - 1.0;
            s += c * c;
        }
        if (s <= 1.0) {
            for (auto& c : v) c *= radius;
            return v;
        }
    }
}

}  // namespace detail

/// For m = 1..count: tilt Phi by a random P_m with |P_m| <= mu/(2 diam O) 2^-m,
/// find the exact discrete maximizer (x_m, y_m) over O, take discrete jets of U
/// and V there, and verify every clause:
///   - "interior maximum": the tilted maximum over the closure lies in O
///   - "jet radius": eps_m > 0 for delta_m = 2^-m delta0
///   - "matrix order": X_m <= Y_m
///   - "gradient limit": |p_m - 2 alpha (x_m - y_m)| and |p'_m - 2 alpha (x_m - y_m)|
///      within |P_m| + (alpha + K/2) h componentwise
/// Throws VerificationFailure naming m and the clause on the first failure.
template <int Dim>
std::vector<PerturbedMax<Dim>> jensen_sequence(const GridFunction<Dim>& U,
                                               const GridFunction<Dim>& V,
                                               const DoublingPoint<Dim>& point, int count,
                                               const JensenParams& params) {
    std::vector<PerturbedMax<Dim>> out;
    if (count <= 0) return out;
    if (!point.admissible())
        throw InvalidArgument("perturbed maxima need an interior margin mu > 0, got mu = " +
                              format_double(point.mu));
    const auto cu = certify_semiconvex<Dim>(U, params.semiconvexity);
    if (!cu.passes(params.certify_tol))
        throw InvalidArgument("U is not semiconvex with constant " +
                              format_double(params.semiconvexity) + " (worst eigenvalue " +
                              format_double(cu.worst_violation) + ")");
    const auto cv = certify_semiconcave<Dim>(V, params.semiconvexity);
    if (!cv.passes(params.certify_tol))
        throw InvalidArgument("V is not semiconcave with constant " +
                              format_double(params.semiconvexity) + " (worst eigenvalue " +
                              format_double(cv.worst_violation) + ")");

    const auto& grid = U.grid();
    const double h = grid.spacing();
    const auto& w = point.window;
    const double alpha = point.alpha;
    const double radius0 = point.mu / (2.0 * w.diameter(h));
    const auto x_bar = grid.coord(point.x_bar);
    const auto y_bar = grid.coord(point.y_bar);
    std::mt19937_64 gen(params.seed);

    for (int m = 1; m <= count; ++m) {
        PerturbedMax<Dim> pm;
        pm.m = m;
        const double radius = std::ldexp(radius0, -m);
        const auto tilt = detail::uniform_in_ball(gen, 2 * Dim, radius);
        for (int i = 0; i < Dim; ++i) {
            pm.tilt_x[i] = tilt[static_cast<std::size_t>(i)];
            pm.tilt_y[i] = tilt[static_cast<std::size_t>(Dim + i)];
        }
        double boundary = 0.0;
        detail::scan_window<Dim>(
            w,
            [&](const Index<Dim>& kx, const Index<Dim>& ky) {
                const auto x = grid.coord(kx);
                const auto y = grid.coord(ky);
                double lin = 0.0;
                for (int i = 0; i < Dim; ++i)
                    lin += pm.tilt_x[i] * (x[i] - x_bar[i]) + pm.tilt_y[i] * (y[i] - y_bar[i]);
                return doubling_objective<Dim>(U, V, alpha, kx, ky) - lin;
            },
            pm.phi_m, pm.x, pm.y, boundary);
        if (!(pm.phi_m > boundary))
            throw VerificationFailure(m, "interior maximum",
                                      "tilted maximum " + format_double(pm.phi_m) +
                                          " does not exceed the boundary value " +
                                          format_double(boundary));

        const auto ju = discrete_jet<Dim>(U, pm.x);
        const auto jv = discrete_jet<Dim>(V, pm.y);
        pm.p = ju.p;
        pm.X = ju.X;
        pm.p_prime = jv.p;
        pm.Y = jv.X;
        pm.delta = std::ldexp(params.delta0, -m);
        pm.eps = std::min(
            largest_jet_radius<Dim>(U, pm.x, ju, pm.delta, Side::sub, params.bound_tol),
            largest_jet_radius<Dim>(V, pm.y, jv, pm.delta, Side::super, params.bound_tol));
        if (!(pm.eps > 0.0))
            throw VerificationFailure(m, "jet radius",
                                      "one-sided jet bounds fail on the nearest lattice ring");

        pm.order_margin = min_eigenvalue<Dim>(symmetrized<Dim>(subtracted<Dim>(pm.Y, pm.X)));
        if (!is_matrix_ordered<Dim>(pm.X, pm.Y, params.order_tol))
            throw VerificationFailure(m, "matrix order",
                                      "smallest eigenvalue of Y - X is " +
                                          format_double(pm.order_margin));

        const auto x = grid.coord(pm.x);
        const auto y = grid.coord(pm.y);
        double tilt_inf = 0.0, scale = 1.0;
        for (int i = 0; i < Dim; ++i) {
            pm.p_ref[i] = 2.0 * alpha * h * static_cast<double>(pm.x[i] - pm.y[i]);
            tilt_inf = std::max({tilt_inf, std::abs(pm.tilt_x[i]), std::abs(pm.tilt_y[i])});
            scale = std::max(scale, std::abs(pm.p_ref[i]));
            pm.gradient_gap = std::max({pm.gradient_gap, std::abs(pm.p[i] - pm.p_ref[i]),
                                        std::abs(pm.p_prime[i] - pm.p_ref[i])});
        }
        pm.gradient_tol = tilt_inf + (alpha + 0.5 * params.semiconvexity) * h + 1e-9 * scale;
        if (pm.gradient_gap > pm.gradient_tol)
            throw VerificationFailure(m, "gradient limit",
                                      "gap " + format_double(pm.gradient_gap) +
                                          " exceeds tolerance " + format_double(pm.gradient_tol));

        double d2 = 0.0;
        for (int i = 0; i < Dim; ++i) {
            d2 += (x[i] - x_bar[i]) * (x[i] - x_bar[i]) + (y[i] - y_bar[i]) * (y[i] - y_bar[i]);
        }
        pm.distance_to_doubling_point = std::sqrt(d2);
        out.push_back(pm);
    }
    return out;
}

template <int Dim>
struct KeyInequalityReport {
    double worst_margin = 0.0;   ///< min over admissible z of RHS - LHS
    Index<Dim> witness{};        ///< offset (lattice units) attaining it
    std::size_t checked = 0;
    bool pass = false;
};

/// Scans every lattice z with (x_m + z, y_m + z) in O and evaluates
///   [V(y_m+z) - V(y_m) - <p'_m, z>] - [U(x_m+z) - U(x_m) - <p_m, z>]  >= -tol.
template <int Dim>
KeyInequalityReport<Dim> check_key_inequality(const GridFunction<Dim>& U,
                                              const GridFunction<Dim>& V,
                                              const PerturbedMax<Dim>& pm, const Window<Dim>& w,
                                              double tol = 1e-8) {
    const double h = U.grid().spacing();
    Index<Dim> lo{}, hi{};
    for (int i = 0; i < Dim; ++i) {
        lo[i] = std::max(w.x_lower[i] - pm.x[i], w.y_lower[i] - pm.y[i]) + 1;
        hi[i] = std::min(w.x_upper[i] - pm.x[i], w.y_upper[i] - pm.y[i]) - 1;
    }
    KeyInequalityReport<Dim> rep;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    const double u0 = U[pm.x];
    const double v0 = V[pm.y];
    for (const auto& d : Window<Dim>::box_nodes(lo, hi)) {
        const auto z = detail::offset_vector<Dim>(d, h);
        const double lhs = U[detail::add<Dim>(pm.x, d)] - u0 - dot<Dim>(pm.p, z);
        const double rhs = V[detail::add<Dim>(pm.y, d)] - v0 - dot<Dim>(pm.p_prime, z);
        const double margin = rhs - lhs;
        ++rep.checked;
        if (margin < rep.worst_margin) {
            rep.worst_margin = margin;
            rep.witness = d;
        }
    }
    rep.pass = rep.worst_margin >= -tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Neumann approximating residuals
// ---------------------------------------------------------------------------

template <int Dim>
using NormalField = std::function<Vec<Dim>(const Vec<Dim>&)>;

/// Outward unit normals of the grid's box. At edges and corners the normals of
/// every face through the point are summed and renormalized.
template <int Dim>
NormalField<Dim> box_normals(const Grid<Dim>& grid) {
    const auto box = grid.box();
    const double tol = 1e-9 * grid.spacing();
    return [box, tol](const Vec<Dim>& y) {
        Vec<Dim> n{};
        for (int i = 0; i < Dim; ++i) {
            if (std::abs(y[i] - box[i].lower) <= tol) n[i] -= 1.0;
            if (std::abs(y[i] - box[i].upper) <= tol) n[i] += 1.0;
        }
        const double len = norm<Dim>(n);
        if (len > 0.0)
            for (auto& c : n) c /= len;
        return n;
    };
}

struct NeumannParams {
    double rho = 0.0;
    double r = 0.0;
    double M = 0.0;
};

template <int Dim>
struct NeumannResidual {
    double value = 0.0;
    double integral_branch = 0.0;  ///< F + extremum over anchors y of -I_y
    double neumann_branch = 0.0;   ///< extremum over boundary y of <n(y), p> +/- rho
    Index<Dim> integral_anchor{};
    std::size_t anchors = 0;
    std::size_t boundary_anchors = 0;
    std::size_t skipped_atoms = 0;  ///< y + z admissible but x + z outside the closed domain
};

/// Sub side:
///   min[ F(x,w,p,X) + min_{y in cl(Omega), |x-y| <= sqrt(2M) r} -I_y[w](x),
///        min_{y on the boundary, |x-y| <= sqrt(2M) r} <n(y), p> + rho ]
/// where I_y sums over jumps z with y + z in cl(Omega) and evaluates w at x + z.
/// The super side uses max and -rho. An absent boundary makes the Neumann
/// branch +inf (sub) or -inf (super).
template <int Dim>
NeumannResidual<Dim> neumann_residuals(const GridFunction<Dim>& w, const Index<Dim>& k,
                                       const Jet<Dim>& jet, const FSpec<Dim>& F,
                                       const LevyQuadrature<Dim>& q, const Grid<Dim>& region,
                                       const NormalField<Dim>& normals,
                                       const NeumannParams& params, Side side) {
    if (!(params.rho > 0.0)) throw InvalidArgument("Neumann slack rho must be positive");
    if (!(params.r > 0.0)) throw InvalidArgument("Moreau parameter r must be positive");
    if (!(params.M >= 0.0)) throw InvalidArgument("sup-norm bound M must be nonnegative");
    if (!region.in_closure(k))
        throw InvalidArgument("node " + region.describe_node(k) +
                              " is outside the closed domain; its anchor ball is empty");
    const double h = region.spacing();
    const double reach = std::sqrt(2.0 * params.M) * params.r;
    const bool sub = side == Side::sub;
    constexpr double inf = std::numeric_limits<double>::infinity();

    std::vector<Index<Dim>> anchors{k};
    for (const auto& d : lattice_offsets_within<Dim>(h, reach)) {
        const auto y = detail::add<Dim>(k, d);
        if (region.in_closure(y)) anchors.push_back(y);
    }

    const NonlocalOperator<Dim> op(q, h);
    NeumannResidual<Dim> res;
    res.anchors = anchors.size();
    double best_integral = sub ? inf : -inf;
    double best_neumann = sub ? inf : -inf;
    for (const auto& y : anchors) {
        const auto sum = op.evaluate_anchored(w, k, y, jet.p, region);
        res.skipped_atoms += sum.value_unavailable;
        const double term = -sum.value;
        if (sub ? term < best_integral : term > best_integral) {
            best_integral = term;
            res.integral_anchor = y;
        }
        if (region.on_boundary(y)) {
            ++res.boundary_anchors;
            const double b = dot<Dim>(normals(region.coord(y)), jet.p) + (sub ? params.rho : -params.rho);
            best_neumann = sub ? std::min(best_neumann, b) : std::max(best_neumann, b);
        }
    }
    const auto x = region.coord(k);
    res.integral_branch = F(x, w[k], jet.p, jet.X) + best_integral;
    res.neumann_branch = best_neumann;
    res.value = sub ? std::min(res.integral_branch, res.neumann_branch)
                    : std::max(res.integral_branch, res.neumann_branch);
    return res;
}

}  // namespace nlcomp
