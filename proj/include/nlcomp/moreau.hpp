/// @file moreau.hpp
/// @brief Sup-convolution u^r, inf-convolution v_r, the shrunken domain
///        Omega_r, and discrete semiconvexity certificates.
///
///   u^r(x) = max_y { u(y) - |x-y|^2 / (2 r^2) }
///   v_r(x) = min_y { v(y) + |x-y|^2 / (2 r^2) }
///
/// y ranges over every stored node (grid and halo), and the envelopes are
/// produced on every stored node. Two implementations exist: an exhaustive
/// O(n^2) scan and a separable lower-envelope pass (O(n) per grid line). They
/// agree bit for bit: both accumulate the penalty axis by axis as
/// ((f + pen_0) + pen_1) and floating-point addition is monotone.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/grid.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/linalg.hpp"
#include "nlcomp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace nlcomp {

enum class EnvelopeMethod { brute_force, separable };

struct MoreauParams {
    double r = 1.0;
    double M = 0.0;  ///< max of sup|u| and sup|v| over the closed domain

    void validate() const {
        if (!(r > 0.0)) throw InvalidArgument("Moreau parameter r must be positive");
        if (!(M >= 0.0)) throw InvalidArgument("sup-norm bound M must be nonnegative");
    }

    /// sqrt(2M) r: how far a maximizer can sit from x.
    double reach() const { return std::sqrt(2.0 * M) * r; }
};

namespace detail {

/// pen(d) = coef * d^2 with d in lattice units; coef = h^2 / (2 r^2).
inline double lattice_penalty(double coef, long d) {
    return coef * static_cast<double>(d * d);
}

/// out[i] = min_j f[j] + coef (i-j)^2 along one strided line.
inline void lower_envelope_line(const double* f, std::size_t stride, long n, double coef,
                                double* out, std::vector<long>& v, std::vector<double>& breaks) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.assign(static_cast<std::size_t>(n), 0);
    breaks.assign(static_cast<std::size_t>(n) + 1, 0.0);
    auto at = [&](long j) { return f[static_cast<std::size_t>(j) * stride]; };
    auto intersect = [&](long q, long p) {
        const double lhs = at(q) + coef * static_cast<double>(q) * static_cast<double>(q);
        const double rhs = at(p) + coef * static_cast<double>(p) * static_cast<double>(p);
        return (lhs - rhs) / (2.0 * coef * static_cast<double>(q - p));
    };
    long k = 0;
    v[0] = 0;
    breaks[0] = -inf;
    breaks[1] = inf;
    for (long q = 1; q < n; ++q) {
        double s = intersect(q, v[static_cast<std::size_t>(k)]);
        while (k > 0 && s <= breaks[static_cast<std::size_t>(k)]) {
            --k;
            s = intersect(q, v[static_cast<std::size_t>(k)]);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        breaks[static_cast<std::size_t>(k)] = s;
        breaks[static_cast<std::size_t>(k) + 1] = inf;
    }
    const long last = k;
    k = 0;
    for (long i = 0; i < n; ++i) {
        while (k < last && breaks[static_cast<std::size_t>(k) + 1] < static_cast<double>(i)) ++k;
        // The breakpoints are rounded; the neighbouring parabolas settle near-ties
        // with the exact penalty expression.
        double best = inf;
        for (long c = std::max(0L, k - 1); c <= std::min(last, k + 1); ++c) {
            const long j = v[static_cast<std::size_t>(c)];
            best = std::min(best, at(j) + lattice_penalty(coef, i - j));
        }
        out[static_cast<std::size_t>(i) * stride] = best;
    }
}

template <int Dim>
std::vector<double> inf_envelope_separable(const Grid<Dim>& grid, std::span<const double> f,
                                           double coef) {
    std::vector<double> current(f.begin(), f.end());
    std::vector<double> next(current.size());
    for (int axis = 0; axis < Dim; ++axis) {
        const long n = grid.extent(axis);
        std::size_t stride = 1;
        for (int i = Dim - 1; i > axis; --i) stride *= static_cast<std::size_t>(grid.extent(i));
        // lines along `axis`: enumerate their starting offsets
        std::vector<std::size_t> starts;
        for (std::size_t s = 0; s < current.size(); ++s)
            if ((s / stride) % static_cast<std::size_t>(n) == 0) starts.push_back(s);
        parallel_for(starts.size(), [&](std::size_t li) {
            std::vector<long> v;
            std::vector<double> breaks;
            lower_envelope_line(current.data() + starts[li], stride, n, coef,
                                next.data() + starts[li], v, breaks);
        }, 4);
        current.swap(next);
    }
    return current;
}

template <int Dim>
std::vector<double> inf_envelope_brute(const Grid<Dim>& grid, std::span<const double> f,
                                       double coef) {
    const std::size_t count = grid.node_count();
    std::vector<double> out(count);
    parallel_for(count, [&](std::size_t fx) {
        const auto kx = grid.unflatten(fx);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t fy = 0; fy < count; ++fy) {
            const auto ky = grid.unflatten(fy);
            double v = f[fy];
            for (int i = 0; i < Dim; ++i) v = v + lattice_penalty(coef, kx[i] - ky[i]);
            best = std::min(best, v);
        }
        out[fx] = best;
    });
    return out;
}

}  // namespace detail

/// v_r(x) = min over stored nodes y of v(y) + |x-y|^2/(2r^2), on every stored node.
template <int Dim>
GridFunction<Dim> inf_convolution(const GridFunction<Dim>& v, double r,
                                  EnvelopeMethod method = EnvelopeMethod::separable) {
    if (!(r > 0.0) || !std::isfinite(r))
        throw InvalidArgument("convolution parameter r must be positive, got " + format_double(r));
    const auto& grid = v.grid();
    const double h = grid.spacing();
    const double coef = h * h / (2.0 * r * r);
    auto values = method == EnvelopeMethod::separable
                      ? detail::inf_envelope_separable<Dim>(grid, v.values(), coef)
                      : detail::inf_envelope_brute<Dim>(grid, v.values(), coef);
    return GridFunction<Dim>::from_values(grid, std::move(values));
}

/// u^r = -( (-u)_r ): exact, since negation commutes with rounding.
template <int Dim>
GridFunction<Dim> sup_convolution(const GridFunction<Dim>& u, double r,
                                  EnvelopeMethod method = EnvelopeMethod::separable) {
    return inf_convolution<Dim>(u.negated(), r, method).negated();
}

/// Interior nodes at distance > sqrt(2M) r from the box boundary, lexicographic.
/// May be empty.
template <int Dim>
std::vector<Index<Dim>> shrunken_domain(const Grid<Dim>& grid, const MoreauParams& params) {
    params.validate();
    const double reach = params.reach();
    std::vector<Index<Dim>> out;
    for (const auto& k : grid.interior_nodes())
        if (grid.boundary_distance(k) - reach > 1e-12 * std::max(1.0, reach)) out.push_back(k);
    return out;
}

template <int Dim>
struct SemiconvexityReport {
    double constant = 0.0;
    /// min over interior nodes of the smallest eigenvalue of the discrete
    /// Hessian of U + (c/2)|x|^2
    double worst_violation = 0.0;
    Index<Dim> witness_node{};

    bool passes(double tol) const { return worst_violation >= -tol; }
};

/// The discrete Hessian of (c/2)|x|^2 is exactly c I, so it is added to the
/// jet of U rather than sampled.
template <int Dim>
SemiconvexityReport<Dim> certify_semiconvex(const GridFunction<Dim>& U, double c) {
    if (!(c >= 0.0)) throw InvalidArgument("semiconvexity constant must be nonnegative");
    SemiconvexityReport<Dim> rep;
    rep.constant = c;
    rep.worst_violation = std::numeric_limits<double>::infinity();
    for (const auto& k : U.grid().interior_nodes()) {
        const auto jet = discrete_jet<Dim>(U, k);
        const double e = min_eigenvalue<Dim>(added<Dim>(jet.X, scaled_identity<Dim>(c)));
        if (e < rep.worst_violation) {
            rep.worst_violation = e;
            rep.witness_node = k;
        }
    }
    return rep;
}

/// V is semiconcave with constant c iff -V is semiconvex with constant c.
template <int Dim>
SemiconvexityReport<Dim> certify_semiconcave(const GridFunction<Dim>& V, double c) {
    return certify_semiconvex<Dim>(V.negated(), c);
}

/// Oscillation max - min over every stored node.
template <int Dim>
double oscillation(const GridFunction<Dim>& u) {
    const auto [lo, hi] = std::minmax_element(u.values().begin(), u.values().end());
    return *hi - *lo;
}

/// Bound on |u^r(x) - u^r(x')| / h for lattice neighbours:
/// sqrt(2 osc(u)) / r + h / (2 r^2).
template <int Dim>
double sup_convolution_lipschitz_bound(const GridFunction<Dim>& u, double r) {
    const double h = u.grid().spacing();
    return std::sqrt(2.0 * oscillation<Dim>(u)) / r + h / (2.0 * r * r);
}

}  // namespace nlcomp
