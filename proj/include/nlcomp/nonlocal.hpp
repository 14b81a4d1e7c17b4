/// @file nonlocal.hpp
/// @brief The compensated nonlocal term
///          I[u](x) = sum_j w_j [ u(x+z_j) - u(x) - 1_{|z_j|<=1} <z_j, p> ]
///        and its variants: the eps-split form used with one-sided jets, the
///        restriction to jumps landing in the closed domain, and the anchored
///        restriction used by the Neumann residuals.
///
/// The gradient p is always supplied by the caller; it belongs to the test
/// function touching u at x, not to u itself.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/grid.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/levy.hpp"
#include "nlcomp/linalg.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace nlcomp {

/// Multilinear-interpolation bookkeeping for one evaluation. The interpolation
/// error is at most error_scale * max_i sup |d^2u/dx_i^2|.
struct InterpolationDiagnostics {
    std::size_t off_lattice_atoms = 0;
    double off_lattice_weight = 0.0;
    double error_scale = 0.0;  ///< h^2/8 * off_lattice_weight
};

/// Result of a restricted sum that may skip atoms.
struct RestrictedSum {
    double value = 0.0;
    std::size_t used = 0;
    std::size_t outside_domain = 0;    ///< anchor + z outside the closed domain
    std::size_t value_unavailable = 0; ///< anchor + z inside, but x + z outside
};

/// Quadrature paired with a grid spacing: interpolation stencils are built once.
template <int Dim>
class NonlocalOperator {
public:
    NonlocalOperator(const LevyQuadrature<Dim>& q, double h) : q_(q), h_(h) {
        stencils_.reserve(q.size());
        for (const auto& a : q.atoms()) stencils_.push_back(make_jump_stencil<Dim>(a.z, h));
    }

    const LevyQuadrature<Dim>& quadrature() const noexcept { return q_; }

    /// Full compensated sum. Throws ReachError naming the first atom whose
    /// target leaves the stored lattice.
    double evaluate(const GridFunction<Dim>& u, const Index<Dim>& k, const Vec<Dim>& p) const {
        check_spacing(u);
        const double center = u[k];
        double sum = 0.0;
        for (std::size_t j = 0; j < stencils_.size(); ++j) sum += direct_term(u, k, j, p, center);
        return sum;
    }

    /// Atoms with |z| <= eps contribute w/2 <M z, z> with M = X + 2 delta I;
    /// the rest are summed directly. delta may be negative here (the
    /// supersolution side uses -delta).
    double evaluate_split(const GridFunction<Dim>& u, const Index<Dim>& k, const Vec<Dim>& p,
                          const Mat<Dim>& X, double delta, double eps) const {
        if (!(eps > 0.0 && eps <= 1.0))
            throw InvalidArgument("split radius eps must lie in (0, 1], got " + format_double(eps));
        check_spacing(u);
        const Mat<Dim> model = added<Dim>(X, scaled_identity<Dim>(2.0 * delta));
        const double center = u[k];
        double sum = 0.0;
        for (std::size_t j = 0; j < stencils_.size(); ++j) {
            const auto& a = q_.atoms()[j];
            if (norm<Dim>(a.z) <= eps)
                sum += a.weight * (0.5 * quadratic_form<Dim>(model, a.z));
            else
                sum += direct_term(u, k, j, p, center);
        }
        return sum;
    }

    /// Sum over atoms with anchor + z in the closed box of `region`, evaluating
    /// u at x + z. Atoms whose anchor target is admissible but whose value
    /// target x + z leaves the closed box are skipped and counted.
    RestrictedSum evaluate_anchored(const GridFunction<Dim>& u, const Index<Dim>& k,
                                    const Index<Dim>& anchor, const Vec<Dim>& p,
                                    const Grid<Dim>& region) const {
        check_spacing(u);
        RestrictedSum out;
        const double center = u[k];
        for (std::size_t j = 0; j < stencils_.size(); ++j) {
            if (!lands_in_closure(region, anchor, j)) {
                ++out.outside_domain;
                continue;
            }
            if (!lands_in_closure(region, k, j)) {
                ++out.value_unavailable;
                continue;
            }
            out.value += direct_term(u, k, j, p, center);
            ++out.used;
        }
        return out;
    }

    InterpolationDiagnostics diagnostics() const {
        InterpolationDiagnostics d;
        for (std::size_t j = 0; j < stencils_.size(); ++j) {
            if (stencils_[j].on_lattice) continue;
            ++d.off_lattice_atoms;
            d.off_lattice_weight += q_.atoms()[j].weight;
        }
        d.error_scale = h_ * h_ / 8.0 * d.off_lattice_weight;
        return d;
    }

    /// Diagonal weight of u(x) in -I[u](x) bounded above: the total mass.
    double total_mass() const noexcept { return q_.small_mass() + q_.tail_mass(); }

private:
    void check_spacing(const GridFunction<Dim>& u) const {
        if (u.grid().spacing() != h_)
            throw InvalidArgument("nonlocal operator was built for a different grid spacing");
    }

    double direct_term(const GridFunction<Dim>& u, const Index<Dim>& k, std::size_t j,
                       const Vec<Dim>& p, double center) const {
        const auto& st = stencils_[j];
        if (!st.reachable(u.grid(), k))
            throw ReachError("atom " + std::to_string(j) + " (|z| = " +
                             format_double(norm<Dim>(q_.atoms()[j].z)) + ") from node " +
                             u.grid().describe_node(k) + " lands outside grid and halo");
        const auto& a = q_.atoms()[j];
        const double compensator = q_.is_small(j) ? dot<Dim>(a.z, p) : 0.0;
        return a.weight * (st.value(u, k) - center - compensator);
    }

    bool lands_in_closure(const Grid<Dim>& region, const Index<Dim>& from, std::size_t j) const {
        const auto& st = stencils_[j];
        for (int i = 0; i < Dim; ++i) {
            const double t = static_cast<double>(from[i]) + st.cells[i];
            if (t < -1e-9 || t > static_cast<double>(region.cells(i)) + 1e-9) return false;
        }
        return true;
    }

    LevyQuadrature<Dim> q_;
    double h_;
    std::vector<JumpStencil<Dim>> stencils_;
};

template <int Dim>
double eval_nonlocal(const GridFunction<Dim>& u, const Index<Dim>& k, const Vec<Dim>& p,
                     const LevyQuadrature<Dim>& q) {
    return NonlocalOperator<Dim>(q, u.grid().spacing()).evaluate(u, k, p);
}

/// Small jumps |z| <= eps replaced by w/2 <(X + 2 delta I) z, z>. Requires
/// 0 < eps <= 1 and delta >= 0.
template <int Dim>
double eval_nonlocal_split(const GridFunction<Dim>& u, const Index<Dim>& k, const Vec<Dim>& p,
                           const Mat<Dim>& X, double delta, double eps,
                           const LevyQuadrature<Dim>& q) {
    if (!(delta >= 0.0)) throw InvalidArgument("split slack delta must be nonnegative");
    return NonlocalOperator<Dim>(q, u.grid().spacing()).evaluate_split(u, k, p, X, delta, eps);
}

/// Sum restricted to atoms with x + z in the closure of `region`'s box.
template <int Dim>
double eval_nonlocal_restricted(const GridFunction<Dim>& u, const Index<Dim>& k,
                                const Vec<Dim>& p, const LevyQuadrature<Dim>& q,
                                const Grid<Dim>& region) {
    return NonlocalOperator<Dim>(q, u.grid().spacing()).evaluate_anchored(u, k, k, p, region).value;
}

template <int Dim>
InterpolationDiagnostics interpolation_diagnostics(const LevyQuadrature<Dim>& q, double h) {
    return NonlocalOperator<Dim>(q, h).diagnostics();
}

}  // namespace nlcomp
