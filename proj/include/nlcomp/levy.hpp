/// @file levy.hpp
/// @brief Finite atomic quadratures of a Levy measure q(dz) with small-jump /
///        tail bookkeeping.
///
/// A measure is admissible when  int_{|z|<=1} |z|^2 q(dz) + int_{|z|>1} q(dz) < inf.
/// The quadrature records both pieces: s2 (small-jump second moment) and
/// tmass (tail mass). Atoms with |z| == 1 count as small jumps.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace nlcomp {

template <int Dim>
struct Atom {
    Vec<Dim> z{};
    double weight = 0.0;
};

template <int Dim>
class LevyQuadrature {
public:
    /// Rejects an empty list, non-positive or non-finite weights, and atoms at z = 0.
    static LevyQuadrature from_atoms(std::vector<Atom<Dim>> atoms,
                                     double truncated_second_moment = 0.0) {
        if (atoms.empty()) throw InvalidArgument("Levy quadrature needs at least one atom");
        LevyQuadrature q;
        q.atoms_ = std::move(atoms);
        q.small_.reserve(q.atoms_.size());
        for (std::size_t j = 0; j < q.atoms_.size(); ++j) {
            const auto& a = q.atoms_[j];
            if (!std::isfinite(a.weight) || !(a.weight > 0.0))
                throw InvalidArgument("atom " + std::to_string(j) +
                                      " has a non-positive weight " + std::to_string(a.weight));
            const double len = norm<Dim>(a.z);
            if (!std::isfinite(len)) throw InvalidArgument("atom " + std::to_string(j) + " is not finite");
            if (len == 0.0) throw InvalidArgument("atom " + std::to_string(j) + " sits at z = 0");
            const bool small = len <= 1.0;
            q.small_.push_back(small);
            if (small) {
                q.s2_ += a.weight * norm_squared<Dim>(a.z);
                q.small_mass_ += a.weight;
            } else {
                q.tmass_ += a.weight;
            }
            q.max_jump_ = std::max(q.max_jump_, len);
        }
        q.truncated_s2_ = truncated_second_moment;
        return q;
    }

    const std::vector<Atom<Dim>>& atoms() const noexcept { return atoms_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    bool is_small(std::size_t j) const noexcept { return small_[j]; }

    double second_moment_small() const noexcept { return s2_; }
    double tail_mass() const noexcept { return tmass_; }
    /// Total weight of atoms with |z| <= 1.
    double small_mass() const noexcept { return small_mass_; }
    double max_jump() const noexcept { return max_jump_; }

    /// Second moment of the mass dropped below a radial density's inner cutoff.
    /// Operator values on smooth functions are off by O(this * |D^2 u|).
    double truncated_second_moment() const noexcept { return truncated_s2_; }

    /// Every weight multiplied by c > 0.
    LevyQuadrature scaled(double c) const {
        if (!(c > 0.0)) throw InvalidArgument("scale factor must be positive");
        auto atoms = atoms_;
        for (auto& a : atoms) a.weight *= c;
        return from_atoms(std::move(atoms), truncated_s2_ * c);
    }

private:
    LevyQuadrature() = default;

    std::vector<Atom<Dim>> atoms_;
    std::vector<bool> small_;
    double s2_ = 0.0;
    double tmass_ = 0.0;
    double small_mass_ = 0.0;
    double max_jump_ = 0.0;
    double truncated_s2_ = 0.0;
};

template <int Dim>
double second_moment_small(const LevyQuadrature<Dim>& q) {
    return q.second_moment_small();
}

template <int Dim>
double tail_mass(const LevyQuadrature<Dim>& q) {
    return q.tail_mass();
}

template <int Dim>
struct AtomicMeasure {
    std::vector<Atom<Dim>> atoms;
};

/// q(dz) = d(|z|) dz on the annulus r_min <= |z| <= r_max.
/// Midpoint rule: `radial_nodes` shells, and in two dimensions `angular_sectors`
/// equal sectors per shell (atom at the shell and sector midpoints).
struct RadialDensity {
    std::function<double(double)> density;
    double r_min = 0.0;
    double r_max = 0.0;
    int radial_nodes = 0;
    int angular_sectors = 16;
};

template <int Dim>
using MeasureSpec = std::variant<AtomicMeasure<Dim>, RadialDensity>;

namespace detail {

/// Surface measure of the sphere of radius r in R^Dim.
template <int Dim>
double sphere_measure(double r) {
    if constexpr (Dim == 1) {
        (void)r;
        return 2.0;
    } else {
        return 2.0 * std::numbers::pi * r;
    }
}

}  // namespace detail

template <int Dim>
LevyQuadrature<Dim> build_quadrature(const MeasureSpec<Dim>& spec) {
    if (const auto* atomic = std::get_if<AtomicMeasure<Dim>>(&spec))
        return LevyQuadrature<Dim>::from_atoms(atomic->atoms);

    const auto& radial = std::get<RadialDensity>(spec);
    if (!radial.density) throw InvalidArgument("radial density has no density function");
    if (!(radial.r_min > 0.0))
        throw InvalidArgument("radial density needs an inner cutoff r_min > 0");
    if (!(radial.r_max > radial.r_min)) throw InvalidArgument("radial density needs r_max > r_min");
    if (radial.radial_nodes < 1) throw InvalidArgument("radial density needs at least one node");
    if (Dim == 2 && radial.angular_sectors < 1)
        throw InvalidArgument("radial density needs at least one angular sector");

    std::vector<Atom<Dim>> atoms;
    const double dr = (radial.r_max - radial.r_min) / radial.radial_nodes;
    for (int i = 0; i < radial.radial_nodes; ++i) {
        const double r = radial.r_min + (i + 0.5) * dr;
        const double d = radial.density(r);
        if (!std::isfinite(d) || d < 0.0)
            throw InvalidArgument("radial density is negative or non-finite at r = " +
                                  std::to_string(r));
        if (d == 0.0) continue;
        if constexpr (Dim == 1) {
            atoms.push_back({{-r}, d * dr});
            atoms.push_back({{r}, d * dr});
        } else {
            const int sectors = radial.angular_sectors;
            const double dtheta = 2.0 * std::numbers::pi / sectors;
            for (int s = 0; s < sectors; ++s) {
                const double theta = (s + 0.5) * dtheta;
                atoms.push_back({{r * std::cos(theta), r * std::sin(theta)}, d * r * dr * dtheta});
            }
        }
    }
    if (atoms.empty()) throw InvalidArgument("radial density produced no atoms (density vanishes)");

    // Mass below the cutoff, measured by its second moment.
    constexpr int cutoff_nodes = 1000;
    const double dc = radial.r_min / cutoff_nodes;
    double truncated = 0.0;
    for (int i = 0; i < cutoff_nodes; ++i) {
        const double r = (i + 0.5) * dc;
        const double d = radial.density(r);
        if (std::isfinite(d) && d > 0.0) truncated += r * r * d * detail::sphere_measure<Dim>(r) * dc;
    }
    return LevyQuadrature<Dim>::from_atoms(std::move(atoms), truncated);
}

/// Atom-list text format: one atom per line, whitespace-separated z components
/// followed by the weight. Blank lines and lines starting with '#' are skipped.
template <int Dim>
std::vector<Atom<Dim>> parse_atoms(std::istream& is) {
    std::vector<Atom<Dim>> atoms;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string t; ls >> t;) tokens.push_back(t);
        if (tokens.size() != static_cast<std::size_t>(Dim + 1))
            throw InvalidArgument("atom line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(Dim + 1) + " numbers, found " +
                                  std::to_string(tokens.size()));
        Atom<Dim> a;
        try {
            for (int i = 0; i < Dim; ++i) a.z[i] = parse_double(tokens[i]);
            a.weight = parse_double(tokens[Dim]);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("atom line " + std::to_string(line_no) + ": " + e.what());
        }
        atoms.push_back(a);
    }
    return atoms;
}

template <int Dim>
void write_atoms(std::ostream& os, const LevyQuadrature<Dim>& q) {
    for (const auto& a : q.atoms()) {
        for (int i = 0; i < Dim; ++i) os << format_double(a.z[i]) << ' ';
        os << format_double(a.weight) << '\n';
    }
}

}  // namespace nlcomp
