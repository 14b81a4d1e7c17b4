/// @file support.hpp
/// @brief Seeded generators shared by the property tests.
#pragma once

#include "nlcomp/nlcomp.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace nlcomp::testing {

/// Deterministic draws; every property test owns one with a fixed seed.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    long integer(long lo, long hi) {
        return lo + static_cast<long>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    std::uint64_t seed() { return rng_(); }

    template <int Dim>
    Vec<Dim> vec(double lo, double hi) {
        Vec<Dim> v{};
        for (auto& c : v) c = uniform(lo, hi);
        return v;
    }

    template <int Dim>
    Mat<Dim> symmetric(double lo, double hi) {
        Mat<Dim> m{};
        for (int i = 0; i < Dim; ++i)
            for (int j = i; j < Dim; ++j) m[i][j] = m[j][i] = uniform(lo, hi);
        return m;
    }

    /// B B^T, positive semidefinite.
    template <int Dim>
    Mat<Dim> psd(double scale) {
        Mat<Dim> b{};
        for (auto& row : b)
            for (auto& c : row) c = uniform(-scale, scale);
        Mat<Dim> m{};
        for (int i = 0; i < Dim; ++i)
            for (int j = 0; j < Dim; ++j)
                for (int k = 0; k < Dim; ++k) m[i][j] += b[i][k] * b[j][k];
        return m;
    }

    /// Independent value per stored node.
    template <int Dim>
    GridFunction<Dim> noise(const Grid<Dim>& grid, double amp) {
        std::vector<double> v(grid.node_count());
        for (auto& x : v) x = uniform(-amp, amp);
        return GridFunction<Dim>::from_values(grid, std::move(v));
    }

    /// Lattice-aligned atoms (multiples of h), symmetric pairs with |z| <= reach.
    template <int Dim>
    std::vector<Atom<Dim>> symmetric_lattice_atoms(double h, long max_cells, int pairs,
                                                   double wmax) {
        std::vector<Atom<Dim>> atoms;
        while (static_cast<int>(atoms.size()) < 2 * pairs) {
            Index<Dim> d{};
            bool nonzero = false;
            for (auto& c : d) {
                c = integer(-max_cells, max_cells);
                nonzero = nonzero || c != 0;
            }
            if (!nonzero) continue;
            Vec<Dim> z{};
            for (int i = 0; i < Dim; ++i) z[i] = h * static_cast<double>(d[i]);
            const double w = uniform(0.05, wmax);
            atoms.push_back({z, w});
            Vec<Dim> mz{};
            for (int i = 0; i < Dim; ++i) mz[i] = -z[i];
            atoms.push_back({mz, w});
        }
        return atoms;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace nlcomp::testing
