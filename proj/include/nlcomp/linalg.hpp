/// @file linalg.hpp
/// @brief Fixed-size vectors and symmetric matrices for N in {1, 2}.
#pragma once

#include <array>
#include <cmath>

namespace nlcomp {

template <int Dim>
using Vec = std::array<double, Dim>;

template <int Dim>
using Mat = std::array<std::array<double, Dim>, Dim>;

template <int Dim>
constexpr double dot(const Vec<Dim>& a, const Vec<Dim>& b) {
    double s = 0.0;
    for (int i = 0; i < Dim; ++i) s += a[i] * b[i];
    return s;
}

template <int Dim>
constexpr double norm_squared(const Vec<Dim>& a) {
    return dot<Dim>(a, a);
}

template <int Dim>
double norm(const Vec<Dim>& a) {
    return std::sqrt(norm_squared<Dim>(a));
}

template <int Dim>
constexpr Mat<Dim> zero_matrix() {
    Mat<Dim> m{};
    return m;
}

template <int Dim>
constexpr Mat<Dim> scaled_identity(double c) {
    Mat<Dim> m{};
    for (int i = 0; i < Dim; ++i) m[i][i] = c;
    return m;
}

template <int Dim>
constexpr Mat<Dim> added(const Mat<Dim>& a, const Mat<Dim>& b) {
    Mat<Dim> m{};
    for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) m[i][j] = a[i][j] + b[i][j];
    return m;
}

template <int Dim>
constexpr Mat<Dim> subtracted(const Mat<Dim>& a, const Mat<Dim>& b) {
    Mat<Dim> m{};
    for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) m[i][j] = a[i][j] - b[i][j];
    return m;
}

template <int Dim>
constexpr Mat<Dim> scaled(double c, const Mat<Dim>& a) {
    Mat<Dim> m{};
    for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) m[i][j] = c * a[i][j];
    return m;
}

template <int Dim>
constexpr Mat<Dim> symmetrized(const Mat<Dim>& a) {
    Mat<Dim> m = a;
    for (int i = 0; i < Dim; ++i)
        for (int j = i + 1; j < Dim; ++j) {
            const double s = 0.5 * (a[i][j] + a[j][i]);
            m[i][j] = s;
            m[j][i] = s;
        }
    return m;
}

/// <Az, z>
template <int Dim>
constexpr double quadratic_form(const Mat<Dim>& a, const Vec<Dim>& z) {
    double s = 0.0;
    for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) s += a[i][j] * z[i] * z[j];
    return s;
}

/// trace(A B)
template <int Dim>
constexpr double trace_product(const Mat<Dim>& a, const Mat<Dim>& b) {
    double s = 0.0;
    for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) s += a[i][j] * b[j][i];
    return s;
}

template <int Dim>
constexpr double trace(const Mat<Dim>& a) {
    double s = 0.0;
    for (int i = 0; i < Dim; ++i) s += a[i][i];
    return s;
}

/// Smallest eigenvalue of a symmetric matrix (closed form for N <= 2).
template <int Dim>
double min_eigenvalue(const Mat<Dim>& a) {
    static_assert(Dim == 1 || Dim == 2, "only N in {1, 2} is supported");
    if constexpr (Dim == 1) {
        return a[0][0];
    } else {
        const double mean = 0.5 * (a[0][0] + a[1][1]);
        const double half_gap = 0.5 * (a[0][0] - a[1][1]);
        const double off = 0.5 * (a[0][1] + a[1][0]);
        return mean - std::hypot(half_gap, off);
    }
}

}  // namespace nlcomp
