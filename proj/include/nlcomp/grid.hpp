/// @file grid.hpp
/// @brief Uniform Cartesian grids with an exterior halo, grid functions, and
///        discrete second-order jets.
///
/// Lattice convention (per axis, n = cells, H = halo layers):
///   - node index k is an offset from the box's lower corner, coordinate lower + k*h
///   - interior nodes:  1 <= k <= n-1   (strictly inside the open box)
///   - closure nodes:   0 <= k <= n
///   - stored lattice: -H <= k <= n+H   (box boundary and halo carry exterior data)
/// Flat storage is row-major with axis 0 slowest, so flat order is lexicographic.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace nlcomp {

template <int Dim>
using Index = std::array<long, Dim>;

struct Interval {
    double lower;
    double upper;
};

template <int Dim>
std::string to_string(const Index<Dim>& k) {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < Dim; ++i) os << (i ? "," : "") << k[i];
    os << ')';
    return os.str();
}

template <int Dim>
class Grid {
    static_assert(Dim == 1 || Dim == 2, "only N in {1, 2} is supported");

public:
    using Box = std::array<Interval, Dim>;

    /// Rejects h <= 0, negative halo, empty axes, and axis lengths that are not
    /// an integer multiple of h (1e-12 relative). At least one interior node per
    /// axis is required.
    static Grid make(const Box& box, double h, double halo_radius) {
        if (!(h > 0.0) || !std::isfinite(h))
            throw InvalidArgument("grid spacing h must be positive and finite");
        if (!(halo_radius >= 0.0) || !std::isfinite(halo_radius))
            throw InvalidArgument("halo radius must be nonnegative and finite");
        Grid g;
        g.box_ = box;
        g.h_ = h;
        g.halo_radius_ = halo_radius;
        g.halo_ = static_cast<long>(std::floor(halo_radius / h + 1e-9));
        for (int i = 0; i < Dim; ++i) {
            const double length = box[i].upper - box[i].lower;
            if (!(length > 0.0) || !std::isfinite(length))
                throw InvalidArgument("axis " + std::to_string(i) + " has an empty interval");
            const double ratio = length / h;
            const double rounded = std::round(ratio);
            if (std::abs(ratio - rounded) > 1e-12 * ratio)
                throw InvalidArgument("axis " + std::to_string(i) + " length " +
                                      std::to_string(length) +
                                      " is not an integer multiple of h = " +
                                      std::to_string(h));
            g.cells_[i] = static_cast<long>(rounded);
            if (g.cells_[i] < 2)
                throw InvalidArgument("axis " + std::to_string(i) +
                                      " has no interior node (needs at least 2 cells)");
        }
        std::size_t stride = 1;
        for (int i = Dim - 1; i >= 0; --i) {
            g.strides_[i] = stride;
            stride *= static_cast<std::size_t>(g.extent(i));
        }
        g.node_count_ = stride;
        return g;
    }

    const Box& box() const noexcept { return box_; }
    double spacing() const noexcept { return h_; }
    double halo_radius() const noexcept { return halo_radius_; }
    long cells(int axis) const noexcept { return cells_[axis]; }
    long halo_layers() const noexcept { return halo_; }
    long extent(int axis) const noexcept { return cells_[axis] + 2 * halo_ + 1; }
    std::size_t node_count() const noexcept { return node_count_; }

    std::size_t interior_count() const noexcept {
        std::size_t c = 1;
        for (int i = 0; i < Dim; ++i) c *= static_cast<std::size_t>(cells_[i] - 1);
        return c;
    }

    bool contains(const Index<Dim>& k) const noexcept {
        for (int i = 0; i < Dim; ++i)
            if (k[i] < -halo_ || k[i] > cells_[i] + halo_) return false;
        return true;
    }

    bool is_interior(const Index<Dim>& k) const noexcept {
        for (int i = 0; i < Dim; ++i)
            if (k[i] < 1 || k[i] > cells_[i] - 1) return false;
        return true;
    }

    bool in_closure(const Index<Dim>& k) const noexcept {
        for (int i = 0; i < Dim; ++i)
            if (k[i] < 0 || k[i] > cells_[i]) return false;
        return true;
    }

    /// Nodes of the closure lying on some face of the box.
    bool on_boundary(const Index<Dim>& k) const noexcept {
        return in_closure(k) && !is_interior(k);
    }

    Vec<Dim> coord(const Index<Dim>& k) const noexcept {
        Vec<Dim> x{};
        for (int i = 0; i < Dim; ++i) x[i] = box_[i].lower + static_cast<double>(k[i]) * h_;
        return x;
    }

    std::size_t flat(const Index<Dim>& k) const noexcept {
        std::size_t f = 0;
        for (int i = 0; i < Dim; ++i) f += static_cast<std::size_t>(k[i] + halo_) * strides_[i];
        return f;
    }

    Index<Dim> unflatten(std::size_t f) const noexcept {
        Index<Dim> k{};
        for (int i = 0; i < Dim; ++i) {
            k[i] = static_cast<long>(f / strides_[i]) - halo_;
            f %= strides_[i];
        }
        return k;
    }

    /// Interior nodes in lexicographic order.
    std::vector<Index<Dim>> interior_nodes() const {
        std::vector<Index<Dim>> out;
        out.reserve(interior_count());
        for (std::size_t f = 0; f < node_count_; ++f) {
            const auto k = unflatten(f);
            if (is_interior(k)) out.push_back(k);
        }
        return out;
    }

    /// Euclidean distance from a closure node to the box boundary.
    double boundary_distance(const Index<Dim>& k) const noexcept {
        long layers = cells_[0];
        for (int i = 0; i < Dim; ++i) {
            layers = std::min(layers, k[i]);
            layers = std::min(layers, cells_[i] - k[i]);
        }
        return static_cast<double>(layers) * h_;
    }

    /// Lattice node at coordinate x (must sit on the lattice to 1e-9 cells).
    Index<Dim> index_of(const Vec<Dim>& x) const {
        Index<Dim> k{};
        for (int i = 0; i < Dim; ++i) {
            const double s = (x[i] - box_[i].lower) / h_;
            const double r = std::round(s);
            if (std::abs(s - r) > 1e-9 * std::max(1.0, std::abs(s)))
                throw InvalidArgument("coordinate " + std::to_string(x[i]) + " on axis " +
                                      std::to_string(i) + " is not a lattice point");
            k[i] = static_cast<long>(r);
        }
        if (!contains(k)) throw ReachError("coordinate lies outside the stored lattice");
        return k;
    }

    std::string describe_node(const Index<Dim>& k) const {
        std::ostringstream os;
        const auto x = coord(k);
        os << to_string<Dim>(k) << " at x=(";
        for (int i = 0; i < Dim; ++i) os << (i ? "," : "") << x[i];
        os << ')';
        return os.str();
    }

private:
    Box box_{};
    double h_ = 0.0;
    double halo_radius_ = 0.0;
    long halo_ = 0;
    std::array<long, Dim> cells_{};
    std::array<std::size_t, Dim> strides_{};
    std::size_t node_count_ = 0;
};

/// Real values on every stored node. Interior values are the unknowns; nodes
/// on the box boundary and in the halo hold sampled exterior data.
template <int Dim>
class GridFunction {
public:
    /// One closed-form function sampled everywhere.
    template <class Fn>
    static GridFunction sample(const Grid<Dim>& grid, Fn&& fn) {
        return sample(grid, fn, fn);
    }

    /// Interior values from `interior`, exterior data from `exterior`.
    template <class In, class Ex>
    static GridFunction sample(const Grid<Dim>& grid, In&& interior, Ex&& exterior) {
        std::vector<double> values(grid.node_count());
        for (std::size_t f = 0; f < values.size(); ++f) {
            const auto k = grid.unflatten(f);
            const auto x = grid.coord(k);
            values[f] = grid.is_interior(k) ? static_cast<double>(interior(x))
                                            : static_cast<double>(exterior(x));
        }
        return GridFunction(grid, std::move(values));
    }

    /// Values in flat (lexicographic) order over the full stored lattice.
    static GridFunction from_values(const Grid<Dim>& grid, std::vector<double> values) {
        if (values.size() != grid.node_count())
            throw InvalidArgument("value count does not match the grid node count");
        return GridFunction(grid, std::move(values));
    }

    /// Same exterior data, new interior values (in interior_nodes() order).
    GridFunction with_interior(std::span<const double> interior) const {
        if (interior.size() != grid_.interior_count())
            throw InvalidArgument("interior value count does not match the grid");
        std::vector<double> values = values_;
        std::size_t j = 0;
        for (std::size_t f = 0; f < values.size(); ++f)
            if (grid_.is_interior(grid_.unflatten(f))) values[f] = interior[j++];
        return GridFunction(grid_, std::move(values));
    }

    /// Applies fn to every stored value (interior and exterior alike).
    template <class Fn>
    GridFunction transformed(Fn&& fn) const {
        std::vector<double> values(values_.size());
        for (std::size_t f = 0; f < values.size(); ++f) values[f] = fn(values_[f]);
        return GridFunction(grid_, std::move(values));
    }

    GridFunction negated() const {
        return transformed([](double v) { return -v; });
    }

    const Grid<Dim>& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }

    double operator[](const Index<Dim>& k) const noexcept { return values_[grid_.flat(k)]; }

    double at(const Index<Dim>& k) const {
        if (!grid_.contains(k))
            throw ReachError("node " + to_string<Dim>(k) + " is outside grid and halo");
        return values_[grid_.flat(k)];
    }

    std::vector<double> interior_values() const {
        std::vector<double> out;
        out.reserve(grid_.interior_count());
        for (std::size_t f = 0; f < values_.size(); ++f)
            if (grid_.is_interior(grid_.unflatten(f))) out.push_back(values_[f]);
        return out;
    }

private:
    GridFunction(const Grid<Dim>& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        for (std::size_t f = 0; f < values_.size(); ++f)
            if (!std::isfinite(values_[f]))
                throw InvalidArgument("non-finite value at node " +
                                      grid_.describe_node(grid_.unflatten(f)));
    }

    Grid<Dim> grid_;
    std::vector<double> values_;
};

/// Multilinear interpolation stencil for a displacement z, in lattice units.
/// Displacements within 1e-9 cells of a lattice vector snap to it, so such
/// jumps read node values exactly.
template <int Dim>
struct JumpStencil {
    static constexpr int max_corners = 1 << Dim;
    std::array<Index<Dim>, max_corners> offsets{};
    std::array<double, max_corners> weights{};
    int corners = 0;
    bool on_lattice = true;
    Vec<Dim> cells{};  ///< z / h

    /// True when every corner of x + z is stored.
    bool reachable(const Grid<Dim>& grid, const Index<Dim>& k) const {
        for (int c = 0; c < corners; ++c) {
            Index<Dim> n = k;
            for (int i = 0; i < Dim; ++i) n[i] += offsets[c][i];
            if (!grid.contains(n)) return false;
        }
        return true;
    }

    double value(const GridFunction<Dim>& u, const Index<Dim>& k) const {
        if (on_lattice) {
            Index<Dim> n = k;
            for (int i = 0; i < Dim; ++i) n[i] += offsets[0][i];
            return u[n];
        }
        double s = 0.0;
        for (int c = 0; c < corners; ++c) {
            Index<Dim> n = k;
            for (int i = 0; i < Dim; ++i) n[i] += offsets[c][i];
            s += weights[c] * u[n];
        }
        return s;
    }
};

template <int Dim>
JumpStencil<Dim> make_jump_stencil(const Vec<Dim>& z, double h) {
    JumpStencil<Dim> st;
    std::array<long, Dim> base{};
    std::array<double, Dim> frac{};
    std::array<bool, Dim> snapped{};
    for (int i = 0; i < Dim; ++i) {
        const double s = z[i] / h;
        st.cells[i] = s;
        const double r = std::round(s);
        if (std::abs(s - r) <= 1e-9 * std::max(1.0, std::abs(s))) {
            base[i] = static_cast<long>(r);
            snapped[i] = true;
        } else {
            const double fl = std::floor(s);
            base[i] = static_cast<long>(fl);
            frac[i] = s - fl;
            snapped[i] = false;
            st.on_lattice = false;
        }
    }
    st.corners = 0;
    for (int mask = 0; mask < JumpStencil<Dim>::max_corners; ++mask) {
        Index<Dim> off{};
        double w = 1.0;
        bool skip = false;
        for (int i = 0; i < Dim; ++i) {
            // axis 0 is the most significant bit, keeping corners lexicographic
            const bool upper = (mask >> (Dim - 1 - i)) & 1;
            if (snapped[i]) {
                if (upper) { skip = true; break; }
                off[i] = base[i];
            } else {
                off[i] = base[i] + (upper ? 1 : 0);
                w *= upper ? frac[i] : 1.0 - frac[i];
            }
        }
        if (skip) continue;
        st.offsets[st.corners] = off;
        st.weights[st.corners] = w;
        ++st.corners;
    }
    return st;
}

/// Gradient/Hessian pair; the Hessian is symmetrized on construction.
template <int Dim>
struct Jet {
    Vec<Dim> p{};
    Mat<Dim> X{};

    Jet() = default;
    Jet(const Vec<Dim>& gradient, const Mat<Dim>& hessian)
        : p(gradient), X(symmetrized<Dim>(hessian)) {}
};

/// Central differences for the gradient, standard second differences on the
/// diagonal and the four-point cross difference off the diagonal.
template <int Dim>
Jet<Dim> discrete_jet(const GridFunction<Dim>& u, const Index<Dim>& k) {
    const auto& grid = u.grid();
    const double h = grid.spacing();
    for (int i = 0; i < Dim; ++i) {
        for (long s : {-1L, 1L}) {
            Index<Dim> n = k;
            n[i] += s;
            if (!grid.contains(n))
                throw ReachError("discrete jet at node " + grid.describe_node(k) +
                                 " is missing its neighbor " + to_string<Dim>(n));
        }
    }
    auto shifted = [&](int i, long si, int j, long sj) {
        Index<Dim> n = k;
        n[i] += si;
        n[j] += sj;
        return u[n];
    };
    const double center = u[k];
    Vec<Dim> p{};
    Mat<Dim> X{};
    for (int i = 0; i < Dim; ++i) {
        Index<Dim> plus = k, minus = k;
        plus[i] += 1;
        minus[i] -= 1;
        p[i] = (u[plus] - u[minus]) / (2.0 * h);
        X[i][i] = (u[plus] - 2.0 * center + u[minus]) / (h * h);
    }
    for (int i = 0; i < Dim; ++i)
        for (int j = i + 1; j < Dim; ++j) {
            const double c = (shifted(i, 1, j, 1) - shifted(i, 1, j, -1) -
                              shifted(i, -1, j, 1) + shifted(i, -1, j, -1)) /
                             (4.0 * h * h);
            X[i][j] = c;
            X[j][i] = c;
        }
    return Jet<Dim>(p, X);
}

/// X <= Y in the Loewner order: smallest eigenvalue of Y - X is >= -tol.
template <int Dim>
bool is_matrix_ordered(const Mat<Dim>& X, const Mat<Dim>& Y, double tol) {
    return min_eigenvalue<Dim>(symmetrized<Dim>(subtracted<Dim>(Y, X))) >= -tol;
}

/// Runtime-sized variant for matrices read from configuration or files.
inline bool is_matrix_ordered(const std::vector<std::vector<double>>& X,
                              const std::vector<std::vector<double>>& Y, double tol) {
    const std::size_t n = X.size();
    auto square = [n](const std::vector<std::vector<double>>& m) {
        for (const auto& row : m)
            if (row.size() != n) return false;
        return true;
    };
    if (Y.size() != n || !square(X) || !square(Y))
        throw InvalidArgument("matrix order requires two square matrices of equal dimension");
    if (n == 1) return Y[0][0] - X[0][0] >= -tol;
    if (n == 2) {
        Mat<2> x{{{X[0][0], X[0][1]}, {X[1][0], X[1][1]}}};
        Mat<2> y{{{Y[0][0], Y[0][1]}, {Y[1][0], Y[1][1]}}};
        return is_matrix_ordered<2>(x, y, tol);
    }
    throw InvalidArgument("matrix order is implemented for dimensions 1 and 2 only");
}

}  // namespace nlcomp
