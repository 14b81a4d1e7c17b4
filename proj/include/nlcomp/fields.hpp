/// @file fields.hpp
/// @brief Closed-form fields with derivatives, used for exterior data,
///        manufactured solutions, and test corpora.
///
/// Text form: `name:arg,arg,...`
///   constant:c            c
///   quadratic:a,b,c       a|x|^2 + b sum_i x_i + c
///   quartic:a             a sum_i x_i^4
///   sine:A,k,phase        A sin(k sum_i x_i + phase)
///   abs:a,c               a|x| + c                      (not differentiable at 0)
///   random:seed,amp,modes sum_j c_j cos(<k_j, x> + phi_j), |c_j| <= amp / j
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace nlcomp {

template <int Dim>
struct SmoothField {
    std::function<double(const Vec<Dim>&)> value;
    std::function<Vec<Dim>(const Vec<Dim>&)> gradient;
    std::function<Mat<Dim>(const Vec<Dim>&)> hessian;
    std::string description;

    double operator()(const Vec<Dim>& x) const { return value(x); }
};

namespace fields {

template <int Dim>
SmoothField<Dim> constant(double c) {
    return {[c](const Vec<Dim>&) { return c; }, [](const Vec<Dim>&) { return Vec<Dim>{}; },
            [](const Vec<Dim>&) { return zero_matrix<Dim>(); },
            "constant:" + format_double(c)};
}

template <int Dim>
SmoothField<Dim> quadratic(double a, double b, double c) {
    return {[=](const Vec<Dim>& x) {
                double s = 0.0;
                for (double xi : x) s += xi;
                return a * norm_squared<Dim>(x) + b * s + c;
            },
            [=](const Vec<Dim>& x) {
                Vec<Dim> g{};
                for (int i = 0; i < Dim; ++i) g[i] = 2.0 * a * x[i] + b;
                return g;
            },
            [=](const Vec<Dim>&) { return scaled_identity<Dim>(2.0 * a); },
            "quadratic:" + format_double(a) + "," + format_double(b) + "," + format_double(c)};
}

template <int Dim>
SmoothField<Dim> quartic(double a) {
    return {[=](const Vec<Dim>& x) {
                double s = 0.0;
                for (double xi : x) s += xi * xi * xi * xi;
                return a * s;
            },
            [=](const Vec<Dim>& x) {
                Vec<Dim> g{};
                for (int i = 0; i < Dim; ++i) g[i] = 4.0 * a * x[i] * x[i] * x[i];
                return g;
            },
            [=](const Vec<Dim>& x) {
                Mat<Dim> H = zero_matrix<Dim>();
                for (int i = 0; i < Dim; ++i) H[i][i] = 12.0 * a * x[i] * x[i];
                return H;
            },
            "quartic:" + format_double(a)};
}

template <int Dim>
SmoothField<Dim> sine(double A, double k, double phase) {
    auto arg = [=](const Vec<Dim>& x) {
        double s = 0.0;
        for (double xi : x) s += xi;
        return k * s + phase;
    };
    return {[=](const Vec<Dim>& x) { return A * std::sin(arg(x)); },
            [=](const Vec<Dim>& x) {
                Vec<Dim> g{};
                for (auto& c : g) c = A * k * std::cos(arg(x));
                return g;
            },
            [=](const Vec<Dim>& x) {
                Mat<Dim> H{};
                for (auto& row : H)
                    for (auto& c : row) c = -A * k * k * std::sin(arg(x));
                return H;
            },
            "sine:" + format_double(A) + "," + format_double(k) + "," + format_double(phase)};
}

/// Derivatives are those of the smooth branch away from 0.
template <int Dim>
SmoothField<Dim> abs(double a, double c) {
    return {[=](const Vec<Dim>& x) { return a * norm<Dim>(x) + c; },
            [=](const Vec<Dim>& x) {
                const double r = norm<Dim>(x);
                Vec<Dim> g{};
                if (r > 0.0)
                    for (int i = 0; i < Dim; ++i) g[i] = a * x[i] / r;
                return g;
            },
            [=](const Vec<Dim>& x) {
                const double r = norm<Dim>(x);
                Mat<Dim> H = zero_matrix<Dim>();
                if (r > 0.0)
                    for (int i = 0; i < Dim; ++i)
                        for (int j = 0; j < Dim; ++j)
                            H[i][j] = a * ((i == j ? 1.0 : 0.0) - x[i] * x[j] / (r * r)) / r;
                return H;
            },
            "abs:" + format_double(a) + "," + format_double(c)};
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_draw(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

template <int Dim>
SmoothField<Dim> random(std::uint64_t seed, double amp, int modes) {
    if (modes < 1) throw InvalidArgument("random field needs at least one mode");
    struct Mode {
        double c;
        Vec<Dim> k;
        double phi;
    };
    std::mt19937_64 gen(seed);
    std::vector<Mode> ms;
    for (int j = 1; j <= modes; ++j) {
        Mode m{};
        m.c = amp * (2.0 * unit_draw(gen) - 1.0) / j;
        for (auto& ki : m.k) ki = 6.0 * unit_draw(gen) - 3.0;
        m.phi = 2.0 * std::numbers::pi * unit_draw(gen);
        ms.push_back(m);
    }
    return {[ms](const Vec<Dim>& x) {
                double s = 0.0;
                for (const auto& m : ms) s += m.c * std::cos(dot<Dim>(m.k, x) + m.phi);
                return s;
            },
            [ms](const Vec<Dim>& x) {
                Vec<Dim> g{};
                for (const auto& m : ms) {
                    const double d = -m.c * std::sin(dot<Dim>(m.k, x) + m.phi);
                    for (int i = 0; i < Dim; ++i) g[i] += d * m.k[i];
                }
                return g;
            },
            [ms](const Vec<Dim>& x) {
                Mat<Dim> H = zero_matrix<Dim>();
                for (const auto& m : ms) {
                    const double d = -m.c * std::cos(dot<Dim>(m.k, x) + m.phi);
                    for (int i = 0; i < Dim; ++i)
                        for (int j = 0; j < Dim; ++j) H[i][j] += d * m.k[i] * m.k[j];
                }
                return H;
            },
            "random:" + std::to_string(seed) + "," + format_double(amp) + "," +
                std::to_string(modes)};
}

}  // namespace fields

/// Parses the `name:args` form listed at the top of this file.
template <int Dim>
SmoothField<Dim> parse_field(std::string_view text) {
    const auto colon = text.find(':');
    const std::string name(text.substr(0, colon));
    std::vector<std::string> args;
    if (colon != std::string_view::npos) {
        std::string rest(text.substr(colon + 1));
        std::size_t start = 0;
        while (true) {
            const auto comma = rest.find(',', start);
            args.push_back(rest.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    auto expect = [&](std::size_t n) {
        if (args.size() != n)
            throw InvalidArgument("field '" + name + "' takes " + std::to_string(n) +
                                  " arguments, got " + std::to_string(args.size()));
    };
    auto num = [&](std::size_t i) { return parse_double(args[i]); };
    auto integer = [&](std::size_t i) -> long long {
        const double v = num(i);
        if (v != std::floor(v) || v < 0.0)
            throw InvalidArgument("field '" + name + "' argument " + std::to_string(i + 1) +
                                  " must be a nonnegative integer");
        return static_cast<long long>(v);
    };
    if (name == "constant") {
        expect(1);
        return fields::constant<Dim>(num(0));
    }
    if (name == "quadratic") {
        expect(3);
        return fields::quadratic<Dim>(num(0), num(1), num(2));
    }
    if (name == "quartic") {
        expect(1);
        return fields::quartic<Dim>(num(0));
    }
    if (name == "sine") {
        expect(3);
        return fields::sine<Dim>(num(0), num(1), num(2));
    }
    if (name == "abs") {
        expect(2);
        return fields::abs<Dim>(num(0), num(1));
    }
    if (name == "random") {
        expect(3);
        return fields::random<Dim>(static_cast<std::uint64_t>(integer(0)), num(1),
                                   static_cast<int>(integer(2)));
    }
    throw InvalidArgument("unknown field '" + name +
                          "' (expected constant, quadratic, quartic, sine, abs, random)");
}

}  // namespace nlcomp
