/// @file experiments.hpp
/// @brief Config-driven experiments: solve, compare, moreau-verify,
///        doubling-verify, neumann-residual, convergence.
///
/// Exit codes: 0 every declared check passed, 1 a check failed (the failing
/// clause is printed), 2 the configuration is invalid.
#pragma once

#include "nlcomp/cli/config.hpp"
#include "nlcomp/nlcomp.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace nlcomp::cli {

struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::optional<double> tol_override;
};

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"solve",           "compare",
                                                "moreau-verify",   "doubling-verify",
                                                "neumann-residual", "convergence"};
    return kinds;
}

namespace detail {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Everything an experiment needs, resolved from the config.
template <int Dim>
struct Setup {
    std::string kind;
    std::string name;
    std::optional<std::uint64_t> seed;
    std::optional<LevyQuadrature<Dim>> q;
    std::optional<Grid<Dim>> grid;
    std::optional<FSpec<Dim>> F;
    std::string F_summary;
    SolveParams solve;
    double tol = 1e-8;
};

template <int Dim>
std::array<double, Dim> axis_values(const Config& cfg, const std::string& section,
                                    const std::string& key) {
    const auto v = cfg.numbers(section, key);
    if (v.size() != static_cast<std::size_t>(Dim))
        throw ConfigError(cfg.where(section, key) + ": expected " + std::to_string(Dim) +
                          " comma-separated values, got " + std::to_string(v.size()));
    std::array<double, Dim> out{};
    for (int i = 0; i < Dim; ++i) out[i] = v[i];
    return out;
}

template <int Dim>
SmoothField<Dim> field(const Config& cfg, const std::string& section, const std::string& key) {
    const auto text = cfg.require(section, key);
    try {
        return parse_field<Dim>(text);
    } catch (const InvalidArgument& e) {
        throw ConfigError(cfg.where(section, key) + ": " + e.what());
    }
}

inline std::function<double(double)> radial_density(const Config& cfg, int dim) {
    const std::string text = cfg.require("measure", "density");
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    if (colon == std::string::npos)
        throw ConfigError(cfg.where("measure", "density") + ": expected name:parameter");
    double param = 0.0;
    try {
        param = parse_double(text.substr(colon + 1));
    } catch (const InvalidArgument& e) {
        throw ConfigError(cfg.where("measure", "density") + ": " + e.what());
    }
    if (name == "power") return [param](double r) { return std::pow(r, -param); };
    if (name == "stable") {
        const double exponent = dim + param;
        return [exponent](double r) { return std::pow(r, -exponent); };
    }
    if (name == "constant") return [param](double) { return param; };
    throw ConfigError(cfg.where("measure", "density") + ": unknown density '" + name +
                      "' (expected power, stable, constant)");
}

template <int Dim>
LevyQuadrature<Dim> measure(const Config& cfg) {
    const std::string kind = cfg.require("measure", "kind");
    if (kind == "atomic") {
        std::vector<Atom<Dim>> atoms;
        const bool has_file = cfg.has("measure", "file");
        const bool has_inline = cfg.has("measure", "atoms");
        if (has_file == has_inline)
            throw ConfigError(cfg.source() + ": [measure] atomic needs exactly one of 'file' or 'atoms'");
        try {
            if (has_file) {
                const auto path = cfg.path("measure", "file");
                std::ifstream in(path);
                if (!in)
                    throw ConfigError(cfg.where("measure", "file") + ": cannot open measure file '" +
                                      path.string() + "'");
                atoms = parse_atoms<Dim>(in);
            } else {
                std::string text = cfg.require("measure", "atoms");
                for (auto& c : text)
                    if (c == '|') c = '\n';
                std::istringstream in(text);
                atoms = parse_atoms<Dim>(in);
            }
            return LevyQuadrature<Dim>::from_atoms(std::move(atoms));
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            throw ConfigError(cfg.where("measure", has_file ? "file" : "atoms") + ": " + e.what());
        }
    }
    if (kind == "radial") {
        RadialDensity spec;
        spec.density = radial_density(cfg, Dim);
        spec.r_min = cfg.number("measure", "r_min");
        spec.r_max = cfg.number("measure", "r_max");
        spec.radial_nodes = static_cast<int>(cfg.integer("measure", "nodes"));
        spec.angular_sectors = static_cast<int>(cfg.integer("measure", "sectors", 16));
        try {
            return build_quadrature<Dim>(MeasureSpec<Dim>{spec});
        } catch (const InvalidArgument& e) {
            throw ConfigError(cfg.source() + ": [measure] " + e.what());
        }
    }
    throw ConfigError(cfg.where("measure", "kind") + ": unknown measure kind '" + kind +
                      "' (expected atomic or radial)");
}

template <int Dim>
FSpec<Dim> equation(const Config& cfg, std::string& summary) {
    FSpec<Dim> F;
    F.lambda = cfg.number("equation", "lambda");
    if (!(F.lambda > 0.0))
        throw ConfigError(cfg.where("equation", "lambda") +
                          ": properness requires lambda > 0, got " + format_double(F.lambda));
    std::array<double, Dim> a{};
    if (cfg.has("equation", "diffusion")) {
        const auto v = cfg.numbers("equation", "diffusion");
        if (v.size() == 1) {
            a.fill(v[0]);
        } else if (v.size() == static_cast<std::size_t>(Dim)) {
            for (int i = 0; i < Dim; ++i) a[i] = v[i];
        } else {
            throw ConfigError(cfg.where("equation", "diffusion") + ": expected 1 or " +
                              std::to_string(Dim) + " values");
        }
    }
    for (double ai : a)
        if (ai < 0.0)
            throw ConfigError(cfg.where("equation", "diffusion") +
                              ": degenerate ellipticity requires a >= 0");
    bool any_a = false;
    for (double ai : a) any_a = any_a || ai != 0.0;
    if (any_a)
        F.diffusion = [a](const Vec<Dim>&) {
            Mat<Dim> m = zero_matrix<Dim>();
            for (int i = 0; i < Dim; ++i) m[i][i] = a[i];
            return m;
        };
    Vec<Dim> b{};
    if (cfg.has("equation", "drift")) b = axis_values<Dim>(cfg, "equation", "drift");
    const double kappa = cfg.number("equation", "kappa", 0.0);
    bool any_b = false;
    for (double bi : b) any_b = any_b || bi != 0.0;
    if (any_b || kappa != 0.0)
        F.hamiltonian = [b, kappa](const Vec<Dim>&, const Vec<Dim>& p) {
            return dot<Dim>(b, p) + kappa * std::sqrt(1.0 + norm_squared<Dim>(p));
        };
    std::string source_text = "constant:0";
    if (cfg.has("equation", "source")) {
        const auto f = field<Dim>(cfg, "equation", "source");
        source_text = f.description;
        F.source = f.value;
    }
    std::ostringstream os;
    os << "lambda=" << format_double(F.lambda) << " a=diag(";
    for (int i = 0; i < Dim; ++i) os << (i ? "," : "") << format_double(a[i]);
    os << ") b=(";
    for (int i = 0; i < Dim; ++i) os << (i ? "," : "") << format_double(b[i]);
    os << ") kappa=" << format_double(kappa) << " f=" << source_text;
    summary = os.str();
    return F;
}

inline bool kind_uses_measure(const std::string& kind) {
    return kind == "solve" || kind == "compare" || kind == "neumann-residual" ||
           kind == "convergence";
}

template <int Dim>
Setup<Dim> resolve(const Config& cfg, const std::filesystem::path& config_path,
                   const RunOptions& opts) {
    Setup<Dim> s;
    s.kind = cfg.require("experiment", "kind");
    bool known = false;
    for (const auto& k : experiment_kinds()) known = known || k == s.kind;
    if (!known)
        throw ConfigError(cfg.where("experiment", "kind") + ": unknown experiment kind '" + s.kind +
                          "'");
    s.name = cfg.get("experiment", "name", config_path.stem().string());
    if (cfg.has("experiment", "seed")) {
        const long seed = cfg.integer("experiment", "seed");
        if (seed < 0) throw ConfigError(cfg.where("experiment", "seed") + ": seed must be >= 0");
        s.seed = static_cast<std::uint64_t>(seed);
    }
    if (s.kind == "doubling-verify" && !s.seed)
        throw ConfigError(cfg.source() +
                          ": [experiment] seed is mandatory for experiments with perturbations");

    const bool wants_measure = kind_uses_measure(s.kind) || cfg.has_section("measure");
    if (wants_measure) s.q = measure<Dim>(cfg);
    if (kind_uses_measure(s.kind) || cfg.has_section("equation")) {
        s.F = equation<Dim>(cfg, s.F_summary);
    }

    if (s.kind != "convergence") {
        typename Grid<Dim>::Box box{};
        const auto lo = axis_values<Dim>(cfg, "grid", "lower");
        const auto hi = axis_values<Dim>(cfg, "grid", "upper");
        for (int i = 0; i < Dim; ++i) box[i] = Interval{lo[i], hi[i]};
        const double h = cfg.number("grid", "h");
        const double halo = cfg.number("grid", "halo", (s.q ? s.q->max_jump() : 0.0) + h);
        try {
            s.grid = Grid<Dim>::make(box, h, halo);
        } catch (const InvalidArgument& e) {
            throw ConfigError(cfg.source() + ": [grid] " + e.what());
        }
        if (s.q && s.q->max_jump() > s.grid->halo_radius() + 1e-12)
            throw ConfigError(cfg.where("grid", "halo") + ": halo " +
                              format_double(s.grid->halo_radius()) +
                              " does not cover the largest jump " + format_double(s.q->max_jump()));
    }

    s.solve.damping = cfg.number("solver", "damping", s.solve.damping);
    s.solve.max_iters = cfg.integer("solver", "max_iters", s.solve.max_iters);
    s.solve.stop_tol = cfg.number("solver", "stop_tol", s.solve.stop_tol);
    if (cfg.has("solver", "scheme")) {
        try {
            s.solve.scheme = parse_scheme(cfg.require("solver", "scheme"));
        } catch (const InvalidArgument& e) {
            throw ConfigError(cfg.where("solver", "scheme") + ": " + e.what());
        }
    }
    try {
        s.solve.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(cfg.source() + ": [solver] " + e.what());
    }
    s.tol = cfg.number("checks", "tol", 1e-8);
    if (opts.tol_override) s.tol = *opts.tol_override;
    return s;
}

class Outputs {
public:
    Outputs(std::filesystem::path dir, std::string name) : dir_(std::move(dir)), name_(std::move(name)) {
        std::filesystem::create_directories(dir_);
    }

    std::ofstream open(const std::string& what) {
        const auto path = dir_ / (name_ + "." + what);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write output file '" + path.string() + "'");
        files_.push_back(path.filename().string());
        return out;
    }

    const std::vector<std::string>& files() const { return files_; }

private:
    std::filesystem::path dir_;
    std::string name_;
    std::vector<std::string> files_;
};

template <int Dim>
double closure_sup(const GridFunction<Dim>& u) {
    double m = 0.0;
    const auto& g = u.grid();
    for (std::size_t f = 0; f < g.node_count(); ++f)
        if (g.in_closure(g.unflatten(f))) m = std::max(m, std::abs(u.values()[f]));
    return m;
}

template <int Dim>
void run_solve(const Config& cfg, Setup<Dim>& s, Report& rep, std::vector<Check>& checks,
               Outputs& outs) {
    const auto g = field<Dim>(cfg, "data", "g");
    const auto sol = solve_dirichlet<Dim>(*s.F, g.value, *s.q, *s.grid, s.solve);
    rep.add("iterations", sol.iterations);
    rep.add("residual", sol.residual);
    double recheck = 0.0;
    for (const auto& k : s.grid->interior_nodes())
        recheck = std::max(recheck, std::abs(scheme_residual<Dim>(sol.u, k, *s.F, *s.q)));
    rep.add("residual_recheck", recheck);
    checks.push_back({"residual certificate", recheck <= s.solve.stop_tol,
                      "sup residual " + format_double(recheck) + " vs stop_tol " +
                          format_double(s.solve.stop_tol)});
    if (cfg.has("data", "exact")) {
        const auto exact = field<Dim>(cfg, "data", "exact");
        double err = 0.0;
        for (const auto& k : s.grid->interior_nodes())
            err = std::max(err, std::abs(sol.u[k] - exact.value(s.grid->coord(k))));
        rep.add("error_vs_exact", err);
        if (cfg.has("checks", "max_error")) {
            const double bound = cfg.number("checks", "max_error");
            checks.push_back({"error bound", err <= bound,
                              "error " + format_double(err) + " vs " + format_double(bound)});
        }
    }
    auto out = outs.open("solution.csv");
    write_csv<Dim>(out, sol.u);
}

template <int Dim>
void run_compare(const Config& cfg, Setup<Dim>& s, Report& rep, std::vector<Check>& checks,
                 Outputs& outs) {
    const auto g1 = field<Dim>(cfg, "data", "g1");
    const auto g2 = field<Dim>(cfg, "data", "g2");
    for (std::size_t f = 0; f < s.grid->node_count(); ++f) {
        const auto k = s.grid->unflatten(f);
        if (!s.grid->is_interior(k) && g1.value(s.grid->coord(k)) > g2.value(s.grid->coord(k)))
            throw ConfigError(cfg.source() + ": [data] g1 <= g2 fails on exterior node " +
                              s.grid->describe_node(k));
    }
    const auto s1 = solve_dirichlet<Dim>(*s.F, g1.value, *s.q, *s.grid, s.solve);
    const auto s2 = solve_dirichlet<Dim>(*s.F, g2.value, *s.q, *s.grid, s.solve);
    double violation = -std::numeric_limits<double>::infinity();
    Index<Dim> witness{};
    for (const auto& k : s.grid->interior_nodes()) {
        const double d = s1.u[k] - s2.u[k];
        if (d > violation) {
            violation = d;
            witness = k;
        }
    }
    rep.add("iterations_1", s1.iterations);
    rep.add("iterations_2", s2.iterations);
    rep.add("violation", violation);
    rep.add("violation_node", s.grid->describe_node(witness));
    rep.add("tol", s.tol);
    checks.push_back({"comparison", violation <= s.tol,
                      "max(u1 - u2) = " + format_double(violation) + " at " +
                          s.grid->describe_node(witness)});
    auto o1 = outs.open("u1.csv");
    write_csv<Dim>(o1, s1.u);
    auto o2 = outs.open("u2.csv");
    write_csv<Dim>(o2, s2.u);
}

template <int Dim>
void run_moreau(const Config& cfg, Setup<Dim>& s, Report& rep, std::vector<Check>& checks,
                Outputs& outs) {
    const auto uf = field<Dim>(cfg, "data", "u");
    const auto vf = cfg.has("data", "v") ? field<Dim>(cfg, "data", "v") : uf;
    const auto u = GridFunction<Dim>::sample(*s.grid, uf.value);
    const auto v = GridFunction<Dim>::sample(*s.grid, vf.value);
    const auto rs = cfg.numbers("moreau", "r");
    const double M = cfg.number("moreau", "M", std::max(closure_sup<Dim>(u), closure_sup<Dim>(v)));
    const bool brute = cfg.flag("moreau", "brute_force_check", s.grid->node_count() <= 20000);
    const double certify_tol = cfg.number("checks", "certify_tol", s.tol);
    const bool curve = cfg.flag("moreau", "residual_curve", false);
    const double eps = cfg.number("moreau", "eps", 0.2);
    std::optional<FSpec<Dim>> Fm;
    if (curve) {
        if (!s.q || !s.F)
            throw ConfigError(cfg.where("moreau", "residual_curve") +
                              ": needs [measure] and [equation] sections");
        Fm = manufactured_fspec<Dim>(*s.F, *s.q, uf);
        rep.add("residual_curve_source", "manufactured so that u solves the equation");
    }
    rep.add("M", M);
    std::vector<double> nus;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const double r = rs[i];
        if (!(r > 0.0)) throw ConfigError(cfg.where("moreau", "r") + ": r must be positive");
        const std::string tag = "r" + std::to_string(i);
        const auto ur = sup_convolution<Dim>(u, r);
        const auto vr = inf_convolution<Dim>(v, r);
        bool above = true, below = true;
        for (std::size_t f = 0; f < u.values().size(); ++f) {
            above = above && ur.values()[f] >= u.values()[f];
            below = below && vr.values()[f] <= v.values()[f];
        }
        const auto dual = sup_convolution<Dim>(v.negated(), r).negated();
        bool exact_dual = true;
        for (std::size_t f = 0; f < v.values().size(); ++f)
            exact_dual = exact_dual && dual.values()[f] == vr.values()[f];
        const auto cu = certify_semiconvex<Dim>(ur, 1.0 / (r * r));
        const auto cv = certify_semiconcave<Dim>(vr, 1.0 / (r * r));
        const auto omega_r = shrunken_domain<Dim>(*s.grid, MoreauParams{r, M});
        rep.add(tag + ".r", r);
        rep.add(tag + ".shrunken_domain_nodes", omega_r.size());
        rep.add(tag + ".semiconvex_worst", cu.worst_violation);
        rep.add(tag + ".semiconcave_worst", cv.worst_violation);
        checks.push_back({tag + " sup-convolution dominates", above, "u^r >= u"});
        checks.push_back({tag + " inf-convolution minorizes", below, "v_r <= v"});
        checks.push_back({tag + " duality", exact_dual, "inf(v, r) = -sup(-v, r) bitwise"});
        checks.push_back({tag + " semiconvexity", cu.passes(certify_tol),
                          "worst eigenvalue " + format_double(cu.worst_violation) + " at " +
                              s.grid->describe_node(cu.witness_node)});
        checks.push_back({tag + " semiconcavity", cv.passes(certify_tol),
                          "worst eigenvalue " + format_double(cv.worst_violation) + " at " +
                              s.grid->describe_node(cv.witness_node)});
        if (brute) {
            const auto ub = sup_convolution<Dim>(u, r, EnvelopeMethod::brute_force);
            bool same = true;
            for (std::size_t f = 0; f < u.values().size(); ++f)
                same = same && ub.values()[f] == ur.values()[f];
            checks.push_back({tag + " separable equals brute force", same, "bitwise"});
        }
        const double L = sup_convolution_lipschitz_bound<Dim>(u, r);
        double worst_slope = 0.0;
        const auto& g = *s.grid;
        for (std::size_t f = 0; f < g.node_count(); ++f) {
            const auto k = g.unflatten(f);
            for (int a = 0; a < Dim; ++a) {
                auto n = k;
                ++n[a];
                if (g.contains(n))
                    worst_slope = std::max(worst_slope, std::abs(ur[n] - ur[k]) / g.spacing());
            }
        }
        rep.add(tag + ".lipschitz_observed", worst_slope);
        rep.add(tag + ".lipschitz_bound", L);
        checks.push_back({tag + " lipschitz bound", worst_slope <= L * (1.0 + 1e-12),
                          format_double(worst_slope) + " vs " + format_double(L)});
        if (curve) {
            double nu = -std::numeric_limits<double>::infinity();
            for (const auto& k : omega_r) {
                const auto jet = discrete_jet<Dim>(ur, k);
                const double delta = minimal_jet_slack<Dim>(ur, k, jet, eps, Side::sub);
                nu = std::max(nu, sub_residual<Dim>(ur, k, jet, *Fm, *s.q, eps, delta));
            }
            rep.add(tag + ".nu", omega_r.empty() ? std::string("empty") : format_double(nu));
            if (!omega_r.empty()) nus.push_back(nu);
        }
        auto o1 = outs.open("sup_" + tag + ".csv");
        write_csv<Dim>(o1, ur);
        auto o2 = outs.open("inf_" + tag + ".csv");
        write_csv<Dim>(o2, vr);
    }
    if (curve) {
        bool decreasing = true;
        for (std::size_t i = 1; i < nus.size(); ++i) decreasing = decreasing && nus[i] < nus[i - 1];
        checks.push_back({"residual curve decreases with r", decreasing,
                          "nu(r) must decrease along the listed r values"});
    }
}

template <int Dim>
Window<Dim> window(const Config& cfg, const Grid<Dim>& grid) {
    const auto xl = axis_values<Dim>(cfg, "doubling", "x_lower");
    const auto xu = axis_values<Dim>(cfg, "doubling", "x_upper");
    const auto yl = axis_values<Dim>(cfg, "doubling", "y_lower");
    const auto yu = axis_values<Dim>(cfg, "doubling", "y_upper");
    std::array<Interval, Dim> xb{}, yb{};
    for (int i = 0; i < Dim; ++i) {
        xb[i] = Interval{xl[i], xu[i]};
        yb[i] = Interval{yl[i], yu[i]};
    }
    try {
        return Window<Dim>::from_boxes(grid, xb, yb);
    } catch (const InvalidArgument& e) {
        throw ConfigError(cfg.source() + ": [doubling] " + e.what());
    }
}

template <int Dim>
void run_doubling(const Config& cfg, Setup<Dim>& s, Report& rep, std::vector<Check>& checks,
                  Outputs& outs) {
    auto U = GridFunction<Dim>::sample(*s.grid, field<Dim>(cfg, "data", "U").value);
    auto V = GridFunction<Dim>::sample(*s.grid, field<Dim>(cfg, "data", "V").value);
    JensenParams jp;
    jp.seed = *s.seed;
    jp.delta0 = cfg.number("doubling", "delta0", jp.delta0);
    jp.order_tol = cfg.number("checks", "order_tol", jp.order_tol);
    jp.certify_tol = cfg.number("checks", "certify_tol", jp.certify_tol);
    if (cfg.has("doubling", "regularize_r")) {
        const double r = cfg.number("doubling", "regularize_r");
        if (!(r > 0.0))
            throw ConfigError(cfg.where("doubling", "regularize_r") + ": must be positive");
        U = sup_convolution<Dim>(U, r);
        V = inf_convolution<Dim>(V, r);
        jp.semiconvexity = cfg.number("doubling", "semiconvexity", 1.0 / (r * r));
    } else {
        jp.semiconvexity = cfg.number("doubling", "semiconvexity");
    }
    const double alpha = cfg.number("doubling", "alpha");
    if (!(alpha > 0.0)) throw ConfigError(cfg.where("doubling", "alpha") + ": alpha must be positive");
    const long count = cfg.integer("doubling", "count", 10);
    if (count < 0) throw ConfigError(cfg.where("doubling", "count") + ": count must be >= 0");
    const auto w = window<Dim>(cfg, *s.grid);
    const auto pt = doubling_maximize<Dim>(U, V, alpha, w);
    rep.add("seed", static_cast<std::size_t>(*s.seed));
    rep.add("alpha", alpha);
    rep.add("x_bar", s.grid->describe_node(pt.x_bar));
    rep.add("y_bar", s.grid->describe_node(pt.y_bar));
    rep.add("phi_max", pt.phi_max);
    rep.add("boundary_max", pt.boundary_max);
    rep.add("mu", pt.mu);
    checks.push_back({"interior margin", pt.admissible(), "mu = " + format_double(pt.mu)});
    if (cfg.has("checks", "expected_mu")) {
        const double want = cfg.number("checks", "expected_mu");
        checks.push_back({"expected mu", std::abs(pt.mu - want) <= 1e-9,
                          "mu = " + format_double(pt.mu) + " expected " + format_double(want)});
    }
    if (!pt.admissible()) return;

    std::vector<PerturbedMax<Dim>> seq;
    try {
        seq = jensen_sequence<Dim>(U, V, pt, static_cast<int>(count), jp);
        checks.push_back({"perturbed maxima", true, std::to_string(seq.size()) + " witnesses"});
    } catch (const VerificationFailure& e) {
        checks.push_back({"perturbed maxima: " + e.clause(), false, e.what()});
        return;
    } catch (const InvalidArgument& e) {
        checks.push_back({"perturbed maxima: preconditions", false, e.what()});
        return;
    }
    auto out = outs.open("perturbed.csv");
    out << "m";
    for (const char* v : {"x", "y", "p", "p_prime", "tilt_x", "tilt_y"})
        for (int i = 0; i < Dim; ++i) out << ',' << v << (i + 1);
    for (const char* v : {"X", "Y"})
        for (int i = 0; i < Dim; ++i)
            for (int j = 0; j < Dim; ++j) out << ',' << v << (i + 1) << (j + 1);
    out << ",eps,delta,order_margin,gradient_gap,gradient_tol,key_margin\n";
    double worst_key = std::numeric_limits<double>::infinity();
    double worst_order = std::numeric_limits<double>::infinity();
    for (const auto& pm : seq) {
        const auto key = check_key_inequality<Dim>(U, V, pm, w, s.tol);
        worst_key = std::min(worst_key, key.worst_margin);
        worst_order = std::min(worst_order, pm.order_margin);
        if (!key.pass)
            checks.push_back({"key inequality at m=" + std::to_string(pm.m), false,
                              "margin " + format_double(key.worst_margin) + " at z = h*" +
                                  to_string<Dim>(key.witness)});
        const auto x = s.grid->coord(pm.x);
        const auto y = s.grid->coord(pm.y);
        out << pm.m;
        for (const auto* vec : {&x, &y, &pm.p, &pm.p_prime, &pm.tilt_x, &pm.tilt_y})
            for (int i = 0; i < Dim; ++i) out << ',' << format_double((*vec)[i]);
        for (const auto* mat : {&pm.X, &pm.Y})
            for (int i = 0; i < Dim; ++i)
                for (int j = 0; j < Dim; ++j) out << ',' << format_double((*mat)[i][j]);
        out << ',' << format_double(pm.eps) << ',' << format_double(pm.delta) << ','
            << format_double(pm.order_margin) << ',' << format_double(pm.gradient_gap) << ','
            << format_double(pm.gradient_tol) << ',' << format_double(key.worst_margin) << '\n';
    }
    if (!seq.empty()) {
        rep.add("witnesses", seq.size());
        rep.add("worst_order_margin", worst_order);
        rep.add("worst_key_margin", worst_key);
        rep.add("final_gradient_gap", seq.back().gradient_gap);
        rep.add("final_distance_to_doubling_point", seq.back().distance_to_doubling_point);
        checks.push_back({"key inequality", worst_key >= -s.tol,
                          "worst margin " + format_double(worst_key)});
    }
}

template <int Dim>
void run_neumann(const Config& cfg, Setup<Dim>& s, Report& rep, std::vector<Check>& checks,
                 Outputs& outs) {
    const auto wf = field<Dim>(cfg, "data", "w");
    const auto w = GridFunction<Dim>::sample(*s.grid, wf.value);
    NeumannParams np;
    np.rho = cfg.number("neumann", "rho");
    np.r = cfg.number("neumann", "r");
    np.M = cfg.number("neumann", "M", closure_sup<Dim>(w));
    const std::string side_text = cfg.get("neumann", "side", "sub");
    if (side_text != "sub" && side_text != "super")
        throw ConfigError(cfg.where("neumann", "side") + ": expected sub or super");
    const Side side = side_text == "sub" ? Side::sub : Side::super;
    if (!(np.rho > 0.0)) throw ConfigError(cfg.where("neumann", "rho") + ": rho must be positive");
    if (!(np.r > 0.0)) throw ConfigError(cfg.where("neumann", "r") + ": r must be positive");
    if (s.grid->halo_layers() < 1)
        throw ConfigError(cfg.where("grid", "halo") + ": boundary jets need a halo of at least h");
    const auto normals = box_normals<Dim>(*s.grid);
    auto out = outs.open("neumann.csv");
    for (int i = 0; i < Dim; ++i) out << 'x' << (i + 1) << ',';
    out << "integral_branch,neumann_branch,value,boundary_anchors,skipped_atoms\n";
    std::size_t skipped = 0, nodes = 0, neumann_active = 0;
    double worst_slope_error = 0.0;
    auto shifted = np;
    shifted.rho = 2.0 * np.rho;
    for (std::size_t f = 0; f < s.grid->node_count(); ++f) {
        const auto k = s.grid->unflatten(f);
        if (!s.grid->in_closure(k)) continue;
        const auto jet = discrete_jet<Dim>(w, k);
        const auto res = neumann_residuals<Dim>(w, k, jet, *s.F, *s.q, *s.grid, normals, np, side);
        const auto res2 =
            neumann_residuals<Dim>(w, k, jet, *s.F, *s.q, *s.grid, normals, shifted, side);
        ++nodes;
        skipped += res.skipped_atoms;
        if (res.boundary_anchors > 0) {
            const double slope = (res2.neumann_branch - res.neumann_branch) / np.rho;
            worst_slope_error = std::max(worst_slope_error,
                                         std::abs(slope - (side == Side::sub ? 1.0 : -1.0)));
            if (res.value == res.neumann_branch) ++neumann_active;
        }
        const auto x = s.grid->coord(k);
        for (int i = 0; i < Dim; ++i) out << format_double(x[i]) << ',';
        out << format_double(res.integral_branch) << ','
            << (std::isinf(res.neumann_branch) ? std::string(res.neumann_branch > 0 ? "inf" : "-inf")
                                               : format_double(res.neumann_branch))
            << ',' << format_double(res.value) << ',' << res.boundary_anchors << ','
            << res.skipped_atoms << '\n';
    }
    rep.add("side", side_text);
    rep.add("rho", np.rho);
    rep.add("r", np.r);
    rep.add("M", np.M);
    rep.add("anchor_radius", std::sqrt(2.0 * np.M) * np.r);
    rep.add("nodes", nodes);
    rep.add("neumann_branch_active", neumann_active);
    rep.add("skipped_atoms", skipped);
    checks.push_back({"neumann branch affine in rho", worst_slope_error <= 1e-9,
                      "worst slope error " + format_double(worst_slope_error)});
}

template <int Dim>
void run_convergence(const Config& cfg, Setup<Dim>& s, Report& rep, std::vector<Check>& checks,
                     Outputs& outs) {
    const auto exact = field<Dim>(cfg, "data", "exact");
    const auto hs = cfg.numbers("convergence", "h");
    typename Grid<Dim>::Box box{};
    const auto lo = axis_values<Dim>(cfg, "grid", "lower");
    const auto hi = axis_values<Dim>(cfg, "grid", "upper");
    for (int i = 0; i < Dim; ++i) box[i] = Interval{lo[i], hi[i]};
    for (double h : hs) {
        try {
            (void)Grid<Dim>::make(box, h, 0.0);
        } catch (const InvalidArgument& e) {
            throw ConfigError(cfg.where("convergence", "h") + ": " + e.what());
        }
    }
    const auto table = convergence_study<Dim>(exact, *s.F, *s.q, box, hs, s.solve);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        const std::string tag = "row" + std::to_string(i);
        rep.add(tag + ".h", r.h);
        rep.add(tag + ".error", r.error);
        rep.add(tag + ".order", std::isnan(r.order) ? std::string("-") : format_double(r.order));
        rep.add(tag + ".iterations", r.iterations);
    }
    if (cfg.has("checks", "min_order") && table.rows.size() >= 2) {
        const double want = cfg.number("checks", "min_order");
        const double got = table.rows.back().order;
        checks.push_back({"observed order", got >= want,
                          "order " + format_double(got) + " vs required " + format_double(want)});
    }
    if (cfg.has("checks", "max_error")) {
        const double bound = cfg.number("checks", "max_error");
        double worst = 0.0;
        for (const auto& r : table.rows) worst = std::max(worst, r.error);
        checks.push_back({"error bound", worst <= bound,
                          "worst error " + format_double(worst) + " vs " + format_double(bound)});
    }
    auto out = outs.open("convergence.csv");
    write_csv(out, table);
}

template <int Dim>
int run_dim(const Config& cfg, const std::filesystem::path& path, const RunOptions& opts,
            std::ostream& out, std::ostream& err) {
    auto s = resolve<Dim>(cfg, path, opts);
    Report rep;
    rep.add("experiment", s.kind);
    rep.add("name", s.name);
    rep.add("dim", Dim);
    if (s.seed) rep.add("seed", static_cast<std::size_t>(*s.seed));
    if (s.grid) {
        rep.add("h", s.grid->spacing());
        rep.add("interior_nodes", s.grid->interior_count());
    }
    if (s.q) {
        rep.add("s2", s.q->second_moment_small());
        rep.add("tmass", s.q->tail_mass());
        rep.add("truncated_second_moment", s.q->truncated_second_moment());
        if (s.grid) rep.add("interpolation_error_scale",
                            interpolation_diagnostics<Dim>(*s.q, s.grid->spacing()).error_scale);
    }
    if (s.F) rep.add("equation", s.F_summary);
    if (s.kind != "convergence" && s.kind != "doubling-verify" && s.kind != "moreau-verify")
        rep.add("scheme", to_string(s.solve.scheme));

    std::vector<Check> checks;
    Outputs outs(opts.out_dir, s.name);
    if (s.kind == "solve") run_solve<Dim>(cfg, s, rep, checks, outs);
    else if (s.kind == "compare") run_compare<Dim>(cfg, s, rep, checks, outs);
    else if (s.kind == "moreau-verify") run_moreau<Dim>(cfg, s, rep, checks, outs);
    else if (s.kind == "doubling-verify") run_doubling<Dim>(cfg, s, rep, checks, outs);
    else if (s.kind == "neumann-residual") run_neumann<Dim>(cfg, s, rep, checks, outs);
    else run_convergence<Dim>(cfg, s, rep, checks, outs);

    const auto unknown = cfg.unused();
    if (!unknown.empty()) throw ConfigError(unknown.front());

    bool all = true;
    for (const auto& c : checks) {
        rep.add("check." + c.name, c.pass);
        all = all && c.pass;
    }
    rep.add("result", all ? "pass" : "fail");
    {
        auto file = outs.open("report.txt");
        file << rep;
    }
    out << rep;
    for (const auto& c : checks)
        if (!c.pass) err << "check failed: " << c.name << ": " << c.detail << '\n';
    return all ? 0 : 1;
}

template <int Dim>
void describe_dim(const Config& cfg, const std::filesystem::path& path, std::ostream& out) {
    auto s = resolve<Dim>(cfg, path, RunOptions{});
    Report rep;
    rep.add("experiment", s.kind);
    rep.add("name", s.name);
    rep.add("dim", Dim);
    if (s.seed) rep.add("seed", static_cast<std::size_t>(*s.seed));
    if (s.grid) {
        std::ostringstream box;
        for (int i = 0; i < Dim; ++i)
            box << (i ? " x " : "") << '[' << format_double(s.grid->box()[i].lower) << ','
                << format_double(s.grid->box()[i].upper) << ']';
        rep.add("grid.box", box.str());
        rep.add("grid.h", s.grid->spacing());
        rep.add("grid.halo_radius", s.grid->halo_radius());
        rep.add("grid.interior_nodes", s.grid->interior_count());
        rep.add("grid.stored_nodes", s.grid->node_count());
    }
    if (s.q) {
        rep.add("measure.atoms", s.q->size());
        rep.add("measure.s2", s.q->second_moment_small());
        rep.add("measure.tmass", s.q->tail_mass());
        rep.add("measure.max_jump", s.q->max_jump());
        rep.add("measure.truncated_second_moment", s.q->truncated_second_moment());
        for (std::size_t j = 0; j < s.q->size(); ++j) {
            const auto& a = s.q->atoms()[j];
            std::ostringstream line;
            line << "z=(";
            for (int i = 0; i < Dim; ++i) line << (i ? "," : "") << format_double(a.z[i]);
            line << ") w=" << format_double(a.weight) << ' ' << (s.q->is_small(j) ? "small" : "tail");
            rep.add("measure.atom" + std::to_string(j), line.str());
        }
    }
    if (s.F) rep.add("equation", s.F_summary);
    rep.add("solver", "scheme=" + std::string(to_string(s.solve.scheme)) +
                          " damping=" + format_double(s.solve.damping) +
                          " max_iters=" + std::to_string(s.solve.max_iters) +
                          " stop_tol=" + format_double(s.solve.stop_tol));
    rep.add("tol", s.tol);
    std::string planned;
    if (s.kind == "solve") planned = "residual certificate; error bound when [checks] max_error is set";
    else if (s.kind == "compare") planned = "interior ordering u1 <= u2 + tol";
    else if (s.kind == "moreau-verify")
        planned = "envelope bounds, duality, semiconvexity, lipschitz bound, separable = brute force";
    else if (s.kind == "doubling-verify")
        planned = "interior margin, perturbed maxima clauses, key inequality";
    else if (s.kind == "neumann-residual") planned = "neumann branch affine in rho";
    else planned = "observed order and error bound when set";
    rep.add("planned_checks", planned);
    out << rep;
}

inline int dimension_of(const Config& cfg) {
    const long dim = cfg.integer("experiment", "dim", 1);
    if (dim != 1 && dim != 2)
        throw ConfigError(cfg.where("experiment", "dim") + ": dim must be 1 or 2");
    return static_cast<int>(dim);
}

}  // namespace detail

inline int run(const std::filesystem::path& path, const RunOptions& opts, std::ostream& out,
               std::ostream& err) {
    try {
        const auto cfg = Config::load(path);
        return detail::dimension_of(cfg) == 1 ? detail::run_dim<1>(cfg, path, opts, out, err)
                                              : detail::run_dim<2>(cfg, path, opts, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ConvergenceFailure& e) {
        err << "check failed: solver: " << e.what() << '\n';
        return 1;
    } catch (const InvalidArgument& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ReachError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

inline int describe(const std::filesystem::path& path, std::ostream& out, std::ostream& err) {
    try {
        const auto cfg = Config::load(path);
        if (detail::dimension_of(cfg) == 1) detail::describe_dim<1>(cfg, path, out);
        else detail::describe_dim<2>(cfg, path, out);
        return 0;
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace nlcomp::cli
