// One line per criterion: PASS/FAIL, name, measured values.
// Usage: acceptance [c1 ... c10 | all]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "mgwave/error.hpp"
#include "mgwave/geo_optics.hpp"
#include "mgwave/linearize.hpp"
#include "mgwave/recon.hpp"

using namespace mgwave;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double bump(double t, double t0, double w) {
    if (t <= t0 || t >= t0 + w) return 0.0;
    double s = std::sin(std::numbers::pi * (t - t0) / w);
    return s * s * s * s;
}

Signal pulse(const Grid& grid, int leaf, double t0, double w) {
    Signal f(grid.dt(), grid.steps());
    auto& v = f.add(leaf);
    for (int n = 0; n <= grid.steps(); ++n) v[n] = bump(grid.time(n), t0, w);
    return f;
}

double median(std::vector<double> v) {
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

MetricGraph interval(double l) { return MetricGraph({"u", "v"}, {{"e", 0, 1, l, "1"}}, "v"); }

// equal-length star with n edges; the last leaf is gamma0
MetricGraph star(const std::vector<std::pair<std::string, double>>& edges) {
    std::vector<std::string> ids{"c"};
    std::vector<Edge> es;
    for (size_t i = 0; i < edges.size(); ++i) {
        ids.push_back("z" + std::to_string(i + 1));
        es.push_back({edges[i].first, 0, static_cast<int>(i + 1), edges[i].second, std::to_string(edges[i].second)});
    }
    return MetricGraph(ids, es, ids.back());
}

// ---------------------------------------------------------------- c1

Outcome c1_vertex_trace() {
    const auto t0 = std::chrono::steady_clock::now();
    auto g = MetricGraph::parse(R"({"vertices":["c","z1","z2","z3"],"edges":[
      {"id":"e1","ends":["c","z1"],"length":"2"},{"id":"e2","ends":["c","z2"],"length":"1"},
      {"id":"e3","ends":["c","z3"],"length":"5"}],"gamma0":"z3"})");
    const int z1 = g.vertex_index("z1");
    const int hub = g.vertex_index("c");
    auto exact = vertex_trace_rational(g, z1, Rational(10));
    // delays are measured from t = 0 at z1; the first arrival is at l1 = 2
    std::map<Rational, Rational> coef;
    for (const auto& term : exact.at(0).terms) coef[term.delay] = term.coefficient;
    std::vector<std::pair<Rational, Rational>> expect{{2, Rational(2, 3)}, {4, Rational(-4, 9)}, {6, Rational(2, 27)}};
    bool exact_ok = true;
    for (const auto& [d, c] : expect) exact_ok = exact_ok && coef.count(d) && coef[d] == c;
    for (const auto& [d, c] : coef) {
        if (d < 8 && d != 2 && d != 4 && d != 6) exact_ok = false;
    }
    const Rational c8 = coef.count(8) ? coef[8] : Rational(0);

    // FD hub trace: the (6,8) window sees the delay-8 term alone
    Grid grid(g, 2e-3, 0.9, 8.9);
    const double start = 0.1, width = 0.5;
    Signal f = pulse(grid, z1, start, width);
    std::vector<double> hub_trace(grid.steps() + 1, 0.0);
    StepperSetup<double> setup;
    run<double>(grid, setup, f, grid.steps(), [&](int n, std::span<const double> u) { hub_trace[n] = u[hub]; });
    double num = 0.0, den = 0.0;
    for (int n = 0; n <= grid.steps(); ++n) {
        const double t = grid.time(n);
        if (t < 8.0 || t > 8.0 + start + width + 0.1) continue;
        num += hub_trace[n];
        den += bump(t - 8.0, start, width);
    }
    const double c8_fd = num / den;
    const double c8_exact = static_cast<double>(c8);
    const double agree = std::abs(c8_fd - c8_exact) / std::abs(c8_exact);
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = exact_ok && c8 != 0 && agree < 0.01 && secs < 1.0;
    o.detail = format("(0,2) 2/3 (2,4) -4/9 (4,6) 2/27 exact=%s; (6,8): recursion %s, FD hub %.5f, rel %.2e; "
                      "printed value -8/81 differs in sign from both; %.2fs",
                      exact_ok ? "yes" : "no", c8.str().c_str(), c8_fd, agree, secs);
    return o;
}

// ---------------------------------------------------------------- c2

Outcome c2_scattering() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail;
    for (int n : {3, 4, 5}) {
        std::vector<std::pair<std::string, double>> edges;
        for (int j = 1; j <= n; ++j) edges.push_back({"e" + std::to_string(j), 1.0});
        auto g = star(edges);
        const int z1 = g.vertex_index("z1");
        Grid grid(g, 1e-3, 0.9, 1.8);
        Signal f = pulse(grid, z1, 0.05, 0.3);
        const int before = grid.step_of(0.75), after = grid.step_of(1.75);
        std::vector<double> snap_before, snap_after;
        StepperSetup<double> setup;
        run<double>(grid, setup, f, after, [&](int k, std::span<const double> u) {
            if (k == before) snap_before.assign(u.begin(), u.end());
            if (k == after) snap_after.assign(u.begin(), u.end());
        });
        auto signed_peak = [&](const std::vector<double>& u, int edge) {
            double best = 0.0;
            for (int i = 1; i < grid.cells(edge); ++i) {
                const double v = u[grid.node(edge, i)];
                if (std::abs(v) > std::abs(best)) best = v;
            }
            return best;
        };
        const double inc = signed_peak(snap_before, 0);
        const double refl = signed_peak(snap_after, 0) / inc;
        double worst_t = 0.0;
        for (int e = 1; e < n; ++e) {
            const double tr = signed_peak(snap_after, e) / inc;
            worst_t = std::max(worst_t, std::abs(tr - 2.0 / n) / (2.0 / n));
        }
        const double r_exact = -(n - 2.0) / n;
        const double r_err = std::abs(refl - r_exact) / std::abs(r_exact);
        pass = pass && worst_t < 0.02 && r_err < 0.02;
        detail += format("n=%d T rel %.1e R=%.4f (rel %.1e); ", n, worst_t, refl, r_err);
    }
    const double secs = seconds_since(t0);
    return {pass && secs < 30.0, detail + format("%.1fs", secs)};
}

// ---------------------------------------------------------------- c3

Outcome c3_reflection() {
    auto g = interval(1.0);
    Grid grid(g, 1e-3, 0.9, 2.0);
    Signal f = pulse(grid, g.controlled()[0], 0.05, 0.3);
    const int probe = grid.node(0, grid.cells(0) / 2);
    double incident = 0.0, reflected = 0.0;
    StepperSetup<double> setup;
    run<double>(grid, setup, f, grid.steps(), [&](int n, std::span<const double> u) {
        const double v = u[probe];
        if (grid.time(n) < 1.0) {
            if (std::abs(v) > std::abs(incident)) incident = v;
        } else if (std::abs(v) > std::abs(reflected)) {
            reflected = v;
        }
    });
    const double ratio = reflected / incident;
    return {std::abs(ratio + 1.0) < 0.01, format("reflected/incident = %.5f", ratio)};
}

// ---------------------------------------------------------------- c4

Outcome c4_geometric_optics() {
    const auto t0 = std::chrono::steady_clock::now();
    auto g = interval(1.0);
    std::vector<double> hs{0.02, 0.01, 0.005}, gaps;
    for (double h : hs) {
        // cfl = 1 removes grid dispersion on the uniform interval
        Grid grid(g, 5e-4, 1.0, 1.8);
        auto q = sample_potential(grid, [](int, double x) { return 1.0 + x; });
        // b = 0.2 keeps h <= b/4 at every level; b = 0.1 leaves h = 0.02 pre-asymptotic
        Probe p{g.controlled()[0], 0.1, h, 0.2};
        GoField go(g, p, grid.horizon());
        std::vector<cplx> approx(grid.node_count());
        double gap = 0.0;
        StepperSetup<cplx> setup;
        setup.q = &q;
        run<cplx>(grid, setup, probe_signal(p, grid), grid.steps(), [&](int n, std::span<const cplx> u) {
            go.fill(grid, n, approx);
            for (int k = 0; k < grid.node_count(); ++k) gap = std::max(gap, std::abs(u[k] - approx[k]));
        });
        gaps.push_back(gap);
    }
    // least-squares slope of log gap against log h
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < hs.size(); ++i) {
        const double x = std::log(hs[i]), y = std::log(gaps[i]);
        sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double m = static_cast<double>(hs.size());
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const bool decreasing = gaps[0] > gaps[1] && gaps[1] > gaps[2];
    const double secs = seconds_since(t0);
    return {decreasing && slope >= 0.7 && slope <= 1.3 && secs < 120.0,
            format("gaps %.3e %.3e %.3e, slope %.3f, %.1fs", gaps[0], gaps[1], gaps[2], slope, secs)};
}

// ---------------------------------------------------------------- c5

Outcome c5_energy_convergence() {
    auto g = interval(1.0);
    Grid grid(g, 5e-3, 0.9, 10.0);
    StepperSetup<double> setup;
    setup.initial_current.assign(grid.node_count(), 0.0);
    for (int i = 1; i < grid.cells(0); ++i) setup.initial_current[grid.node(0, i)] = bump(i * grid.dx(0), 0.3, 0.4);
    setup.initial_previous = setup.initial_current;
    LeapfrogStepper<double> stepper(grid, setup, nullptr);
    stepper.step();
    const double e0 = energy<double>(grid, nullptr, stepper.previous(), stepper.current());
    double drift = 0.0;
    while (stepper.n() < grid.steps()) {
        stepper.step();
        drift = std::max(drift, std::abs(energy<double>(grid, nullptr, stepper.previous(), stepper.current()) - e0) / e0);
    }

    std::vector<std::vector<double>> finals;
    for (double dx : {0.02, 0.01, 0.005}) {
        Grid gr(g, dx, 0.5, 1.5);
        auto q = sample_potential(gr, [](int, double x) { return 1.0 + x; });
        auto u = solve_semilinear(gr, &q, nullptr, pulse(gr, g.controlled()[0], 0.1, 0.6));
        std::vector<double> out;
        for (int i = 0; i <= gr.cells(0); ++i) out.push_back(u.value(0, i, gr.steps()));
        finals.push_back(out);
    }
    double e1 = 0.0, e2 = 0.0;
    for (size_t i = 0; i < finals[0].size(); ++i) {
        e1 = std::max(e1, std::abs(finals[0][i] - finals[1][2 * i]));
        e2 = std::max(e2, std::abs(finals[1][2 * i] - finals[2][4 * i]));
    }
    const double ratio = e1 / e2;
    return {drift < 1e-6 && ratio >= 3.4 && ratio <= 4.6,
            format("energy drift %.2e over 10 traversals, convergence ratio %.3f", drift, ratio)};
}

// ---------------------------------------------------------------- c6

Outcome c6_linearization() {
    const auto t0 = std::chrono::steady_clock::now();
    auto g = interval(1.0);
    Grid grid(g, 2e-3, 0.9, 3.0);
    CubicTable a(grid, [](int, double x, double t) { return 1.0 + 0.5 * std::sin(x + t); });
    CubicRows rows = [&](int n) { return a.row(n); };
    FdDtnOracle dtn(grid, nullptr, rows);
    auto plan = plan_interval(1.0, 0.5, 0.3, 0.02, 0.1);
    auto sig = plan_signals(plan, grid);

    EpsPolicy ladder;
    auto I = interaction_integral(dtn, sig.f0, sig.f1, sig.f2, sig.f3, ladder);
    auto dens = interaction_density(grid, nullptr, sig.f0, sig.f1, sig.f2, sig.f3, rows);
    const double match = std::abs(I.extrapolated - dens.weighted) / std::abs(dens.weighted);

    // truncation regime: differences of successive halvings shrink like eps^2
    EpsPolicy fixed;
    fixed.auto_ladder = false;
    fixed.richardson = false;
    std::vector<cplx> vals;
    for (double eps : {0.08, 0.04, 0.02, 0.01}) {
        fixed.eps = eps;
        vals.push_back(interaction_integral(dtn, sig.f0, sig.f1, sig.f2, sig.f3, fixed).value);
    }
    std::vector<double> slopes;
    for (size_t k = 0; k + 2 < vals.size(); ++k) {
        slopes.push_back(std::log2(std::abs(vals[k] - vals[k + 1]) / std::abs(vals[k + 1] - vals[k + 2])));
    }
    bool slope_ok = true;
    for (double s : slopes) slope_ok = slope_ok && s >= 1.8 && s <= 2.2;
    const double secs = seconds_since(t0);
    return {match < 0.05 && slope_ok && secs < 300.0,
            format("pipeline vs volumetric rel %.2e (eps %.2e, residual %.1e); Richardson slopes %.3f %.3f; %.1fs",
                   match, I.eps, I.residual, slopes[0], slopes[1], secs)};
}

// ---------------------------------------------------------------- c7

struct GridErrors {
    std::vector<double> rel, abs;
};

GridErrors interval_closure(double h, double b, double dx) {
    auto g = interval(1.0);
    Grid grid(g, dx, 0.9, 3.0);
    auto q = sample_potential(grid, [](int, double x) { return 0.5 * std::cos(std::numbers::pi * x); });
    CubicTable a(grid, [](int, double x, double t) { return x + t; });
    FdDtnOracle dtn(grid, &q, [&](int n) { return a.row(n); });
    ReconOptions opt;
    opt.h = h;
    opt.b = b;
    GridErrors out;
    // targets (x0, 2 - x0 + t0) fill 2.1 <= x + t <= 2.9
    for (int i = 0; i < 10; ++i) {
        const double x0 = 0.08 + 0.82 * i / 9.0;
        for (int j = 0; j < 10; ++j) {
            const double t0 = 0.1 + 0.8 * j / 9.0;
            auto plan = plan_interval(1.0, x0, t0, h, b);
            auto r = recover_point(dtn, plan, &q, opt);
            const double truth = x0 + plan.target_t;
            out.abs.push_back(std::abs(r.a_hat - truth));
            out.rel.push_back(std::abs(r.a_hat - truth) / truth);
        }
    }
    return out;
}

Outcome c7_interval_closure() {
    const auto t0 = std::chrono::steady_clock::now();
    const double base = median(interval_closure(0.01, 0.05, 2e-3).rel);
    // the halved probes run on a grid refined so that (dx / h)^2 also drops;
    // at fixed dx the grid dispersion term dominates (reported for reference)
    const double fixed = median(interval_closure(0.005, 0.025, 2e-3).rel);
    const double halved = median(interval_closure(0.005, 0.025, 5e-4).rel);
    const double secs = seconds_since(t0);
    return {base <= 0.1 && halved < base && secs < 900.0,
            format("median rel (h,b,dx)=(0.01,0.05,2e-3): %.3e; (0.005,0.025,5e-4): %.3e; "
                   "[reference (0.005,0.025,2e-3): %.3e]; %.0fs",
                   base, halved, fixed, secs)};
}

// ---------------------------------------------------------------- c8

Outcome c8_star_stem() {
    const auto t0 = std::chrono::steady_clock::now();
    auto g = star({{"e1", 1.0}, {"e2", 0.7}, {"e0", 1.2}});
    Grid grid(g, 4e-3, 0.9, 5.0);
    auto truth = [&](int e, double x, double t) { return 1.0 + 0.5 * std::sin(g.distance(GraphPoint{e, x}, g.gamma0()) + t); };
    CubicTable a(grid, truth);
    FdDtnOracle dtn(grid, nullptr, [&](int n) { return a.row(n); });
    ReconOptions opt;
    opt.h = 0.02;
    opt.b = 0.1;
    auto rs = recover_tree(g, dtn, nullptr, opt);
    const int stem = g.edge_index("e0");
    std::vector<double> rel;
    for (const auto& s : rs.samples) {
        if (s.edge == stem) rel.push_back(std::abs(s.a_hat - truth(s.edge, s.x, s.t)) / truth(s.edge, s.x, s.t));
    }
    const EdgeCoverage* cov = rs.coverage_of(stem);
    const int rounds = cov ? cov->rounds : -1;
    const int bound = static_cast<int>(std::ceil(1.2 / 0.7)) + 1;
    const double med = median(rel);
    const double secs = seconds_since(t0);
    return {!rel.empty() && med <= 0.15 && rounds >= 1 && rounds <= bound && secs < 1800.0,
            format("stem samples %zu, median rel %.3e, rounds %d (bound %d); %.0fs", rel.size(), med, rounds, bound,
                   secs)};
}

// ---------------------------------------------------------------- c9

Outcome c9_tree_closure() {
    const auto t0 = std::chrono::steady_clock::now();
    auto g = MetricGraph::parse(R"({"vertices":["A","B","a1","a2","b1","b2","g0"],"edges":[
      {"id":"Aa1","ends":["A","a1"],"length":"0.6"},{"id":"Aa2","ends":["A","a2"],"length":"0.5"},
      {"id":"AB","ends":["A","B"],"length":"0.7"},{"id":"Bb1","ends":["B","b1"],"length":"0.8"},
      {"id":"Bb2","ends":["B","b2"],"length":"0.6"},{"id":"Bg0","ends":["B","g0"],"length":"0.5"}],
      "gamma0":"g0"})");
    const double D = g.eccentricity();
    const double T = 2.0 * D + 1.0;
    Grid grid(g, 4e-3, 0.9, T);
    auto truth = [&](int e, double x, double t) { return 1.0 + 0.5 * std::sin(g.distance(GraphPoint{e, x}, g.gamma0()) + t); };
    CubicTable a(grid, truth);
    FdDtnOracle dtn(grid, nullptr, [&](int n) { return a.row(n); });
    ReconOptions opt;
    opt.h = 0.02;
    opt.b = 0.1;
    auto rs = recover_tree(g, dtn, nullptr, opt);
    const auto dom = g.recovery_domain(T);

    // every sample inside the band t + r in [2L, T] of the edge step that produced it
    int outside = 0;
    std::vector<double> rel;
    for (const auto& s : rs.samples) {
        const EdgeCoverage* c = rs.coverage_of(s.edge);
        const double u = s.t + c->r_of(s.x);
        if (u < 2.0 * c->L - 1e-9 || u > T + 1e-9) ++outside;
        if (dom.contains(s.edge, s.x, s.t)) rel.push_back(std::abs(s.a_hat - truth(s.edge, s.x, s.t)) / truth(s.edge, s.x, s.t));
    }
    // coverage of the final domain, probed on a lattice; points closer than the
    // probe resolution 2b to the boundary of the per-edge domain (its time
    // limits and the edge ends) are not required
    const double margin = 2.0 * opt.b;
    int probed = 0, missed = 0;
    std::string first_miss;
    for (int e = 0; e < g.edge_count(); ++e) {
        const double l = g.edge(e).length;
        const EdgeCoverage* c = rs.coverage_of(e);
        for (int i = 0; i <= 40; ++i) {
            const double x = margin + (l - 2.0 * margin) * i / 40.0;
            const double lo = dom.t_min(e, x), hi = dom.t_max(e, x);
            for (double t = lo + margin; t <= hi - margin + 1e-12; t += 0.02) {
                ++probed;
                if (!c || !c->contains(x, t, 1e-9)) {
                    ++missed;
                    if (first_miss.empty()) first_miss = format("%s x=%.3f t=%.3f", g.edge(e).id.c_str(), x, t);
                }
            }
        }
    }
    const double med = median(rel);
    const double secs = seconds_since(t0);
    return {outside == 0 && missed == 0 && !rel.empty() && med <= 0.2 && secs < 7200.0,
            format("%zu samples, outside edge bands %d, final-domain lattice %d/%d covered%s%s, median rel %.3e "
                   "inside the final domain; %.0fs",
                   rs.samples.size(), outside, probed - missed, probed, first_miss.empty() ? "" : ", first miss ",
                   first_miss.c_str(), med, secs)};
}

// ---------------------------------------------------------------- c10

Outcome c10_negative_controls() {
    // noise floor: median absolute error of the interval closure at the base level
    const double floor = median(interval_closure(0.01, 0.05, 2e-3).abs);
    auto g = interval(1.0);
    Grid grid(g, 2e-3, 0.9, 3.0);
    auto q = sample_potential(grid, [](int, double x) { return 0.5 * std::cos(std::numbers::pi * x); });
    FdDtnOracle dtn(grid, &q, CubicRows{});
    ReconOptions opt;
    opt.h = 0.01;
    opt.b = 0.05;
    auto rs = recover_tree(g, dtn, &q, opt);
    double worst = 0.0;
    for (const auto& s : rs.samples) worst = std::max(worst, std::abs(s.a_hat));

    bool rejected = true;
    std::string message;
    for (double T : {2.0, 1.5}) {
        Grid short_grid(g, 2e-3, 0.9, T);
        FdDtnOracle short_dtn(short_grid, &q, CubicRows{});
        try {
            recover_tree(g, short_dtn, &q, opt);
            rejected = false;
        } catch (const ConfigError& e) {
            message = e.what();
            rejected = rejected && message.find("T must exceed 2 D(gamma0)") != std::string::npos;
        }
    }
    return {!rs.samples.empty() && worst < 10.0 * floor && rejected,
            format("a = 0: %zu samples, max |a_hat| %.2e vs 10 x noise floor %.2e; T <= 2D rejected: %s (\"%s\")",
                   rs.samples.size(), worst, 10.0 * floor, rejected ? "yes" : "no", message.c_str())};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>> criteria{
        {"c1", {"vertex-trace exact coefficients", c1_vertex_trace}},
        {"c2", {"vertex scattering coefficients", c2_scattering}},
        {"c3", {"Dirichlet reflection", c3_reflection}},
        {"c4", {"geometric-optics accuracy", c4_geometric_optics}},
        {"c5", {"energy and convergence", c5_energy_convergence}},
        {"c6", {"linearization identity", c6_linearization}},
        {"c7", {"interval inverse closure", c7_interval_closure}},
        {"c8", {"star stem closure", c8_star_stem}},
        {"c9", {"tree closure", c9_tree_closure}},
        {"c10", {"negative controls", c10_negative_controls}},
    };
    std::vector<std::string> wanted(argv + 1, argv + argc);
    if (wanted.empty() || (wanted.size() == 1 && wanted[0] == "all")) {
        wanted.clear();
        for (const auto& c : criteria) wanted.push_back(c.first);
    }
    int failures = 0;
    for (const auto& name : wanted) {
        auto it = std::find_if(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; });
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion %s\n", name.c_str());
            return 2;
        }
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %-4s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), it->second.first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
