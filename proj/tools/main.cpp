#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "mgwave/error.hpp"
#include "mgwave/geo_optics.hpp"
#include "mgwave/linearize.hpp"
#include "mgwave/log.hpp"
#include "mgwave/recon.hpp"
#include "mgwave/wave_solver.hpp"

#ifndef MGWAVE_VERSION
#define MGWAVE_VERSION "0.0.0"
#endif

using namespace mgwave;
using mgcli::Coefficient;
using mgcli::RunConfig;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kConfigError = 2, kNumericalError = 3, kCheckFailed = 4;

struct Context {
    RunConfig cfg;
    std::filesystem::path out;
    json diagnostics = json::object();
    json checks = json::array();
    bool failed_check = false;

    std::ofstream open(const std::string& name) {
        std::filesystem::create_directories(out);
        std::ofstream os(out / name);
        if (!os) throw ConfigError("cannot write " + (out / name).string());
        return os;
    }
    void check(const std::string& name, bool pass, const json& detail) {
        checks.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
        if (!pass) failed_check = true;
    }
};

// Problem data shared by the simulating commands.
struct Problem {
    MetricGraph g;
    Grid grid;
    Coefficient qc, ac;
    std::vector<double> q;
    CubicTable a;

    explicit Problem(const RunConfig& c)
        : g(c.graph()),
          grid(g, c.dx, c.cfl, c.T),
          qc(Coefficient::parse(c.q, c.base_dir, g, false)),
          ac(Coefficient::parse(c.a, c.base_dir, g, true)) {
        if (!qc.zero()) q = sample_potential(grid, [&](int e, double x) { return qc(e, x, 0.0); });
        if (!ac.zero()) a = CubicTable(grid, [&](int e, double x, double t) { return ac(e, x, t); });
    }
    Problem(const Problem&) = delete;

    const std::vector<double>* qp() const { return q.empty() ? nullptr : &q; }
    CubicRows rows() const {
        if (a.empty()) return {};
        return [this](int n) { return a.row(n); };
    }
    int leaf(const std::string& id) const {
        const int v = g.vertex_index(id);
        if (v < 0) throw ConfigError("unknown vertex '" + id + "'");
        if (!g.is_controlled(v)) throw ConfigError("vertex '" + id + "' is not a controlled leaf");
        return v;
    }
    // h = 0 drives the bare envelope; otherwise a probe with carrier e^{it/h}
    ComplexSignal drive(const std::vector<mgcli::PulseSpec>& pulses) const {
        ComplexSignal s(grid.dt(), grid.steps());
        for (int v : g.controlled()) s.add(v);
        for (const auto& p : pulses) {
            const int v = leaf(p.leaf);
            if (p.h > 0.0) {
                add_probe(s, Probe::centered(v, p.center, p.h, p.b), p.amplitude);
            } else {
                Cutoff chi(p.b);
                auto& dst = s.add(v);
                for (int n = 0; n <= grid.steps(); ++n) dst[n] += p.amplitude * chi(grid.time(n) - (p.center - p.b));
            }
        }
        return s;
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

template <class T>
T opt(const json& sec, const std::string& key, T fallback) {
    if (!sec.contains(key)) return fallback;
    try {
        return sec.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + key + "' has the wrong type");
    }
}

void write_manifest(const std::filesystem::path& dir, const json& m) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream os(dir / "manifest.json");
    if (!os) {
        std::cerr << "cannot write manifest to " << dir.string() << '\n';
        return;
    }
    os << m.dump(2) << '\n';
}

// ---------------------------------------------------------------- commands

void cmd_validate(Context& ctx) {
    const MetricGraph g = ctx.cfg.graph();
    Coefficient::parse(ctx.cfg.q, ctx.cfg.base_dir, g, false);
    Coefficient::parse(ctx.cfg.a, ctx.cfg.base_dir, g, true);
    const double D = g.eccentricity();
    std::cout << "graph: " << g.vertex_count() << " vertices, " << g.edge_count() << " edges, gamma0 = "
              << g.vertex_id(g.gamma0()) << '\n';
    std::cout << "controlled leaves:";
    for (int v : g.controlled()) std::cout << ' ' << g.vertex_id(v);
    std::cout << "\nD=" << fmt(D) << '\n';
    const auto sheaves = g.find_sheaves();
    json js = json::array();
    if (sheaves.empty()) {
        std::cout << "sheaves: none\n";
    } else {
        std::cout << "sheaves: " << sheaves.size() << '\n';
        for (const auto& s : sheaves) {
            std::cout << "  hub " << g.vertex_id(s.hub) << ": leaves";
            json leaves = json::array();
            for (int v : s.leaves) {
                std::cout << ' ' << g.vertex_id(v);
                leaves.push_back(g.vertex_id(v));
            }
            std::cout << ", stem " << g.edge(s.stem_edge).id << '\n';
            js.push_back({{"hub", g.vertex_id(s.hub)}, {"leaves", leaves}, {"stem", g.edge(s.stem_edge).id}});
        }
    }
    const double T = ctx.cfg.T;
    std::cout << "T=" << fmt(T) << (T > 2 * D ? " > 2D: recovery possible\n" : " <= 2D: recovery impossible\n");
    json dom = json::array();
    if (T > 2 * D) {
        const auto rd = g.recovery_domain(T);
        for (int e = 0; e < g.edge_count(); ++e) {
            const double l = g.edge(e).length;
            std::cout << "  " << g.edge(e).id << ": t in [" << fmt(rd.t_min(e, 0)) << ", " << fmt(rd.t_max(e, 0))
                      << "] at x=0, [" << fmt(rd.t_min(e, l)) << ", " << fmt(rd.t_max(e, l)) << "] at x=" << fmt(l)
                      << '\n';
            dom.push_back({{"edge", g.edge(e).id},
                           {"x0", {rd.t_min(e, 0), rd.t_max(e, 0)}},
                           {"x1", {rd.t_min(e, l), rd.t_max(e, l)}}});
        }
    }
    ctx.diagnostics = {{"vertices", g.vertex_count()}, {"edges", g.edge_count()}, {"D", D},
                       {"sheaves", js},            {"recovery_domain", dom}};
}

void cmd_simulate(Context& ctx) {
    Problem P(ctx.cfg);
    const json& sec = ctx.cfg.section("simulate");
    const std::string mode = opt<std::string>(sec, "mode", "linear");
    const int stride = std::max(1, opt<int>(sec, "stride", 10));
    ComplexSignal f = P.drive(ctx.cfg.pulses("simulate"));
    WaveField field;
    field.grid = &P.grid;
    field.stride = stride;
    auto fout = ctx.open("energy.csv");
    fout << "step,t,energy\n" << std::setprecision(12);
    double e_first = NAN, e_last = NAN;
    if (mode == "linear") {
        StepperSetup<cplx> setup;
        setup.q = P.qp();
        for (const auto& id : opt<std::vector<std::string>>(sec, "neumann", {})) {
            const int v = P.g.vertex_index(id);
            if (v < 0) throw ConfigError("unknown vertex '" + id + "'");
            setup.neumann_leaves.push_back(v);
        }
        std::vector<cplx> prev;
        run<cplx>(P.grid, setup, f, P.grid.steps(), [&](int n, std::span<const cplx> u) {
            if (n % stride == 0) {
                field.steps.push_back(n);
                field.u.emplace_back(u.begin(), u.end());
            }
            if (!prev.empty() && n % stride == 0) {
                const double e = energy<cplx>(P.grid, P.qp(), prev, u);
                fout << n << ',' << P.grid.time(n) << ',' << e << '\n';
                if (std::isnan(e_first)) e_first = e;
                e_last = e;
            }
            prev.assign(u.begin(), u.end());
        });
    } else if (mode == "semilinear") {
        StepperSetup<double> setup;
        setup.q = P.qp();
        setup.cubic = P.rows();
        setup.blowup_bound = ctx.cfg.blowup_bound;
        std::vector<double> prev;
        run<double>(P.grid, setup, real_part(f), P.grid.steps(), [&](int n, std::span<const double> u) {
            if (n % stride == 0) {
                field.steps.push_back(n);
                field.u.emplace_back(u.begin(), u.end());
            }
            if (!prev.empty() && n % stride == 0) {
                // quadratic part only; the quartic term of a u^3 is not included
                const double e = energy<double>(P.grid, P.qp(), prev, u);
                fout << n << ',' << P.grid.time(n) << ',' << e << '\n';
                if (std::isnan(e_first)) e_first = e;
                e_last = e;
            }
            prev.assign(u.begin(), u.end());
        });
    } else {
        throw ConfigError("simulate.mode must be 'linear' or 'semilinear'");
    }
    auto os = ctx.open("field.csv");
    write_field_csv(os, field);
    double sup = 0.0;
    for (const auto& row : field.u) {
        for (const cplx& v : row) sup = std::max(sup, std::abs(v));
    }
    ctx.diagnostics = {{"mode", mode},       {"steps", P.grid.steps()}, {"dt", P.grid.dt()},
                       {"snapshots", field.steps.size()}, {"sup_norm", sup}, {"energy_first", e_first},
                       {"energy_last", e_last}};
    std::cout << "simulated " << P.grid.steps() << " steps, sup |u| = " << fmt(sup) << '\n';
}

void cmd_vertex_trace(Context& ctx) {
    Problem P(ctx.cfg);
    const json& sec = ctx.cfg.section("vertex_trace");
    const std::string leaf_id = opt<std::string>(sec, "leaf", P.g.vertex_id(P.g.controlled().at(0)));
    const int leaf = P.leaf(leaf_id);
    const double start = opt<double>(sec, "start", 0.1);
    const double width = opt<double>(sec, "width", 0.5);
    Cutoff chi(0.5 * width);
    Signal f(P.grid.dt(), P.grid.steps());
    auto& fv = f.add(leaf);
    for (int n = 0; n <= P.grid.steps(); ++n) fv[n] = chi(P.grid.time(n) - start);

    auto rep = vertex_trace_solve(P.g, leaf, fv, P.grid.dt(), ctx.cfg.T);
    RealField fd;
    if (opt<bool>(sec, "fd", true)) fd = solve_semilinear(P.grid, nullptr, nullptr, f);
    auto os = ctx.open("trace.csv");
    os << "vertex,t,g,g_fd\n" << std::setprecision(12);
    json per = json::array();
    for (const auto& tr : rep.traces) {
        double err = 0.0, scale = 0.0;
        for (int n = 0; n <= P.grid.steps(); ++n) {
            os << P.g.vertex_id(tr.vertex) << ',' << P.grid.time(n) << ',' << tr.g[n];
            if (!fd.u.empty()) {
                const double v = fd.u[n][tr.vertex];
                os << ',' << v;
                err = std::max(err, std::abs(v - tr.g[n]));
                scale = std::max(scale, std::abs(tr.g[n]));
            }
            os << '\n';
        }
        per.push_back({{"vertex", P.g.vertex_id(tr.vertex)}, {"fd_rel_gap", scale > 0 ? err / scale : 0.0}});
    }
    ctx.diagnostics["float"] = {{"max_delay_rounding", rep.max_delay_rounding}, {"vertices", per}};

    if (sec.contains("max_delay")) {
        const Rational max_delay = parse_rational(opt<std::string>(sec, "max_delay", "0"));
        auto exact = vertex_trace_rational(P.g, leaf, max_delay);
        auto cs = ctx.open("coefficients.csv");
        cs << "vertex,delay,coefficient,value\n" << std::setprecision(12);
        json table = json::array();
        for (const auto& tr : exact) {
            std::cout << "vertex " << P.g.vertex_id(tr.vertex) << ":\n";
            std::string active;
            for (size_t k = 0; k < tr.terms.size(); ++k) {
                const auto& term = tr.terms[k];
                cs << P.g.vertex_id(tr.vertex) << ',' << term.delay << ',' << term.coefficient << ','
                   << static_cast<double>(term.coefficient) << '\n';
                active += (active.empty() ? "" : ", ") + term.coefficient.str();
                if (k + 1 < tr.terms.size()) {
                    std::cout << "  t in (" << term.delay << ", " << tr.terms[k + 1].delay << "): " << active << '\n';
                } else {
                    std::cout << "  t > " << term.delay << ": " << active << '\n';
                }
                table.push_back({{"vertex", P.g.vertex_id(tr.vertex)},
                                 {"delay", term.delay.str()},
                                 {"coefficient", term.coefficient.str()}});
            }
        }
        ctx.diagnostics["rational"] = table;
    }
}

void cmd_rays(Context& ctx) {
    const MetricGraph g = ctx.cfg.graph();
    const json& sec = ctx.cfg.section("rays");
    const std::string leaf_id = opt<std::string>(sec, "leaf", g.vertex_id(g.controlled().at(0)));
    const int leaf = g.vertex_index(leaf_id);
    if (leaf < 0 || !g.is_controlled(leaf)) throw ConfigError("rays.leaf must be a controlled leaf");
    RayOptions ro;
    ro.amp_floor = opt<double>(sec, "amp_floor", ro.amp_floor);
    ro.generation_cap = opt<int>(sec, "generation_cap", ro.generation_cap);
    auto rays = trace_rays(g, leaf, opt<double>(sec, "start", 0.0), ctx.cfg.T, ro);
    auto os = ctx.open("rays.csv");
    write_rays_csv(os, g, rays);
    ctx.diagnostics = {{"segments", rays.size()}};
    std::cout << rays.size() << " ray segments\n";
}

void cmd_dtn(Context& ctx) {
    Problem P(ctx.cfg);
    const json& sec = ctx.cfg.section("dtn");
    const std::string mode = opt<std::string>(sec, "mode", "linear");
    ComplexSignal f = P.drive(ctx.cfg.pulses("dtn"));
    auto in = ctx.open("input.csv");
    write_signal_csv(in, P.g, f);
    auto os = ctx.open("dtn.csv");
    double sup = 0.0;
    if (mode == "linear") {
        auto d = dtn_linear(P.grid, P.qp(), f);
        write_signal_csv(os, P.g, d);
        sup = d.max_abs();
    } else if (mode == "semilinear") {
        FdDtnOracle oracle(P.grid, P.qp(), P.rows(), ctx.cfg.blowup_bound);
        auto d = oracle.apply(real_part(f));
        write_signal_csv(os, P.g, d);
        sup = d.max_abs();
    } else {
        throw ConfigError("dtn.mode must be 'linear' or 'semilinear'");
    }
    ctx.diagnostics = {{"mode", mode}, {"sup_norm", sup}};
    std::cout << "DtN sup norm " << fmt(sup) << '\n';
}

ProbePlan plan_from(const Problem& P, const json& sec, const RunConfig& cfg) {
    const std::string leaf_id = opt<std::string>(sec, "leaf", P.g.vertex_id(P.g.controlled().at(0)));
    const std::string far_id = opt<std::string>(sec, "far", P.g.vertex_id(P.g.gamma0()));
    const int far = P.g.vertex_index(far_id);
    if (far < 0) throw ConfigError("unknown vertex '" + far_id + "'");
    if (!sec.contains("r")) throw ConfigError("missing 'r' (path distance of the target from the leaf)");
    return plan_path(P.g, P.leaf(leaf_id), far, opt<double>(sec, "r", 0.0), opt<double>(sec, "t0", 0.2), cfg.h,
                     cfg.b);
}

void cmd_calibrate(Context& ctx) {
    Problem P(ctx.cfg);
    const ProbePlan plan = plan_from(P, ctx.cfg.section("calibrate"), ctx.cfg);
    const cplx c = calibrate(plan, P.grid, P.qp(), ctx.cfg.recon_options());
    std::cout << "C_cal = " << fmt(c.real()) << (c.imag() < 0 ? " - " : " + ") << fmt(std::abs(c.imag()))
              << "i at x = " << fmt(plan.target.offset) << " on " << P.g.edge(plan.target.edge).id
              << ", t = " << fmt(plan.target_t) << '\n';
    ctx.diagnostics = {{"C_re", c.real()},
                       {"C_im", c.imag()},
                       {"s", plan.s},
                       {"target", {{"edge", P.g.edge(plan.target.edge).id}, {"x", plan.target.offset}, {"t", plan.target_t}}}};
}

void cmd_recover(Context& ctx) {
    Problem P(ctx.cfg);
    if (!ctx.cfg.has_a) throw ConfigError("recover needs a ground-truth 'a' to synthesize the DtN map");
    FdDtnOracle oracle(P.grid, P.qp(), P.rows(), ctx.cfg.blowup_bound);
    const auto t0 = std::chrono::steady_clock::now();
    RecoveredSamples rs = recover_tree(P.g, oracle, P.qp(), ctx.cfg.recon_options());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto os = ctx.open("samples.csv");
    write_samples_csv(os, P.g, rs);

    auto es = ctx.open("errors.csv");
    es << "edge,samples,in_final,sup_abs,rms_abs,median_rel\n" << std::setprecision(12);
    json edges = json::array();
    std::vector<double> all_rel;
    double max_abs_hat = 0.0;
    for (int e = 0; e < P.g.edge_count(); ++e) {
        std::vector<double> rel;
        double sup = 0.0, sq = 0.0;
        int n = 0, inside = 0;
        for (const auto& s : rs.samples) {
            if (s.edge != e) continue;
            ++n;
            max_abs_hat = std::max(max_abs_hat, std::abs(s.a_hat));
            if (!s.in_final) continue;
            ++inside;
            const double truth = P.ac(e, s.x, s.t);
            const double err = std::abs(s.a_hat - truth);
            sup = std::max(sup, err);
            sq += err * err;
            if (std::abs(truth) > 1e-12) rel.push_back(err / std::abs(truth));
        }
        all_rel.insert(all_rel.end(), rel.begin(), rel.end());
        std::sort(rel.begin(), rel.end());
        const double med = rel.empty() ? NAN : rel[rel.size() / 2];
        const double rms = inside ? std::sqrt(sq / inside) : NAN;
        es << P.g.edge(e).id << ',' << n << ',' << inside << ',' << sup << ',' << rms << ',' << med << '\n';
        json cov = json::object();
        if (const EdgeCoverage* c = rs.coverage_of(e)) {
            json u = json::array();
            for (const auto& [lo, hi] : c->u) u.push_back({lo, hi});
            cov = {{"leaf", P.g.vertex_id(c->leaf)}, {"r", {c->r_lo, c->r_hi}}, {"u", u}, {"rounds", c->rounds}};
        }
        edges.push_back({{"edge", P.g.edge(e).id},
                         {"samples", n},
                         {"in_final", inside},
                         {"sup_abs", sup},
                         {"median_rel", rel.empty() ? json(nullptr) : json(med)},
                         {"coverage", cov}});
    }
    std::sort(all_rel.begin(), all_rel.end());
    const double median = all_rel.empty() ? NAN : all_rel[all_rel.size() / 2];
    ctx.diagnostics = {{"edges", edges},
                       {"samples", rs.samples.size()},
                       {"max_abs_a_hat", max_abs_hat},
                       {"median_rel", all_rel.empty() ? json(nullptr) : json(median)},
                       {"oracle_calls", oracle.calls()},
                       {"recover_seconds", secs},
                       {"notes", rs.notes}};
    std::cout << rs.samples.size() << " samples, median relative error " << fmt(median) << ", max |a_hat| "
              << fmt(max_abs_hat) << '\n';
    if (ctx.cfg.check_median) {
        const bool pass = !all_rel.empty() && median <= *ctx.cfg.check_median;
        ctx.check("median_rel <= " + fmt(*ctx.cfg.check_median), pass, {{"median_rel", median}});
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semilinear waves on metric trees: simulation, DtN synthesis and recovery of a(x,t)"};
    app.set_help_flag("--help", "print this help");
    app.require_subcommand(1);
    std::string config_path, out_dir;
    int workers = 0;
    double dx = 0, cfl = 0, h = 0, b = 0, eps = 0;
    bool verbose = false;
    app.add_option("--config", config_path, "run configuration (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--workers", workers, "worker threads");
    app.add_option("--dx", dx, "target grid spacing");
    app.add_option("--cfl", cfl, "dt / dx");
    app.add_option("--h", h, "probe wavelength parameter");
    app.add_option("--b", b, "probe cutoff width");
    app.add_option("--eps", eps, "initial finite-difference step for the linearization");
    app.add_flag("-v,--verbose", verbose, "log progress");
    const std::vector<std::pair<std::string, std::string>> commands{
        {"validate", "parse graph and config, print tree statistics"},
        {"simulate", "run the wave solver and write field and energy tables"},
        {"vertex-trace", "vertex traces from the delay recursion, exact and FD"},
        {"rays", "geometric-optics ray segments from one leaf"},
        {"dtn", "boundary response of the synthesized DtN map"},
        {"recover", "recover a(x,t) on the whole tree"},
        {"calibrate", "calibration constant of one probe plan"}};
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();
    log_level() = verbose ? LogLevel::info : LogLevel::warn;

    json manifest{{"tool", "mgwave"}, {"version", MGWAVE_VERSION}, {"command", command}};
    std::filesystem::path out = out_dir.empty() ? std::filesystem::path("out") : std::filesystem::path(out_dir);
    const auto start = std::chrono::steady_clock::now();
    int code = kOk;
    Context ctx;
    try {
        json doc = RunConfig::read_json(config_path);
        if (dx > 0) doc["solver"]["dx"] = dx;
        if (cfl > 0) doc["solver"]["cfl"] = cfl;
        if (h > 0) doc["probe"]["h"] = h;
        if (b > 0) doc["probe"]["b"] = b;
        if (eps > 0) doc["probe"]["eps"] = eps;
        if (workers > 0) doc["recon"]["workers"] = workers;
        if (!out_dir.empty()) doc["out"] = out_dir;
        ctx.cfg = RunConfig::from_json(doc, config_path, mgcli::config_dir(config_path));
        out = out_dir.empty() ? std::filesystem::path(mgcli::resolve_path(ctx.cfg.base_dir, ctx.cfg.out)) : out;
        ctx.out = out;
        manifest["config"] = ctx.cfg.to_json();

        if (command == "validate") cmd_validate(ctx);
        else if (command == "simulate") cmd_simulate(ctx);
        else if (command == "vertex-trace") cmd_vertex_trace(ctx);
        else if (command == "rays") cmd_rays(ctx);
        else if (command == "dtn") cmd_dtn(ctx);
        else if (command == "recover") cmd_recover(ctx);
        else if (command == "calibrate") cmd_calibrate(ctx);
        manifest["status"] = "ok";
        if (ctx.failed_check) {
            code = kCheckFailed;
            manifest["status"] = "check failed";
            std::cerr << "error: acceptance check failed\n";
        }
    } catch (const ConfigError& e) {
        code = kConfigError;
        manifest["status"] = "error";
        manifest["error"] = e.what();
        std::cerr << "config error: " << e.what() << '\n';
    } catch (const NumericalError& e) {
        code = kNumericalError;
        manifest["status"] = "error";
        manifest["error"] = e.what();
        std::cerr << "numerical failure: " << e.what() << '\n';
    } catch (const std::exception& e) {
        code = kNumericalError;
        manifest["status"] = "error";
        manifest["error"] = e.what();
        std::cerr << "failure: " << e.what() << '\n';
    }
    manifest["diagnostics"] = ctx.diagnostics;
    manifest["checks"] = ctx.checks;
    manifest["exit_code"] = code;
    manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(out, manifest);
    return code;
}
