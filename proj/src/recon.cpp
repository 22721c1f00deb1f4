#include "mgwave/recon.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include "mgwave/error.hpp"
#include "mgwave/log.hpp"
#include "mgwave/parallel.hpp"

namespace mgwave {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_plan_times(ProbePlan& p) {
    if (!(p.t0 > 0.0)) throw ConfigError("t0 must be > 0 (the solution starts from zero data)");
    if (!(p.b > 0.0) || !(p.h > 0.0)) throw ConfigError("probe parameters h and b must be > 0");
    if (!(p.b < p.t0)) throw ConfigError("probe support starts before t = 0: need b < t0");
    p.s = 2.0 * (p.L - p.r) + p.t0;
    if (!(2.0 * p.b < p.s - p.t0)) {
        throw ConfigError("cutoff constraint violated: need 2b < s - t0 (target too close to the far endpoint)");
    }
    p.target_t = 2.0 * p.L + p.t0 - p.r;
}

} // namespace

ProbePlan plan_interval(double l, double x0, double t0, double h, double b) {
    if (!(l > 0.0)) throw ConfigError("interval length must be > 0");
    if (!(x0 > 0.0 && x0 < l)) throw ConfigError("target x0 must lie in (0, l)");
    ProbePlan p;
    p.leaf = 0;
    p.far_vertex = 1;
    p.L = l;
    p.r = x0;
    p.t0 = t0;
    p.h = h;
    p.b = b;
    p.target = {0, x0};
    check_plan_times(p);
    return p;
}

ProbePlan plan_path(const MetricGraph& g, int leaf, int far_vertex, double r, double t0, double h, double b) {
    if (!g.is_controlled(leaf)) throw ConfigError("probe source " + g.vertex_id(leaf) + " is not a controlled leaf");
    ProbePlan p;
    p.leaf = leaf;
    p.far_vertex = far_vertex;
    p.L = g.vertex_distance(leaf, far_vertex);
    if (!(r > 0.0 && r < p.L)) throw ConfigError("target must lie strictly inside the probe path");
    p.r = r;
    p.t0 = t0;
    p.h = h;
    p.b = b;
    int v = leaf;
    double acc = 0.0;
    for (int e : g.path_edges(leaf, far_vertex)) {
        const double len = g.edge(e).length;
        const int w = g.other_end(e, v);
        if (r <= acc + len) {
            const double along = r - acc;
            p.target = {e, g.edge(e).first == v ? along : len - along};
            break;
        }
        acc += len;
        v = w;
    }
    check_plan_times(p);
    return p;
}

PlanSignals plan_signals(const ProbePlan& plan, const Grid& grid) {
    PlanSignals s;
    s.f1 = probe_signal(Probe::centered(plan.leaf, plan.t0, plan.h, plan.b), grid);
    s.f2 = probe_signal(Probe::centered(plan.leaf, plan.s, plan.h, plan.b), grid);
    s.f3 = conj(s.f2);
    s.f0 = conj(probe_signal(Probe::centered(plan.leaf, plan.backward_time(), plan.h, plan.b), grid));
    return s;
}

// ---------------------------------------------------------------- calibration

std::optional<cplx> CalibrationTable::find(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = table_.find(key);
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

void CalibrationTable::put(const std::string& key, cplx value) {
    std::lock_guard<std::mutex> lock(mu_);
    table_[key] = value;
}

size_t CalibrationTable::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return table_.size();
}

std::string CalibrationTable::key(const ProbePlan& p, const Grid& grid, CalibrationMode mode) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d>%d r=%.12g t0=%.12g s=%.12g h=%.6g b=%.6g dx=%.6g dt=%.9g N=%d %s", p.leaf,
                  p.far_vertex, p.r, p.t0, p.s, p.h, p.b, grid.min_dx(), grid.dt(), grid.steps(),
                  mode == CalibrationMode::pipeline ? "pipeline" : "volumetric");
    return buf;
}

TargetDiamond target_diamond(const Grid& grid, const ProbePlan& plan, double radius_in_b) {
    TargetDiamond d;
    d.t = plan.target_t;
    d.radius = radius_in_b * plan.b;
    d.node_distance.resize(grid.node_count());
    for (int k = 0; k < grid.node_count(); ++k) {
        d.node_distance[k] = grid.graph().distance(grid.position(k), plan.target);
    }
    return d;
}

namespace {

// Indicator rows of the diamond; only the steps inside its time window are allocated.
CubicRows diamond_rows(const Grid& grid, const TargetDiamond& d) {
    const int lo = std::max(0, grid.step_of(d.t - d.radius) - 1);
    const int hi = std::min(grid.steps(), grid.step_of(d.t + d.radius) + 1);
    auto rows = std::make_shared<std::vector<std::vector<double>>>(hi - lo + 1);
    for (int n = lo; n <= hi; ++n) {
        auto& row = (*rows)[n - lo];
        row.assign(grid.node_count(), 0.0);
        for (int k = 0; k < grid.node_count(); ++k) row[k] = d.contains(k, grid.time(n)) ? 1.0 : 0.0;
    }
    return [rows, lo, hi](int n) -> const double* {
        if (n < lo || n > hi) return nullptr;
        return (*rows)[n - lo].data();
    };
}

void check_calibration(cplx c, const ProbePlan& plan) {
    const double m = Cutoff(plan.b).l2_mass();
    if (!(std::abs(c) > 1e-4 * 3.0 * m * m)) {
        std::ostringstream msg;
        msg << "probe geometry degenerate: |C_cal| = " << std::abs(c) << " at target t = " << plan.target_t;
        throw NumericalError(msg.str());
    }
}

} // namespace

cplx calibrate(const ProbePlan& plan, const Grid& grid, const std::vector<double>* q, const ReconOptions& opt,
               CalibrationTable* table, const PlanSignals* signals) {
    const std::string key = CalibrationTable::key(plan, grid, opt.calibration);
    if (table) {
        if (auto hit = table->find(key)) return *hit;
    }
    PlanSignals local;
    if (!signals) {
        local = plan_signals(plan, grid);
        signals = &local;
    }
    const TargetDiamond diamond = target_diamond(grid, plan, opt.diamond);
    const CubicRows rows = diamond_rows(grid, diamond);
    cplx c;
    if (opt.calibration == CalibrationMode::pipeline) {
        FdDtnOracle oracle(grid, q, rows, opt.blowup_bound);
        c = interaction_integral(oracle, signals->f0, signals->f1, signals->f2, signals->f3, opt.eps, opt.workers)
                .extrapolated;
    } else {
        c = interaction_density(grid, q, signals->f0, signals->f1, signals->f2, signals->f3, rows,
                                std::numeric_limits<double>::infinity())
                .weighted;
    }
    check_calibration(c, plan);
    if (table) table->put(key, c);
    return c;
}

PointResult recover_point(const DtnOracle& dtn, const ProbePlan& plan, const std::vector<double>* q,
                          const ReconOptions& opt, const KnownCoefficient* known, CalibrationTable* table) {
    const Grid& grid = dtn.grid();
    const PlanSignals sig = plan_signals(plan, grid);
    PointResult r;
    r.diag.integral = interaction_integral(dtn, sig.f0, sig.f1, sig.f2, sig.f3, opt.eps, opt.workers);
    if (known && *known) {
        const TargetDiamond diamond = target_diamond(grid, plan, opt.diamond);
        const bool shared = opt.calibration == CalibrationMode::volumetric;
        const auto density = interaction_density(grid, q, sig.f0, sig.f1, sig.f2, sig.f3,
                                                 shared ? diamond_rows(grid, diamond) : CubicRows{}, 1e-6);
        if (shared) {
            check_calibration(density.weighted, plan);
            r.diag.calibration = density.weighted;
        } else {
            r.diag.calibration = calibrate(plan, grid, q, opt, table, &sig);
        }
        auto outside = [&](int node, int step) { return !diamond.contains(node, grid.time(step)); };
        const auto corr = known_region_correction(grid, density, outside, *known,
                                                  opt.missing_tol * std::abs(r.diag.calibration));
        r.diag.correction = corr.value;
        r.diag.missing_weight = corr.missing_weight;
    } else {
        r.diag.calibration = calibrate(plan, grid, q, opt, table, &sig);
    }
    r.diag.raw = (r.diag.integral.extrapolated - r.diag.correction) / r.diag.calibration;
    r.a_hat = r.diag.raw.real();
    r.err = std::abs(r.diag.raw.imag()) + std::abs(r.diag.raw) * r.diag.integral.residual;
    return r;
}

// ---------------------------------------------------------------- sample sets

bool EdgeCoverage::contains(double x, double t, double tol) const {
    const double r = r_of(x);
    if (r < r_lo - tol || r > r_hi + tol) return false;
    const double uu = t + r;
    for (const auto& [lo, hi] : u) {
        if (uu >= lo - tol && uu <= hi + tol) return true;
    }
    return false;
}

std::optional<double> EdgeRaster::lookup(double x, double t) const {
    if (nu == 0 || nm == 0) return std::nullopt;
    const double r = r_first + sign * x;
    const double fi = (t + r - u0) / du;
    const double fj = (t - r - m0) / dm;
    const int i = static_cast<int>(std::floor(fi));
    const int j = static_cast<int>(std::floor(fj));
    const double wi = fi - i, wj = fj - j;
    double sum = 0.0, weight = 0.0;
    for (int di = 0; di < 2; ++di) {
        for (int dj = 0; dj < 2; ++dj) {
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || ii >= nu || jj < 0 || jj >= nm) continue;
            const double v = at(ii, jj);
            if (std::isnan(v)) continue;
            const double w = (di ? wi : 1.0 - wi) * (dj ? wj : 1.0 - wj);
            sum += w * v;
            weight += w;
        }
    }
    if (weight >= 0.5) return sum / weight;
    // near the edge of the recovered set: nearest value within one cell
    const int ci = static_cast<int>(std::lround(fi)), cj = static_cast<int>(std::lround(fj));
    double best = 2.0;
    std::optional<double> out;
    for (int ii = ci - 1; ii <= ci + 1; ++ii) {
        for (int jj = cj - 1; jj <= cj + 1; ++jj) {
            if (ii < 0 || ii >= nu || jj < 0 || jj >= nm || std::isnan(at(ii, jj))) continue;
            const double d = std::max(std::abs(fi - ii), std::abs(fj - jj));
            if (d <= 1.0 && d < best) {
                best = d;
                out = at(ii, jj);
            }
        }
    }
    if (out || end_reach <= 0.0 || ci < 0 || ci >= nu) return out;
    // strips next to the edge ends that no target reaches (they lie within
    // about b of the vertex): nearest value along the same probe line
    if (std::min(x, length - x) > end_reach) return out;
    double best_r = end_reach;
    for (int jj = 0; jj < nm; ++jj) {
        if (std::isnan(at(ci, jj))) continue;
        const double dr = 0.5 * std::abs(fj - jj) * dm;
        if (dr <= best_r) {
            best_r = dr;
            out = at(ci, jj);
        }
    }
    return out;
}

void RecoveredSamples::merge(const RecoveredSamples& o) {
    samples.insert(samples.end(), o.samples.begin(), o.samples.end());
    coverage.insert(coverage.end(), o.coverage.begin(), o.coverage.end());
    rasters.insert(rasters.end(), o.rasters.begin(), o.rasters.end());
    notes.insert(notes.end(), o.notes.begin(), o.notes.end());
}

namespace {

std::optional<double> raster_lookup(const MetricGraph& g, const std::vector<const EdgeRaster*>& rasters,
                                    const GraphPoint& p, double t) {
    auto on_edge = [&](int edge, double x) -> std::optional<double> {
        for (const auto* r : rasters) {
            if (r->edge != edge) continue;
            if (auto v = r->lookup(x, t)) return v;
        }
        return std::nullopt;
    };
    if (auto v = g.vertex_of(p, 1e-9)) {
        for (int e : g.incident(*v)) {
            if (auto a = on_edge(e, g.offset_of(e, *v))) return a;
        }
        return std::nullopt;
    }
    return on_edge(p.edge, p.offset);
}

} // namespace

std::optional<double> RecoveredSamples::lookup(const MetricGraph& g, const GraphPoint& p, double t) const {
    std::vector<const EdgeRaster*> all;
    for (const auto& r : rasters) all.push_back(&r);
    return raster_lookup(g, all, p, t);
}

KnownCoefficient RecoveredSamples::as_known(const MetricGraph& g) const {
    return [this, &g](const GraphPoint& p, double t) { return lookup(g, p, t); };
}

const EdgeCoverage* RecoveredSamples::coverage_of(int edge) const {
    for (const auto& c : coverage) {
        if (c.edge == edge) return &c;
    }
    return nullptr;
}

void write_samples_csv(std::ostream& os, const MetricGraph& g, const RecoveredSamples& rs) {
    os << "edge,x,t,a_hat,err,plan_id,in_final\n";
    char buf[192];
    for (const auto& s : rs.samples) {
        std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g,%.6g,%d,%d\n", s.x, s.t, s.a_hat, s.err, s.plan_id,
                      s.in_final ? 1 : 0);
        os << g.edge(s.edge).id << buf;
    }
}

double choose_delay(const std::vector<double>& candidates, const std::vector<double>& exceptional, double delta) {
    if (candidates.empty()) throw ConfigError("delay window is empty");
    for (double s : candidates) {
        bool ok = true;
        for (double x : exceptional) {
            if (std::abs(s - x) <= delta) {
                ok = false;
                break;
            }
        }
        if (ok) return s;
    }
    throw ConfigError("every candidate delay lies within delta of an exceptional value");
}

// ---------------------------------------------------------------- edge recovery

EdgeJob tree_job(const MetricGraph& g, int edge) {
    const Edge& ed = g.edge(edge);
    const int g0 = g.gamma0();
    const bool first_far = g.vertex_distance(ed.first, g0) < g.vertex_distance(ed.second, g0);
    EdgeJob job;
    job.edge = edge;
    job.far_vertex = first_far ? ed.first : ed.second;
    const int near = first_far ? ed.second : ed.first;
    const double dn = g.vertex_distance(near, g0);
    auto below = [&](int v) { return std::abs(g.vertex_distance(v, near) + dn - g.vertex_distance(v, g0)) < 1e-9; };
    double best = -1.0;
    for (int z : g.controlled()) {
        if (!below(z)) continue;
        const double d = g.vertex_distance(z, job.far_vertex);
        if (d > best + 1e-12) {
            best = d;
            job.leaf = z;
        }
    }
    if (job.leaf < 0) throw ConfigError("edge " + ed.id + " has no controlled leaf below it");
    double shortest = std::numeric_limits<double>::infinity();
    for (int e = 0; e < g.edge_count(); ++e) {
        if (e == edge) continue;
        if (below(g.edge(e).first) && below(g.edge(e).second)) shortest = std::min(shortest, g.edge(e).length);
    }
    job.s_hat = std::isfinite(shortest) ? 2.0 * shortest : 0.0;
    return job;
}

int round_bound(const MetricGraph& g, const EdgeJob& job) {
    if (job.s_hat <= 0.0) return 1;
    return static_cast<int>(std::ceil(g.edge(job.edge).length / (0.5 * job.s_hat) - 1e-9)) + 1;
}

namespace {

struct Target {
    int line = 0;  // t0 index
    int col = 0;   // m index
    int round = 0;
    ProbePlan plan;
    bool skipped = false;
    std::string reason;
    PointResult result;
};

} // namespace

RecoveredSamples recover_edge(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                              const EdgeJob& job, const RecoveredSamples* known, const ReconOptions& opt,
                              int first_plan_id) {
    const Grid& grid = dtn.grid();
    const double T = grid.horizon();
    const Edge& ed = g.edge(job.edge);
    const double le = ed.length;
    const double L = g.vertex_distance(job.leaf, job.far_vertex);
    const double b = opt.b;
    const double spacing = opt.spacing > 0.0 ? opt.spacing : 0.5 * b;
    const double delta = opt.delta > 0.0 ? opt.delta : 2.0 * b;
    if (!(T > 2.0 * L)) {
        std::ostringstream msg;
        msg << "observation time too short for edge " << ed.id << ": T must exceed 2L = " << 2.0 * L;
        throw ConfigError(msg.str());
    }

    RecoveredSamples out;
    EdgeRaster raster;
    raster.edge = job.edge;
    if (ed.second == job.far_vertex) {
        raster.r_first = L - le;
        raster.sign = 1;
    } else {
        raster.r_first = L;
        raster.sign = -1;
    }
    // lattice in t0 and in s - t0 (the latter aligned so that m = s is global)
    const double t0_min = 1.05 * b;
    const double t0_max = T - 2.0 * L - 1.05 * b;
    if (t0_max < t0_min) {
        std::ostringstream msg;
        msg << "observation time too short for edge " << ed.id << ": no probe line fits (need T > 2L + 2.1b)";
        throw ConfigError(msg.str());
    }
    const int lines = static_cast<int>(std::floor((t0_max - t0_min) / spacing + 1e-9)) + 1;
    const double gap0 = 2.0 * b + 0.5 * spacing;
    const int per_line = gap0 <= 2.0 * le ? static_cast<int>(std::floor((2.0 * le - gap0) / spacing + 1e-9)) + 1 : 0;
    if (per_line == 0) throw ConfigError("edge " + ed.id + " is shorter than the probe width allows (need l > b)");
    raster.u0 = 2.0 * L + t0_min;
    raster.du = spacing;
    raster.m0 = t0_min + gap0;
    raster.dm = spacing;
    raster.nu = lines;
    raster.nm = lines + per_line - 1;
    raster.values.assign(static_cast<size_t>(raster.nu) * raster.nm, kNaN);

    std::vector<Target> targets;
    for (int k = 0; k < lines; ++k) {
        const double t0 = t0_min + k * spacing;
        for (int i = 0; i < per_line; ++i) {
            const double gap = gap0 + i * spacing;
            Target tg;
            tg.line = k;
            tg.col = k + i;
            tg.round = job.s_hat > 0.0 ? static_cast<int>(std::floor((2.0 * le - gap) / job.s_hat + 1e-9)) : 0;
            tg.plan = plan_path(g, job.leaf, job.far_vertex, L - 0.5 * gap, t0, opt.h, b);
            tg.plan.id = first_plan_id + static_cast<int>(targets.size());
            targets.push_back(std::move(tg));
        }
    }
    int rounds = 0;
    for (const auto& t : targets) rounds = std::max(rounds, t.round + 1);

    // GO lines of the probes; traced once from time 0 and shifted per plan
    RayOptions ray_opt;
    ray_opt.amp_floor = 1e-4;
    const auto rays = trace_rays(g, job.leaf, 0.0, T, ray_opt);
    const auto v2_base = forward_lines(g, rays, 0.0);
    // leading amplitude A0 A1 |A2|^2 at the target; weaker crossings are ignored
    double path_amp = 1.0;
    {
        int v = job.leaf;
        for (int e : g.path_edges(job.leaf, job.far_vertex)) {
            v = g.other_end(e, v);
            if (v != job.far_vertex) path_amp *= star_coefficients(g.degree(v)).transmission;
        }
    }
    const double far_refl = job.far_vertex == g.gamma0() ? 1.0 : star_coefficients(g.degree(job.far_vertex)).reflection;
    const double exceptional_floor = 1e-2 * std::pow(path_amp, 4) * far_refl * far_refl;

    std::vector<const EdgeRaster*> prior;
    if (known) {
        for (const auto& r : known->rasters) prior.push_back(&r);
    }
    std::vector<const EdgeRaster*> with_self = prior;
    with_self.push_back(&raster);
    const KnownCoefficient known_fn = [&](const GraphPoint& p, double t) {
        return raster_lookup(g, with_self, p, t);
    };

    CalibrationTable table;
    for (int round = 0; round < rounds; ++round) {
        std::vector<int> todo;
        for (int i = 0; i < static_cast<int>(targets.size()); ++i) {
            if (targets[i].round == round) todo.push_back(i);
        }
        // exceptional delays: crossings of v0 and v1 whose a is not yet known.
        // Crossings on the target line are on target (absorbed by the
        // calibration) or behind it. With corrections enabled, crossings on the
        // edge itself are left to the coverage check of the correction.
        const bool use_known = known != nullptr || job.s_hat > 0.0;
        std::map<int, std::vector<double>> exceptional;
        for (int k = 0; k < lines; ++k) {
            const double t0 = t0_min + k * spacing;
            const KnownPredicate known_pred = [&](int edge, double x, double t) {
                const GraphPoint p{edge, x};
                if (use_known && (edge == job.edge || g.distance(p, ed.first) < 1e-9 || g.distance(p, ed.second) < 1e-9)) {
                    return true;
                }
                if (edge == job.edge && std::abs(t + raster.r_first + raster.sign * x - 2.0 * L - t0) < 1e-9) {
                    return true;
                }
                return known_fn(p, t).has_value();
            };
            const auto v1 = forward_lines(g, rays, t0);
            const auto v0 = backward_lines(g, rays, 2.0 * L + t0);
            exceptional[k] = exceptional_delays(g, v0, v1, v2_base, exceptional_floor, known_pred);
        }
        ReconOptions point_opt = opt;
        point_opt.workers = 1;
        parallel_for(static_cast<int>(todo.size()), opt.workers, [&](int idx) {
            Target& tg = targets[todo[idx]];
            try {
                choose_delay({tg.plan.s}, exceptional.at(tg.line), delta);
            } catch (const ConfigError&) {
                tg.skipped = true;
                tg.reason = "exceptional delay";
                return;
            }
            try {
                tg.result = recover_point(dtn, tg.plan, q, point_opt, use_known ? &known_fn : nullptr, &table);
            } catch (const NumericalError& e) {
                tg.skipped = true;
                tg.reason = e.what();
            }
        });
        for (int i : todo) {
            const Target& tg = targets[i];
            if (!tg.skipped) raster.at(tg.line, tg.col) = tg.result.a_hat;
        }
    }

    // final-domain flag
    std::optional<RecoveryDomain> domain;
    try {
        domain = g.recovery_domain(T);
    } catch (const ConfigError&) {
    }
    auto add_sample = [&](const GraphPoint& p, double t, double a, double err, int plan_id) {
        Sample s;
        s.edge = p.edge;
        s.x = p.offset;
        s.t = t;
        s.a_hat = a;
        s.err = err;
        s.plan_id = plan_id;
        s.in_final = domain && domain->contains(p.edge, p.offset, t, 1e-9);
        out.samples.push_back(s);
    };
    int skipped = 0;
    for (const auto& tg : targets) {
        const double u = 2.0 * L + tg.plan.t0;
        if (u < 2.0 * L - 1e-9 || u > T + 1e-9) throw NumericalError("sample outside its edge band");
        if (tg.skipped) {
            ++skipped;
            continue;
        }
        add_sample(tg.plan.target, tg.plan.target_t, tg.result.a_hat, tg.result.err, tg.plan.id);
    }
    // fill skipped targets by interpolation along their line
    for (int k = 0; k < lines; ++k) {
        int last = -1;
        for (int i = 0; i < per_line; ++i) {
            const int col = k + i;
            if (std::isnan(raster.at(k, col))) continue;
            if (last >= 0 && i - last > 1) {
                const double a0 = raster.at(k, k + last), a1 = raster.at(k, col);
                for (int j = last + 1; j < i; ++j) {
                    const double w = double(j - last) / (i - last);
                    const double a = (1.0 - w) * a0 + w * a1;
                    raster.at(k, k + j) = a;
                    const Target& tg = targets[k * per_line + j];
                    add_sample(tg.plan.target, tg.plan.target_t, a, std::abs(a1 - a0), -1);
                }
            }
            last = i;
        }
    }

    EdgeCoverage cov;
    cov.edge = job.edge;
    cov.leaf = job.leaf;
    cov.L = L;
    cov.r_first = raster.r_first;
    cov.sign = raster.sign;
    cov.rounds = rounds;
    cov.r_lo = std::numeric_limits<double>::infinity();
    cov.r_hi = -cov.r_lo;
    for (int k = 0; k < lines; ++k) {
        bool any = false;
        for (int i = 0; i < per_line; ++i) {
            if (std::isnan(raster.at(k, k + i))) continue;
            any = true;
            const double r = L - 0.5 * (gap0 + i * spacing);
            cov.r_lo = std::min(cov.r_lo, r);
            cov.r_hi = std::max(cov.r_hi, r);
        }
        if (!any) continue;
        const double u = raster.u0 + k * spacing;
        if (!cov.u.empty() && u - 0.5 * spacing <= cov.u.back().second + 1e-12) {
            cov.u.back().second = u + 0.5 * spacing;
        } else {
            cov.u.push_back({u - 0.5 * spacing, u + 0.5 * spacing});
        }
    }
    if (cov.u.empty()) {
        cov.r_lo = cov.r_hi = 0.0;
    }
    if (skipped > 0) {
        std::ostringstream msg;
        int exc = 0;
        for (const auto& t : targets) exc += t.skipped && t.reason == "exceptional delay";
        msg << "edge " << ed.id << ": " << skipped << " of " << targets.size() << " targets skipped (" << exc
            << " exceptional delays)";
        for (const auto& t : targets) {
            if (t.skipped && t.reason != "exceptional delay") {
                msg << "; first failure: " << t.reason;
                break;
            }
        }
        out.notes.push_back(msg.str());
        log(LogLevel::info, msg.str());
    }
    out.coverage.push_back(cov);
    // later jobs may read the unreachable end strips; this job never does
    raster.length = le;
    raster.end_reach = 0.5 * gap0 + spacing;
    out.rasters.push_back(std::move(raster));
    return out;
}

RecoveredSamples recover_edge_boundary(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                                       int leaf, const ReconOptions& opt, int first_plan_id) {
    if (!g.is_controlled(leaf)) throw ConfigError(g.vertex_id(leaf) + " is not a controlled leaf");
    EdgeJob job;
    job.edge = g.incident(leaf)[0];
    job.leaf = leaf;
    job.far_vertex = g.other_end(job.edge, leaf);
    const double l = g.edge(job.edge).length;
    if (!(dtn.grid().horizon() > 2.0 * l)) {
        std::ostringstream msg;
        msg << "observation time too short: T must exceed 2l = " << 2.0 * l << " for edge " << g.edge(job.edge).id;
        throw ConfigError(msg.str());
    }
    return recover_edge(g, dtn, q, job, nullptr, opt, first_plan_id);
}

RecoveredSamples recover_sheaf_stem(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                                    const Sheaf& sheaf, const RecoveredSamples& partial, const ReconOptions& opt,
                                    int first_plan_id) {
    EdgeJob job;
    job.edge = sheaf.stem_edge;
    job.far_vertex = sheaf.stem_far;
    double l1 = -1.0, lmin = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < sheaf.leaf_edges.size(); ++i) {
        const double l = g.edge(sheaf.leaf_edges[i]).length;
        if (!partial.coverage_of(sheaf.leaf_edges[i])) {
            throw ConfigError("a_partial does not cover boundary edge " + g.edge(sheaf.leaf_edges[i]).id);
        }
        if (l > l1) {
            l1 = l;
            job.leaf = sheaf.leaves[i];
        }
        lmin = std::min(lmin, l);
    }
    job.s_hat = 2.0 * lmin;
    const double l0 = g.edge(job.edge).length;
    if (!(dtn.grid().horizon() > 2.0 * (l1 + l0))) {
        std::ostringstream msg;
        msg << "observation time too short: T must exceed 2(l1 + l0) = " << 2.0 * (l1 + l0);
        throw ConfigError(msg.str());
    }
    return recover_edge(g, dtn, q, job, &partial, opt, first_plan_id);
}

RecoveredSamples recover_tree(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                              const ReconOptions& opt) {
    (void)g.recovery_domain(dtn.grid().horizon());  // T > 2 D(gamma0)
    RecoveredSamples all;
    int next_id = 0;
    auto bump_ids = [&](const RecoveredSamples& r) {
        for (const auto& s : r.samples) next_id = std::max(next_id, s.plan_id + 1);
    };
    std::vector<char> done(g.edge_count(), 0);
    for (int z : g.controlled()) {
        auto r = recover_edge_boundary(g, dtn, q, z, opt, next_id);
        bump_ids(r);
        done[g.incident(z)[0]] = 1;
        all.merge(r);
    }
    // remaining edges, farthest from gamma0 first so that every subtree is done
    std::vector<std::pair<double, int>> order;
    const int g0 = g.gamma0();
    for (int e = 0; e < g.edge_count(); ++e) {
        if (done[e]) continue;
        const Edge& ed = g.edge(e);
        order.push_back({-std::max(g.vertex_distance(ed.first, g0), g.vertex_distance(ed.second, g0)), e});
    }
    std::sort(order.begin(), order.end());
    for (const auto& [key, e] : order) {
        const EdgeJob job = tree_job(g, e);
        auto r = recover_edge(g, dtn, q, job, &all, opt, next_id);
        bump_ids(r);
        const auto& cov = r.coverage.back();
        if (cov.rounds > round_bound(g, job)) {
            throw NumericalError("s-lowering schedule exceeded its round bound on edge " + g.edge(e).id);
        }
        all.merge(r);
    }
    return all;
}

} // namespace mgwave
