#include "mgwave/geo_optics.hpp"

#include <cmath>
#include <deque>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mgwave/error.hpp"
#include "mgwave/log.hpp"

namespace mgwave {

// ---------------------------------------------------------------- cutoff

double Cutoff::smooth_step(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / u);
    const double b = std::exp(-1.0 / (1.0 - u));
    return a / (a + b);
}

Cutoff::Cutoff(double b) : b_(b) {
    if (!(b > 0.0)) throw ConfigError("cutoff width b must be > 0");
    auto sq = [](double u) {
        double s = smooth_step(u);
        return s * s;
    };
    const double ramp = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(sq, 0.0, 1.0, 10, 1e-14);
    // plateau of length b plus two ramps of length b/2
    mass_ = b + b * ramp;
}

double Cutoff::operator()(double t) const {
    if (t <= 0.0 || t >= 2.0 * b_) return 0.0;
    const double half = 0.5 * b_;
    if (t < half) return smooth_step(t / half);
    if (t > 3.0 * half) return smooth_step((2.0 * b_ - t) / half);
    return 1.0;
}

// ---------------------------------------------------------------- probes

void add_probe(ComplexSignal& s, const Probe& p, cplx weight) {
    const double T = s.steps * s.dt;
    if (p.t0 < -1e-12 || p.t0 + 2.0 * p.b > T + 1e-12) {
        throw ConfigError("probe support (" + std::to_string(p.t0) + ", " + std::to_string(p.t0 + 2 * p.b) +
                          ") exceeds the horizon T = " + std::to_string(T));
    }
    if (!(p.h > 0.0)) throw ConfigError("probe oscillation parameter h must be > 0");
    if (p.h > 0.25 * p.b) log(LogLevel::warn, "probe h > b/4: the geometric-optics regime needs h << b");
    Cutoff chi(p.b);
    auto& v = s.add(p.leaf);
    const int n0 = std::max(0, static_cast<int>(std::floor(p.t0 / s.dt)));
    const int n1 = std::min(s.steps, static_cast<int>(std::ceil((p.t0 + 2 * p.b) / s.dt)));
    for (int n = n0; n <= n1; ++n) {
        const double tau = n * s.dt - p.t0;
        const double c = chi(tau);
        if (c != 0.0) v[n] += weight * c * std::exp(cplx(0.0, tau / p.h));
    }
}

ComplexSignal probe_signal(const Probe& p, const Grid& grid) {
    ComplexSignal s(grid.dt(), grid.steps());
    add_probe(s, p);
    return s;
}

Scattering star_coefficients(int n) {
    if (n < 1) throw ConfigError("scattering coefficients need degree >= 1");
    return {-static_cast<double>(n - 2) / n, 2.0 / n};
}

// ---------------------------------------------------------------- rays

double RaySegment::arrival(const MetricGraph& g, double x) const {
    return t_depart + std::abs(x - g.offset_of(edge, entry));
}

std::vector<RaySegment> trace_rays(const MetricGraph& g, int leaf, double start, double T,
                                   const RayOptions& opt) {
    if (!(opt.amp_floor > 0.0)) throw ConfigError("ray amplitude floor must be > 0");
    if (!g.is_leaf(leaf)) throw ConfigError("rays must start at a leaf");
    std::vector<char> free_end(g.vertex_count(), 0);
    for (int v : opt.neumann_leaves) free_end[v] = 1;

    std::vector<RaySegment> out;
    std::deque<RaySegment> todo;
    const int e0 = g.incident(leaf)[0];
    todo.push_back({e0, g.edge(e0).first == leaf ? 1 : -1, leaf, start, 1.0, 0});
    while (!todo.empty()) {
        RaySegment seg = todo.front();
        todo.pop_front();
        if (seg.t_depart > T) continue;
        out.push_back(seg);
        const int w = g.other_end(seg.edge, seg.entry);
        const double arrive = seg.t_depart + g.edge(seg.edge).length;
        if (arrive > T || seg.generation + 1 > opt.generation_cap) continue;
        auto spawn = [&](int e, cplx amp) {
            if (std::abs(amp) < opt.amp_floor) return;
            todo.push_back({e, g.edge(e).first == w ? 1 : -1, w, arrive, amp, seg.generation + 1});
        };
        if (g.is_leaf(w)) {
            spawn(seg.edge, seg.amplitude * (free_end[w] ? 1.0 : -1.0));
            continue;
        }
        const Scattering sc = star_coefficients(g.degree(w));
        for (int e : g.incident(w)) spawn(e, seg.amplitude * (e == seg.edge ? sc.reflection : sc.transmission));
    }
    return out;
}

void write_rays_csv(std::ostream& os, const MetricGraph& g, const std::vector<RaySegment>& rays) {
    os << "edge,direction,t_depart,re_amp,im_amp,generation\n" << std::setprecision(12);
    for (const auto& r : rays) {
        os << g.edge(r.edge).id << ',' << r.direction << ',' << r.t_depart << ',' << r.amplitude.real() << ','
           << r.amplitude.imag() << ',' << r.generation << '\n';
    }
}

GoField::GoField(const MetricGraph& g, const Probe& p, double T, const RayOptions& opt)
    : g_(&g), probe_(p), chi_(p.b) {
    rays_ = trace_rays(g, p.leaf, p.t0, T, opt);
    by_edge_.assign(g.edge_count(), {});
    for (size_t i = 0; i < rays_.size(); ++i) by_edge_[rays_[i].edge].push_back(static_cast<int>(i));
}

cplx GoField::value(int edge, double x, double t) const {
    cplx sum = 0.0;
    for (int i : by_edge_[edge]) {
        const RaySegment& r = rays_[i];
        const double phi = t - r.arrival(*g_, x);
        if (phi <= 0.0 || phi >= 2.0 * probe_.b) continue;
        sum += r.amplitude * chi_(phi) * std::exp(cplx(0.0, phi / probe_.h));
    }
    return sum;
}

void GoField::fill(const Grid& grid, int n, std::span<cplx> out) const {
    const double t = grid.time(n);
    for (int k = 0; k < grid.node_count(); ++k) {
        const GraphPoint p = grid.position(k);
        out[k] = value(p.edge, p.offset, t);
    }
}

WaveField go_field(const Grid& grid, const Probe& p, const RayOptions& opt) {
    GoField go(grid.graph(), p, grid.horizon(), opt);
    WaveField field;
    field.grid = &grid;
    for (int n = 0; n <= grid.steps(); ++n) {
        field.steps.push_back(n);
        field.u.emplace_back(grid.node_count());
        go.fill(grid, n, field.u.back());
    }
    return field;
}

// ---------------------------------------------------------------- vertex traces

namespace {

// Walk lengths from `root` have the form d + sum_e 2 n_e l_e.
std::vector<double> walk_breakpoints(const MetricGraph& g, double first, double T) {
    std::set<double> seen{first};
    std::vector<double> frontier{first};
    while (!frontier.empty() && seen.size() < 100000) {
        std::vector<double> next;
        for (double d : frontier) {
            for (const Edge& e : g.edges()) {
                double v = d + 2.0 * e.length;
                if (v > T + 1e-12) continue;
                // merge values that differ by round-off only
                auto it = seen.lower_bound(v - 1e-12);
                if (it != seen.end() && *it <= v + 1e-12) continue;
                seen.insert(v);
                next.push_back(v);
            }
        }
        frontier = std::move(next);
    }
    return {seen.begin(), seen.end()};
}

} // namespace

TraceReport vertex_trace_solve(const MetricGraph& g, int driven_leaf, const std::vector<double>& f,
                               double dt, double T) {
    if (!g.is_controlled(driven_leaf)) throw ConfigError("vertex traces need a controlled driven leaf");
    if (!(dt > 0.0)) throw ConfigError("vertex trace dt must be > 0");
    const int steps = static_cast<int>(std::llround(T / dt));
    if (static_cast<int>(f.size()) < steps + 1) throw ConfigError("driving signal shorter than the horizon");

    const auto& internal = g.internal_vertices();
    std::vector<int> slot(g.vertex_count(), -1);
    for (size_t i = 0; i < internal.size(); ++i) slot[internal[i]] = static_cast<int>(i);

    TraceReport report;
    auto rounded = [&](double delay) {
        const long k = std::lround(delay / dt);
        report.max_delay_rounding = std::max(report.max_delay_rounding, std::abs(delay - k * dt));
        return static_cast<int>(k);
    };

    // per incidence: odd delays (2m+1) l and even delays 2m l in samples
    struct Incidence {
        int other_slot;    // internal neighbour, or -1
        bool other_driven;
        std::vector<int> odd, even;
    };
    std::vector<std::vector<Incidence>> inc(internal.size());
    for (size_t i = 0; i < internal.size(); ++i) {
        const int v = internal[i];
        for (int e : g.incident(v)) {
            const double l = g.edge(e).length;
            if (rounded(l) < 1) throw ConfigError("vertex trace dt must be below the shortest edge length");
            Incidence in;
            const int w = g.other_end(e, v);
            in.other_slot = slot[w];
            in.other_driven = w == driven_leaf;
            for (int m = 0; (2 * m + 1) * l <= T + 1e-12; ++m) in.odd.push_back(rounded((2 * m + 1) * l));
            for (int m = 1; 2 * m * l <= T + 1e-12; ++m) in.even.push_back(rounded(2 * m * l));
            inc[i].push_back(std::move(in));
        }
    }

    std::vector<std::vector<double>> gv(internal.size(), std::vector<double>(steps + 1, 0.0));
    for (int n = 0; n <= steps; ++n) {
        for (size_t i = 0; i < internal.size(); ++i) {
            double acc = 0.0;
            for (const auto& in : inc[i]) {
                if (in.other_slot >= 0 || in.other_driven) {
                    const std::vector<double>& src = in.other_driven ? f : gv[in.other_slot];
                    for (int d : in.odd) {
                        if (d > n) break;
                        acc += 2.0 * src[n - d];
                    }
                }
                for (int d : in.even) {
                    if (d > n) break;
                    acc -= 2.0 * gv[i][n - d];
                }
            }
            gv[i][n] = acc / g.degree(internal[i]);
        }
    }
    if (report.max_delay_rounding > 1e-9 * dt) {
        log(LogLevel::info, "vertex trace: delays rounded to the sample grid, max error " +
                                std::to_string(report.max_delay_rounding));
    }
    for (size_t i = 0; i < internal.size(); ++i) {
        VertexTrace tr;
        tr.vertex = internal[i];
        tr.dt = dt;
        tr.g = std::move(gv[i]);
        tr.breakpoints = walk_breakpoints(g, g.vertex_distance(driven_leaf, internal[i]), T);
        report.traces.push_back(std::move(tr));
    }
    return report;
}

Rational parse_rational(const std::string& text) {
    using boost::multiprecision::cpp_int;
    size_t i = 0;
    bool negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) negative = text[i++] == '-';
    cpp_int digits = 0;
    int frac = 0;
    bool any = false, dot = false;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (c >= '0' && c <= '9') {
            digits = digits * 10 + (c - '0');
            any = true;
            if (dot) ++frac;
        } else if (c == '.' && !dot) {
            dot = true;
        } else {
            break;
        }
    }
    long exponent = 0;
    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        ++i;
        bool eneg = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) eneg = text[i++] == '-';
        bool eany = false;
        for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i) {
            exponent = exponent * 10 + (text[i] - '0');
            eany = true;
        }
        if (!eany) any = false;
        if (eneg) exponent = -exponent;
    }
    if (!any || i != text.size()) throw ConfigError("'" + text + "' is not a rational decimal literal");
    exponent -= frac;
    cpp_int scale = 1;
    for (long k = 0; k < std::labs(exponent); ++k) scale *= 10;
    Rational r = exponent >= 0 ? Rational(digits * scale) : Rational(digits, scale);
    return negative ? -r : r;
}

std::vector<RationalTrace> vertex_trace_rational(const MetricGraph& g, int driven_leaf,
                                                 const Rational& max_delay) {
    if (!g.is_controlled(driven_leaf)) throw ConfigError("vertex traces need a controlled driven leaf");
    std::vector<Rational> len;
    for (const Edge& e : g.edges()) {
        if (e.length_text.empty()) throw ConfigError("edge '" + e.id + "' has no decimal length text");
        len.push_back(parse_rational(e.length_text));
    }
    const auto& internal = g.internal_vertices();
    std::vector<int> slot(g.vertex_count(), -1);
    for (size_t i = 0; i < internal.size(); ++i) slot[internal[i]] = static_cast<int>(i);

    std::map<Rational, std::vector<Rational>> coeff;  // delay -> per internal vertex
    auto lookup = [&](int vertex, const Rational& d) -> Rational {
        if (d < 0) return 0;
        if (vertex == driven_leaf) return d == 0 ? Rational(1) : Rational(0);
        if (slot[vertex] < 0) return 0;
        auto it = coeff.find(d);
        return it == coeff.end() ? Rational(0) : it->second[slot[vertex]];
    };

    std::set<Rational> pending{Rational(0)};
    while (!pending.empty()) {
        const Rational d = *pending.begin();
        pending.erase(pending.begin());
        std::vector<Rational> row(internal.size());
        for (size_t i = 0; i < internal.size(); ++i) {
            const int v = internal[i];
            Rational acc = 0;
            for (int e : g.incident(v)) {
                const Rational& l = len[e];
                const int w = g.other_end(e, v);
                for (Rational delay = l; delay <= d; delay += 2 * l) acc += 2 * lookup(w, d - delay);
                for (Rational delay = 2 * l; delay <= d; delay += 2 * l) acc -= 2 * lookup(v, d - delay);
            }
            row[i] = acc / g.degree(v);
        }
        coeff.emplace(d, std::move(row));
        for (const Rational& l : len) {
            if (d + l <= max_delay) pending.insert(d + l);
        }
    }

    std::vector<RationalTrace> out;
    for (size_t i = 0; i < internal.size(); ++i) {
        RationalTrace tr;
        tr.vertex = internal[i];
        for (const auto& [d, row] : coeff) {
            if (row[i] != 0) tr.terms.push_back({d, row[i]});
        }
        out.push_back(std::move(tr));
    }
    return out;
}

// ---------------------------------------------------------------- four-wave geometry

std::vector<CharLine> forward_lines(const MetricGraph& g, const std::vector<RaySegment>& rays, double center) {
    std::vector<CharLine> out;
    for (const auto& r : rays) {
        const double xe = g.offset_of(r.edge, r.entry);
        const double t_enter = center + r.t_depart;
        out.push_back({r.edge, r.direction, t_enter - r.direction * xe, t_enter, t_enter + g.edge(r.edge).length,
                       r.amplitude});
    }
    return out;
}

std::vector<CharLine> backward_lines(const MetricGraph& g, const std::vector<RaySegment>& rays, double center) {
    std::vector<CharLine> out;
    for (const auto& r : rays) {
        const double xe = g.offset_of(r.edge, r.entry);
        const double t_enter = center - r.t_depart;
        out.push_back({r.edge, -r.direction, t_enter + r.direction * xe, t_enter - g.edge(r.edge).length, t_enter,
                       r.amplitude});
    }
    return out;
}

namespace {

bool covers(const CharLine& l, double t, double tol) { return t >= l.t_lo - tol && t <= l.t_hi + tol; }

void add_unique(const MetricGraph& g, std::vector<Intersection>& out, Intersection in, double tol) {
    for (auto& o : out) {
        if (std::abs(o.t - in.t) <= tol && g.distance(o.point, in.point) <= tol) {
            // the same space-time point reached from another incident edge
            if (in.kind == PointClass::exceptional) o.kind = PointClass::exceptional;
            return;
        }
    }
    out.push_back(in);
}

} // namespace

std::vector<Intersection> four_wave_intersections(const MetricGraph& g, const std::vector<CharLine>& v0,
                                                  const std::vector<CharLine>& v1,
                                                  const std::vector<CharLine>& v2, const GraphPoint& target,
                                                  double target_t, const KnownPredicate& known, double tol,
                                                  double amp_floor) {
    std::vector<Intersection> out;
    const double match = std::max(tol, 1e-6);
    auto classify = [&](int edge, double x, double t) {
        GraphPoint p{edge, std::clamp(x, 0.0, g.edge(edge).length)};
        if (std::abs(t - target_t) <= match && g.distance(p, target) <= match) return PointClass::on_target;
        if (known && known(edge, p.offset, t)) return PointClass::known_region;
        return PointClass::exceptional;
    };
    for (const auto& a : v0) {
        for (const auto& b : v1) {
            if (a.edge != b.edge) continue;
            const double len = g.edge(a.edge).length;
            if (a.sigma == b.sigma) {
                if (std::abs(a.c - b.c) > tol) continue;
                const double lo = std::max(a.t_lo, b.t_lo);
                const double hi = std::min(a.t_hi, b.t_hi);
                if (hi < lo - tol) continue;
                for (const auto& c : v2) {
                    if (c.edge != a.edge) continue;
                    const cplx amp = a.amplitude * b.amplitude * std::norm(c.amplitude);
                    if (std::abs(amp) < amp_floor) continue;
                    if (c.sigma == a.sigma) {
                        if (std::abs(c.c - a.c) > tol) continue;
                        const double clo = std::max(lo, c.t_lo), chi = std::min(hi, c.t_hi);
                        if (chi < clo - tol) continue;
                        const double t = 0.5 * (clo + chi);
                        add_unique(g, out, {{a.edge, a.sigma * (t - a.c)}, t, amp, PointClass::exceptional}, match);
                        continue;
                    }
                    const double x = (c.c - a.c) / (a.sigma - c.sigma);
                    const double t = a.sigma * x + a.c;
                    if (x < -tol || x > len + tol || t < lo - tol || t > hi + tol || !covers(c, t, tol)) continue;
                    add_unique(g, out, {{a.edge, std::clamp(x, 0.0, len)}, t, amp, classify(a.edge, x, t)}, match);
                }
            } else {
                const double x = (b.c - a.c) / (a.sigma - b.sigma);
                const double t = a.sigma * x + a.c;
                if (x < -tol || x > len + tol || !covers(a, t, tol) || !covers(b, t, tol)) continue;
                for (const auto& c : v2) {
                    if (c.edge != a.edge || !covers(c, t, tol)) continue;
                    if (std::abs(c.sigma * x + c.c - t) > tol) continue;
                    const cplx amp = a.amplitude * b.amplitude * std::norm(c.amplitude);
                    if (std::abs(amp) < amp_floor) continue;
                    add_unique(g, out, {{a.edge, std::clamp(x, 0.0, len)}, t, amp, PointClass::exceptional}, match);
                }
            }
        }
    }
    return out;
}

std::vector<double> exceptional_delays(const MetricGraph& g, const std::vector<CharLine>& v0,
                                       const std::vector<CharLine>& v1, const std::vector<CharLine>& v2_base,
                                       double amp_floor, const KnownPredicate& known) {
    std::vector<double> s;
    for (const auto& a : v0) {
        for (const auto& b : v1) {
            if (a.edge != b.edge) continue;
            const double len = g.edge(a.edge).length;
            const double ab = std::abs(a.amplitude * b.amplitude);
            if (a.sigma == b.sigma) {
                if (std::abs(a.c - b.c) > 1e-9) continue;
                const double lo = std::max(a.t_lo, b.t_lo), hi = std::min(a.t_hi, b.t_hi);
                if (hi < lo) continue;
                if (known && known(a.edge, (lo - a.c) / a.sigma, lo) && known(a.edge, (hi - a.c) / a.sigma, hi)) {
                    continue;
                }
                // a v2 line lying on the shared v0/v1 line
                for (const auto& c : v2_base) {
                    if (c.edge == a.edge && c.sigma == a.sigma && ab * std::norm(c.amplitude) >= amp_floor) {
                        s.push_back(a.c - c.c);
                    }
                }
                continue;
            }
            const double x = (b.c - a.c) / (a.sigma - b.sigma);
            const double t = a.sigma * x + a.c;
            if (x < -1e-9 || x > len + 1e-9 || !covers(a, t, 1e-9) || !covers(b, t, 1e-9)) continue;
            if (known && known(a.edge, x, t)) continue;
            for (const auto& c : v2_base) {
                if (c.edge != a.edge || ab * std::norm(c.amplitude) < amp_floor) continue;
                s.push_back(t - (c.sigma * x + c.c));
            }
        }
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end(), [](double p, double q) { return std::abs(p - q) < 1e-9; }), s.end());
    return s;
}

} // namespace mgwave
