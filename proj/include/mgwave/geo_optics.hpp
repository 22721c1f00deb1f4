#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mgwave/metric_graph.hpp"
#include "mgwave/wave_solver.hpp"

namespace mgwave {

using Rational = boost::multiprecision::cpp_rational;

/// Smooth cutoff chi_b: 1 on [b/2, 3b/2], 0 outside (0, 2b).
class Cutoff {
public:
    explicit Cutoff(double b);
    double operator()(double t) const;
    double width() const { return b_; }
    /// Integral of chi_b^2 over the real line.
    double l2_mass() const { return mass_; }

    /// C-infinity step from 0 (u <= 0) to 1 (u >= 1).
    static double smooth_step(double u);

private:
    double b_;
    double mass_;
};

/// Oscillating boundary source e^{i(t-t0)/h} chi_b(t-t0) at one leaf.
struct Probe {
    int leaf = -1;
    double t0 = 0.0;  // start of the support
    double h = 0.01;
    double b = 0.05;

    /// Probe whose cutoff is centred at `center` (support (center-b, center+b)).
    static Probe centered(int leaf, double center, double h, double b) { return {leaf, center - b, h, b}; }
    double center() const { return t0 + b; }
};

ComplexSignal probe_signal(const Probe& p, const Grid& grid);
/// Same samples written onto an existing signal (superposition).
void add_probe(ComplexSignal& s, const Probe& p, cplx weight = 1.0);

struct Scattering {
    double reflection;
    double transmission;
};

/// Vertex of degree n under Kirchhoff-Neumann conditions; n = 1 is a
/// free (Neumann) end.
Scattering star_coefficients(int n);

struct RaySegment {
    int edge = -1;
    int direction = 1;   // +1: increasing chart offset
    int entry = -1;      // vertex the segment leaves from
    double t_depart = 0; // phase-front time at the entry vertex
    cplx amplitude = 1.0;
    int generation = 0;

    /// Phase-front arrival time at chart offset x.
    double arrival(const MetricGraph& g, double x) const;
};

struct RayOptions {
    double amp_floor = 1e-6;
    int generation_cap = 40;
    std::vector<int> neumann_leaves;
};

/// Breadth-first expansion of the singular support of a wave emitted at
/// `leaf` at time `start`, up to horizon T.
std::vector<RaySegment> trace_rays(const MetricGraph& g, int leaf, double start, double T,
                                   const RayOptions& opt = {});

void write_rays_csv(std::ostream& os, const MetricGraph& g, const std::vector<RaySegment>& rays);

/// Analytic main term sum_k A_k e^{i phi_k/h} chi_b(phi_k).
class GoField {
public:
    GoField(const MetricGraph& g, const Probe& p, double T, const RayOptions& opt = {});
    cplx value(int edge, double x, double t) const;
    void fill(const Grid& grid, int n, std::span<cplx> out) const;
    const std::vector<RaySegment>& rays() const { return rays_; }

private:
    const MetricGraph* g_;
    Probe probe_;
    Cutoff chi_;
    std::vector<RaySegment> rays_;
    std::vector<std::vector<int>> by_edge_;
};

WaveField go_field(const Grid& grid, const Probe& p, const RayOptions& opt = {});

// ---------------------------------------------------------------- vertex traces

struct VertexTrace {
    int vertex = -1;
    double dt = 0.0;
    std::vector<double> g;            // g(t_n), n = 0..steps
    std::vector<double> breakpoints;  // delay-combination times within the horizon
};

struct TraceReport {
    std::vector<VertexTrace> traces;
    double max_delay_rounding = 0.0;  // largest |delay - rounded delay|
};

/// Floating mode: method of steps on a uniform grid for the delay system
/// at the internal vertices, driven by f at a single controlled leaf
/// (q = 0, Dirichlet elsewhere).
TraceReport vertex_trace_solve(const MetricGraph& g, int driven_leaf, const std::vector<double>& f,
                               double dt, double T);

struct RationalTerm {
    Rational delay;
    Rational coefficient;
};

/// Exact mode: g_v(t) = sum_k c_k f(t - d_k) with rational delays and
/// coefficients, for every internal vertex, all delays <= max_delay.
struct RationalTrace {
    int vertex = -1;
    std::vector<RationalTerm> terms;  // sorted by delay, zero coefficients dropped
};

std::vector<RationalTrace> vertex_trace_rational(const MetricGraph& g, int driven_leaf,
                                                 const Rational& max_delay);

/// Parse a decimal literal such as "0.75" or "2e-1" exactly.
Rational parse_rational(const std::string& text);

// ---------------------------------------------------------------- four-wave geometry

/// Singular support of a ray segment as a line t = sigma*x + c on its edge.
struct CharLine {
    int edge = -1;
    int sigma = 1;
    double c = 0.0;
    double t_lo = 0.0, t_hi = 0.0;  // time range covered on the edge
    cplx amplitude = 1.0;
};

/// Lines of a forward wave emitted with phase centre `center`.
std::vector<CharLine> forward_lines(const MetricGraph& g, const std::vector<RaySegment>& rays, double center);
/// Lines of a backward wave whose reversed-time rays were traced from 0;
/// the boundary source is centred at `center`.
std::vector<CharLine> backward_lines(const MetricGraph& g, const std::vector<RaySegment>& rays, double center);

enum class PointClass { on_target, known_region, exceptional };

struct Intersection {
    GraphPoint point;
    double t = 0.0;
    cplx amplitude = 0.0;  // A0 A1 |A2|^2
    PointClass kind = PointClass::exceptional;
};

using KnownPredicate = std::function<bool(int edge, double x, double t)>;

/// Points where v0, v1, v2 (and v3 = conj v2) singular supports meet.
/// Collinear v0/v1 pieces crossed by v2 are candidate contributions; triple
/// crossings and coincidences are exceptional.
std::vector<Intersection> four_wave_intersections(const MetricGraph& g, const std::vector<CharLine>& v0,
                                                  const std::vector<CharLine>& v1,
                                                  const std::vector<CharLine>& v2, const GraphPoint& target,
                                                  double target_t, const KnownPredicate& known,
                                                  double tol = 1e-9, double amp_floor = 1e-8);

/// Delays s (v2 lines shifted by s) at which a v0 x v1 crossing is hit by v2.
/// `v2_base` are the lines for s = 0. Crossings where `known` holds are
/// skipped since their contribution can be subtracted.
std::vector<double> exceptional_delays(const MetricGraph& g, const std::vector<CharLine>& v0,
                                       const std::vector<CharLine>& v1, const std::vector<CharLine>& v2_base,
                                       double amp_floor = 1e-8, const KnownPredicate& known = {});

} // namespace mgwave
