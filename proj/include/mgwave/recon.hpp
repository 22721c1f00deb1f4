#pragma once

#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mgwave/geo_optics.hpp"
#include "mgwave/linearize.hpp"

namespace mgwave {

/// Four probes sent from one leaf. v1 is centred at t0, v2 and v3 = conj v2
/// at s, and v0 is the backward wave from 2L + t0, where L is the path length
/// from the leaf to the far endpoint of the edge under recovery. The target
/// is where the v2 line meets the returning v1 line.
struct ProbePlan {
    int id = -1;
    int leaf = -1;
    int far_vertex = -1;
    double L = 0.0;
    double t0 = 0.0;
    double s = 0.0;
    double h = 0.01;
    double b = 0.05;
    double r = 0.0;  // path distance from the leaf to the target
    GraphPoint target;
    double target_t = 0.0;

    double backward_time() const { return 2.0 * L + t0; }
};

/// Interval [0, l] controlled at x = 0 (edge 0 of a two-vertex graph).
ProbePlan plan_interval(double l, double x0, double t0, double h, double b);

/// Plan on the path from `leaf` to `far_vertex` for the target at path
/// distance r from the leaf.
ProbePlan plan_path(const MetricGraph& g, int leaf, int far_vertex, double r, double t0, double h, double b);

struct PlanSignals {
    ComplexSignal f0, f1, f2, f3;
};

/// Boundary data of the four probes; f0 carries the conjugate phase so the
/// v0 v1 product does not oscillate along their common line.
PlanSignals plan_signals(const ProbePlan& plan, const Grid& grid);

enum class CalibrationMode { pipeline, volumetric };

/// Normalization constants keyed by plan geometry and discretization.
class CalibrationTable {
public:
    std::optional<cplx> find(const std::string& key) const;
    void put(const std::string& key, cplx value);
    size_t size() const;
    static std::string key(const ProbePlan& plan, const Grid& grid, CalibrationMode mode);

private:
    mutable std::mutex mu_;
    std::map<std::string, cplx> table_;
};

struct ReconOptions {
    double h = 0.01;
    double b = 0.05;
    EpsPolicy eps;
    CalibrationMode calibration = CalibrationMode::pipeline;
    double spacing = 0.0;       // lattice step in t0 and s; 0 means b/2
    double delta = 0.0;         // exclusion radius around exceptional s; 0 means 2b
    double diamond = 1.5;       // on-target region radius in units of b
    double missing_tol = 0.05;  // allowed uncovered density weight relative to |C_cal|
    double blowup_bound = 50.0;
    int workers = 1;
};

/// Indicator of the on-target diamond d(p, x*) + |t - t*| <= radius.
struct TargetDiamond {
    std::vector<double> node_distance;  // graph distance of every node to the target
    double t = 0.0;
    double radius = 0.0;
    bool contains(int node, double time) const {
        return node_distance[node] + std::abs(time - t) <= radius;
    }
};

TargetDiamond target_diamond(const Grid& grid, const ProbePlan& plan, double radius_in_b);

/// C_cal: response of the identity to a = 1 on the target diamond.
cplx calibrate(const ProbePlan& plan, const Grid& grid, const std::vector<double>* q, const ReconOptions& opt,
               CalibrationTable* table = nullptr, const PlanSignals* signals = nullptr);

struct PointDiagnostics {
    InteractionResult integral;
    cplx calibration = 0.0;
    cplx correction = 0.0;
    double missing_weight = 0.0;
    cplx raw = 0.0;  // (I - correction) / C before taking the real part
};

struct PointResult {
    double a_hat = 0.0;
    double err = 0.0;
    PointDiagnostics diag;
};

/// a at the plan's target: (interaction integral - known-region part) / C_cal.
/// `known` may be null when no prior recovery exists.
PointResult recover_point(const DtnOracle& dtn, const ProbePlan& plan, const std::vector<double>* q,
                          const ReconOptions& opt, const KnownCoefficient* known = nullptr,
                          CalibrationTable* table = nullptr);

// ---------------------------------------------------------------- sample sets

struct Sample {
    int edge = -1;
    double x = 0.0;
    double t = 0.0;
    double a_hat = 0.0;
    double err = 0.0;
    int plan_id = -1;        // -1 for values filled by interpolation along a line
    bool in_final = false;   // inside { D + d(x,g0) <= t <= T - D + d(x,g0) }
};

/// Recovered band on one edge in the coordinates of its probe path:
/// r(x) = r_first + sign * x, lines u = t + r.
struct EdgeCoverage {
    int edge = -1;
    int leaf = -1;
    double L = 0.0;
    double r_first = 0.0;
    int sign = 1;
    double r_lo = 0.0, r_hi = 0.0;               // recovered span along the path
    std::vector<std::pair<double, double>> u;    // covered intervals of t + r
    int rounds = 0;                              // s-lowering rounds executed

    double r_of(double x) const { return r_first + sign * x; }
    bool contains(double x, double t, double tol = 0.0) const;
};

/// Regular raster of recovered values in the characteristic coordinates
/// (u, m) = (t + r, t - r) of one edge.
struct EdgeRaster {
    int edge = -1;
    double r_first = 0.0;
    int sign = 1;
    double u0 = 0.0, du = 1.0;
    double m0 = 0.0, dm = 1.0;
    int nu = 0, nm = 0;
    std::vector<double> values;  // nu * nm, NaN where missing
    double length = 0.0;         // edge length
    double end_reach = 0.0;      // nearest-value reach in r into the edge-end strips

    double& at(int i, int j) { return values[static_cast<size_t>(i) * nm + j]; }
    double at(int i, int j) const { return values[static_cast<size_t>(i) * nm + j]; }
    std::optional<double> lookup(double x, double t) const;
};

struct RecoveredSamples {
    std::vector<Sample> samples;
    std::vector<EdgeCoverage> coverage;
    std::vector<EdgeRaster> rasters;
    std::vector<std::string> notes;

    void merge(const RecoveredSamples& other);
    /// Interpolated a at (p, t) from the rasters, or nullopt when uncovered.
    std::optional<double> lookup(const MetricGraph& g, const GraphPoint& p, double t) const;
    KnownCoefficient as_known(const MetricGraph& g) const;
    const EdgeCoverage* coverage_of(int edge) const;
};

void write_samples_csv(std::ostream& os, const MetricGraph& g, const RecoveredSamples& rs);

/// First candidate farther than delta from every exceptional value.
double choose_delay(const std::vector<double>& candidates, const std::vector<double>& exceptional, double delta);

struct EdgeJob {
    int edge = -1;
    int leaf = -1;        // probe source
    int far_vertex = -1;  // endpoint toward gamma0
    double s_hat = 0.0;   // s-lowering step; 0 means a single round
};

/// Recovers a on one edge along lines t + r = 2L + t0 with corrections from
/// `known`. Targets are processed in rounds of decreasing s.
RecoveredSamples recover_edge(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                              const EdgeJob& job, const RecoveredSamples* known, const ReconOptions& opt,
                              int first_plan_id = 0);

RecoveredSamples recover_edge_boundary(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                                       int leaf, const ReconOptions& opt, int first_plan_id = 0);

RecoveredSamples recover_sheaf_stem(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                                    const Sheaf& sheaf, const RecoveredSamples& partial, const ReconOptions& opt,
                                    int first_plan_id = 0);

/// Boundary edges, then every remaining edge in order toward gamma0.
RecoveredSamples recover_tree(const MetricGraph& g, const DtnOracle& dtn, const std::vector<double>* q,
                              const ReconOptions& opt);

/// Probe leaf and round step for a non-boundary edge: the farthest leaf of
/// the subtree hanging below the edge and twice its shortest edge.
EdgeJob tree_job(const MetricGraph& g, int edge);

/// Upper bound ceil(l_e / (s_hat / 2)) + 1 on the rounds of a job.
int round_bound(const MetricGraph& g, const EdgeJob& job);

} // namespace mgwave
