#pragma once

#include <algorithm>
#include <complex>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "mgwave/metric_graph.hpp"

namespace mgwave {

using cplx = std::complex<double>;

/// Space-time grid on a metric graph. Nodes are numbered vertices first,
/// then the interior nodes of each edge in chart order.
class Grid {
public:
    Grid(const MetricGraph& g, double target_dx, double cfl, double horizon);

    const MetricGraph& graph() const { return *graph_; }
    int cells(int e) const { return cells_[e]; }
    double dx(int e) const { return dx_[e]; }
    double min_dx() const { return min_dx_; }
    double dt() const { return dt_; }
    int steps() const { return steps_; }
    double horizon() const { return horizon_; }
    double time(int n) const { return n * dt_; }
    double cfl_ratio() const { return dt_ / min_dx_; }
    int node_count() const { return node_count_; }

    /// Global node of grid index i in [0, N_e] along edge e.
    int node(int e, int i) const {
        if (i == 0) return graph_->edge(e).first;
        if (i == cells_[e]) return graph_->edge(e).second;
        return interior_begin_[e] + i - 1;
    }
    int interior_begin(int e) const { return interior_begin_[e]; }
    /// Edge and chart offset of node k (vertices report an incident edge).
    GraphPoint position(int k) const;
    /// Lumped mass (trapezoid weight) of node k.
    double mass(int k) const { return mass_[k]; }
    const std::vector<double>& masses() const { return mass_; }
    /// Nearest grid step to time t.
    int step_of(double t) const;

private:
    const MetricGraph* graph_;
    std::vector<int> cells_;
    std::vector<double> dx_;
    std::vector<int> interior_begin_;
    std::vector<double> mass_;
    double min_dx_ = 0.0;
    double dt_ = 0.0;
    double horizon_ = 0.0;
    int steps_ = 0;
    int node_count_ = 0;
};

using SpaceFunction = std::function<double(int edge, double x)>;
using SpaceTimeFunction = std::function<double(int edge, double x, double t)>;

/// Pointwise nodal samples of q. Vertex values are checked for agreement
/// across incident edges.
std::vector<double> sample_potential(const Grid& grid, const SpaceFunction& q, double tol = 1e-8);

/// Dense table of a(x, t_n) over all nodes for steps [0, steps].
class CubicTable {
public:
    CubicTable() = default;
    CubicTable(const Grid& grid, const SpaceTimeFunction& a, double tol = 1e-8);
    /// Wrap precomputed rows (steps+1 rows of `nodes` values).
    static CubicTable from_rows(int nodes, std::vector<double> data);

    const double* row(int n) const { return data_.empty() ? nullptr : data_.data() + static_cast<size_t>(n) * nodes_; }
    int nodes() const { return nodes_; }
    bool empty() const { return data_.empty(); }
    double max_abs() const;

private:
    int nodes_ = 0;
    std::vector<double> data_;
};

/// Time series attached to leaves, sampled at t_n = n dt for n = 0..steps.
template <class S>
struct BasicSignal {
    double dt = 0.0;
    int steps = 0;
    std::vector<int> leaves;
    std::vector<std::vector<S>> values;

    BasicSignal() = default;
    BasicSignal(double dt_, int steps_) : dt(dt_), steps(steps_) {}

    std::vector<S>& add(int leaf) {
        for (size_t i = 0; i < leaves.size(); ++i) {
            if (leaves[i] == leaf) return values[i];
        }
        leaves.push_back(leaf);
        values.emplace_back(steps + 1, S{});
        return values.back();
    }
    const std::vector<S>* find(int leaf) const {
        for (size_t i = 0; i < leaves.size(); ++i) {
            if (leaves[i] == leaf) return &values[i];
        }
        return nullptr;
    }
    /// First step with a nonzero sample, or steps+1 when identically zero.
    int first_nonzero() const {
        int first = steps + 1;
        for (const auto& v : values) {
            for (int n = 0; n < first && n <= steps; ++n) {
                if (v[n] != S{}) {
                    first = n;
                    break;
                }
            }
        }
        return first;
    }
    double max_abs() const {
        double m = 0.0;
        for (const auto& v : values) {
            for (const S& s : v) m = std::max(m, std::abs(s));
        }
        return m;
    }
    BasicSignal reversed() const {
        BasicSignal r = *this;
        for (auto& v : r.values) std::reverse(v.begin(), v.end());
        return r;
    }
    BasicSignal& operator+=(const BasicSignal& o) {
        for (size_t i = 0; i < o.leaves.size(); ++i) {
            auto& dst = add(o.leaves[i]);
            for (int n = 0; n <= steps; ++n) dst[n] += o.values[i][n];
        }
        return *this;
    }
    BasicSignal& operator*=(S s) {
        for (auto& v : values) {
            for (S& x : v) x *= s;
        }
        return *this;
    }
};

using Signal = BasicSignal<double>;
using ComplexSignal = BasicSignal<cplx>;

Signal real_part(const ComplexSignal& s);
Signal imag_part(const ComplexSignal& s);
ComplexSignal to_complex(const Signal& s);
ComplexSignal conj(const ComplexSignal& s);

/// Row provider for the cubic coefficient; nullptr means a zero row.
using CubicRows = std::function<const double*(int n)>;
template <class S>
using SourceRows = std::function<const S*(int n)>;

template <class S>
struct StepperSetup {
    const std::vector<double>* q = nullptr;  // nodal potential, null for q = 0
    CubicRows cubic;                         // semilinear term a u^3 (real only)
    SourceRows<S> source;                    // interior source F
    std::vector<int> neumann_leaves;         // leaves carrying a free (Neumann) end
    double blowup_bound = std::numeric_limits<double>::infinity();
    /// Optional nonzero initial levels u^{-1}, u^0 (closed-system studies).
    std::vector<S> initial_previous;
    std::vector<S> initial_current;
};

/// Explicit leapfrog on the graph. Interior nodes use the 3-point Laplacian;
/// internal vertices use a lumped-mass flux balance; controlled leaves are
/// Dirichlet-clamped to the boundary data, gamma0 to zero.
template <class S>
class LeapfrogStepper {
public:
    LeapfrogStepper(const Grid& grid, const StepperSetup<S>& setup, const BasicSignal<S>* f);

    /// Advance one step (backward in time after reverse()).
    void step();
    /// Swap the two time levels so that further steps run in the opposite direction.
    void reverse();
    /// Jump to step n with zero state; valid when the solution vanishes up to n.
    void start_at(int n);

    int n() const { return n_; }
    std::span<const S> current() const { return cur_; }
    std::span<const S> previous() const { return prev_; }
    double sup_norm() const;

private:
    void clamp_leaves(std::vector<S>& level, int n) const;
    void check(int n) const;

    const Grid* grid_;
    StepperSetup<S> setup_;
    const BasicSignal<S>* f_;
    std::vector<S> prev_, cur_;
    std::vector<double> qdt2_;
    std::vector<char> free_leaf_;
    std::vector<int> vertex_nodes_;         // internal vertices and free leaves
    std::vector<double> vertex_weight_;     // dt^2 / (M_v dx_j) per incidence
    std::vector<int> vertex_neighbor_;      // neighbouring node per incidence
    std::vector<int> vertex_offsets_;
    std::vector<std::pair<int, int>> clamps_;  // (node, signal index or -1)
    int n_ = 0;
    int dir_ = 1;
};

/// Full snapshot storage at a fixed stride of steps.
template <class S>
struct BasicField {
    const Grid* grid = nullptr;
    int stride = 1;
    std::vector<int> steps;         // recorded steps
    std::vector<std::vector<S>> u;  // u[k][node]

    const std::vector<S>& at_step(int n) const { return u.at(n / stride); }
    S value(int e, int i, int n) const { return at_step(n)[grid->node(e, i)]; }
};

using WaveField = BasicField<cplx>;
using RealField = BasicField<double>;

template <class S>
using StepObserver = std::function<void(int n, std::span<const S> u)>;

/// Run a stepper over steps [0, last], observing every level.
template <class S>
void run(const Grid& grid, const StepperSetup<S>& setup, const BasicSignal<S>& f, int last,
         const StepObserver<S>& observe);

WaveField solve_linear(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f,
                       const SourceRows<cplx>& source = {}, int stride = 1);
RealField solve_semilinear(const Grid& grid, const std::vector<double>* q, const CubicRows& a,
                           const Signal& f, int stride = 1,
                           double blowup_bound = std::numeric_limits<double>::infinity());
/// Zero final data at T: forward solve of the time-reversed data, reversed.
WaveField solve_backward(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f0,
                         int stride = 1);

/// Collects the boundary derivative at every controlled leaf during a run.
/// The derivative is taken along the edge pointing away from the leaf.
template <class S>
class DtnCollector {
public:
    explicit DtnCollector(const Grid& grid);
    void operator()(int n, std::span<const S> u);
    const BasicSignal<S>& signal() const { return out_; }
    BasicSignal<S> take() { return std::move(out_); }

private:
    struct Tap {
        int leaf;
        int n0, n1, n2;
        double inv_dx;
        bool second_order;
    };
    std::vector<Tap> taps_;
    BasicSignal<S> out_;
};

ComplexSignal dtn_linear(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f);
Signal dtn_linear(const Grid& grid, const std::vector<double>* q, const Signal& f);
/// Nonlinear DtN map; cubic == nullptr reduces to the linear map.
Signal dtn_semilinear(const Grid& grid, const std::vector<double>* q, const CubicRows& a,
                      const Signal& f, double blowup_bound = 50.0, int last_step = -1);

/// Time-centred discrete energy between levels u^n (prev) and u^{n+1} (cur).
/// Exactly conserved by the scheme for homogeneous closed systems.
template <class S>
double energy(const Grid& grid, const std::vector<double>* q, std::span<const S> prev,
              std::span<const S> cur);

double energy(const WaveField& field, const std::vector<double>* q, int n);

void write_field_csv(std::ostream& os, const WaveField& field);
void write_signal_csv(std::ostream& os, const MetricGraph& g, const ComplexSignal& s);
void write_signal_csv(std::ostream& os, const MetricGraph& g, const Signal& s);

} // namespace mgwave
