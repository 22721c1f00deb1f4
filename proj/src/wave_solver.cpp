#include "mgwave/wave_solver.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mgwave/error.hpp"
#include "mgwave/log.hpp"

namespace mgwave {

namespace {

double real_of(double v) { return v; }
double real_of(const cplx& v) { return v.real(); }
double imag_of(double) { return 0.0; }
double imag_of(const cplx& v) { return v.imag(); }
double re_product(double a, double b) { return a * b; }
double re_product(const cplx& a, const cplx& b) { return a.real() * b.real() + a.imag() * b.imag(); }
double norm2(double a) { return a * a; }
double norm2(const cplx& a) { return std::norm(a); }

} // namespace

Grid::Grid(const MetricGraph& g, double target_dx, double cfl, double horizon) : graph_(&g) {
    if (!(target_dx > 0.0)) throw ConfigError("grid: target dx must be > 0");
    if (!(cfl > 0.0 && cfl <= 1.0)) {
        throw ConfigError("grid: cfl must lie in (0, 1], got " + std::to_string(cfl));
    }
    if (!(horizon > 0.0)) throw ConfigError("grid: horizon T must be > 0");
    horizon_ = horizon;
    const int ne = g.edge_count();
    const int nv = g.vertex_count();
    cells_.resize(ne);
    dx_.resize(ne);
    interior_begin_.resize(ne);
    min_dx_ = std::numeric_limits<double>::infinity();
    int next = nv;
    for (int e = 0; e < ne; ++e) {
        const double l = g.edge(e).length;
        cells_[e] = static_cast<int>(std::ceil(l / target_dx - 1e-9));
        if (cells_[e] < 4) {
            throw ConfigError("degenerate discretization: edge '" + g.edge(e).id + "' gets " +
                              std::to_string(cells_[e]) + " cells (< 4)");
        }
        dx_[e] = l / cells_[e];
        min_dx_ = std::min(min_dx_, dx_[e]);
        interior_begin_[e] = next;
        next += cells_[e] - 1;
    }
    node_count_ = next;
    mass_.assign(node_count_, 0.0);
    for (int e = 0; e < ne; ++e) {
        mass_[g.edge(e).first] += 0.5 * dx_[e];
        mass_[g.edge(e).second] += 0.5 * dx_[e];
        for (int i = 1; i < cells_[e]; ++i) mass_[node(e, i)] = dx_[e];
    }
    const double dt0 = cfl * min_dx_;
    steps_ = static_cast<int>(std::ceil(horizon / dt0 - 1e-9));
    dt_ = horizon / steps_;
}

GraphPoint Grid::position(int k) const {
    if (k < graph_->vertex_count()) return graph_->vertex_point(k);
    auto it = std::upper_bound(interior_begin_.begin(), interior_begin_.end(), k);
    int e = static_cast<int>(it - interior_begin_.begin()) - 1;
    return {e, (k - interior_begin_[e] + 1) * dx_[e]};
}

int Grid::step_of(double t) const {
    long n = std::lround(t / dt_);
    return static_cast<int>(std::clamp<long>(n, 0, steps_));
}

namespace {

template <class F>
double sample_node(const Grid& grid, int k, const F& eval, double tol, const char* name) {
    const MetricGraph& g = grid.graph();
    if (k >= g.vertex_count()) {
        GraphPoint p = grid.position(k);
        return eval(p.edge, p.offset);
    }
    double first = 0.0;
    bool have = false;
    for (int e : g.incident(k)) {
        double v = eval(e, g.offset_of(e, k));
        if (!have) {
            first = v;
            have = true;
        } else if (std::abs(v - first) > tol * (1.0 + std::abs(first))) {
            throw ConfigError(std::string(name) + " is discontinuous at vertex '" + g.vertex_id(k) + "'");
        }
    }
    return first;
}

} // namespace

std::vector<double> sample_potential(const Grid& grid, const SpaceFunction& q, double tol) {
    std::vector<double> out(grid.node_count());
    for (int k = 0; k < grid.node_count(); ++k) {
        out[k] = sample_node(grid, k, q, tol, "q");
        if (!std::isfinite(out[k])) throw ConfigError("q is not finite");
    }
    return out;
}

CubicTable::CubicTable(const Grid& grid, const SpaceTimeFunction& a, double tol) {
    nodes_ = grid.node_count();
    data_.resize(static_cast<size_t>(grid.steps() + 1) * nodes_);
    for (int n = 0; n <= grid.steps(); ++n) {
        const double t = grid.time(n);
        double* row = data_.data() + static_cast<size_t>(n) * nodes_;
        for (int k = 0; k < nodes_; ++k) {
            row[k] = sample_node(grid, k, [&](int e, double x) { return a(e, x, t); }, tol, "a");
            if (!std::isfinite(row[k])) throw ConfigError("a is not finite");
        }
    }
}

CubicTable CubicTable::from_rows(int nodes, std::vector<double> data) {
    CubicTable t;
    t.nodes_ = nodes;
    t.data_ = std::move(data);
    return t;
}

double CubicTable::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

Signal real_part(const ComplexSignal& s) {
    Signal out(s.dt, s.steps);
    for (size_t i = 0; i < s.leaves.size(); ++i) {
        auto& v = out.add(s.leaves[i]);
        for (int n = 0; n <= s.steps; ++n) v[n] = s.values[i][n].real();
    }
    return out;
}

Signal imag_part(const ComplexSignal& s) {
    Signal out(s.dt, s.steps);
    for (size_t i = 0; i < s.leaves.size(); ++i) {
        auto& v = out.add(s.leaves[i]);
        for (int n = 0; n <= s.steps; ++n) v[n] = s.values[i][n].imag();
    }
    return out;
}

ComplexSignal to_complex(const Signal& s) {
    ComplexSignal out(s.dt, s.steps);
    for (size_t i = 0; i < s.leaves.size(); ++i) {
        auto& v = out.add(s.leaves[i]);
        for (int n = 0; n <= s.steps; ++n) v[n] = s.values[i][n];
    }
    return out;
}

ComplexSignal conj(const ComplexSignal& s) {
    ComplexSignal out = s;
    for (auto& v : out.values) {
        for (auto& x : v) x = std::conj(x);
    }
    return out;
}

// ---------------------------------------------------------------- stepper

template <class S>
LeapfrogStepper<S>::LeapfrogStepper(const Grid& grid, const StepperSetup<S>& setup,
                                    const BasicSignal<S>* f)
    : grid_(&grid), setup_(setup), f_(f) {
    if constexpr (!std::is_same_v<S, double>) {
        if (setup.cubic) throw ConfigError("the cubic term is only available for real fields");
    }
    const MetricGraph& g = grid.graph();
    const int nodes = grid.node_count();
    const double dt2 = grid.dt() * grid.dt();
    if (f_) {
        if (f_->steps != grid.steps() || std::abs(f_->dt - grid.dt()) > 1e-12 * grid.dt()) {
            throw ConfigError("boundary signal is not sampled on the solver time grid");
        }
        for (int leaf : f_->leaves) {
            if (!g.is_controlled(leaf)) {
                throw ConfigError("boundary data given on '" + g.vertex_id(leaf) +
                                  "', which is not a controlled leaf");
            }
        }
    }
    prev_.assign(nodes, S{});
    cur_.assign(nodes, S{});
    if (!setup_.initial_current.empty()) {
        if (static_cast<int>(setup_.initial_current.size()) != nodes ||
            static_cast<int>(setup_.initial_previous.size()) != nodes) {
            throw ConfigError("initial levels have the wrong size");
        }
        prev_ = setup_.initial_previous;
        cur_ = setup_.initial_current;
    }
    qdt2_.assign(nodes, 0.0);
    if (setup_.q) {
        if (static_cast<int>(setup_.q->size()) != nodes) throw ConfigError("potential has the wrong size");
        for (int k = 0; k < nodes; ++k) qdt2_[k] = dt2 * (*setup_.q)[k];
    }
    free_leaf_.assign(g.vertex_count(), 0);
    for (int v : setup_.neumann_leaves) {
        if (!g.is_leaf(v)) throw ConfigError("Neumann end requested at a non-leaf vertex");
        free_leaf_[v] = 1;
    }
    vertex_offsets_.push_back(0);
    for (int v = 0; v < g.vertex_count(); ++v) {
        if (g.is_leaf(v) && !free_leaf_[v]) {
            int idx = -1;
            if (f_) {
                for (size_t i = 0; i < f_->leaves.size(); ++i) {
                    if (f_->leaves[i] == v) idx = static_cast<int>(i);
                }
            }
            clamps_.push_back({v, idx});
            continue;
        }
        vertex_nodes_.push_back(v);
        const double m = grid.mass(v);
        for (int e : g.incident(v)) {
            const bool at_first = g.edge(e).first == v;
            vertex_neighbor_.push_back(grid.node(e, at_first ? 1 : grid.cells(e) - 1));
            vertex_weight_.push_back(dt2 / (m * grid.dx(e)));
        }
        vertex_offsets_.push_back(static_cast<int>(vertex_neighbor_.size()));
    }
    clamp_leaves(cur_, 0);
}

template <class S>
void LeapfrogStepper<S>::clamp_leaves(std::vector<S>& level, int n) const {
    for (const auto& [node, idx] : clamps_) {
        level[node] = (idx >= 0 && n >= 0 && n <= f_->steps) ? f_->values[idx][n] : S{};
    }
}

template <class S>
void LeapfrogStepper<S>::start_at(int n) {
    std::fill(prev_.begin(), prev_.end(), S{});
    std::fill(cur_.begin(), cur_.end(), S{});
    n_ = n;
    dir_ = 1;
    clamp_leaves(cur_, n_);
}

template <class S>
void LeapfrogStepper<S>::reverse() {
    std::swap(prev_, cur_);
    n_ -= dir_;
    dir_ = -dir_;
}

template <class S>
void LeapfrogStepper<S>::step() {
    const Grid& grid = *grid_;
    const MetricGraph& g = grid.graph();
    const double dt2 = grid.dt() * grid.dt();
    const double* a = setup_.cubic ? setup_.cubic(n_) : nullptr;
    const S* src = setup_.source ? setup_.source(n_) : nullptr;
    S* next = prev_.data();  // overwritten in place: prev_[k] is read only at k
    const S* u = cur_.data();

    auto extra = [&](int k) -> S {
        S r{};
        if (src) r += dt2 * src[k];
        if constexpr (std::is_same_v<S, double>) {
            if (a) r -= dt2 * a[k] * u[k] * u[k] * u[k];
        }
        return r;
    };

    for (int e = 0; e < g.edge_count(); ++e) {
        const double c = dt2 / (grid.dx(e) * grid.dx(e));
        const int k0 = grid.interior_begin(e);
        const int k1 = k0 + grid.cells(e) - 2;  // last interior node
        const int left = g.edge(e).first;
        const int right = g.edge(e).second;
        auto update = [&](int k, int l, int r) {
            next[k] = 2.0 * u[k] - next[k] + c * (u[l] - 2.0 * u[k] + u[r]) - qdt2_[k] * u[k];
        };
        update(k0, left, k0 + 1);
        for (int k = k0 + 1; k < k1; ++k) {
            next[k] = 2.0 * u[k] - next[k] + c * (u[k - 1] - 2.0 * u[k] + u[k + 1]) - qdt2_[k] * u[k];
        }
        update(k1, k1 - 1, right);
        if (a || src) {
            for (int k = k0; k <= k1; ++k) next[k] += extra(k);
        }
    }
    for (size_t j = 0; j < vertex_nodes_.size(); ++j) {
        const int v = vertex_nodes_[j];
        S flux{};
        for (int p = vertex_offsets_[j]; p < vertex_offsets_[j + 1]; ++p) {
            flux += vertex_weight_[p] * (u[vertex_neighbor_[p]] - u[v]);
        }
        next[v] = 2.0 * u[v] - next[v] + flux - qdt2_[v] * u[v] + extra(v);
    }
    n_ += dir_;
    clamp_leaves(prev_, n_);
    std::swap(prev_, cur_);
    if ((n_ & 7) == 0) check(n_);
}

template <class S>
double LeapfrogStepper<S>::sup_norm() const {
    double m = 0.0;
    for (const S& v : cur_) m = std::max(m, std::abs(v));
    return m;
}

template <class S>
void LeapfrogStepper<S>::check(int n) const {
    const double m = sup_norm();
    if (!std::isfinite(m) || m > 1e150) {
        std::ostringstream msg;
        msg << "instability detected at t = " << grid_->time(n) << ": field norm overflow; CFL ratio dt/dx = "
            << grid_->cfl_ratio() << " (must be <= 1)";
        throw NumericalError(msg.str());
    }
    if (m > setup_.blowup_bound) {
        std::ostringstream msg;
        msg << "nonlinear solution left the small-data regime: sup|u| = " << m << " exceeds bound "
            << setup_.blowup_bound << " at t = " << grid_->time(n);
        throw NumericalError(msg.str());
    }
}

template class LeapfrogStepper<double>;
template class LeapfrogStepper<cplx>;

template <class S>
void run(const Grid& grid, const StepperSetup<S>& setup, const BasicSignal<S>& f, int last,
         const StepObserver<S>& observe) {
    LeapfrogStepper<S> stepper(grid, setup, &f);
    last = std::min(last, grid.steps());
    int start = 0;
    if (!setup.source && setup.initial_current.empty()) {
        // zero data up to first_nonzero - 1 keeps the field identically zero
        start = std::max(0, f.first_nonzero() - 1);
        if (start > last) return;
        stepper.start_at(start);
    }
    observe(stepper.n(), stepper.current());
    while (stepper.n() < last) {
        stepper.step();
        observe(stepper.n(), stepper.current());
    }
}

template void run<double>(const Grid&, const StepperSetup<double>&, const Signal&, int,
                          const StepObserver<double>&);
template void run<cplx>(const Grid&, const StepperSetup<cplx>&, const ComplexSignal&, int,
                        const StepObserver<cplx>&);

namespace {

template <class S>
BasicField<S> make_field(const Grid& grid, int stride) {
    if (stride < 1) throw ConfigError("snapshot stride must be >= 1");
    BasicField<S> field;
    field.grid = &grid;
    field.stride = stride;
    for (int n = 0; n <= grid.steps(); n += stride) {
        field.steps.push_back(n);
        field.u.emplace_back(grid.node_count(), S{});
    }
    return field;
}

} // namespace

WaveField solve_linear(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f,
                       const SourceRows<cplx>& source, int stride) {
    WaveField field = make_field<cplx>(grid, stride);
    StepperSetup<cplx> setup;
    setup.q = q;
    setup.source = source;
    run<cplx>(grid, setup, f, grid.steps(), [&](int n, std::span<const cplx> u) {
        if (n % stride == 0) std::copy(u.begin(), u.end(), field.u[n / stride].begin());
    });
    return field;
}

RealField solve_semilinear(const Grid& grid, const std::vector<double>* q, const CubicRows& a,
                           const Signal& f, int stride, double blowup_bound) {
    RealField field = make_field<double>(grid, stride);
    StepperSetup<double> setup;
    setup.q = q;
    setup.cubic = a;
    setup.blowup_bound = blowup_bound;
    run<double>(grid, setup, f, grid.steps(), [&](int n, std::span<const double> u) {
        if (n % stride == 0) std::copy(u.begin(), u.end(), field.u[n / stride].begin());
    });
    return field;
}

WaveField solve_backward(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f0,
                         int stride) {
    WaveField field = make_field<cplx>(grid, stride);
    StepperSetup<cplx> setup;
    setup.q = q;
    const ComplexSignal rev = f0.reversed();
    const int N = grid.steps();
    run<cplx>(grid, setup, rev, N, [&](int m, std::span<const cplx> u) {
        const int n = N - m;
        if (n % stride == 0) std::copy(u.begin(), u.end(), field.u[n / stride].begin());
    });
    return field;
}

// ---------------------------------------------------------------- DtN

template <class S>
DtnCollector<S>::DtnCollector(const Grid& grid) : out_(grid.dt(), grid.steps()) {
    const MetricGraph& g = grid.graph();
    for (int leaf : g.controlled()) {
        const int e = g.incident(leaf)[0];
        const bool at_first = g.edge(e).first == leaf;
        const int N = grid.cells(e);
        Tap tap;
        tap.leaf = leaf;
        tap.n0 = grid.node(e, at_first ? 0 : N);
        tap.n1 = grid.node(e, at_first ? 1 : N - 1);
        tap.n2 = grid.node(e, at_first ? 2 : N - 2);
        tap.inv_dx = 1.0 / grid.dx(e);
        tap.second_order = N >= 8;
        if (!tap.second_order) {
            log(LogLevel::warn, "edge '" + g.edge(e).id +
                                    "' is too coarse for the 3-point boundary derivative; using first order");
        }
        taps_.push_back(tap);
        out_.add(leaf);
    }
}

template <class S>
void DtnCollector<S>::operator()(int n, std::span<const S> u) {
    for (size_t i = 0; i < taps_.size(); ++i) {
        const Tap& t = taps_[i];
        out_.values[i][n] = t.second_order ? (-3.0 * u[t.n0] + 4.0 * u[t.n1] - u[t.n2]) * (0.5 * t.inv_dx)
                                           : (u[t.n1] - u[t.n0]) * t.inv_dx;
    }
}

template class DtnCollector<double>;
template class DtnCollector<cplx>;

ComplexSignal dtn_linear(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f) {
    DtnCollector<cplx> dtn(grid);
    StepperSetup<cplx> setup;
    setup.q = q;
    run<cplx>(grid, setup, f, grid.steps(), std::ref(dtn));
    return dtn.take();
}

Signal dtn_linear(const Grid& grid, const std::vector<double>* q, const Signal& f) {
    return dtn_semilinear(grid, q, nullptr, f, std::numeric_limits<double>::infinity());
}

Signal dtn_semilinear(const Grid& grid, const std::vector<double>* q, const CubicRows& a,
                      const Signal& f, double blowup_bound, int last_step) {
    DtnCollector<double> dtn(grid);
    StepperSetup<double> setup;
    setup.q = q;
    setup.cubic = a;
    setup.blowup_bound = blowup_bound;
    run<double>(grid, setup, f, last_step < 0 ? grid.steps() : last_step, std::ref(dtn));
    return dtn.take();
}

// ---------------------------------------------------------------- energy

template <class S>
double energy(const Grid& grid, const std::vector<double>* q, std::span<const S> prev,
              std::span<const S> cur) {
    const MetricGraph& g = grid.graph();
    const double inv_dt2 = 1.0 / (grid.dt() * grid.dt());
    double kinetic = 0.0;
    double pot = 0.0;
    for (int k = 0; k < grid.node_count(); ++k) {
        kinetic += grid.mass(k) * norm2(cur[k] - prev[k]);
        if (q) pot += grid.mass(k) * (*q)[k] * re_product(cur[k], prev[k]);
    }
    double strain = 0.0;
    for (int e = 0; e < g.edge_count(); ++e) {
        double s = 0.0;
        for (int i = 0; i < grid.cells(e); ++i) {
            const int a = grid.node(e, i);
            const int b = grid.node(e, i + 1);
            s += re_product(cur[b] - cur[a], prev[b] - prev[a]);
        }
        strain += s / grid.dx(e);
    }
    return 0.5 * (kinetic * inv_dt2 + strain + pot);
}

template double energy<double>(const Grid&, const std::vector<double>*, std::span<const double>,
                               std::span<const double>);
template double energy<cplx>(const Grid&, const std::vector<double>*, std::span<const cplx>,
                             std::span<const cplx>);

double energy(const WaveField& field, const std::vector<double>* q, int n) {
    if (field.stride != 1) throw ConfigError("energy needs consecutive snapshots (stride 1)");
    if (n < 0 || n + 1 >= static_cast<int>(field.u.size())) throw ConfigError("energy: step out of range");
    return energy<cplx>(*field.grid, q, field.u[n], field.u[n + 1]);
}

// ---------------------------------------------------------------- CSV

void write_field_csv(std::ostream& os, const WaveField& field) {
    const Grid& grid = *field.grid;
    const MetricGraph& g = grid.graph();
    os << "edge,node,x,t,re,im\n" << std::setprecision(12);
    for (size_t s = 0; s < field.steps.size(); ++s) {
        const double t = grid.time(field.steps[s]);
        for (int e = 0; e < g.edge_count(); ++e) {
            for (int i = 0; i <= grid.cells(e); ++i) {
                const cplx v = field.u[s][grid.node(e, i)];
                os << g.edge(e).id << ',' << i << ',' << i * grid.dx(e) << ',' << t << ',' << v.real() << ','
                   << v.imag() << '\n';
            }
        }
    }
}

namespace {

template <class S>
void write_signal(std::ostream& os, const MetricGraph& g, const BasicSignal<S>& s, bool complex) {
    os << (complex ? "leaf,t,re,im\n" : "leaf,t,value\n") << std::setprecision(12);
    for (size_t i = 0; i < s.leaves.size(); ++i) {
        for (int n = 0; n <= s.steps; ++n) {
            os << g.vertex_id(s.leaves[i]) << ',' << n * s.dt << ',' << real_of(s.values[i][n]);
            if (complex) os << ',' << imag_of(s.values[i][n]);
            os << '\n';
        }
    }
}

} // namespace

void write_signal_csv(std::ostream& os, const MetricGraph& g, const ComplexSignal& s) {
    write_signal(os, g, s, true);
}

void write_signal_csv(std::ostream& os, const MetricGraph& g, const Signal& s) {
    write_signal(os, g, s, false);
}

} // namespace mgwave
