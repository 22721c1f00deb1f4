#include "mgwave/linearize.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <sstream>

#include "mgwave/error.hpp"
#include "mgwave/log.hpp"
#include "mgwave/parallel.hpp"

namespace mgwave {

FdDtnOracle::FdDtnOracle(const Grid& grid, const std::vector<double>* q, CubicRows a, double blowup_bound)
    : grid_(&grid), q_(q), a_(std::move(a)), blowup_(blowup_bound) {}

Signal FdDtnOracle::apply(const Signal& f) const { return apply(f, -1); }

Signal FdDtnOracle::apply(const Signal& f, int last_step) const {
    if (f.max_abs() == 0.0) {
        Signal zero(grid_->dt(), grid_->steps());
        for (int leaf : grid_->graph().controlled()) zero.add(leaf);
        return zero;
    }
    calls_.fetch_add(1);
    return dtn_semilinear(*grid_, q_, a_, f, blowup_, last_step < 0 ? grid_->steps() : last_step);
}

namespace {

// sum_j w_j s_j over signals sharing one time grid
Signal combine(const std::vector<std::pair<const Signal*, double>>& terms, const Grid& grid) {
    Signal out(grid.dt(), grid.steps());
    for (const auto& [s, w] : terms) {
        if (w == 0.0 || !s) continue;
        for (size_t i = 0; i < s->leaves.size(); ++i) {
            auto& dst = out.add(s->leaves[i]);
            const auto& src = s->values[i];
            for (int n = 0; n <= out.steps; ++n) dst[n] += w * src[n];
        }
    }
    return out;
}

void axpy(Signal& y, double a, const Signal& x) {
    for (size_t i = 0; i < x.leaves.size(); ++i) {
        auto& dst = y.add(x.leaves[i]);
        for (int n = 0; n <= y.steps; ++n) dst[n] += a * x.values[i][n];
    }
}

// Evaluates Lambda on every combination in parallel; zero inputs are skipped.
std::vector<Signal> evaluate_all(const DtnOracle& dtn,
                                 const std::vector<std::vector<std::pair<const Signal*, double>>>& combos,
                                 int workers, int last_step) {
    const Grid& grid = dtn.grid();
    std::vector<Signal> out(combos.size());
    parallel_for(static_cast<int>(combos.size()), workers,
                 [&](int i) { out[i] = dtn.apply(combine(combos[i], grid), last_step); });
    return out;
}

double max_abs_diff(const Signal& a, const Signal& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.leaves.size(); ++i) {
        const auto* other = b.find(a.leaves[i]);
        for (int n = 0; n <= a.steps; ++n) m = std::max(m, std::abs(a.values[i][n] - (other ? (*other)[n] : 0.0)));
    }
    return m;
}

} // namespace

LinearExtraction extract_linear_dtn(const DtnOracle& dtn, const Signal& f, double eps) {
    if (!(eps > 0.0)) throw ConfigError("linearization step eps must be > 0");
    const Grid& grid = dtn.grid();
    LinearExtraction r;
    r.value = dtn.apply(combine({{&f, eps}}, grid));
    r.value *= 1.0 / eps;
    r.half = dtn.apply(combine({{&f, 0.5 * eps}}, grid));
    r.half *= 2.0 / eps;
    const double scale = r.half.max_abs();
    r.residual = scale > 0.0 ? max_abs_diff(r.value, r.half) / scale : 0.0;
    return r;
}

Signal trilinear_trace(const DtnOracle& dtn, const Signal& f1, const Signal& f2, const Signal& f3, double eps1,
                       double eps2, double eps3, int workers, int last_step) {
    if (!(eps1 > 0 && eps2 > 0 && eps3 > 0)) throw ConfigError("trilinear steps must be > 0");
    std::vector<std::vector<std::pair<const Signal*, double>>> combos;
    std::vector<double> sign;
    for (int mask = 1; mask < 8; ++mask) {
        std::vector<std::pair<const Signal*, double>> c;
        if (mask & 1) c.push_back({&f1, eps1});
        if (mask & 2) c.push_back({&f2, eps2});
        if (mask & 4) c.push_back({&f3, eps3});
        combos.push_back(c);
        sign.push_back(((3 + std::popcount(static_cast<unsigned>(mask))) % 2 == 0) ? 1.0 : -1.0);
    }
    auto values = evaluate_all(dtn, combos, workers, last_step);
    Signal out(dtn.grid().dt(), dtn.grid().steps());
    for (int leaf : dtn.grid().graph().controlled()) out.add(leaf);
    const double inv = 1.0 / (eps1 * eps2 * eps3);
    for (size_t k = 0; k < values.size(); ++k) axpy(out, sign[k] * inv, values[k]);
    return out;
}

ComplexSignal trilinear_trace(const DtnOracle& dtn, const ComplexSignal& f1, const ComplexSignal& f2,
                              const ComplexSignal& f3, double eps, int workers, int last_step) {
    if (!(eps > 0)) throw ConfigError("trilinear step must be > 0");
    // parts[j][0] = Re f_j, parts[j][1] = Im f_j
    std::array<std::array<Signal, 2>, 3> parts{{{real_part(f1), imag_part(f1)},
                                                {real_part(f2), imag_part(f2)},
                                                {real_part(f3), imag_part(f3)}}};
    std::array<std::array<bool, 2>, 3> nonzero;
    for (int j = 0; j < 3; ++j) {
        for (int c = 0; c < 2; ++c) nonzero[j][c] = parts[j][c].max_abs() > 0.0;
    }
    // Lambda arguments: slot j contributes nothing (0), Re (1) or Im (2)
    std::map<std::array<int, 3>, int> index;
    std::vector<std::vector<std::pair<const Signal*, double>>> combos;
    for (int k1 = 0; k1 < 3; ++k1) {
        for (int k2 = 0; k2 < 3; ++k2) {
            for (int k3 = 0; k3 < 3; ++k3) {
                std::array<int, 3> key{k1, k2, k3};
                if (key == std::array<int, 3>{0, 0, 0}) continue;
                bool skip = false;
                std::vector<std::pair<const Signal*, double>> c;
                for (int j = 0; j < 3; ++j) {
                    if (key[j] == 0) continue;
                    if (!nonzero[j][key[j] - 1]) skip = true;
                    c.push_back({&parts[j][key[j] - 1], eps});
                }
                if (skip) continue;
                index[key] = static_cast<int>(combos.size());
                combos.push_back(c);
            }
        }
    }
    auto values = evaluate_all(dtn, combos, workers, last_step);
    const Grid& grid = dtn.grid();
    ComplexSignal out(grid.dt(), grid.steps());
    for (int leaf : grid.graph().controlled()) out.add(leaf);
    const double inv = 1.0 / (eps * eps * eps);
    for (int c1 = 1; c1 <= 2; ++c1) {
        for (int c2 = 1; c2 <= 2; ++c2) {
            for (int c3 = 1; c3 <= 2; ++c3) {
                if (!nonzero[0][c1 - 1] || !nonzero[1][c2 - 1] || !nonzero[2][c3 - 1]) continue;
                const int nim = (c1 == 2) + (c2 == 2) + (c3 == 2);
                const cplx unit = std::pow(cplx(0, 1), nim);
                for (int mask = 1; mask < 8; ++mask) {
                    std::array<int, 3> key{(mask & 1) ? c1 : 0, (mask & 2) ? c2 : 0, (mask & 4) ? c3 : 0};
                    const double sgn = ((3 + std::popcount(static_cast<unsigned>(mask))) % 2 == 0) ? 1.0 : -1.0;
                    const Signal& v = values[index.at(key)];
                    const cplx w = unit * sgn * inv;
                    for (size_t i = 0; i < v.leaves.size(); ++i) {
                        auto& dst = out.add(v.leaves[i]);
                        for (int n = 0; n <= out.steps; ++n) dst[n] += w * v.values[i][n];
                    }
                }
            }
        }
    }
    return out;
}

ComplexSignal trilinear_trace_conjugate(const DtnOracle& dtn, const ComplexSignal& f1, const ComplexSignal& f2,
                                        double eps, int workers, int last_step) {
    if (!(eps > 0)) throw ConfigError("trilinear step must be > 0");
    std::array<Signal, 2> c1{real_part(f1), imag_part(f1)};
    std::array<Signal, 2> r{real_part(f2), imag_part(f2)};
    std::array<bool, 2> c1_nz{c1[0].max_abs() > 0, c1[1].max_abs() > 0};
    std::array<bool, 2> r_nz{r[0].max_abs() > 0, r[1].max_abs() > 0};

    // B(c, r, r) = eps^-3 [L(c+2r) - 2L(c+r) - L(2r) + L(c) + 2L(r)], L(x) = Lambda(eps x)
    std::vector<std::vector<std::pair<const Signal*, double>>> combos;
    std::map<std::array<int, 2>, int> idx;  // (c index or -1, r index * 3 + multiplicity)
    auto want = [&](int ci, int ri, int m) {
        std::array<int, 2> key{ci, ri * 3 + m};
        if (idx.count(key)) return;
        std::vector<std::pair<const Signal*, double>> c;
        if (ci >= 0) c.push_back({&c1[ci], eps});
        if (m > 0) c.push_back({&r[ri], m * eps});
        idx[key] = static_cast<int>(combos.size());
        combos.push_back(c);
    };
    for (int ci = 0; ci < 2; ++ci) {
        for (int ri = 0; ri < 2; ++ri) {
            if (!c1_nz[ci] || !r_nz[ri]) continue;
            want(ci, ri, 2);
            want(ci, ri, 1);
            want(-1, ri, 2);
            want(-1, ri, 1);
            want(ci, 0, 0);
        }
    }
    auto values = evaluate_all(dtn, combos, workers, last_step);
    const Grid& grid = dtn.grid();
    ComplexSignal out(grid.dt(), grid.steps());
    for (int leaf : grid.graph().controlled()) out.add(leaf);
    const double inv = 1.0 / (eps * eps * eps);
    auto add = [&](int ci, int ri, int m, cplx w) {
        const Signal& v = values[idx.at({ci, ri * 3 + m})];
        for (size_t i = 0; i < v.leaves.size(); ++i) {
            auto& dst = out.add(v.leaves[i]);
            for (int n = 0; n <= out.steps; ++n) dst[n] += w * v.values[i][n];
        }
    };
    for (int ci = 0; ci < 2; ++ci) {
        const cplx unit = ci == 0 ? cplx(1, 0) : cplx(0, 1);
        for (int ri = 0; ri < 2; ++ri) {
            if (!c1_nz[ci] || !r_nz[ri]) continue;
            add(ci, ri, 2, unit * inv);
            add(ci, ri, 1, -2.0 * unit * inv);
            add(-1, ri, 2, -unit * inv);
            add(ci, 0, 0, unit * inv);
            add(-1, ri, 1, 2.0 * unit * inv);
        }
    }
    return out;
}

cplx boundary_pairing(const ComplexSignal& h, const ComplexSignal& d) {
    cplx sum = 0.0;
    for (size_t i = 0; i < h.leaves.size(); ++i) {
        const auto* dv = d.find(h.leaves[i]);
        if (!dv) continue;
        const auto& hv = h.values[i];
        for (int n = 0; n <= h.steps; ++n) {
            const double w = (n == 0 || n == h.steps) ? 0.5 : 1.0;
            sum += w * hv[n] * (*dv)[n];
        }
    }
    return -h.dt * sum;
}

namespace {

int last_nonzero(const ComplexSignal& s) {
    int last = -1;
    for (const auto& v : s.values) {
        for (int n = s.steps; n > last; --n) {
            if (v[n] != cplx{}) {
                last = n;
                break;
            }
        }
    }
    return last;
}

bool is_conjugate(const ComplexSignal& a, const ComplexSignal& b) {
    if (a.leaves.size() != b.leaves.size()) return false;
    for (size_t i = 0; i < a.leaves.size(); ++i) {
        const auto* bv = b.find(a.leaves[i]);
        if (!bv) return false;
        for (int n = 0; n <= a.steps; ++n) {
            if (a.values[i][n] != std::conj((*bv)[n])) return false;
        }
    }
    return true;
}

} // namespace

InteractionResult interaction_integral(const DtnOracle& dtn, const ComplexSignal& h_src, const ComplexSignal& f1,
                                       const ComplexSignal& f2, const ComplexSignal& f3, const EpsPolicy& policy,
                                       int workers) {
    if (!(policy.eps > 0.0)) throw ConfigError("eps must be > 0");
    const long calls0 = dtn.calls();
    const bool pair = is_conjugate(f2, f3);
    // the pairing only reads d where h_src is nonzero
    const int last = last_nonzero(h_src);
    if (last < 0) return {};
    auto at = [&](double eps) {
        ComplexSignal d = pair ? trilinear_trace_conjugate(dtn, f1, f2, eps, workers, last)
                               : trilinear_trace(dtn, f1, f2, f3, eps, workers, last);
        return boundary_pairing(h_src, d);
    };
    InteractionResult r;
    double eps = policy.eps;
    cplx big = at(eps);
    r.ladder.push_back({eps, big});
    if (policy.richardson || policy.auto_ladder) {
        for (int k = 0;; ++k) {
            cplx small = at(0.5 * eps);
            r.ladder.push_back({0.5 * eps, small});
            const double res = std::abs(big - small) / std::max(std::abs(small), 1e-300);
            // a residual that grows under halving means round-off dominates:
            // keep the previous pair
            if (k > 0 && res > 0.5 * r.residual) {
                log(LogLevel::info, "eps ladder stopped at round-off level (residual " + std::to_string(r.residual) +
                                        ")");
                break;
            }
            r.eps = eps;
            r.value = big;
            r.value_half = small;
            r.residual = res;
            if (!policy.auto_ladder || res <= policy.agreement || k >= policy.max_halvings) {
                if (policy.auto_ladder && res > policy.agreement) {
                    log(LogLevel::warn, "eps ladder did not reach the requested agreement (residual " +
                                            std::to_string(res) + ")");
                }
                break;
            }
            eps *= 0.5;
            big = small;
        }
        r.extrapolated = (4.0 * r.value_half - r.value) / 3.0;
    } else {
        r.eps = eps;
        r.value = big;
        r.value_half = big;
        r.extrapolated = big;
    }
    r.oracle_calls = dtn.calls() - calls0;
    return r;
}

// ---------------------------------------------------------------- volumetric side

InteractionDensity interaction_density(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f0,
                                       const ComplexSignal& f1, const ComplexSignal& f2, const ComplexSignal& f3,
                                       const CubicRows& a, double threshold) {
    InteractionDensity out;
    out.has_weighted = static_cast<bool>(a);
    const int N = grid.steps();
    const int n_last = last_nonzero(f0);
    if (n_last < 0) return out;
    const int n_end = std::min(N, n_last + 1);  // v0 vanishes for n > n_last

    const bool pair = is_conjugate(f2, f3);
    StepperSetup<cplx> setup;
    setup.q = q;
    std::vector<const ComplexSignal*> inputs{&f1, &f2};
    if (!pair) inputs.push_back(&f3);
    std::vector<LeapfrogStepper<cplx>> waves;
    int n_min = 0;
    for (const auto* f : inputs) {
        const int start = std::max(0, f->first_nonzero() - 1);
        if (start > n_end) return out;
        n_min = std::max(n_min, start);
        waves.emplace_back(grid, setup, f);
        waves.back().start_at(start);
        while (waves.back().n() < n_end) waves.back().step();
    }
    const ComplexSignal rev = f0.reversed();
    LeapfrogStepper<cplx> back(grid, setup, &rev);
    back.start_at(N - n_end);

    const int nodes = grid.node_count();
    for (int n = n_end;; --n) {
        const double wt = 6.0 * grid.dt() * ((n == 0 || n == N) ? 0.5 : 1.0);
        const double* arow = a ? a(n) : nullptr;
        auto v0 = back.current();
        auto v1 = waves[0].current();
        auto v2 = waves[1].current();
        for (int k = 0; k < nodes; ++k) {
            if (v0[k] == cplx{}) continue;
            const cplx v3 = pair ? std::conj(v2[k]) : waves[2].current()[k];
            const cplx prod = v0[k] * v1[k] * v2[k] * v3;
            const cplx val = wt * grid.mass(k) * prod;
            if (arow) out.weighted += arow[k] * val;
            if (std::abs(prod) > threshold) {
                out.entries.push_back({k, n, val});
            } else {
                out.dropped += std::abs(val);
            }
        }
        if (n <= n_min) break;
        for (auto& w : waves) {
            if (n == n_end) w.reverse();
            else w.step();
        }
        back.step();
    }
    return out;
}

cplx weighted_sum(const Grid& grid, const InteractionDensity& density, const CubicRows& a) {
    (void)grid;
    cplx sum = 0.0;
    for (const auto& e : density.entries) {
        const double* row = a(e.step);
        if (row) sum += row[e.node] * e.value;
    }
    return sum;
}

Correction known_region_correction(const Grid& grid, const InteractionDensity& density, const RegionMask& mask,
                                   const KnownCoefficient& a_known, double missing_tol) {
    Correction c;
    if (!mask) return c;
    for (const auto& e : density.entries) {
        if (!mask(e.node, e.step)) continue;
        const GraphPoint p = grid.position(e.node);
        const double t = grid.time(e.step);
        const auto a = a_known(p, t);
        if (a) {
            c.value += *a * e.value;
        } else {
            c.missing_weight += std::abs(e.value);
            if (c.missing.size() < 8) c.missing.push_back({p, t});
        }
    }
    if (c.missing_weight > missing_tol) {
        std::ostringstream msg;
        msg << "known-region correction needs a at points outside the recovered set (weight " << c.missing_weight
            << "):";
        for (const auto& [p, t] : c.missing) {
            msg << " (" << grid.graph().edge(p.edge).id << ", x=" << p.offset << ", t=" << t << ")";
        }
        throw NumericalError(msg.str());
    }
    return c;
}

} // namespace mgwave
