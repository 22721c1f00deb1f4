#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <vector>

#include "mgwave/wave_solver.hpp"

namespace mgwave {

/// Black-box nonlinear DtN map on the controlled leaves.
class DtnOracle {
public:
    virtual ~DtnOracle() = default;
    virtual Signal apply(const Signal& f) const = 0;
    /// Same map, but only samples up to `last_step` are needed; later ones
    /// may be left at zero. Negative means the full horizon.
    virtual Signal apply(const Signal& f, int last_step) const {
        (void)last_step;
        return apply(f);
    }
    virtual const Grid& grid() const = 0;
    virtual bool simulated() const = 0;
    long calls() const { return calls_.load(); }

protected:
    mutable std::atomic<long> calls_{0};
};

/// DtN map synthesized by the semilinear FD solver.
class FdDtnOracle : public DtnOracle {
public:
    FdDtnOracle(const Grid& grid, const std::vector<double>* q, CubicRows a, double blowup_bound = 50.0);
    Signal apply(const Signal& f) const override;
    Signal apply(const Signal& f, int last_step) const override;
    const Grid& grid() const override { return *grid_; }
    bool simulated() const override { return true; }

private:
    const Grid* grid_;
    const std::vector<double>* q_;
    CubicRows a_;
    double blowup_;
};

struct LinearExtraction {
    Signal value;       // Lambda(eps f) / eps
    Signal half;        // Lambda(eps/2 f) / (eps/2)
    double residual;    // max |value - half| / max |half|
};

LinearExtraction extract_linear_dtn(const DtnOracle& dtn, const Signal& f, double eps);

/// Third mixed difference over sigma in {0,1}^3 with real inputs.
Signal trilinear_trace(const DtnOracle& dtn, const Signal& f1, const Signal& f2, const Signal& f3, double eps1,
                       double eps2, double eps3, int workers = 1, int last_step = -1);

/// Complex slots by multilinearity over real and imaginary parts.
ComplexSignal trilinear_trace(const DtnOracle& dtn, const ComplexSignal& f1, const ComplexSignal& f2,
                              const ComplexSignal& f3, double eps, int workers = 1, int last_step = -1);

/// D^3(f1, f2, conj f2) with equal steps, using symmetry of the difference.
ComplexSignal trilinear_trace_conjugate(const DtnOracle& dtn, const ComplexSignal& f1, const ComplexSignal& f2,
                                        double eps, int workers = 1, int last_step = -1);

/// -sum_leaves int h * d dt with trapezoid weights.
cplx boundary_pairing(const ComplexSignal& h, const ComplexSignal& d);

struct EpsPolicy {
    double eps = 1e-3;
    bool auto_ladder = true;  // halve until the (eps, eps/2) pair agrees
    double agreement = 0.01;
    int max_halvings = 6;
    bool richardson = true;   // evaluate eps/2 even without the ladder
};

struct InteractionResult {
    cplx value = 0.0;         // at eps
    cplx value_half = 0.0;    // at eps/2 (when evaluated)
    cplx extrapolated = 0.0;  // (4 I(eps/2) - I(eps)) / 3
    double eps = 0.0;
    double residual = 0.0;    // |I(eps) - I(eps/2)| / |I(eps/2)|
    long oracle_calls = 0;
    std::vector<std::pair<double, cplx>> ladder;
};

/// Estimate of 6 int int a v0 v1 v2 v3 from the DtN map alone.
InteractionResult interaction_integral(const DtnOracle& dtn, const ComplexSignal& h_src, const ComplexSignal& f1,
                                       const ComplexSignal& f2, const ComplexSignal& f3, const EpsPolicy& policy,
                                       int workers = 1);

// ---------------------------------------------------------------- volumetric side

struct DensityEntry {
    int node;
    int step;
    cplx value;  // 6 M dt v0 v1 v2 v3 without the factor a
};

struct InteractionDensity {
    std::vector<DensityEntry> entries;
    double dropped = 0.0;      // sum of |value| below the storage threshold
    cplx weighted = 0.0;       // sum a * value over all nodes, when a was supplied
    bool has_weighted = false;
};

/// Streams v1, v2, v3 forward and v0 backward together and keeps the
/// space-time density of the four-wave product. When f3 equals conj(f2) the
/// third wave is taken as conj(v2).
InteractionDensity interaction_density(const Grid& grid, const std::vector<double>* q, const ComplexSignal& f0,
                                       const ComplexSignal& f1, const ComplexSignal& f2, const ComplexSignal& f3,
                                       const CubicRows& a = {}, double threshold = 1e-9);

/// sum a(node, t_step) * value over the stored entries.
cplx weighted_sum(const Grid& grid, const InteractionDensity& density, const CubicRows& a);

/// Value of already recovered a at a point, or nullopt when not covered.
using KnownCoefficient = std::function<std::optional<double>(const GraphPoint& p, double t)>;
/// Selects density entries that belong to the known region.
using RegionMask = std::function<bool(int node, int step)>;

struct Correction {
    cplx value = 0.0;
    double missing_weight = 0.0;               // sum |density| at uncovered points
    std::vector<std::pair<GraphPoint, double>> missing;  // up to a few uncovered points
};

/// Volumetric sum of a_known * density over the masked region. Throws when
/// the uncovered weight exceeds `missing_tol`.
Correction known_region_correction(const Grid& grid, const InteractionDensity& density, const RegionMask& mask,
                                   const KnownCoefficient& a_known, double missing_tol);

} // namespace mgwave
