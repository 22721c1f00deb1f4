#include <doctest.h>

#include <cmath>

#include "mgwave/error.hpp"
#include "mgwave/geo_optics.hpp"
#include "mgwave/linearize.hpp"
#include "support.hpp"

using namespace mgwave;

namespace {

struct IntervalSetup {
    MetricGraph g = testsupport::interval(1.0);
    Grid grid{g, 0.01, 0.9, 3.0};
    CubicTable table;
    int leaf = g.controlled()[0];

    explicit IntervalSetup(const SpaceTimeFunction& a) : table(grid, a) {}
    CubicRows rows() const {
        return [this](int n) { return table.row(n); };
    }
    ComplexSignal probe(double center, double h = 1.0, double b = 0.2) const {
        return probe_signal(Probe::centered(leaf, center, h, b), grid);
    }
};

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

} // namespace

TEST_CASE("linear map has vanishing third difference") {
    IntervalSetup s([](int, double, double) { return 0.0; });
    FdDtnOracle dtn(s.grid, nullptr, s.rows());
    auto f = real_part(s.probe(0.5, 0.02));
    const double eps = 1e-3;
    auto lin = extract_linear_dtn(dtn, f, eps);
    CHECK(lin.residual < 1e-9);
    // only round-off survives: about 1e-16 |Lambda(eps f)| / eps^3
    auto d3 = trilinear_trace(dtn, f, f, f, eps, eps, eps);
    CHECK(d3.max_abs() < 1e-12 * lin.value.max_abs() / (eps * eps));
    // zero input skips the solver
    const long before = dtn.calls();
    Signal zero(s.grid.dt(), s.grid.steps());
    zero.add(s.leaf);
    CHECK(dtn.apply(zero).max_abs() == 0.0);
    CHECK(dtn.calls() == before);
}

TEST_CASE("third difference is symmetric and trilinear") {
    IntervalSetup s([](int, double x, double) { return 1.0 + x; });
    FdDtnOracle dtn(s.grid, nullptr, s.rows());
    auto f1 = real_part(s.probe(0.5, 0.02));
    auto f2 = real_part(s.probe(0.8, 0.02, 0.25));
    auto f3 = real_part(s.probe(0.6, 0.04, 0.3));
    const double eps = 1e-3;
    auto a = trilinear_trace(dtn, f1, f2, f3, eps, eps, eps);
    auto b = trilinear_trace(dtn, f3, f1, f2, eps, eps, eps);
    REQUIRE(a.max_abs() > 1e-3);
    Signal diff = a;
    b *= -1.0;
    diff += b;
    CHECK(diff.max_abs() < 1e-6 * a.max_abs());

    Signal f1x2 = f1;
    f1x2 *= 2.0;
    auto c = trilinear_trace(dtn, f1x2, f2, f3, eps, eps, eps);
    c *= 0.5;
    a *= -1.0;
    c += a;
    CHECK(c.max_abs() < 1e-3 * a.max_abs());
}

TEST_CASE("conjugate fast path matches the general complex difference") {
    IntervalSetup s([](int, double x, double) { return 1.0 + x; });
    FdDtnOracle dtn(s.grid, nullptr, s.rows());
    auto f1 = s.probe(0.5, 0.02);
    auto f2 = s.probe(0.6, 0.02, 0.25);
    auto f3 = conj(f2);
    const long c0 = dtn.calls();
    auto fast = trilinear_trace_conjugate(dtn, f1, f2, 1e-3);
    CHECK(dtn.calls() - c0 == 14);
    const long c1 = dtn.calls();
    auto full = trilinear_trace(dtn, f1, f2, f3, 1e-3);
    CHECK(dtn.calls() - c1 <= 26);
    ComplexSignal diff = fast;
    full *= -1.0;
    diff += full;
    CHECK(diff.max_abs() < 1e-4 * fast.max_abs());

    // a real first slot makes the pair real
    auto real1 = to_complex(real_part(f1));
    auto r = trilinear_trace_conjugate(dtn, real1, f2, 1e-3);
    CHECK(imag_part(r).max_abs() < 1e-9 * r.max_abs());
}

TEST_CASE("boundary pairing matches the volumetric four-wave integral") {
    auto a = [](int, double x, double t) { return 1.0 + x + 0.3 * std::sin(t); };
    IntervalSetup s(a);
    FdDtnOracle dtn(s.grid, nullptr, s.rows());
    auto f1 = s.probe(0.5, 0.02);
    auto f2 = s.probe(0.6, 0.02, 0.25);
    auto f3 = conj(f2);
    auto h = s.probe(2.0, 0.02);

    EpsPolicy policy;
    auto res = interaction_integral(dtn, h, f1, f2, f3, policy);
    auto density = interaction_density(s.grid, nullptr, h, f1, f2, f3, s.rows(), 0.0);
    REQUIRE(density.has_weighted);
    REQUIRE(std::abs(density.weighted) > 1e-3);
    CHECK(rel(res.extrapolated, density.weighted) < 1e-2);
    CHECK(res.residual <= policy.agreement);
    CHECK(rel(weighted_sum(s.grid, density, s.rows()), density.weighted) < 1e-12);

    // the streamed density agrees with the full (non-paired) evaluation
    auto f3copy = f3;
    f3copy.values[0][s.grid.step_of(0.5)] += cplx(1e-30, 0);
    auto density_full = interaction_density(s.grid, nullptr, h, f1, f2, f3copy, s.rows(), 0.0);
    CHECK(rel(density_full.weighted, density.weighted) < 1e-9);
}

TEST_CASE("interaction integral is invariant under a common time shift") {
    auto a = [](int, double x, double) { return 1.0 + x; };
    IntervalSetup s(a);
    auto dens = [&](double shift) {
        auto f1 = s.probe(0.5 + shift, 0.02);
        auto f2 = s.probe(0.6 + shift, 0.02, 0.25);
        auto h = s.probe(2.0 + shift, 0.02);
        return interaction_density(s.grid, nullptr, h, f1, f2, conj(f2), s.rows()).weighted;
    };
    const double shift = 30 * s.grid.dt();
    CHECK(rel(dens(shift), dens(0.0)) < 1e-9);
}

TEST_CASE("known-region correction") {
    auto a = [](int, double x, double) { return 1.0 + x; };
    IntervalSetup s(a);
    auto f1 = s.probe(0.5, 0.02);
    auto f2 = s.probe(0.6, 0.02, 0.25);
    auto h = s.probe(2.0, 0.02);
    auto density = interaction_density(s.grid, nullptr, h, f1, f2, conj(f2), s.rows());
    KnownCoefficient known = [](const GraphPoint& p, double) -> std::optional<double> { return 1.0 + p.offset; };
    auto none = known_region_correction(s.grid, density, [](int, int) { return false; }, known, 0.0);
    CHECK(none.value == cplx{});

    auto all = known_region_correction(s.grid, density, [](int, int) { return true; }, known, 0.0);
    CHECK(rel(all.value, density.weighted) < 1e-6);

    KnownCoefficient partial = [](const GraphPoint& p, double) -> std::optional<double> {
        if (p.offset < 0.7) return std::nullopt;
        return 1.0 + p.offset;
    };
    CHECK_THROWS_AS(known_region_correction(s.grid, density, [](int, int) { return true; }, partial, 0.0),
                    NumericalError);
}
