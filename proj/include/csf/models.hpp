#pragma once

// Ready-made inputs: the unit disk fiber and the mapping torus over S^1.

#include <string>

#include "csf/bundle.hpp"

namespace csf {

/// Unit disk in Cartesian coordinates (x, y) with beta = (x dy - y dx)/2,
/// sampled on the box [-1,1]^2 minus the outside of the disk.
struct DiskFiber {
    Chart chart;
    DifferentialForm beta;
    std::vector<Exclusion> exclusions;
    std::vector<Boundary> boundaries;
};

inline DiskFiber disk_fiber(int boundary_samples = 64) {
    DiskFiber f;
    f.chart = Chart("D2", {"x", "y"}, {{-1.0, 1.0}, {-1.0, 1.0}});
    f.beta = Expr(0.5) * (var("x") * DifferentialForm::differential(f.chart, "y") -
                          var("y") * DifferentialForm::differential(f.chart, "x"));
    f.exclusions.push_back(Exclusion::where_negative(Expr(1.0 + 1e-12) - pow(var("x"), 2) - pow(var("y"), 2)));
    const Chart circle("S1", {"s"}, {{0.0, kTwoPi}}, {true});
    const SmoothMap param(circle, f.chart, {cos(var("s")), sin(var("s"))});
    f.boundaries.push_back(level_boundary("|p|=1", pow(var("x"), 2) + pow(var("y"), 2) - Expr(1.0), param,
                                          SampleGrid(circle, {boundary_samples})));
    return f;
}

/// Smooth function of the fiber point equal to 1 for |p|^2 <= 0.3 and to 0
/// for |p|^2 >= 0.7.
inline Expr disk_core_cutoff() {
    const Expr s = pow(var("x"), 2) + pow(var("y"), 2);
    return smooth_step((Expr(0.7) - s) / Expr(0.4));
}

/// Mapping torus of the disk over S^1 = [0, 2pi] with mu = dtheta, cut into
/// the arcs [0, pi] and [pi, 2pi]. The monodromy potential c*y (or, for the
/// variant trivial near the fiber boundary, c*y times a core cut-off) sits on
/// the collar at theta = pi; the collar at theta = 2pi carries potential 0.
inline FibrationSpec mapping_torus_spec(double c, bool boundary_trivial = false) {
    FibrationSpec s;
    s.name = boundary_trivial ? "mapping_torus_hbt" : "mapping_torus";
    const Chart base("S1", {"theta"}, {{0.0, kTwoPi}}, {true});
    s.base_charts = {base};
    s.mu = {DifferentialForm::differential(base, "theta")};
    const DiskFiber f = disk_fiber();
    s.fiber = f.chart;
    s.beta = f.beta;
    s.fiber_exclusions = f.exclusions;
    s.fiber_boundaries = f.boundaries;
    s.pieces = {{"W1", 0, {{0.0, std::numbers::pi}}, {}}, {"W2", 0, {{std::numbers::pi, kTwoPi}}, {}}};
    Expr psi = Expr(c) * var("y");
    if (boundary_trivial) psi = psi * disk_core_cutoff();
    s.collars = {{"H1a", 1, 0, "theta", std::numbers::pi, -1, psi}, {"H1b", 1, 0, "theta", kTwoPi, 1, Expr()}};
    s.horizontal_boundary_trivial = boundary_trivial;
    if (boundary_trivial) s.boundary_region = pow(var("x"), 2) + pow(var("y"), 2) - Expr(0.85 * 0.85);
    return s;
}

}  // namespace csf
