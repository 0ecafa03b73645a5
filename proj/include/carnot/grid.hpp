#pragma once

// Uniform tensor grid over a coordinate box, node classification realizing the
// exterior Dirichlet condition u = 0 outside the domain, and grid calculus
// helpers (centered differences with zero extension, node-sum quadratures).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "carnot/errors.hpp"
#include "carnot/group.hpp"

namespace carnot {

struct Grid {
    GroupSpec spec;
    std::vector<std::pair<double, double>> bounds; // per-axis (lo, hi)
    int n_per_axis = 0;                            // cells per axis; nodes = N+1
    std::vector<double> h;                         // mesh width per axis
    double cell_volume = 0.0;                      // product of h (Haar weight)
    int dim = 0;
    std::int64_t node_count = 0;
    std::vector<std::int64_t> stride;              // last axis contiguous
    std::vector<double> coords;                    // node_count x dim, row-major

    std::span<const double> node(std::int64_t idx) const {
        return {coords.data() + idx * dim, static_cast<std::size_t>(dim)};
    }

    std::int64_t flat_index(std::span<const int> multi) const {
        std::int64_t idx = 0;
        for (int a = 0; a < dim; ++a) idx += multi[a] * stride[a];
        return idx;
    }

    void multi_index(std::int64_t idx, std::span<int> out) const {
        for (int a = 0; a < dim; ++a) {
            out[a] = static_cast<int>(idx / stride[a]);
            idx %= stride[a];
        }
    }

    /// Flat index of the node shifted by `steps` cells along `axis`, or -1 if
    /// the shift leaves the grid.
    std::int64_t neighbor(std::int64_t idx, int axis, int steps) const {
        const int k = static_cast<int>(idx / stride[axis] % (n_per_axis + 1));
        const int kn = k + steps;
        if (kn < 0 || kn > n_per_axis) return -1;
        return idx + static_cast<std::int64_t>(steps) * stride[axis];
    }
};

/// Node classification. Every node is exactly one of interior / boundary /
/// exterior; discrete functions vanish on boundary and exterior nodes.
struct DomainMask {
    enum class NodeClass : std::uint8_t { interior = 0, boundary = 1, exterior = 2 };

    std::vector<NodeClass> klass;
    std::vector<std::int32_t> interior_index; // -1 for non-interior nodes
    std::vector<std::int64_t> interior_nodes; // flat node index per interior dof

    std::int64_t interior_count() const { return static_cast<std::int64_t>(interior_nodes.size()); }
    bool is_interior(std::int64_t idx) const { return klass[idx] == NodeClass::interior; }
};

struct GridAndMask {
    Grid grid;
    DomainMask mask;
};

/// Build the uniform grid over the open box `bounds` with N cells per axis.
/// Nodes on the box faces are boundary; the rest are interior.
inline GridAndMask build_grid(const GroupSpec& spec,
                              const std::vector<std::pair<double, double>>& bounds, int n) {
    if (n < 4) throw config_error("build_grid: N must be >= 4, got " + std::to_string(n));
    if (static_cast<int>(bounds.size()) != spec.topological_dim)
        throw std::invalid_argument("build_grid: bounds must have one interval per axis");
    Grid g;
    g.spec = spec;
    g.bounds = bounds;
    g.n_per_axis = n;
    g.dim = spec.topological_dim;
    g.h.resize(g.dim);
    g.cell_volume = 1.0;
    for (int a = 0; a < g.dim; ++a) {
        const auto [lo, hi] = bounds[a];
        if (!(hi > lo)) throw config_error("build_grid: degenerate bounds on axis " + std::to_string(a));
        g.h[a] = (hi - lo) / n;
        g.cell_volume *= g.h[a];
    }
    const std::int64_t nodes_per_axis = n + 1;
    g.node_count = 1;
    for (int a = 0; a < g.dim; ++a) g.node_count *= nodes_per_axis;
    g.stride.resize(g.dim);
    std::int64_t s = 1;
    for (int a = g.dim - 1; a >= 0; --a) {
        g.stride[a] = s;
        s *= nodes_per_axis;
    }
    g.coords.resize(g.node_count * g.dim);
    std::vector<int> multi(g.dim, 0);
    for (std::int64_t idx = 0; idx < g.node_count; ++idx) {
        g.multi_index(idx, multi);
        for (int a = 0; a < g.dim; ++a)
            g.coords[idx * g.dim + a] = bounds[a].first + multi[a] * g.h[a];
    }

    DomainMask m;
    m.klass.resize(g.node_count, DomainMask::NodeClass::interior);
    m.interior_index.assign(g.node_count, -1);
    for (std::int64_t idx = 0; idx < g.node_count; ++idx) {
        g.multi_index(idx, multi);
        for (int a = 0; a < g.dim; ++a) {
            if (multi[a] == 0 || multi[a] == n) {
                m.klass[idx] = DomainMask::NodeClass::boundary;
                break;
            }
        }
        if (m.klass[idx] == DomainMask::NodeClass::interior) {
            m.interior_index[idx] = static_cast<std::int32_t>(m.interior_nodes.size());
            m.interior_nodes.push_back(idx);
        }
    }
    return {std::move(g), std::move(m)};
}

/// Grid function with values at every node; zero off the interior by
/// construction.
struct DiscreteFunction {
    const Grid* grid = nullptr;
    Eigen::VectorXd values;
};

inline DiscreteFunction zero_function(const Grid& grid) {
    return {&grid, Eigen::VectorXd::Zero(grid.node_count)};
}

/// Wrap full-node values, zeroing every non-interior entry.
inline DiscreteFunction make_function(const Grid& grid, const DomainMask& mask,
                                      Eigen::VectorXd full_values) {
    if (full_values.size() != grid.node_count)
        throw std::invalid_argument("make_function: value count does not match grid");
    for (std::int64_t i = 0; i < grid.node_count; ++i)
        if (!mask.is_interior(i)) full_values[i] = 0.0;
    return {&grid, std::move(full_values)};
}

/// Sample a callable on interior nodes.
inline DiscreteFunction make_function(const Grid& grid, const DomainMask& mask,
                                      const std::function<double(std::span<const double>)>& f) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.node_count);
    for (std::int64_t idx : mask.interior_nodes) v[idx] = f(grid.node(idx));
    return {&grid, std::move(v)};
}

inline Eigen::VectorXd restrict_to_interior(const DomainMask& mask, const DiscreteFunction& u) {
    if (u.values.size() != static_cast<std::int64_t>(mask.interior_index.size()))
        throw std::invalid_argument("restrict_to_interior: function does not match the grid");
    Eigen::VectorXd v(mask.interior_count());
    for (std::int64_t k = 0; k < mask.interior_count(); ++k) v[k] = u.values[mask.interior_nodes[k]];
    return v;
}

inline DiscreteFunction extend_from_interior(const Grid& grid, const DomainMask& mask,
                                             const Eigen::VectorXd& v) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(grid.node_count);
    for (std::int64_t k = 0; k < mask.interior_count(); ++k) full[mask.interior_nodes[k]] = v[k];
    return {&grid, std::move(full)};
}

/// Plain node sum times the Haar cell volume.
inline double integrate_nodes(const Grid& grid, const Eigen::VectorXd& nodewise) {
    return nodewise.sum() * grid.cell_volume;
}

/// Trapezoid rule on the closed box: nodes on k faces carry weight 2^{-k}.
inline double integrate_trapezoid(const Grid& grid, const Eigen::VectorXd& nodewise) {
    double acc = 0.0;
    std::vector<int> multi(grid.dim);
    for (std::int64_t idx = 0; idx < grid.node_count; ++idx) {
        grid.multi_index(idx, multi);
        double w = 1.0;
        for (int a = 0; a < grid.dim; ++a)
            if (multi[a] == 0 || multi[a] == grid.n_per_axis) w *= 0.5;
        acc += w * nodewise[idx];
    }
    return acc * grid.cell_volume;
}

/// Centered first difference along a coordinate axis, with u extended by zero
/// outside the box.
inline double coordinate_derivative(const Grid& grid, const Eigen::VectorXd& u, std::int64_t idx,
                                    int axis) {
    const std::int64_t plus = grid.neighbor(idx, axis, 1);
    const std::int64_t minus = grid.neighbor(idx, axis, -1);
    const double up = plus >= 0 ? u[plus] : 0.0;
    const double um = minus >= 0 ? u[minus] : 0.0;
    return (up - um) / (2.0 * grid.h[axis]);
}

/// Derivative of u along a left-invariant field (or the dilation generator) at
/// a node: field coefficients at the node contracted with centered coordinate
/// differences.
inline double field_derivative(const Grid& grid, const Eigen::VectorXd& u, std::int64_t idx,
                               FieldId field) {
    const GroupPoint coeffs = vector_field_coeffs(grid.spec, field, grid.node(idx));
    double acc = 0.0;
    for (int a = 0; a < grid.dim; ++a)
        if (coeffs[a] != 0.0) acc += coeffs[a] * coordinate_derivative(grid, u, idx, a);
    return acc;
}

/// Squared norm of the horizontal (first-stratum) gradient at a node.
inline double horizontal_gradient_sq(const Grid& grid, const Eigen::VectorXd& u, std::int64_t idx) {
    double acc = 0.0;
    if (grid.spec.kind == GroupKind::abelian) {
        for (int a = 0; a < grid.dim; ++a) {
            const double d = coordinate_derivative(grid, u, idx, a);
            acc += d * d;
        }
        return acc;
    }
    const int n = grid.spec.param;
    for (int i = 0; i < n; ++i) {
        const double dx = field_derivative(grid, u, idx, FieldId::X(i));
        const double dy = field_derivative(grid, u, idx, FieldId::Y(i));
        acc += dx * dx + dy * dy;
    }
    return acc;
}

/// Gauge distance from a node to the complement of the box. Exact for the
/// supported groups: |Delta| to first-stratum faces, sqrt(|Delta|) to the
/// vertical faces of H^n.
inline double gauge_distance_to_complement(const Grid& grid, std::int64_t idx) {
    const auto p = grid.node(idx);
    double r = std::numeric_limits<double>::infinity();
    const int first_stratum = grid.spec.strata[0];
    for (int a = 0; a < grid.dim; ++a) {
        const double to_lo = p[a] - grid.bounds[a].first;
        const double to_hi = grid.bounds[a].second - p[a];
        double d = std::min(to_lo, to_hi);
        if (d < 0.0) d = 0.0;
        if (a >= first_stratum) d = std::sqrt(d); // second-stratum coordinate
        r = std::min(r, d);
    }
    return r;
}

} // namespace carnot
