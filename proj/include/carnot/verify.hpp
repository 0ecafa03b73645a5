#pragma once

// Numerical verification of the analytic identities and qualitative theorems
// on computed eigenpairs and synthetic test functions: Pohozaev-like identity,
// fractional-dilation commutator, operator property suite, embedding ratio,
// positivity, and the negative-lambda sign check.

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "carnot/eigensolve.hpp"
#include "carnot/errors.hpp"
#include "carnot/forms.hpp"
#include "carnot/grid.hpp"

namespace carnot {

// ---------------------------------------------------------------------------
// Seeded test functions: tensor-product bumps Pi cos^2(pi xi_a) with support
// inside the central half-box.
// ---------------------------------------------------------------------------

inline DiscreteFunction tensor_bump(const Grid& grid, const DomainMask& mask,
                                    const std::vector<double>& center,
                                    const std::vector<double>& half_width) {
    return make_function(grid, mask, [&](std::span<const double> x) {
        double v = 1.0;
        for (int a = 0; a < grid.dim; ++a) {
            const double xi = (x[a] - center[a]) / (2.0 * half_width[a]);
            if (std::abs(xi) >= 0.5) return 0.0;
            const double c = std::cos(M_PI * xi);
            v *= c * c;
        }
        return v;
    });
}

/// Bump centered in the box with the given absolute half-width per axis.
inline DiscreteFunction central_bump(const Grid& grid, const DomainMask& mask,
                                     double half_width = 0.3) {
    std::vector<double> center(grid.dim), hw(grid.dim, half_width);
    for (int a = 0; a < grid.dim; ++a)
        center[a] = 0.5 * (grid.bounds[a].first + grid.bounds[a].second);
    return tensor_bump(grid, mask, center, hw);
}

/// Deterministic family of bumps supported in the central half-box.
inline std::vector<DiscreteFunction> random_bumps(const Grid& grid, const DomainMask& mask,
                                                  int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<DiscreteFunction> family;
    family.reserve(count);
    for (int k = 0; k < count; ++k) {
        std::vector<double> center(grid.dim), hw(grid.dim);
        for (int a = 0; a < grid.dim; ++a) {
            const double len = grid.bounds[a].second - grid.bounds[a].first;
            const double mid = 0.5 * (grid.bounds[a].first + grid.bounds[a].second);
            // half-widths of 0.21..0.25 box lengths: wide enough that the
            // family is resolved already on the coarsest grids in use
            std::uniform_real_distribution<double> width(0.21 * len, 0.25 * len);
            hw[a] = width(rng);
            const double max_off = 0.25 * len - hw[a];
            std::uniform_real_distribution<double> off(-max_off, max_off);
            center[a] = mid + off(rng);
        }
        family.push_back(tensor_bump(grid, mask, center, hw));
    }
    return family;
}

// ---------------------------------------------------------------------------
// Pohozaev-like identity
// ---------------------------------------------------------------------------

struct PohozaevReport {
    double term_G = 0.0;        // (Q/2) * integral of G(u)
    double term_grad = 0.0;     // ((Q-2)/2) * integral of |grad_H u|^2
    double term_frac_A = 0.0;   // ((Q-2s)/2) * integral of |(-Delta)^s u|^2
    double term_frac_B = 0.0;   // ((Q-2s)/2) * integral of u (-Delta)^s u
    double term_boundary = 0.0; // (1/2) * boundary flux weighted by <Z, n>
    double residual_A = 0.0;    // term_G - term_grad - term_frac_A - term_boundary
    double residual_B = 0.0;    // term_G - term_grad - term_frac_B - term_boundary
};

namespace detail {

/// Pointwise (-Delta)^s u on interior nodes: nonlocal form action / cell
/// volume; zero off the interior.
inline Eigen::VectorXd fractional_values(const QuadraticForm& form, const DiscreteFunction& u) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(form.grid->node_count);
    if (!form.has_nonlocal) return full;
    const Eigen::VectorXd x = restrict_to_interior(*form.mask, u);
    const Eigen::VectorXd y =
        (form.nonlocal.apply(x) + form.tail.cwiseProduct(x)) / form.grid->cell_volume;
    for (std::int64_t k = 0; k < form.mask->interior_count(); ++k)
        full[form.mask->interior_nodes[k]] = y[k];
    return full;
}

/// One-sided second-order outward-face normal derivative of u at a boundary
/// node of the face with fixed axis `axis` (u = 0 on the face itself).
inline double one_sided_normal_derivative(const Grid& grid, const Eigen::VectorXd& u,
                                          std::int64_t node, int axis, bool low_face) {
    const int inward = low_face ? 1 : -1;
    const std::int64_t n1 = grid.neighbor(node, axis, inward);
    const std::int64_t n2 = grid.neighbor(node, axis, 2 * inward);
    const double u1 = n1 >= 0 ? u[n1] : 0.0;
    const double u2 = n2 >= 0 ? u[n2] : 0.0;
    // d u / d x_axis in the coordinate direction: (-3 u0 + 4 u1 - u2) / (2h), u0 = 0
    const double inward_slope = (4.0 * u1 - u2) / (2.0 * grid.h[axis]);
    return low_face ? inward_slope : -inward_slope;
}

/// |grad_H u|^2 at a boundary node: tangential derivatives vanish on the face,
/// so only the coordinate-normal slope enters the horizontal components.
inline double boundary_horizontal_gradient_sq(const Grid& grid, std::int64_t node, int axis,
                                              double normal_slope) {
    const GroupSpec& spec = grid.spec;
    if (spec.kind == GroupKind::abelian) return normal_slope * normal_slope;
    const int n = spec.param;
    const auto p = grid.node(node);
    // first-stratum face: exactly one of X_axis / Y_{axis-n} carries the slope
    if (axis < 2 * n) return normal_slope * normal_slope;
    // vertical face: X_i u = -(y_i/2) u_t, Y_i u = (x_i/2) u_t
    double coeff = 0.0;
    for (int i = 0; i < n; ++i) coeff += 0.25 * (p[i] * p[i] + p[n + i] * p[n + i]);
    return coeff * normal_slope * normal_slope;
}

} // namespace detail

/// Evaluate every term of the Pohozaev-like identity on a computed eigenpair.
/// g and G use the exponent `g_exponent` (0 = the eigenpair's own q); both
/// readings of the fractional term are reported.
inline PohozaevReport pohozaev_residual(const Eigenpair& eig, const QuadraticForm& form,
                                        const Grid& grid,
                                        [[maybe_unused]] const DomainMask& mask,
                                        double g_exponent = 0.0) {
    if (grid.spec.kind != GroupKind::heisenberg)
        throw std::domain_error("pohozaev_residual: identity is stated on the Heisenberg group");
    if (!eig.converged) throw std::invalid_argument("pohozaev_residual: eigenpair not converged");
    const double q = g_exponent > 0.0 ? g_exponent : eig.q;
    const double q_hom = grid.spec.homogeneous_dim;
    const double mu = eig.mu;
    const Eigen::VectorXd& u = eig.w.values;

    const double norm_q = detail::lq_norm_unchecked(grid, u, q);
    const double g_scale = norm_q == 0.0 ? 0.0 : mu * std::pow(norm_q, 2.0 - q);

    Eigen::VectorXd big_g(grid.node_count), grad_sq(grid.node_count);
    for (std::int64_t i = 0; i < grid.node_count; ++i) {
        big_g[i] = g_scale * std::pow(std::abs(u[i]), q) / q;
        grad_sq[i] = horizontal_gradient_sq(grid, u, i);
    }
    const Eigen::VectorXd frac = detail::fractional_values(form, eig.w);

    PohozaevReport report;
    report.term_G = 0.5 * q_hom * integrate_trapezoid(grid, big_g);
    report.term_grad = 0.5 * (q_hom - 2.0) * integrate_trapezoid(grid, grad_sq);
    report.term_frac_A =
        0.5 * (q_hom - 2.0 * form.s) * integrate_trapezoid(grid, frac.cwiseProduct(frac));
    report.term_frac_B =
        0.5 * (q_hom - 2.0 * form.s) * integrate_trapezoid(grid, u.cwiseProduct(frac));

    // Boundary flux: face-cell midpoint rule, midpoint values by corner
    // averaging, one-sided second-order normal slopes.
    double flux = 0.0;
    const int nodes_per_axis = grid.n_per_axis + 1;
    for (int axis = 0; axis < grid.dim; ++axis) {
        double face_cell_area = 1.0;
        for (int a = 0; a < grid.dim; ++a)
            if (a != axis) face_cell_area *= grid.h[a];
        for (bool low_face : {true, false}) {
            // iterate cells of the (dim-1)-dimensional face
            std::vector<int> cell(grid.dim, 0);
            cell[axis] = low_face ? 0 : grid.n_per_axis;
            while (true) {
                double cell_sum = 0.0;
                int corners = 0;
                // corners of this face cell
                std::vector<int> corner(grid.dim);
                const int n_corner = 1 << (grid.dim - 1);
                for (int cbits = 0; cbits < n_corner; ++cbits) {
                    corner = cell;
                    int bit = 0;
                    bool valid = true;
                    for (int a = 0; a < grid.dim && valid; ++a) {
                        if (a == axis) continue;
                        corner[a] = cell[a] + ((cbits >> bit) & 1);
                        if (corner[a] >= nodes_per_axis) valid = false;
                        ++bit;
                    }
                    if (!valid) continue;
                    const std::int64_t node = grid.flat_index(corner);
                    const double slope =
                        detail::one_sided_normal_derivative(grid, u, node, axis, low_face);
                    const double hsq =
                        detail::boundary_horizontal_gradient_sq(grid, node, axis, slope);
                    const GroupPoint z =
                        vector_field_coeffs(grid.spec, FieldId::dilation_generator(), grid.node(node));
                    const double z_dot_n = low_face ? -z[axis] : z[axis];
                    cell_sum += hsq * z_dot_n;
                    ++corners;
                }
                flux += face_cell_area * cell_sum / corners;
                // advance to the next face cell
                int a = grid.dim - 1;
                for (; a >= 0; --a) {
                    if (a == axis) continue;
                    if (++cell[a] < grid.n_per_axis) break;
                    cell[a] = 0;
                }
                if (a < 0) break;
            }
        }
    }
    report.term_boundary = 0.5 * flux;
    report.residual_A =
        report.term_G - report.term_grad - report.term_frac_A - report.term_boundary;
    report.residual_B =
        report.term_G - report.term_grad - report.term_frac_B - report.term_boundary;
    return report;
}

// ---------------------------------------------------------------------------
// Fractional-dilation commutator
// ---------------------------------------------------------------------------

namespace detail {

/// Quadrature value of (-Delta)^s g at a grid node outside supp(g): the field
/// value at the probe is zero, so only -sum_j g_j K(x_j^{-1} x_p) h^dim
/// survives (tail contributes g(x_p) * const = 0).
inline double nonlocal_at_probe(const Grid& grid, const Eigen::VectorXd& g, std::int64_t probe,
                                double s) {
    const double kernel_exp = -(grid.spec.homogeneous_dim + 2.0 * s);
    const auto xp = grid.node(probe);
    double acc = 0.0;
    for (std::int64_t j = 0; j < grid.node_count; ++j) {
        if (g[j] == 0.0 || j == probe) continue;
        const double rho = gauge_of_left_difference(grid.spec, xp, grid.node(j));
        acc -= g[j] * std::pow(rho, kernel_exp);
    }
    return acc * grid.cell_volume;
}

inline bool zero_in_chebyshev_ball(const Grid& grid, const Eigen::VectorXd& u, std::int64_t node,
                                   int radius) {
    std::vector<int> multi(grid.dim), probe(grid.dim);
    grid.multi_index(node, multi);
    std::vector<int> offset(grid.dim, -radius);
    while (true) {
        bool valid = true;
        for (int a = 0; a < grid.dim; ++a) {
            probe[a] = multi[a] + offset[a];
            if (probe[a] < 0 || probe[a] > grid.n_per_axis) {
                valid = false;
                break;
            }
        }
        if (valid && u[grid.flat_index(probe)] != 0.0) return false;
        int a = grid.dim - 1;
        for (; a >= 0; --a) {
            if (++offset[a] <= radius) break;
            offset[a] = -radius;
        }
        if (a < 0) break;
    }
    return true;
}

} // namespace detail

/// Probe nodes for the commutator check: interior nodes at gauge distance at
/// least `min_gauge` from the box center whose 2-cell neighborhood is free of
/// supp(u), deterministically thinned to at most `max_count`.
inline std::vector<std::int64_t> select_probe_nodes(const Grid& grid, const DomainMask& mask,
                                                    const DiscreteFunction& u, double min_gauge,
                                                    int max_count = 8) {
    std::vector<double> center(grid.dim);
    for (int a = 0; a < grid.dim; ++a)
        center[a] = 0.5 * (grid.bounds[a].first + grid.bounds[a].second);
    std::vector<std::int64_t> candidates;
    GroupPoint rel(grid.dim);
    for (std::int64_t idx : mask.interior_nodes) {
        const auto p = grid.node(idx);
        for (int a = 0; a < grid.dim; ++a) rel[a] = p[a] - center[a];
        if (koranyi_norm(grid.spec, std::span<const double>(rel)) < min_gauge) continue;
        if (!detail::zero_in_chebyshev_ball(grid, u.values, idx, 2)) continue;
        candidates.push_back(idx);
    }
    if (candidates.empty()) throw config_error("select_probe_nodes: no admissible probes");
    if (static_cast<int>(candidates.size()) <= max_count) return candidates;
    std::vector<std::int64_t> picked;
    const std::size_t stride = candidates.size() / max_count;
    for (int k = 0; k < max_count; ++k) picked.push_back(candidates[k * stride]);
    return picked;
}

/// Max relative residual of the identity
///   (-Delta)^s (xbar . grad u) = xbar . (-Delta)^s grad u + 2s (-Delta)^s u
/// at probe points outside supp(u), with grad taken in the left-invariant
/// frame (X_1..X_n, Y_1..Y_n, Z) and xbar the dilation-generator coefficients.
inline double commutator_check(const Grid& grid, [[maybe_unused]] const DomainMask& mask,
                               double s, const DiscreteFunction& u,
                               const std::vector<std::int64_t>& probes) {
    if (!(s > 0.0 && s < 1.0)) throw std::domain_error("commutator_check: s must lie in (0,1)");
    // support must stay clear of the box faces so centered stencils see it all
    for (std::int64_t idx = 0; idx < grid.node_count; ++idx) {
        if (u.values[idx] == 0.0) continue;
        std::vector<int> multi(grid.dim);
        grid.multi_index(idx, multi);
        for (int a = 0; a < grid.dim; ++a)
            if (multi[a] < 2 || multi[a] > grid.n_per_axis - 2)
                throw std::invalid_argument(
                    "commutator_check: u must be supported strictly inside the box");
    }
    for (std::int64_t probe : probes)
        if (!detail::zero_in_chebyshev_ball(grid, u.values, probe, 2))
            throw std::invalid_argument("commutator_check: probe inside supp(u)");

    // frame fields: X_1..X_n, Y_1..Y_n, Z on Heisenberg; coordinate fields on
    // the abelian group
    std::vector<FieldId> frame;
    if (grid.spec.kind == GroupKind::heisenberg) {
        for (int i = 0; i < grid.spec.param; ++i) frame.push_back(FieldId::X(i));
        for (int i = 0; i < grid.spec.param; ++i) frame.push_back(FieldId::Y(i));
        frame.push_back(FieldId::Z());
    } else {
        for (int i = 0; i < grid.spec.param; ++i) frame.push_back(FieldId::X(i));
    }

    Eigen::VectorXd dilation_derivative(grid.node_count);
    std::vector<Eigen::VectorXd> frame_derivatives(frame.size(),
                                                   Eigen::VectorXd(grid.node_count));
    for (std::int64_t idx = 0; idx < grid.node_count; ++idx) {
        dilation_derivative[idx] =
            field_derivative(grid, u.values, idx, FieldId::dilation_generator());
        for (std::size_t f = 0; f < frame.size(); ++f)
            frame_derivatives[f][idx] = field_derivative(grid, u.values, idx, frame[f]);
    }

    double worst = 0.0;
    for (std::int64_t probe : probes) {
        const double lhs = detail::nonlocal_at_probe(grid, dilation_derivative, probe, s);
        const GroupPoint xbar =
            vector_field_coeffs(grid.spec, FieldId::dilation_generator(), grid.node(probe));
        double rhs = 2.0 * s * detail::nonlocal_at_probe(grid, u.values, probe, s);
        for (std::size_t f = 0; f < frame.size(); ++f) {
            if (xbar[f] == 0.0) continue;
            rhs += xbar[f] * detail::nonlocal_at_probe(grid, frame_derivatives[f], probe, s);
        }
        const double denom = std::abs(lhs) + std::abs(rhs) + 1e-14;
        worst = std::max(worst, std::abs(lhs - rhs) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Operator property suite (bounded, coercive, monotone)
// ---------------------------------------------------------------------------

struct OperatorTrialRow {
    int trial = 0;
    double coercivity_margin = 0.0;     // |<Au,u> - ||u||_X^2|
    double monotonicity_margin = 0.0;   // <Au - Av, u - v>
    double cauchy_schwarz_margin = 0.0; // ||u|| ||v|| - |<Au,v>|
};

struct OperatorPropertyReport {
    std::vector<OperatorTrialRow> rows;
    double worst_coercivity = 0.0;
    double worst_monotonicity = 0.0;
    double worst_cauchy_schwarz = 0.0;
};

inline OperatorPropertyReport operator_property_suite(const QuadraticForm& form, int trials,
                                                      std::uint64_t seed = 0xa11a) {
    if (trials < 1) throw std::invalid_argument("operator_property_suite: trials must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const std::int64_t n = form.interior_dim();

    OperatorPropertyReport report;
    report.worst_monotonicity = std::numeric_limits<double>::infinity();
    report.worst_cauchy_schwarz = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd u(n), v(n);
        for (std::int64_t i = 0; i < n; ++i) u[i] = unit(rng);
        for (std::int64_t i = 0; i < n; ++i) v[i] = unit(rng);
        const Eigen::VectorXd au = form.apply_interior(u);
        const Eigen::VectorXd av = form.apply_interior(v);
        const double eu = u.dot(au);
        const double ev = v.dot(av);

        OperatorTrialRow row;
        row.trial = t;
        row.coercivity_margin = std::abs(au.dot(u) - eu);
        row.monotonicity_margin = (au - av).dot(u - v);
        row.cauchy_schwarz_margin = std::sqrt(eu) * std::sqrt(ev) - std::abs(au.dot(v));
        report.rows.push_back(row);
        report.worst_coercivity = std::max(report.worst_coercivity, row.coercivity_margin);
        report.worst_monotonicity = std::min(report.worst_monotonicity, row.monotonicity_margin);
        report.worst_cauchy_schwarz =
            std::min(report.worst_cauchy_schwarz, row.cauchy_schwarz_margin);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Embedding ratio (Gagliardo p-seminorm with tail vs gradient p-norm)
// ---------------------------------------------------------------------------

namespace detail {

// Catmull-Rom basis over nodes (-1, 0, 1, 2) at local t in [0,1]
inline void cr_basis(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t + 2.0 * t2 - t3);
    w[1] = 0.5 * (2.0 - 5.0 * t2 + 3.0 * t3);
    w[2] = 0.5 * (t + 4.0 * t2 - 3.0 * t3);
    w[3] = 0.5 * (-t2 + t3);
}

inline void cr_basis_derivative(double t, double w[4]) {
    const double t2 = t * t;
    w[0] = 0.5 * (-1.0 + 4.0 * t - 3.0 * t2);
    w[1] = 0.5 * (-10.0 * t + 9.0 * t2);
    w[2] = 0.5 * (1.0 + 8.0 * t - 9.0 * t2);
    w[3] = 0.5 * (-2.0 * t + 3.0 * t2);
}

} // namespace detail

/// ||grad_G v||_p^p by per-cell Gauss quadrature on a tensor Catmull-Rom
/// reconstruction of v (zero ghosts outside the box). The reconstruction
/// recovers gradient peaks that fall between nodes, which node-centered
/// stencils miss on coarse grids.
inline double cell_gradient_p_norm(const Grid& grid, const Eigen::VectorXd& v, double p) {
    const int dim = grid.dim;
    static constexpr double gauss[2] = {0.21132486540518712, 0.78867513459481288};
    double acc = 0.0;
    std::vector<int> cell(dim, 0);
    std::vector<double> point(dim);
    std::vector<std::array<double, 4>> value_w(dim), deriv_w(dim);
    std::vector<int> gp(dim, 0), offset(dim, 0);
    while (true) {
        double cell_acc = 0.0;
        std::fill(gp.begin(), gp.end(), 0);
        while (true) { // Gauss points of this cell
            for (int a = 0; a < dim; ++a) {
                const double t = gauss[gp[a]];
                point[a] = grid.bounds[a].first + (cell[a] + t) * grid.h[a];
                detail::cr_basis(t, value_w[a].data());
                detail::cr_basis_derivative(t, deriv_w[a].data());
            }
            // gradient components: tensor contraction over the 4^dim stencil
            std::vector<double> slope(dim, 0.0);
            std::fill(offset.begin(), offset.end(), 0);
            while (true) {
                bool in_grid = true;
                std::int64_t idx = 0;
                for (int a = 0; a < dim && in_grid; ++a) {
                    const int k = cell[a] - 1 + offset[a];
                    if (k < 0 || k > grid.n_per_axis) in_grid = false; // zero ghost
                    else idx += k * grid.stride[a];
                }
                if (in_grid) {
                    const double value = v[idx];
                    if (value != 0.0) {
                        for (int a = 0; a < dim; ++a) {
                            double w = deriv_w[a][offset[a]] / grid.h[a];
                            for (int b = 0; b < dim; ++b)
                                if (b != a) w *= value_w[b][offset[b]];
                            slope[a] += w * value;
                        }
                    }
                }
                int a = dim - 1;
                for (; a >= 0; --a) {
                    if (++offset[a] < 4) break;
                    offset[a] = 0;
                }
                if (a < 0) break;
            }

            double hsq = 0.0;
            if (grid.spec.kind == GroupKind::abelian) {
                for (int a = 0; a < dim; ++a) hsq += slope[a] * slope[a];
            } else {
                const int n = grid.spec.param;
                for (int i = 0; i < n; ++i) {
                    const double x_comp = slope[i] - 0.5 * point[n + i] * slope[2 * n];
                    const double y_comp = slope[n + i] + 0.5 * point[i] * slope[2 * n];
                    hsq += x_comp * x_comp + y_comp * y_comp;
                }
            }
            cell_acc += std::pow(hsq, 0.5 * p);

            int a = dim - 1;
            for (; a >= 0; --a) {
                if (++gp[a] < 2) break;
                gp[a] = 0;
            }
            if (a < 0) break;
        }
        acc += cell_acc / static_cast<double>(1 << dim);

        int a = dim - 1;
        for (; a >= 0; --a) {
            if (++cell[a] < grid.n_per_axis) break;
            cell[a] = 0;
        }
        if (a < 0) break;
    }
    return acc * grid.cell_volume;
}

inline double embedding_ratio(const Grid& grid, [[maybe_unused]] const DomainMask& mask,
                              const DiscreteFunction& v, double p, double s) {
    if (!(p > 1.0)) throw std::domain_error("embedding_ratio: p must exceed 1");
    if (!(s > 0.0 && s < 1.0)) throw std::domain_error("embedding_ratio: s must lie in (0,1)");

    const double grad_p = cell_gradient_p_norm(grid, v.values, p);
    if (grad_p == 0.0) throw std::domain_error("embedding_ratio: v has zero gradient norm");

    std::vector<std::int64_t> support;
    for (std::int64_t idx = 0; idx < grid.node_count; ++idx)
        if (v.values[idx] != 0.0) support.push_back(idx);

    const double kernel_exp = -(grid.spec.homogeneous_dim + p * s);
    const double cv2 = grid.cell_volume * grid.cell_volume;
    const std::int64_t n_sup = static_cast<std::int64_t>(support.size());
    // per-row partials summed in row order: reduction order is fixed, so the
    // result is identical across runs and thread counts
    std::vector<double> row_sum(n_sup, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(detail::thread_count())
#endif
    for (std::int64_t a = 0; a < n_sup; ++a) {
        const std::int64_t i = support[a];
        const auto pi = grid.node(i);
        const double vi = v.values[i];
        double acc = 0.0;
        for (std::int64_t j = 0; j < grid.node_count; ++j) {
            if (j == i) continue;
            const double diff = std::abs(vi - v.values[j]);
            if (diff == 0.0) continue;
            const double rho = gauge_of_left_difference(grid.spec, pi, grid.node(j));
            const double w = std::pow(rho, kernel_exp) * std::pow(diff, p);
            // pairs with both ends in the support are visited twice from the
            // support loop; pairs with one zero end only once
            acc += (v.values[j] != 0.0) ? w : 2.0 * w;
        }
        row_sum[a] = acc;
    }
    double pair_sum = 0.0;
    for (std::int64_t a = 0; a < n_sup; ++a) pair_sum += row_sum[a];
    double seminorm = 0.5 * cv2 * pair_sum;

    const double omega_q = gauge_ball_volume(grid.spec);
    for (std::int64_t idx : support) {
        const double radius = gauge_distance_to_complement(grid, idx);
        seminorm += std::pow(std::abs(v.values[idx]), p) * grid.cell_volume *
                    (omega_q / (p * s)) * std::pow(radius, -p * s);
    }
    return seminorm / grad_p;
}

// ---------------------------------------------------------------------------
// Positivity / boundedness
// ---------------------------------------------------------------------------

struct PositivityReport {
    double min_interior = 0.0; // min of w over the margin set
    double linf = 0.0;         // max |w| over the box
};

inline PositivityReport positivity_check(const Eigenpair& eig, const Grid& grid,
                                         const DomainMask& mask, double margin) {
    if (!(margin > 0.0 && margin < 0.5))
        throw std::domain_error("positivity_check: margin must lie in (0, 0.5)");
    Eigen::VectorXd w = eig.w.values;
    std::int64_t arg_max = 0;
    w.cwiseAbs().maxCoeff(&arg_max);
    if (w[arg_max] < 0.0) w = -w; // orientation convention

    double min_interior = std::numeric_limits<double>::infinity();
    std::int64_t members = 0;
    for (std::int64_t idx : mask.interior_nodes) {
        const auto p = grid.node(idx);
        bool inside = true;
        for (int a = 0; a < grid.dim && inside; ++a) {
            const double len = grid.bounds[a].second - grid.bounds[a].first;
            const double d =
                std::min(p[a] - grid.bounds[a].first, grid.bounds[a].second - p[a]);
            // the node's half-cell halo must clear the margin band
            if (d - 0.5 * grid.h[a] < margin * len) inside = false;
        }
        if (!inside) continue;
        ++members;
        min_interior = std::min(min_interior, w[idx]);
    }
    if (members == 0)
        throw config_error("positivity_check: margin " + std::to_string(margin) +
                           " leaves no nodes at N = " + std::to_string(grid.n_per_axis));
    return {min_interior, w.cwiseAbs().maxCoeff()};
}

// ---------------------------------------------------------------------------
// Negative-lambda sign check
// ---------------------------------------------------------------------------

struct NegativeLambdaReport {
    double lambda_min = 0.0;         // smallest generalized eigenvalue (estimate)
    double lambda_lower_bound = 0.0; // certified lower bound
    bool dense_oracle = false;
    double combination_value = 0.0;  // (Q/2) int G + (1 - Q/2) int g u
    double combination_q = 0.0;      // exponent used for g (0 if skipped)
};

inline NegativeLambdaReport negative_lambda_check(const QuadraticForm& form, const Grid& grid,
                                                  const DomainMask& mask,
                                                  std::int64_t dense_limit = 1000) {
    NegativeLambdaReport report;
    const bool dense_ok =
        form.interior_dim() <= dense_limit && (!form.has_nonlocal || form.nonlocal.dense);
    if (dense_ok) {
        const DenseEigenResult oracle = dense_smallest_eigenpair(form);
        report.lambda_min = oracle.lambda;
        report.lambda_lower_bound = oracle.lambda;
        report.dense_oracle = true;
    } else {
        const auto res = inverse_iteration(form, 2.0, 1e-10, 500);
        const Eigen::VectorXd x = restrict_to_interior(mask, res.pair.w);
        const Eigen::VectorXd r =
            form.apply_interior(x) - res.pair.mu * grid.cell_volume * x;
        report.lambda_min = res.pair.mu;
        report.lambda_lower_bound =
            res.pair.mu - r.norm() / (grid.cell_volume * x.norm());
        report.dense_oracle = false;
    }

    const double two_star = critical_exponent(grid.spec);
    if (std::isfinite(two_star)) {
        const double qc = 0.975 * two_star; // just below the critical exponent
        const auto res = inverse_iteration(form, qc, 1e-10, 500);
        if (res.pair.converged) {
            const double q_hom = grid.spec.homogeneous_dim;
            const Eigen::VectorXd& u = res.pair.w.values;
            const double norm_q = detail::lq_norm_unchecked(grid, u, qc);
            const double g_scale = res.pair.mu * std::pow(norm_q, 2.0 - qc);
            Eigen::VectorXd big_g(grid.node_count), gu(grid.node_count);
            for (std::int64_t i = 0; i < grid.node_count; ++i) {
                const double a = std::pow(std::abs(u[i]), qc);
                big_g[i] = g_scale * a / qc;
                gu[i] = g_scale * a;
            }
            report.combination_value = 0.5 * q_hom * integrate_trapezoid(grid, big_g) +
                                       (1.0 - 0.5 * q_hom) * integrate_trapezoid(grid, gu);
            report.combination_q = qc;
        }
    }
    return report;
}

} // namespace carnot
