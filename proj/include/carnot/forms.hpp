#pragma once

// Discrete quadratic forms for the mixed operator -L + (-Delta)^s with the
// exterior Dirichlet condition:
//   * local part: left-invariant centered differences for the sub-Laplacian,
//     post-symmetrized, Dirichlet rows/columns eliminated;
//   * nonlocal part: pairwise singular-kernel quadrature over the box with the
//     diagonal cell dropped (principal value) and a radial tail bound for the
//     complement of the box;
//   * L^q functional and the eigenvalue pairing B.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "carnot/errors.hpp"
#include "carnot/grid.hpp"
#include "carnot/group.hpp"

namespace carnot {

namespace detail {

inline int thread_count() {
#ifdef _OPENMP
    static const int cached = [] {
        if (const char* env = std::getenv("CARNOT_THREADS")) {
            const int k = std::atoi(env);
            if (k > 0) return k;
        }
        return omp_get_max_threads();
    }();
    return cached;
#else
    return 1;
#endif
}

} // namespace detail

/// Critical exponent 2Q/(Q-2); +infinity when Q <= 2 (low-dimensional abelian
/// degenerate cases).
inline double critical_exponent(const GroupSpec& spec) {
    const int q_hom = spec.homogeneous_dim;
    if (q_hom <= 2) return std::numeric_limits<double>::infinity();
    return 2.0 * q_hom / (q_hom - 2.0);
}

/// Local form: cell_volume-weighted stencil matrix of -L over interior nodes,
/// symmetric by construction via (M + M^T)/2.
inline Eigen::SparseMatrix<double> assemble_local_form(const Grid& grid, const DomainMask& mask) {
    const std::int64_t n_int = mask.interior_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n_int) * (2 * grid.dim + 9));

    auto add = [&](std::int64_t row_node, std::int64_t col_node, double value) {
        const std::int32_t c = mask.interior_index[col_node];
        if (c < 0) return; // Dirichlet elimination
        trips.emplace_back(mask.interior_index[row_node], c, value);
    };

    for (std::int64_t r = 0; r < n_int; ++r) {
        const std::int64_t node = mask.interior_nodes[r];
        if (grid.spec.kind == GroupKind::abelian) {
            for (int a = 0; a < grid.dim; ++a) {
                const double inv_h2 = 1.0 / (grid.h[a] * grid.h[a]);
                add(node, node, 2.0 * inv_h2);
                const std::int64_t plus = grid.neighbor(node, a, 1);
                const std::int64_t minus = grid.neighbor(node, a, -1);
                if (plus >= 0) add(node, plus, -inv_h2);
                if (minus >= 0) add(node, minus, -inv_h2);
            }
            continue;
        }
        const int n = grid.spec.param;
        const int t_axis = 2 * n;
        const auto p = grid.node(node);
        const double ht = grid.h[t_axis];
        for (int i = 0; i < n; ++i) {
            const int x_axis = i;
            const int y_axis = n + i;
            const double hx = grid.h[x_axis];
            const double hy = grid.h[y_axis];
            // -d^2/dx_i^2 and -d^2/dy_i^2
            for (int axis : {x_axis, y_axis}) {
                const double inv_h2 = 1.0 / (grid.h[axis] * grid.h[axis]);
                add(node, node, 2.0 * inv_h2);
                const std::int64_t plus = grid.neighbor(node, axis, 1);
                const std::int64_t minus = grid.neighbor(node, axis, -1);
                if (plus >= 0) add(node, plus, -inv_h2);
                if (minus >= 0) add(node, minus, -inv_h2);
            }
            // -((x_i^2 + y_i^2)/4) d^2/dt^2, coefficient frozen at the node
            const double ct = 0.25 * (p[x_axis] * p[x_axis] + p[y_axis] * p[y_axis]);
            if (ct != 0.0) {
                const double inv_ht2 = 1.0 / (ht * ht);
                add(node, node, 2.0 * ct * inv_ht2);
                const std::int64_t plus = grid.neighbor(node, t_axis, 1);
                const std::int64_t minus = grid.neighbor(node, t_axis, -1);
                if (plus >= 0) add(node, plus, -ct * inv_ht2);
                if (minus >= 0) add(node, minus, -ct * inv_ht2);
            }
            // cross terms (y_i d/dx_i - x_i d/dy_i) d/dt via 4-point stencils
            struct Cross {
                int axis;
                double coeff;
            };
            const Cross crosses[2] = {{x_axis, p[y_axis] / (4.0 * hx * ht)},
                                      {y_axis, -p[x_axis] / (4.0 * hy * ht)}};
            for (const auto& cr : crosses) {
                if (cr.coeff == 0.0) continue;
                for (int sa : {1, -1}) {
                    const std::int64_t mid = grid.neighbor(node, cr.axis, sa);
                    if (mid < 0) continue;
                    for (int st : {1, -1}) {
                        const std::int64_t corner = grid.neighbor(mid, t_axis, st);
                        if (corner < 0) continue;
                        add(node, corner, cr.coeff * sa * st);
                    }
                }
            }
        }
    }

    Eigen::SparseMatrix<double> m(n_int, n_int);
    m.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseMatrix<double> mt = m.transpose();
    Eigen::SparseMatrix<double> sym = 0.5 * (m + mt);
    sym *= grid.cell_volume;
    sym.makeCompressed();
    return sym;
}

/// Nonlocal part of the form over interior nodes. Dense matrix up to
/// `dense_limit` interior dofs, matrix-free (kernel recomputed rowwise, fixed
/// ascending reduction order) beyond that.
struct NonlocalPart {
    const Grid* grid = nullptr;
    const DomainMask* mask = nullptr;
    double s = 0.5;
    double cv2 = 0.0;
    bool dense = false;
    Eigen::MatrixXd matrix;  // interior x interior when dense
    Eigen::VectorXd diag;    // cv^2 * sum_{j != i, all nodes} w_ij

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        if (dense) return matrix * x;
        const std::int64_t n_int = mask->interior_count();
        Eigen::VectorXd y(n_int);
        const double kernel_exp = -(grid->spec.homogeneous_dim + 2.0 * s);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(detail::thread_count())
#endif
        for (std::int64_t r = 0; r < n_int; ++r) {
            const auto pr = grid->node(mask->interior_nodes[r]);
            double acc = diag[r] * x[r];
            for (std::int64_t c = 0; c < n_int; ++c) {
                if (c == r) continue;
                const double rho = gauge_of_left_difference(grid->spec, pr,
                                                            grid->node(mask->interior_nodes[c]));
                acc -= cv2 * std::pow(rho, kernel_exp) * x[c];
            }
            y[r] = acc;
        }
        return y;
    }
};

struct NonlocalAssembly {
    NonlocalPart op;
    Eigen::VectorXd tail; // nonnegative diagonal, exterior-interaction bound
};

inline NonlocalAssembly assemble_nonlocal_form(const Grid& grid, const DomainMask& mask, double s,
                                               bool with_tail = true,
                                               std::int64_t dense_limit = 5000) {
    if (!(s > 0.0 && s < 1.0))
        throw std::domain_error("assemble_nonlocal_form: s must lie in (0,1)");
    const std::int64_t n_int = mask.interior_count();
    NonlocalAssembly out;
    NonlocalPart& nl = out.op;
    nl.grid = &grid;
    nl.mask = &mask;
    nl.s = s;
    nl.cv2 = grid.cell_volume * grid.cell_volume;
    nl.dense = n_int <= dense_limit;
    nl.diag.resize(n_int);
    if (nl.dense) nl.matrix.setZero(n_int, n_int);

    const double kernel_exp = -(grid.spec.homogeneous_dim + 2.0 * s);
    const double cv2 = nl.cv2;

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(detail::thread_count())
#endif
    for (std::int64_t r = 0; r < n_int; ++r) {
        const std::int64_t node_r = mask.interior_nodes[r];
        const auto pr = grid.node(node_r);
        double row_sum = 0.0;
        for (std::int64_t j = 0; j < grid.node_count; ++j) {
            if (j == node_r) continue; // principal value: drop the singular cell
            const double rho = gauge_of_left_difference(grid.spec, pr, grid.node(j));
            const double w = std::pow(rho, kernel_exp);
            row_sum += w;
            if (nl.dense) {
                const std::int32_t c = mask.interior_index[j];
                if (c >= 0) nl.matrix(r, c) = -cv2 * w;
            }
        }
        nl.diag[r] = cv2 * row_sum;
        if (nl.dense) nl.matrix(r, r) = nl.diag[r];
    }

    out.tail = Eigen::VectorXd::Zero(n_int);
    if (with_tail) {
        const double omega_q = gauge_ball_volume(grid.spec);
        for (std::int64_t r = 0; r < n_int; ++r) {
            const double radius = gauge_distance_to_complement(grid, mask.interior_nodes[r]);
            out.tail[r] = grid.cell_volume * (omega_q / (2.0 * s)) * std::pow(radius, -2.0 * s);
        }
    }
    return out;
}

/// Symmetric positive-semidefinite discrete form realizing the operator A.
struct QuadraticForm {
    const Grid* grid = nullptr;
    const DomainMask* mask = nullptr;
    Eigen::SparseMatrix<double> local;
    NonlocalPart nonlocal;
    Eigen::VectorXd tail;
    bool has_nonlocal = false;
    double s = 0.5;
    double theta_loc = 1.0;
    double theta_nonloc = 1.0;

    std::int64_t interior_dim() const { return mask->interior_count(); }

    /// Riesz action on interior coefficient vectors.
    Eigen::VectorXd apply_interior(const Eigen::VectorXd& x) const {
        Eigen::VectorXd y = theta_loc * (local * x);
        if (has_nonlocal && theta_nonloc != 0.0)
            y += theta_nonloc * (nonlocal.apply(x) + tail.cwiseProduct(x));
        return y;
    }

    Eigen::VectorXd diagonal() const {
        Eigen::VectorXd d = theta_loc * local.diagonal();
        if (has_nonlocal && theta_nonloc != 0.0) d += theta_nonloc * (nonlocal.diag + tail);
        return d;
    }
};

/// Assemble the full form; the nonlocal part is skipped when theta_nonloc = 0.
inline QuadraticForm make_form(const Grid& grid, const DomainMask& mask, double s,
                               double theta_loc = 1.0, double theta_nonloc = 1.0,
                               std::int64_t dense_limit = 5000) {
    if (theta_loc < 0.0 || theta_nonloc < 0.0)
        throw std::domain_error("make_form: weights must be nonnegative");
    QuadraticForm form;
    form.grid = &grid;
    form.mask = &mask;
    form.s = s;
    form.theta_loc = theta_loc;
    form.theta_nonloc = theta_nonloc;
    form.local = assemble_local_form(grid, mask);
    if (theta_nonloc != 0.0) {
        NonlocalAssembly nl = assemble_nonlocal_form(grid, mask, s, true, dense_limit);
        form.nonlocal = std::move(nl.op);
        form.tail = std::move(nl.tail);
        form.has_nonlocal = true;
    } else {
        if (!(s > 0.0 && s < 1.0))
            throw std::domain_error("make_form: s must lie in (0,1)");
        form.tail = Eigen::VectorXd::Zero(mask.interior_count());
    }
    return form;
}

inline DiscreteFunction form_apply(const QuadraticForm& form, const DiscreteFunction& u) {
    const Eigen::VectorXd x = restrict_to_interior(*form.mask, u);
    return extend_from_interior(*form.grid, *form.mask, form.apply_interior(x));
}

/// Discrete X-energy <Au, u>; equals the discrete ||u||_X^2 at unit weights.
inline double form_energy(const QuadraticForm& form, const DiscreteFunction& u) {
    const Eigen::VectorXd x = restrict_to_interior(*form.mask, u);
    return x.dot(form.apply_interior(x));
}

namespace detail {

inline void check_exponent(const GroupSpec& spec, double q, const char* op) {
    const double two_star = critical_exponent(spec);
    if (!(q > 1.0) || !(q < two_star))
        throw std::domain_error(std::string(op) + ": q = " + std::to_string(q) +
                                " outside (1, 2*) with 2* = " + std::to_string(two_star));
}

/// Node sums for the L^q functional without the admissibility guard; the
/// guarded entry points below wrap these.
inline double lq_norm_unchecked(const Grid& grid, const Eigen::VectorXd& values, double q) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < values.size(); ++i) acc += std::pow(std::abs(values[i]), q);
    return std::pow(acc * grid.cell_volume, 1.0 / q);
}

} // namespace detail

inline double lq_norm(const Grid& grid, const DiscreteFunction& u, double q) {
    detail::check_exponent(grid.spec, q, "lq_norm");
    return detail::lq_norm_unchecked(grid, u.values, q);
}

/// Mass-weighted pairing: node-wise ||u||_q^{2-q} sgn(u_i) |u_i|^{q-1} h^dim,
/// so that u . B(u) = ||u||_q^2. Zero input maps to zero.
inline DiscreteFunction apply_B(const Grid& grid, const DiscreteFunction& u, double q) {
    detail::check_exponent(grid.spec, q, "apply_B");
    const double norm = detail::lq_norm_unchecked(grid, u.values, q);
    DiscreteFunction b{u.grid, Eigen::VectorXd::Zero(u.values.size())};
    if (norm == 0.0) return b;
    const double scale = std::pow(norm, 2.0 - q) * grid.cell_volume;
    for (std::int64_t i = 0; i < u.values.size(); ++i) {
        const double v = u.values[i];
        if (v != 0.0) b.values[i] = scale * std::copysign(std::pow(std::abs(v), q - 1.0), v);
    }
    return b;
}

} // namespace carnot
