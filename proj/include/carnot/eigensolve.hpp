#pragma once

// First eigenpair of the discrete (2,q)-problem by inverse iteration with
// Rayleigh-quotient tracking, a Jacobi-preconditioned conjugate-gradient
// linear solver, and a dense symmetric oracle for the q = 2 case.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "carnot/errors.hpp"
#include "carnot/forms.hpp"
#include "carnot/grid.hpp"

namespace carnot {

struct Eigenpair {
    double mu = 0.0;
    DiscreteFunction w;
    double q = 2.0;
    bool converged = false;
};

struct IterationTrace {
    std::vector<double> mu_sequence;  // mu_0, mu_1, ...
    std::vector<double> residuals;    // ||A w_j - mu_j B(w_j)||_2, aligned with mu_sequence
    std::vector<double> lq_growth;    // ||v||_q before renormalization
    int iterations = 0;
    double final_residual = 0.0;      // ||A w - mu B(w)||_2
    double min_iterate_value = 0.0;   // most negative node value seen across iterates
};

inline double rayleigh_quotient(const QuadraticForm& form, const DiscreteFunction& u, double q) {
    const double norm = lq_norm(*form.grid, u, q);
    if (norm == 0.0) throw std::domain_error("rayleigh_quotient: u must be nonzero");
    return form_energy(form, u) / (norm * norm);
}

/// Jacobi-preconditioned CG on the interior space. Terminates when the
/// relative residual ||Ax - b||_2 / ||b||_2 drops below tol.
inline DiscreteFunction cg_solve(const QuadraticForm& form, const DiscreteFunction& b, double tol,
                                 int max_iter, const DiscreteFunction* x0 = nullptr) {
    const Grid& grid = *form.grid;
    const DomainMask& mask = *form.mask;
    const Eigen::VectorXd rhs = restrict_to_interior(mask, b);
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return zero_function(grid);

    Eigen::VectorXd x = x0 ? restrict_to_interior(mask, *x0)
                           : Eigen::VectorXd::Zero(mask.interior_count());
    const Eigen::VectorXd inv_diag = form.diagonal().cwiseInverse();
    Eigen::VectorXd r = rhs - form.apply_interior(x);
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    double rel_residual = r.norm() / rhs_norm;
    for (int it = 0; it < max_iter && rel_residual > tol; ++it) {
        const Eigen::VectorXd ap = form.apply_interior(p);
        const double p_ap = p.dot(ap);
        if (!(p_ap > 0.0))
            throw convergence_error("cg_solve: operator not positive definite on search direction",
                                    rel_residual);
        const double alpha = rz / p_ap;
        x += alpha * p;
        r -= alpha * ap;
        rel_residual = r.norm() / rhs_norm;
        z = inv_diag.cwiseProduct(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    if (rel_residual > tol)
        throw convergence_error("cg_solve: tolerance not reached in " + std::to_string(max_iter) +
                                    " iterations",
                                rel_residual);
    return extend_from_interior(grid, mask, x);
}

struct InverseIterationResult {
    Eigenpair pair;
    IterationTrace trace;
};

/// Inverse iteration: solve A v = B(w_j), renormalize in L^q, track the
/// Rayleigh values mu_j. Stops on relative mu stagnation combined with a
/// small eigen-residual.
inline InverseIterationResult inverse_iteration(const QuadraticForm& form, double q,
                                                const DiscreteFunction& w0, double tol = 1e-10,
                                                int max_iter = 500) {
    const Grid& grid = *form.grid;
    const DomainMask& mask = *form.mask;
    if (w0.values.size() != grid.node_count)
        throw std::invalid_argument("inverse_iteration: start does not match grid");
    if (w0.values.minCoeff() < 0.0)
        throw std::invalid_argument("inverse_iteration: start must be nonnegative");

    const double start_norm = lq_norm(grid, w0, q);
    if (start_norm == 0.0) throw std::invalid_argument("inverse_iteration: start must be nonzero");

    DiscreteFunction w{&grid, w0.values / start_norm};
    const double cg_tol = std::min(1e-12, 0.01 * tol);
    const int cg_max = std::max<int>(2000, static_cast<int>(mask.interior_count()));

    IterationTrace trace;
    trace.min_iterate_value = w.values.minCoeff();

    auto eigen_residual = [&](const DiscreteFunction& iterate, double value) {
        const Eigen::VectorXd aw = form.apply_interior(restrict_to_interior(mask, iterate));
        const Eigen::VectorXd bw = restrict_to_interior(mask, apply_B(grid, iterate, q));
        return std::pair<double, double>{(aw - value * bw).norm(), bw.norm()};
    };

    double mu = rayleigh_quotient(form, w, q);
    trace.mu_sequence.push_back(mu);
    trace.residuals.push_back(eigen_residual(w, mu).first);
    trace.final_residual = trace.residuals.back();

    Eigenpair pair;
    pair.q = q;
    DiscreteFunction v = w; // warm-start carrier
    for (int it = 0; it < max_iter; ++it) {
        const DiscreteFunction b = apply_B(grid, w, q);
        v.values = w.values / mu;
        v = cg_solve(form, b, cg_tol, cg_max, &v);
        const double growth = lq_norm(grid, v, q);
        trace.lq_growth.push_back(growth);
        w.values = v.values / growth;
        trace.min_iterate_value = std::min(trace.min_iterate_value, w.values.minCoeff());

        const double mu_next = form_energy(form, w);
        trace.mu_sequence.push_back(mu_next);
        trace.iterations = it + 1;

        const auto [residual, b_norm] = eigen_residual(w, mu_next);
        trace.residuals.push_back(residual);
        trace.final_residual = residual;

        const bool mu_settled = std::abs(mu_next - mu) <= tol * std::abs(mu);
        const bool residual_small = residual <= tol * mu_next * b_norm;
        mu = mu_next;
        if (mu_settled && residual_small) {
            pair.converged = true;
            break;
        }
    }
    pair.mu = mu;
    pair.w = w;
    return {std::move(pair), std::move(trace)};
}

/// Start iterate used when none is supplied: L^q-normalized interior indicator.
inline DiscreteFunction interior_indicator(const Grid& grid, const DomainMask& mask) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.node_count);
    for (std::int64_t idx : mask.interior_nodes) v[idx] = 1.0;
    return {&grid, std::move(v)};
}

inline InverseIterationResult inverse_iteration(const QuadraticForm& form, double q,
                                                double tol = 1e-10, int max_iter = 500) {
    const DiscreteFunction w0 = interior_indicator(*form.grid, *form.mask);
    return inverse_iteration(form, q, w0, tol, max_iter);
}

struct DenseEigenResult {
    double lambda = 0.0;
    DiscreteFunction w;
};

/// Smallest eigenpair of A u = lambda * cell_volume * u by a dense symmetric
/// solve; the q = 2 oracle. Guarded to small interior dimensions.
inline DenseEigenResult dense_smallest_eigenpair(const QuadraticForm& form,
                                                 std::int64_t dim_guard = 5000) {
    const std::int64_t n = form.interior_dim();
    if (n > dim_guard)
        throw config_error("dense_smallest_eigenpair: interior dimension " + std::to_string(n) +
                           " exceeds guard " + std::to_string(dim_guard));
    Eigen::MatrixXd k = form.theta_loc * Eigen::MatrixXd(form.local);
    if (form.has_nonlocal && form.theta_nonloc != 0.0) {
        if (!form.nonlocal.dense)
            throw config_error("dense_smallest_eigenpair: nonlocal part is matrix-free");
        k += form.theta_nonloc * form.nonlocal.matrix;
        k += form.theta_nonloc * Eigen::MatrixXd(form.tail.asDiagonal());
    }
    k = 0.5 * (k + k.transpose().eval());
    k /= form.grid->cell_volume;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
    if (solver.info() != Eigen::Success)
        throw convergence_error("dense_smallest_eigenpair: eigensolver failed", 0.0);
    const double lambda = solver.eigenvalues()[0];
    Eigen::VectorXd phi = solver.eigenvectors().col(0);
    // L^2 normalization and a deterministic sign convention
    phi /= phi.norm() * std::sqrt(form.grid->cell_volume);
    std::int64_t arg_max = 0;
    phi.cwiseAbs().maxCoeff(&arg_max);
    if (phi[arg_max] < 0.0) phi = -phi;
    return {lambda, extend_from_interior(*form.grid, *form.mask, phi)};
}

struct SimplicityReport {
    double max_misalignment = 0.0; // max over pairs of min_c ||w_a - c w_b|| / ||w_a||
    int trials = 0;
    std::vector<double> mus;
};

/// Run inverse iteration from several distinct positive random starts and
/// measure how far the limits are from scalar multiples of each other.
inline SimplicityReport simplicity_check(const QuadraticForm& form, double q, int trials,
                                         double tol = 1e-10, int max_iter = 500,
                                         std::uint64_t seed = 0x5eedu) {
    if (trials < 2) throw std::invalid_argument("simplicity_check: need at least 2 trials");
    const Grid& grid = *form.grid;
    const DomainMask& mask = *form.mask;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> positive(0.1, 1.1);

    SimplicityReport report;
    report.trials = trials;
    std::vector<Eigen::VectorXd> limits;
    for (int t = 0; t < trials; ++t) {
        Eigen::VectorXd start = Eigen::VectorXd::Zero(grid.node_count);
        for (std::int64_t idx : mask.interior_nodes) start[idx] = positive(rng);
        const auto res = inverse_iteration(form, q, DiscreteFunction{&grid, std::move(start)}, tol,
                                           max_iter);
        limits.push_back(restrict_to_interior(mask, res.pair.w));
        report.mus.push_back(res.pair.mu);
    }
    for (std::size_t a = 0; a < limits.size(); ++a) {
        for (std::size_t b = a + 1; b < limits.size(); ++b) {
            const double c = limits[a].dot(limits[b]) / limits[b].squaredNorm();
            const double mis = (limits[a] - c * limits[b]).norm() / limits[a].norm();
            report.max_misalignment = std::max(report.max_misalignment, mis);
        }
    }
    return report;
}

} // namespace carnot
