#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

#include "carnot/eigensolve.hpp"
#include "carnot/forms.hpp"
#include "carnot/grid.hpp"

using namespace carnot;
using Catch::Approx;

namespace {

std::vector<std::pair<double, double>> unit_box(int dim) {
    return std::vector<std::pair<double, double>>(dim, {0.0, 1.0});
}

std::vector<std::pair<double, double>> symmetric_box(int dim) {
    return std::vector<std::pair<double, double>>(dim, {-1.0, 1.0});
}

DiscreteFunction random_interior(const Grid& grid, const DomainMask& mask, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.node_count);
    for (std::int64_t idx : mask.interior_nodes) v[idx] = dist(rng);
    return {&grid, std::move(v)};
}

/// Independent energy route: explicit pairwise Gagliardo sum with tail plus an
/// entrywise sparse quadratic form; no matrix-vector products involved.
double difference_form_energy(const Grid& grid, const DomainMask& mask, const QuadraticForm& form,
                              const DiscreteFunction& u) {
    double local = 0.0;
    for (int col = 0; col < form.local.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(form.local, col); it; ++it) {
            const std::int64_t ni = mask.interior_nodes[it.row()];
            const std::int64_t nj = mask.interior_nodes[it.col()];
            local += it.value() * u.values[ni] * u.values[nj];
        }
    }
    double nonlocal = 0.0;
    if (form.has_nonlocal) {
        const double kernel_exp = -(grid.spec.homogeneous_dim + 2.0 * form.s);
        const double cv2 = grid.cell_volume * grid.cell_volume;
        for (std::int64_t i = 0; i < grid.node_count; ++i) {
            for (std::int64_t j = 0; j < grid.node_count; ++j) {
                if (i == j) continue;
                const double diff = u.values[i] - u.values[j];
                if (diff == 0.0) continue;
                const double rho = gauge_of_left_difference(grid.spec, grid.node(i), grid.node(j));
                nonlocal += 0.5 * cv2 * std::pow(rho, kernel_exp) * diff * diff;
            }
        }
        for (std::int64_t k = 0; k < mask.interior_count(); ++k) {
            const double v = u.values[mask.interior_nodes[k]];
            nonlocal += form.tail[k] * v * v;
        }
    }
    return form.theta_loc * local + form.theta_nonloc * nonlocal;
}

/// Direct quadrature of the exterior kernel integral over a large shell; the
/// reference for the closed-form tail bound's ordering between nodes.
double exterior_integral_oracle(const Grid& grid, std::int64_t node, double s, double shell_half,
                                int cells) {
    const double kernel_exp = -(grid.spec.homogeneous_dim + 2.0 * s);
    const auto x = grid.node(node);
    const double step = 2.0 * shell_half / cells;
    double acc = 0.0;
    std::vector<double> y(grid.dim);
    std::vector<int> k(grid.dim, 0);
    while (true) {
        bool inside_box = true;
        for (int a = 0; a < grid.dim; ++a) {
            y[a] = -shell_half + (k[a] + 0.5) * step;
            if (y[a] < grid.bounds[a].first || y[a] > grid.bounds[a].second) inside_box = false;
        }
        if (!inside_box) {
            const double rho = gauge_of_left_difference(grid.spec, x, y);
            acc += std::pow(rho, kernel_exp);
        }
        int a = grid.dim - 1;
        for (; a >= 0; --a) {
            if (++k[a] < cells) break;
            k[a] = 0;
        }
        if (a < 0) break;
    }
    return acc * std::pow(step, grid.dim);
}

} // namespace

TEST_CASE("build_grid counts and classification") {
    const auto gm1 = build_grid(GroupSpec::abelian(1), unit_box(1), 4);
    CHECK(gm1.grid.node_count == 5);
    CHECK(gm1.mask.interior_count() == 3);
    CHECK(gm1.grid.h[0] == Approx(0.25));
    CHECK(gm1.grid.cell_volume == Approx(0.25));

    const auto gm3 = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 8);
    CHECK(gm3.grid.node_count == 729);
    CHECK(gm3.mask.interior_count() == 343);

    CHECK_THROWS_AS(build_grid(GroupSpec::abelian(1), unit_box(1), 2), config_error);
    CHECK_THROWS_AS(build_grid(GroupSpec::abelian(2), {{0.0, 0.0}, {0.0, 1.0}}, 8), config_error);

    // every node is exactly one class, and coordinates follow the affine map
    const Grid& g = gm1.grid;
    for (std::int64_t i = 0; i < g.node_count; ++i)
        CHECK(g.node(i)[0] == Approx(0.25 * static_cast<double>(i)).margin(1e-15));
}

TEST_CASE("node quadratures") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(1), unit_box(1), 4);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.node_count);
    CHECK(integrate_trapezoid(grid, ones) == Approx(1.0).epsilon(1e-14));
    Eigen::VectorXd linear(grid.node_count);
    for (std::int64_t i = 0; i < grid.node_count; ++i) linear[i] = grid.node(i)[0];
    CHECK(integrate_trapezoid(grid, linear) == Approx(0.5).epsilon(1e-14));
}

TEST_CASE("grid calculus is exact on quadratic polynomials") {
    // u = x^2 y + t^2: centered differences are exact per axis for degree 2
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 8);
    Eigen::VectorXd u(grid.node_count);
    for (std::int64_t i = 0; i < grid.node_count; ++i) {
        const auto p = grid.node(i);
        u[i] = p[0] * p[0] * p[1] + p[2] * p[2];
    }
    std::vector<int> multi(grid.dim);
    for (std::int64_t i = 0; i < grid.node_count; ++i) {
        grid.multi_index(i, multi);
        bool deep = true; // full stencil inside the box
        for (int a = 0; a < grid.dim; ++a)
            if (multi[a] < 1 || multi[a] > grid.n_per_axis - 1) deep = false;
        if (!deep) continue;
        const auto p = grid.node(i);
        const double x = p[0], y = p[1], t = p[2];
        // X u = d_x u - (y/2) d_t u, Y u = d_y u + (x/2) d_t u
        const double xu = 2.0 * x * y - 0.5 * y * 2.0 * t;
        const double yu = x * x + 0.5 * x * 2.0 * t;
        const double zu = x * (2.0 * x * y) + y * (x * x) + 2.0 * t * (2.0 * t);
        REQUIRE(field_derivative(grid, u, i, FieldId::X(0)) == Approx(xu).margin(1e-12));
        REQUIRE(field_derivative(grid, u, i, FieldId::Y(0)) == Approx(yu).margin(1e-12));
        REQUIRE(field_derivative(grid, u, i, FieldId::dilation_generator()) ==
                Approx(zu).margin(1e-12));
        REQUIRE(horizontal_gradient_sq(grid, u, i) == Approx(xu * xu + yu * yu).margin(1e-11));
    }
}

TEST_CASE("gauge distance to the box complement") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 8);
    std::vector<int> center_multi = {4, 4, 4};
    const std::int64_t center = grid.flat_index(center_multi);
    CHECK(gauge_distance_to_complement(grid, center) == Approx(1.0));
    std::vector<int> off = {6, 4, 7}; // x = 0.5, t = 0.75
    const std::int64_t node = grid.flat_index(off);
    CHECK(gauge_distance_to_complement(grid, node) == Approx(0.5));

    // vertical distance enters through its square root
    std::vector<int> vertical = {4, 4, 7}; // (0, 0, 0.75)
    CHECK(gauge_distance_to_complement(grid, grid.flat_index(vertical)) ==
          Approx(std::sqrt(0.25)));
}

TEST_CASE("1d local stencil is the classical 3-point Laplacian") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(1), unit_box(1), 4);
    const auto local = assemble_local_form(grid, mask);
    const double h = grid.h[0];
    const double scale = grid.cell_volume / (h * h); // Haar-weighted stencil
    const Eigen::MatrixXd dense(local);
    REQUIRE(dense.rows() == 3);
    CHECK(dense(1, 0) == Approx(-scale));
    CHECK(dense(1, 1) == Approx(2.0 * scale));
    CHECK(dense(1, 2) == Approx(-scale));
}

TEST_CASE("second differences annihilate affine functions") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(1), unit_box(1), 8);
    const auto local = assemble_local_form(grid, mask);
    Eigen::VectorXd v(mask.interior_count());
    for (std::int64_t k = 0; k < mask.interior_count(); ++k)
        v[k] = grid.node(mask.interior_nodes[k])[0];
    const Eigen::VectorXd lv = local * v;
    // rows whose whole stencil is interior see the affine function exactly
    for (std::int64_t k = 1; k + 1 < mask.interior_count(); ++k) CHECK(lv[k] == 0.0);
}

TEST_CASE("1d smallest stencil eigenvalue matches the analytic formula") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(1), unit_box(1), 16);
    const auto local = assemble_local_form(grid, mask);
    const Eigen::MatrixXd dense = Eigen::MatrixXd(local) / grid.cell_volume;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    const double h = grid.h[0];
    const double expected = (2.0 / (h * h)) * (1.0 - std::cos(M_PI * h));
    CHECK(solver.eigenvalues()[0] == Approx(expected).epsilon(1e-10));
}

namespace {

// C^3 bump profile and its derivatives, for manufactured-solution tests
double prof(double s) { return std::abs(s) < 0.5 ? std::pow(std::cos(M_PI * s), 4) : 0.0; }
double prof_d(double s) {
    if (std::abs(s) >= 0.5) return 0.0;
    const double c = std::cos(M_PI * s), si = std::sin(M_PI * s);
    return -4.0 * M_PI * c * c * c * si;
}
double prof_dd(double s) {
    if (std::abs(s) >= 0.5) return 0.0;
    const double c = std::cos(M_PI * s), si = std::sin(M_PI * s);
    return 4.0 * M_PI * M_PI * c * c * (3.0 * si * si - c * c);
}

} // namespace

TEST_CASE("sub-Laplacian stencil converges at second order") {
    // solve -L v = -L u_exact for a smooth compactly supported u_exact and
    // watch the sup error; exercises the cross-derivative terms
    std::vector<double> errors;
    for (int n : {8, 16, 24}) {
        const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), n);
        QuadraticForm form;
        form.grid = &grid;
        form.mask = &mask;
        form.local = assemble_local_form(grid, mask);
        form.tail = Eigen::VectorXd::Zero(mask.interior_count());
        form.has_nonlocal = false;
        form.theta_nonloc = 0.0;

        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(grid.node_count);
        Eigen::VectorXd exact = Eigen::VectorXd::Zero(grid.node_count);
        for (std::int64_t idx : mask.interior_nodes) {
            const auto p = grid.node(idx);
            const double x = p[0], y = p[1], t = p[2];
            const double lap = prof_dd(x) * prof(y) * prof(t) +
                               prof(x) * prof_dd(y) * prof(t) +
                               0.25 * (x * x + y * y) * prof(x) * prof(y) * prof_dd(t) +
                               x * prof(x) * prof_d(y) * prof_d(t) -
                               y * prof_d(x) * prof(y) * prof_d(t);
            rhs[idx] = -grid.cell_volume * lap;
            exact[idx] = prof(x) * prof(y) * prof(t);
        }
        const DiscreteFunction v = cg_solve(form, DiscreteFunction{&grid, rhs}, 1e-12, 20000);
        errors.push_back((v.values - exact).cwiseAbs().maxCoeff());
    }
    const double order_coarse = std::log(errors[0] / errors[1]) / std::log(2.0);
    const double order_fine = std::log(errors[1] / errors[2]) / std::log(1.5);
    INFO("sup errors: " << errors[0] << ", " << errors[1] << ", " << errors[2]);
    CHECK(order_coarse >= 1.8);
    CHECK(order_fine >= 1.8);
    CHECK(errors[2] < 0.05);
}

TEST_CASE("nonlocal rejects s outside (0,1)") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(1), unit_box(1), 4);
    CHECK_THROWS_AS(assemble_nonlocal_form(grid, mask, 0.0), std::domain_error);
    CHECK_THROWS_AS(assemble_nonlocal_form(grid, mask, 1.0), std::domain_error);
    CHECK_THROWS_AS(assemble_nonlocal_form(grid, mask, -0.5), std::domain_error);
}

TEST_CASE("nonlocal matrix is exactly symmetric with negative off-diagonals") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 6);
    const auto nl = assemble_nonlocal_form(grid, mask, 0.5);
    REQUIRE(nl.op.dense);
    const Eigen::MatrixXd& m = nl.op.matrix;
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (std::int64_t i = 0; i < m.rows(); ++i) {
        for (std::int64_t j = 0; j < m.cols(); ++j) {
            if (i == j) continue;
            CHECK(m(i, j) < 0.0);
        }
        CHECK(nl.tail[i] > 0.0);
    }
}

TEST_CASE("constant vector has zero pair energy on an all-interior mask") {
    const auto built = build_grid(GroupSpec::abelian(2), unit_box(2), 4);
    const Grid& grid = built.grid;
    DomainMask everything;
    everything.klass.assign(grid.node_count, DomainMask::NodeClass::interior);
    everything.interior_index.resize(grid.node_count);
    for (std::int64_t i = 0; i < grid.node_count; ++i) {
        everything.interior_index[i] = static_cast<std::int32_t>(i);
        everything.interior_nodes.push_back(i);
    }
    const auto nl = assemble_nonlocal_form(grid, everything, 0.5, /*with_tail=*/false);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.node_count);
    const double energy = ones.dot(nl.op.apply(ones));
    const double scale = nl.op.diag.sum();
    CHECK(std::abs(energy) <= 1e-12 * scale);
}

TEST_CASE("tail bound grows towards the corner and tracks the exterior integral") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 8);
    const auto nl = assemble_nonlocal_form(grid, mask, 0.5);
    std::vector<int> center_multi = {4, 4, 4};
    std::vector<int> corner_multi = {1, 1, 1}; // corner-adjacent interior node
    const std::int64_t center = grid.flat_index(center_multi);
    const std::int64_t corner = grid.flat_index(corner_multi);
    const double tail_center = nl.tail[mask.interior_index[center]];
    const double tail_corner = nl.tail[mask.interior_index[corner]];
    CHECK(tail_center > 0.0);
    CHECK(tail_center < tail_corner);

    // the directly integrated exterior contribution orders the same way
    const double oracle_center = exterior_integral_oracle(grid, center, 0.5, 4.0, 96);
    const double oracle_corner = exterior_integral_oracle(grid, corner, 0.5, 4.0, 96);
    CHECK(oracle_center < oracle_corner);
}

TEST_CASE("kernel weights scale like delta^{-(Q+2s)} under dilations") {
    const GroupSpec h1 = GroupSpec::heisenberg(1);
    const double s = 0.37;
    const double exponent = h1.homogeneous_dim + 2.0 * s;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    std::uniform_real_distribution<double> deltas(0.2, 5.0);
    for (int k = 0; k < 200; ++k) {
        GroupPoint x = {coord(rng), coord(rng), coord(rng)};
        GroupPoint y = {coord(rng), coord(rng), coord(rng)};
        const double delta = deltas(rng);
        const double w = std::pow(gauge_of_left_difference(h1, x, y), -exponent);
        const double w_dilated = std::pow(
            gauge_of_left_difference(h1, dilate(h1, delta, x), dilate(h1, delta, y)), -exponent);
        REQUIRE(w_dilated == Approx(std::pow(delta, -exponent) * w).epsilon(1e-12));
    }
}

TEST_CASE("form energy equals the difference-form route") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 5);
    const QuadraticForm form = make_form(grid, mask, 0.5);
    std::mt19937_64 rng(37);
    for (int k = 0; k < 100; ++k) {
        const DiscreteFunction u = random_interior(grid, mask, rng);
        const double via_apply = form_energy(form, u);
        const double via_pairs = difference_form_energy(grid, mask, form, u);
        REQUIRE(via_apply == Approx(via_pairs).epsilon(1e-12));
    }
}

TEST_CASE("assembled form is symmetric positive semidefinite and monotone") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 6);
    const QuadraticForm form = make_form(grid, mask, 0.5);

    // full matrix symmetry, entry for entry
    Eigen::MatrixXd full = form.theta_loc * Eigen::MatrixXd(form.local);
    full += form.theta_nonloc * form.nonlocal.matrix;
    full += form.theta_nonloc * Eigen::MatrixXd(form.tail.asDiagonal());
    CHECK((full - full.transpose()).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(41);
    for (int k = 0; k < 100; ++k) {
        const DiscreteFunction u = random_interior(grid, mask, rng);
        const DiscreteFunction v = random_interior(grid, mask, rng);
        const double eu = form_energy(form, u);
        const double ev = form_energy(form, v);
        REQUIRE(eu >= -1e-12 * u.values.squaredNorm());

        // monotonicity pairing equals the energy of the difference
        const Eigen::VectorXd iu = restrict_to_interior(mask, u);
        const Eigen::VectorXd iv = restrict_to_interior(mask, v);
        const double pairing =
            (form.apply_interior(iu) - form.apply_interior(iv)).dot(iu - iv);
        DiscreteFunction diff{&grid, u.values - v.values};
        REQUIRE(pairing >= -1e-12);
        REQUIRE(pairing == Approx(form_energy(form, diff)).epsilon(1e-11));

        // Cauchy-Schwarz boundedness in the form inner product
        const double cross = std::abs(form.apply_interior(iu).dot(iv));
        REQUIRE(cross <= std::sqrt(eu) * std::sqrt(ev) + 1e-12);
    }
}

TEST_CASE("form energy scales quadratically and vanishes at zero") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 5);
    const QuadraticForm form = make_form(grid, mask, 0.25);
    CHECK(form_energy(form, zero_function(grid)) == 0.0);
    std::mt19937_64 rng(43);
    const DiscreteFunction u = random_interior(grid, mask, rng);
    DiscreteFunction cu{&grid, 3.0 * u.values};
    CHECK(form_energy(form, cu) == Approx(9.0 * form_energy(form, u)).epsilon(1e-13));

    // Riesz action consistency: u . apply(u) is the energy by definition
    const DiscreteFunction au = form_apply(form, u);
    CHECK(u.values.dot(au.values) == Approx(form_energy(form, u)).epsilon(1e-15));
}

TEST_CASE("lq functional and the pairing B") {
    const auto [grid, mask] = build_grid(GroupSpec::heisenberg(1), symmetric_box(3), 5);
    std::mt19937_64 rng(47);
    const DiscreteFunction u = random_interior(grid, mask, rng);

    for (double q : {1.5, 3.0}) {
        const DiscreteFunction b = apply_B(grid, u, q);
        const double pairing = u.values.dot(b.values);
        const double norm = lq_norm(grid, u, q);
        REQUIRE(pairing == Approx(norm * norm).epsilon(1e-13));
    }

    // q = 2 reduces to plain mass scaling
    const DiscreteFunction b2 = apply_B(grid, u, 2.0);
    for (std::int64_t i = 0; i < grid.node_count; ++i)
        REQUIRE(b2.values[i] == Approx(grid.cell_volume * u.values[i]).margin(1e-15));

    // condition (C): 2* = 4 on H^1
    CHECK_THROWS_AS(lq_norm(grid, u, 4.0), std::domain_error);
    CHECK_NOTHROW(lq_norm(grid, u, 3.99));
    CHECK_THROWS_AS(lq_norm(grid, u, 1.0), std::domain_error);

    // zero input maps to the zero vector for q < 2
    const DiscreteFunction zero = zero_function(grid);
    CHECK(apply_B(grid, zero, 1.5).values.cwiseAbs().maxCoeff() == 0.0);

    // low-dimensional abelian groups have no critical exponent
    const auto [g1, m1] = build_grid(GroupSpec::abelian(1), unit_box(1), 8);
    DiscreteFunction w = zero_function(g1);
    w.values[4] = 1.0;
    CHECK_NOTHROW(lq_norm(g1, w, 5.0));
}

TEST_CASE("form operations reject functions from another grid") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(2), unit_box(2), 6);
    const auto other = build_grid(GroupSpec::abelian(2), unit_box(2), 8);
    const QuadraticForm form = make_form(grid, mask, 0.5, 1.0, 0.0);
    const DiscreteFunction stranger = zero_function(other.grid);
    CHECK_THROWS_AS(form_apply(form, stranger), std::invalid_argument);
    CHECK_THROWS_AS(form_energy(form, stranger), std::invalid_argument);
}

TEST_CASE("theta weights select the parts") {
    const auto [grid, mask] = build_grid(GroupSpec::abelian(2), unit_box(2), 6);
    const QuadraticForm both = make_form(grid, mask, 0.5, 1.0, 1.0);
    const QuadraticForm local_only = make_form(grid, mask, 0.5, 1.0, 0.0);
    const QuadraticForm nonlocal_only = make_form(grid, mask, 0.5, 0.0, 1.0);
    std::mt19937_64 rng(53);
    const DiscreteFunction u = random_interior(grid, mask, rng);
    CHECK(form_energy(both, u) ==
          Approx(form_energy(local_only, u) + form_energy(nonlocal_only, u)).epsilon(1e-12));
    CHECK_FALSE(local_only.has_nonlocal);
}
