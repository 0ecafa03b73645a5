#pragma once

// Configuration-driven experiment runner: assembly -> eigensolve -> checks,
// with deterministic CSV artifacts and a short summary table.
//
// CSV contract: UTF-8, comma separators, '.' decimal point, LF line endings,
// header row first. Reals are printed with printf format "%.16e" (17
// significant digits); integer-valued columns are printed as plain integers.
// Identical config + seed reproduces every file byte for byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "carnot/config.hpp"
#include "carnot/eigensolve.hpp"
#include "carnot/errors.hpp"
#include "carnot/verify.hpp"

namespace carnot {

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

inline std::string csv_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

inline std::string csv_int(long long v) { return std::to_string(v); }

/// Write one CSV file; rows must be rectangular.
inline void emit_csv(const std::filesystem::path& file, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
    for (const auto& row : rows)
        if (row.size() != header.size())
            throw std::invalid_argument("emit_csv: row width does not match header");
    std::ofstream out(file, std::ios::binary); // binary: LF endings everywhere
    if (!out) throw io_error("emit_csv: cannot open " + file.string());
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "");
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "");
        out << '\n';
    }
    out.flush();
    if (!out) throw io_error("emit_csv: write failed for " + file.string());
}

struct ExperimentResult {
    int exit_code = 0;
    Eigenpair pair;
    IterationTrace trace;
    std::map<CheckKind, bool> check_passed;
};

namespace detail {

inline void write_convergence_csv(const std::filesystem::path& dir, const IterationTrace& trace) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < trace.mu_sequence.size(); ++j) {
        const double growth = j == 0 ? 1.0 : trace.lq_growth[j - 1];
        rows.push_back({csv_int(static_cast<long long>(j)), csv_real(trace.mu_sequence[j]),
                        csv_real(trace.residuals[j]), csv_real(growth)});
    }
    emit_csv(dir / "convergence.csv", {"iter", "mu", "residual", "lq_growth"}, rows);
}

inline void write_eigenpair_csv(const std::filesystem::path& dir, const Grid& grid,
                                const DiscreteFunction& w) {
    std::vector<std::string> header = {"node_index"};
    for (int a = 0; a < grid.dim; ++a) header.push_back("x" + std::to_string(a));
    header.push_back("value");
    std::vector<std::vector<std::string>> rows;
    rows.reserve(grid.node_count);
    for (std::int64_t idx = 0; idx < grid.node_count; ++idx) {
        std::vector<std::string> row = {csv_int(idx)};
        const auto p = grid.node(idx);
        for (int a = 0; a < grid.dim; ++a) row.push_back(csv_real(p[a]));
        row.push_back(csv_real(w.values[idx]));
        rows.push_back(std::move(row));
    }
    emit_csv(dir / "eigenpair.csv", header, rows);
}

} // namespace detail

/// Run the full pipeline for one configuration. Returns the exit status
/// contract: 0 all good, 1 a requested check failed, 2 solver non-convergence
/// (partial artifacts), 3 I/O failure.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::ostream& summary = std::cout) {
    cfg.validate();
    ExperimentResult result;
    const std::filesystem::path dir(cfg.output_dir);
    try {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw io_error("cannot create output directory " + dir.string());

        const GroupSpec spec = cfg.spec();
        const GridAndMask gm = build_grid(spec, cfg.bounds(), cfg.n);
        const Grid& grid = gm.grid;
        const DomainMask& mask = gm.mask;
        const QuadraticForm form = make_form(grid, mask, cfg.s, cfg.theta_loc, cfg.theta_nonloc);

        bool solver_failed = false;
        try {
            auto res = inverse_iteration(form, cfg.q, cfg.tol, cfg.max_iter);
            result.pair = std::move(res.pair);
            result.trace = std::move(res.trace);
        } catch (const convergence_error& err) {
            summary << "solver error: " << err.what() << "\n";
            solver_failed = true;
        }

        detail::write_convergence_csv(dir, result.trace);
        detail::write_eigenpair_csv(dir, grid, result.pair.w.values.size() == grid.node_count
                                                  ? result.pair.w
                                                  : zero_function(grid));

        if (solver_failed || !result.pair.converged) {
            summary << "mu = " << csv_real(result.pair.mu)
                    << "  iterations = " << result.trace.iterations << "  converged = no\n";
            result.exit_code = 2;
            result.pair.w.grid = nullptr;
            return result;
        }
        summary << "mu = " << csv_real(result.pair.mu)
                << "  iterations = " << result.trace.iterations << "  converged = yes\n";

        bool all_passed = true;
        for (CheckKind kind : cfg.checks) {
            bool passed = false;
            std::string note;
            try {
            switch (kind) {
            case CheckKind::operators: {
                const auto report = operator_property_suite(form, 100, cfg.seed + 1);
                std::vector<std::vector<std::string>> rows;
                for (const auto& row : report.rows)
                    rows.push_back({csv_int(row.trial), csv_real(row.coercivity_margin),
                                    csv_real(row.monotonicity_margin),
                                    csv_real(row.cauchy_schwarz_margin)});
                emit_csv(dir / "operators.csv",
                         {"trial", "coercivity_margin", "monotonicity_margin", "cs_margin"}, rows);
                passed = report.worst_coercivity == 0.0 && report.worst_monotonicity >= -1e-12 &&
                         report.worst_cauchy_schwarz >= -1e-12;
                break;
            }
            case CheckKind::pohozaev: {
                const auto report = pohozaev_residual(result.pair, form, grid, mask);
                emit_csv(dir / "pohozaev.csv",
                         {"term_G", "term_grad", "term_frac_A", "term_frac_B", "term_boundary",
                          "residual_A", "residual_B"},
                         {{csv_real(report.term_G), csv_real(report.term_grad),
                           csv_real(report.term_frac_A), csv_real(report.term_frac_B),
                           csv_real(report.term_boundary), csv_real(report.residual_A),
                           csv_real(report.residual_B)}});
                passed = std::isfinite(report.residual_A) && std::isfinite(report.residual_B);
                if (cfg.box_lo < 0.0 && cfg.box_hi > 0.0)
                    passed = passed && report.term_boundary >= 0.0;
                break;
            }
            case CheckKind::commutator: {
                const DiscreteFunction bump = central_bump(grid, mask, 0.3);
                const auto probes = select_probe_nodes(grid, mask, bump, 0.6, 8);
                const double residual = commutator_check(grid, mask, cfg.s, bump, probes);
                emit_csv(dir / "commutator.csv", {"s", "n_probes", "max_residual"},
                         {{csv_real(cfg.s), csv_int(static_cast<long long>(probes.size())),
                           csv_real(residual)}});
                passed = residual < 0.05;
                break;
            }
            case CheckKind::embedding: {
                const auto bumps = random_bumps(grid, mask, 20, cfg.seed + 2);
                std::vector<std::vector<std::string>> rows;
                passed = true;
                for (int p_case : {2, 3}) {
                    for (std::size_t k = 0; k < bumps.size(); ++k) {
                        const double ratio =
                            embedding_ratio(grid, mask, bumps[k], p_case, cfg.s);
                        rows.push_back({csv_int(1000LL * p_case + static_cast<long long>(k)),
                                        csv_real(ratio)});
                        passed = passed && std::isfinite(ratio) && ratio > 0.0;
                    }
                }
                emit_csv(dir / "embedding.csv", {"function_id", "ratio"}, rows);
                break;
            }
            case CheckKind::positivity: {
                const auto report = positivity_check(result.pair, grid, mask, 0.25);
                emit_csv(dir / "positivity.csv", {"margin", "min_interior", "linf"},
                         {{csv_real(0.25), csv_real(report.min_interior),
                           csv_real(report.linf)}});
                passed = report.min_interior > 0.0 && std::isfinite(report.linf);
                break;
            }
            case CheckKind::negative_lambda: {
                const auto report = negative_lambda_check(form, grid, mask);
                emit_csv(dir / "negative_lambda.csv",
                         {"lambda_min", "lambda_lower_bound", "dense_oracle",
                          "combination_value", "combination_q"},
                         {{csv_real(report.lambda_min), csv_real(report.lambda_lower_bound),
                           csv_int(report.dense_oracle ? 1 : 0),
                           csv_real(report.combination_value), csv_real(report.combination_q)}});
                passed = report.lambda_lower_bound > 0.0;
                break;
            }
            }
            } catch (const io_error&) {
                throw;
            } catch (const std::exception& err) {
                passed = false;
                note = std::string(" (") + err.what() + ")";
            }
            result.check_passed[kind] = passed;
            summary << check_name(kind) << ": " << (passed ? "PASS" : "FAIL") << note << "\n";
            all_passed = all_passed && passed;
        }
        result.exit_code = all_passed ? 0 : 1;
        // the grid dies with this call; keep only the owned values
        result.pair.w.grid = nullptr;
        return result;
    } catch (const io_error& err) {
        summary << "io error: " << err.what() << "\n";
        result.exit_code = 3;
        return result;
    } catch (const std::filesystem::filesystem_error& err) {
        summary << "io error: " << err.what() << "\n";
        result.exit_code = 3;
        return result;
    }
}

} // namespace carnot
