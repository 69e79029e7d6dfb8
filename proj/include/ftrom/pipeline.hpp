#pragma once

// Batch pipeline shared by the command-line driver and the acceptance
// harness: configuration schema, artifact naming, and the four stages
// hdm -> register -> basis -> rom, plus the bump study and exporters.
//
// Artifact layout under the output directory:
//   mesh.ftrm                  reference mesh
//   snapshot_mu<tag>.ftrm      one per training (or truth) mu
//   dofs_mu<tag>.ftrm          registered mapping dofs per training mu
//   bases.ftrm / bases_fixed.ftrm
//   spectrum.csv               POD singular values of the aligned snapshots
//   solution_ft_mu<tag>.ftrm / solution_fm_mu<tag>.ftrm
//   slice_ft_mu<tag>.csv / slice_fm_mu<tag>.csv   t = 1 profiles (x, q)
//   rom_mu<tag>.csv            shock positions and errors vs truth if present

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "ftrom/bump.hpp"
#include "ftrom/hdm.hpp"
#include "ftrom/registration.hpp"
#include "ftrom/rom.hpp"
#include "ftrom/storage.hpp"

namespace ftrom {

struct PipelineConfig {
    int nx = 100;
    int nt = 50;
    Rect bounds{-1.0, 1.0, 0.0, 1.0};
    double nu = 1e-3;
    std::vector<double> train_mu{0.5, 1.0};
    double ref_mu = 0.5;
    std::vector<double> test_mu{0.75, 2.0};
    int n_q = 0;  // 0 means all training snapshots
    RegistrationParams reg;
    uint64_t seed = 0;

    StructuredQuadMesh make_mesh() const { return build_rect_mesh(nx, nt, bounds); }
};

inline const std::set<std::string>& pipeline_config_keys() {
    static const std::set<std::string> keys{
        "seed",
        "mesh.nx",
        "mesh.nt",
        "mesh.x_lo",
        "mesh.x_hi",
        "mesh.t_lo",
        "mesh.t_hi",
        "hdm.nu",
        "hdm.train_mu",
        "hdm.ref_mu",
        "rom.test_mu",
        "rom.n_q",
        "registration.k",
        "registration.samples",
        "registration.threshold",
        "registration.r",
        "registration.boundary_per_edge",
        "registration.safety",
        "bump.centers",
        "bump.x_t",
        "bump.grid",
    };
    return keys;
}

inline PipelineConfig pipeline_config_from(const ConfigMap& cfg) {
    PipelineConfig p;
    p.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
    p.nx = static_cast<int>(cfg.get_int("mesh.nx", p.nx));
    p.nt = static_cast<int>(cfg.get_int("mesh.nt", p.nt));
    p.bounds.x_lo = cfg.get_double("mesh.x_lo", p.bounds.x_lo);
    p.bounds.x_hi = cfg.get_double("mesh.x_hi", p.bounds.x_hi);
    p.bounds.t_lo = cfg.get_double("mesh.t_lo", p.bounds.t_lo);
    p.bounds.t_hi = cfg.get_double("mesh.t_hi", p.bounds.t_hi);
    p.nu = cfg.get_double("hdm.nu", p.nu);
    if (cfg.has("hdm.train_mu")) p.train_mu = cfg.get_double_list("hdm.train_mu");
    p.ref_mu = cfg.get_double("hdm.ref_mu", p.train_mu.empty() ? 0.5 : p.train_mu[0]);
    if (cfg.has("rom.test_mu")) p.test_mu = cfg.get_double_list("rom.test_mu");
    p.n_q = static_cast<int>(cfg.get_int("rom.n_q", 0));
    p.reg.k = static_cast<int>(cfg.get_int("registration.k", p.reg.k));
    p.reg.n_samples =
        static_cast<int>(cfg.get_int("registration.samples", p.reg.n_samples));
    p.reg.threshold = cfg.get_double("registration.threshold", p.reg.threshold);
    p.reg.radius = cfg.get_double("registration.r", p.reg.radius);
    p.reg.boundary_per_edge = static_cast<int>(
        cfg.get_int("registration.boundary_per_edge", p.reg.boundary_per_edge));
    p.reg.safety = cfg.get_double("registration.safety", p.reg.safety);
    return p;
}

inline std::string mu_tag(double mu) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", mu);
    return buf;
}

namespace paths {
inline std::string mesh(const std::string& out) { return out + "/mesh.ftrm"; }
inline std::string snapshot(const std::string& out, double mu) {
    return out + "/snapshot_mu" + mu_tag(mu) + ".ftrm";
}
inline std::string dofs(const std::string& out, double mu) {
    return out + "/dofs_mu" + mu_tag(mu) + ".ftrm";
}
inline std::string bases(const std::string& out) { return out + "/bases.ftrm"; }
inline std::string bases_fixed(const std::string& out) {
    return out + "/bases_fixed.ftrm";
}
inline std::string spectrum(const std::string& out) { return out + "/spectrum.csv"; }
inline std::string solution(const std::string& out, const char* kind, double mu) {
    return out + "/solution_" + kind + "_mu" + mu_tag(mu) + ".ftrm";
}
inline std::string slice(const std::string& out, const char* kind, double mu) {
    return out + "/slice_" + kind + "_mu" + mu_tag(mu) + ".csv";
}
inline std::string rom_summary(const std::string& out, double mu) {
    return out + "/rom_mu" + mu_tag(mu) + ".csv";
}
}  // namespace paths

namespace detail {
inline std::ofstream open_csv(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw StorageError("cannot open for writing: " + path);
    f.precision(17);
    return f;
}
}  // namespace detail

/// Solve the full model for every training mu and store the snapshots with
/// identity dofs (registration refines them later).
inline void run_hdm(const PipelineConfig& cfg, const std::string& out) {
    if (cfg.train_mu.empty())
        throw ConfigError("run_hdm: empty mu list");
    const auto mesh = cfg.make_mesh();
    std::filesystem::create_directories(out);
    write_mesh(paths::mesh(out), mesh);
    for (double mu : cfg.train_mu) {
        DiscreteState Q;
        try {
            Q = solve_hdm(mesh, BurgersConfig(cfg.nu, mu));
        } catch (const SolverFailure& e) {
            throw SolverFailure("hdm solve failed at mu = " + mu_tag(mu) + ": " +
                                    e.what(),
                                e.residual_norm);
        }
        SnapshotRecord rec;
        rec.mu = mu;
        rec.Q = Q;
        rec.xh = MappingDofs::identity(mesh);
        rec.aligned = Q;
        write_snapshot(paths::snapshot(out, mu), rec);
    }
}

/// Register every non-reference training snapshot to the reference and
/// replace its aligned state by the full-model solution on the warped mesh.
inline void run_register(const PipelineConfig& cfg, const std::string& out) {
    const auto mesh = read_mesh(paths::mesh(out));
    const auto it = std::find(cfg.train_mu.begin(), cfg.train_mu.end(), cfg.ref_mu);
    if (it == cfg.train_mu.end())
        throw ConfigError("run_register: ref_mu is not in the training list");
    const auto ref = read_snapshot(paths::snapshot(out, cfg.ref_mu));

    for (size_t i = 0; i < cfg.train_mu.size(); ++i) {
        const double mu = cfg.train_mu[i];
        SnapshotRecord rec = read_snapshot(paths::snapshot(out, mu));
        if (mu == cfg.ref_mu) {
            rec.xh = MappingDofs::identity(mesh);
            rec.aligned = rec.Q;
        } else {
            RegistrationParams params = cfg.reg;
            params.seed = detail::splitmix64(cfg.seed + i);
            rec.xh = register_snapshot(rec.Q, ref.Q, mesh, params);
            rec.aligned = solve_hdm(mesh, BurgersConfig(cfg.nu, mu), rec.xh);
        }
        write_snapshot(paths::snapshot(out, mu), rec);
        write_dofs(paths::dofs(out, mu), rec.xh);
    }
}

/// Build the aligned POD basis, the mesh displacement basis, and the
/// fixed-mesh (unaligned) POD basis.
inline void run_basis(const PipelineConfig& cfg, const std::string& out) {
    const auto mesh = cfg.make_mesh();
    SnapshotSet snaps;
    std::vector<double> psi_mu;
    for (size_t i = 0; i < cfg.train_mu.size(); ++i) {
        const double mu = cfg.train_mu[i];
        snaps.entries.push_back(read_snapshot(paths::snapshot(out, mu)));
        if (mu == cfg.ref_mu)
            snaps.ref_index = static_cast<int>(i);
        else
            psi_mu.push_back(mu);
    }
    const int n_train = static_cast<int>(snaps.entries.size());
    const int n_q = cfg.n_q == 0 ? n_train : cfg.n_q;
    if (n_q < 1 || n_q > n_train)
        throw ConfigError("run_basis: n_q must lie in [1, " + std::to_string(n_train) +
                          "]");

    Eigen::MatrixXd aligned(mesh.num_cells(), n_train);
    Eigen::MatrixXd unaligned(mesh.num_cells(), n_train);
    for (int j = 0; j < n_train; ++j) {
        aligned.col(j) = snaps.entries[static_cast<size_t>(j)].aligned.values;
        unaligned.col(j) = snaps.entries[static_cast<size_t>(j)].Q.values;
    }
    const Eigen::VectorXd Qr = Eigen::VectorXd::Zero(mesh.num_cells());

    RomBases ft;
    const auto pod = build_pod(aligned, Qr, n_q);
    ft.Phi = pod.Phi;
    ft.Qr = Qr;
    ft.Psi = build_mesh_basis(snaps, mesh);
    ft.theta = Eigen::VectorXd::Ones(mesh.num_cells());
    ft.train_mu = psi_mu;
    ft.ref_mu = cfg.ref_mu;
    ft.singular_values = pod.singular_values;
    ft.train_a = ft.Phi.transpose() * (aligned.colwise() - Qr);
    ft.train_a_mu = cfg.train_mu;
    write_bases(paths::bases(out), ft);

    RomBases fm;
    const auto pod_fm = build_pod(unaligned, Qr, n_q);
    fm.Phi = pod_fm.Phi;
    fm.Qr = Qr;
    fm.Psi.resize(2 * static_cast<Eigen::Index>(mesh.num_nodes()), 0);
    fm.theta = Eigen::VectorXd::Ones(mesh.num_cells());
    fm.ref_mu = cfg.ref_mu;
    fm.singular_values = pod_fm.singular_values;
    fm.train_a = fm.Phi.transpose() * (unaligned.colwise() - Qr);
    fm.train_a_mu = cfg.train_mu;
    write_bases(paths::bases_fixed(out), fm);

    auto csv = detail::open_csv(paths::spectrum(out));
    csv << "index,sigma\n";
    for (Eigen::Index i = 0; i < pod.singular_values.size(); ++i)
        csv << i << "," << pod.singular_values[i] << "\n";
}

/// Write the t = 1 profile of a cell field in physical coordinates.
inline void write_slice_csv(const std::string& path, const Eigen::VectorXd& Q,
                            const StructuredQuadMesh& mesh, const MappingDofs& dofs) {
    std::vector<std::pair<double, double>> rows;
    const int j = mesh.nt() - 1;
    for (int i = 0; i < mesh.nx(); ++i) {
        const int c = mesh.cell_index(i, j);
        rows.emplace_back(dofs.cell_center(mesh, c).x(), Q[c]);
    }
    std::sort(rows.begin(), rows.end());
    auto csv = detail::open_csv(path);
    csv << "x,q\n";
    for (const auto& [x, q] : rows) csv << x << "," << q << "\n";
}

struct RomRunResult {
    double mu = 0.0;
    RomSolution ft;
    RomSolution fm;
    bool has_truth = false;
    double ft_error = 0.0;  // relative L2 vs truth sampled at the ROM's centers
    double fm_error = 0.0;
};

/// Relative L2 distance between a ROM field and the truth resampled at the
/// ROM's (possibly warped) cell centers.
inline double rom_error_vs_truth(const Eigen::VectorXd& Q_hat,
                                 const Eigen::VectorXd& x_hat,
                                 const DiscreteState& truth,
                                 const StructuredQuadMesh& mesh) {
    const auto resampled = align_snapshot(truth, MappingDofs::unflatten(x_hat), mesh);
    return (Q_hat - resampled.values).norm() / resampled.values.norm();
}

/// Run both the feature-tracking and fixed-mesh reduced models at one test
/// parameter; errors are computed if a truth snapshot file exists.
inline RomRunResult run_rom_single(const PipelineConfig& cfg, const std::string& out,
                                   double mu) {
    const auto mesh = read_mesh(paths::mesh(out));
    const auto ft_bases = read_bases(paths::bases(out));
    const auto fm_bases = read_bases(paths::bases_fixed(out));

    RomRunResult res;
    res.mu = mu;
    res.ft = solve_rom(mu, ft_bases, mesh, cfg.nu);
    res.fm = fixed_mesh_rom(mu, fm_bases.Phi, fm_bases.Qr, mesh, cfg.nu, {}, nullptr,
                            &fm_bases.train_a, &fm_bases.train_a_mu);
    write_solution(paths::solution(out, "ft", mu), res.ft);
    write_solution(paths::solution(out, "fm", mu), res.fm);
    write_slice_csv(paths::slice(out, "ft", mu), res.ft.Q_hat, mesh,
                    MappingDofs::unflatten(res.ft.x_hat));
    write_slice_csv(paths::slice(out, "fm", mu), res.fm.Q_hat, mesh,
                    MappingDofs::identity(mesh));

    auto csv = detail::open_csv(paths::rom_summary(out, mu));
    csv << "quantity,ft,fm\n";
    auto shock_or_nan = [&](const Eigen::VectorXd& Q, const Eigen::VectorXd& x_hat) {
        try {
            return shock_position(DiscreteState{Q}, mesh, MappingDofs::unflatten(x_hat),
                                  mesh.bounds().t_hi, mu / 2.0);
        } catch (const NotFound&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    csv << "shock_t1," << shock_or_nan(res.ft.Q_hat, res.ft.x_hat) << ","
        << shock_or_nan(res.fm.Q_hat, res.fm.x_hat) << "\n";
    csv << "converged," << res.ft.converged << "," << res.fm.converged << "\n";

    const std::string truth_path = paths::snapshot(out, mu);
    if (std::filesystem::exists(truth_path)) {
        const auto truth = read_snapshot(truth_path);
        res.has_truth = true;
        res.ft_error = rom_error_vs_truth(res.ft.Q_hat, res.ft.x_hat, truth.Q, mesh);
        res.fm_error = rom_error_vs_truth(res.fm.Q_hat, res.fm.x_hat, truth.Q, mesh);
        csv << "l2_error," << res.ft_error << "," << res.fm_error << "\n";
    }
    return res;
}

inline std::vector<RomRunResult> run_rom(const PipelineConfig& cfg,
                                         const std::string& out) {
    if (cfg.test_mu.empty()) throw ConfigError("run_rom: empty test mu list");
    std::vector<RomRunResult> results;
    for (double mu : cfg.test_mu) results.push_back(run_rom_single(cfg, out, mu));
    return results;
}

/// Bump study artifacts: aligned/unaligned profiles, a rank-2 projection
/// comparison, and both normalized spectra.
inline BumpSpectra run_demo_bump(const BumpStudyConfig& study, const std::string& out) {
    std::filesystem::create_directories(out);
    const auto res = bump_svd_study(study);
    const int m = static_cast<int>(study.grid.size());
    const int n = static_cast<int>(study.centers.size());

    auto write_profiles = [&](const std::string& path, const Eigen::MatrixXd& cols) {
        auto csv = detail::open_csv(path);
        csv << "x";
        for (double c : study.centers) csv << ",c" << mu_tag(c);
        csv << "\n";
        for (int i = 0; i < m; ++i) {
            csv << study.grid[i];
            for (int j = 0; j < n; ++j) csv << "," << cols(i, j);
            csv << "\n";
        }
    };
    write_profiles(out + "/bump_profiles_physical.csv", res.unaligned_columns);
    write_profiles(out + "/bump_profiles_reference.csv", res.aligned_columns);

    {
        // Least-squares reconstruction of the middle column from the leading
        // two unaligned modes, next to the exact profile.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(res.unaligned_columns,
                                              Eigen::ComputeThinU);
        const int rank = std::min<int>(2, n);
        const Eigen::MatrixXd U = svd.matrixU().leftCols(rank);
        const Eigen::VectorXd target = res.unaligned_columns.col(n / 2);
        const Eigen::VectorXd recon = U * (U.transpose() * target);
        auto csv = detail::open_csv(out + "/bump_rom_projection.csv");
        csv << "x,target,projection\n";
        for (int i = 0; i < m; ++i)
            csv << study.grid[i] << "," << target[i] << "," << recon[i] << "\n";
    }
    {
        auto csv = detail::open_csv(out + "/bump_spectra.csv");
        csv << "unaligned,aligned\n";
        for (int k = 0; k < n; ++k)
            csv << res.unaligned[k] << "," << res.aligned[k] << "\n";
    }
    return res;
}

inline BumpStudyConfig bump_study_from(const ConfigMap& cfg) {
    std::vector<double> centers{-0.4, -0.2, 0.0, 0.2, 0.4};
    if (cfg.has("bump.centers")) centers = cfg.get_double_list("bump.centers");
    const double x_t = cfg.get_double("bump.x_t", 0.0);
    const int grid = static_cast<int>(cfg.get_int("bump.grid", 1000));
    return BumpStudyConfig::with_uniform_grid(centers, x_t, grid);
}

// --- exporters ------------------------------------------------------------

/// One row per cell: physical center coordinates and the cell value.
inline void export_csv(const std::string& path, const StructuredQuadMesh& mesh,
                       const MappingDofs& dofs, const DiscreteState& Q) {
    if (Q.values.size() != mesh.num_cells())
        throw InvalidArgument("export_csv: state size mismatch");
    auto csv = detail::open_csv(path);
    csv << "x,t,q\n";
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const Vec2 p = dofs.cell_center(mesh, c);
        csv << p.x() << "," << p.y() << "," << Q.values[c] << "\n";
    }
}

/// Legacy ASCII structured grid with one cell scalar field.
inline void export_vtk(const std::string& path, const StructuredQuadMesh& mesh,
                       const MappingDofs& dofs, const DiscreteState& Q) {
    if (Q.values.size() != mesh.num_cells())
        throw InvalidArgument("export_vtk: state size mismatch");
    auto f = detail::open_csv(path);
    f << "# vtk DataFile Version 3.0\n";
    f << "space-time cell field\n";
    f << "ASCII\n";
    f << "DATASET STRUCTURED_GRID\n";
    f << "DIMENSIONS " << mesh.nx() + 1 << " " << mesh.nt() + 1 << " 1\n";
    f << "POINTS " << mesh.num_nodes() << " double\n";
    for (int n = 0; n < mesh.num_nodes(); ++n) {
        const Vec2 p = dofs.node(n);
        f << p.x() << " " << p.y() << " 0\n";
    }
    f << "CELL_DATA " << mesh.num_cells() << "\n";
    f << "SCALARS q double 1\n";
    f << "LOOKUP_TABLE default\n";
    for (int c = 0; c < mesh.num_cells(); ++c) f << Q.values[c] << "\n";
}

}  // namespace ftrom
