// Batch driver for the feature-tracking reduction pipeline.
//
// Subcommands: hdm, register, basis, rom, demo-bump, export.
// Exit codes: 0 success, 1 pipeline error, 3 rom completed with
// non-converged solves (artifacts and manifest still written).

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ftrom/pipeline.hpp"

using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    std::string out = "out";
    std::string mu_list;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "configuration file");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--mu", c.mu_list, "comma-separated mu sweep override");
    cmd->add_option("--seed", c.seed, "seed override")
        ->each([&c](const std::string&) { c.seed_set = true; });
}

std::vector<double> parse_mu_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t pos = 0;
        const double v = std::stod(item, &pos);
        while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos])))
            ++pos;
        if (pos != item.size())
            throw ftrom::ConfigError("--mu: not a number: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ftrom::ConfigError("--mu: empty list");
    return out;
}

ftrom::ConfigMap load_config_map(const Common& c) {
    if (c.config_path.empty()) return {};
    std::ifstream f(c.config_path);
    if (!f) throw ftrom::ConfigError("cannot read config file: " + c.config_path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ftrom::parse_config(ss.str(), &ftrom::pipeline_config_keys());
}

ftrom::PipelineConfig load_pipeline_config(const Common& c, bool mu_is_test) {
    auto cfg = ftrom::pipeline_config_from(load_config_map(c));
    if (c.seed_set) cfg.seed = c.seed;
    if (!c.mu_list.empty()) {
        if (mu_is_test)
            cfg.test_mu = parse_mu_list(c.mu_list);
        else
            cfg.train_mu = parse_mu_list(c.mu_list);
    }
    return cfg;
}

void append_manifest(const Common& c, const std::string& stage, double seconds,
                     std::uint64_t seed, const json& extra = json::object()) {
    const std::string path = c.out + "/manifest.json";
    json m;
    {
        std::ifstream f(path);
        if (f) {
            try {
                f >> m;
            } catch (const json::exception&) {
                m = json::object();
            }
        }
    }
    m["config"] = c.config_path;
    m["out"] = c.out;
    m["seed"] = seed;
    if (!m.contains("stages") || !m["stages"].is_array()) m["stages"] = json::array();
    json entry{{"name", stage}, {"seconds", seconds}};
    for (auto it = extra.begin(); it != extra.end(); ++it) entry[it.key()] = it.value();
    m["stages"].push_back(entry);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ftrom::StorageError("cannot write manifest: " + path);
    f << m.dump(2) << "\n";
}

template <typename Fn>
double timed(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature-tracking model reduction pipeline"};
    app.require_subcommand(1);

    Common hdm_c, reg_c, basis_c, rom_c, bump_c;
    auto* hdm = app.add_subcommand("hdm", "solve the full model over the mu sweep");
    add_common(hdm, hdm_c);
    auto* reg = app.add_subcommand("register", "register snapshots to the reference");
    add_common(reg, reg_c);
    auto* basis = app.add_subcommand("basis", "build reduced bases");
    add_common(basis, basis_c);
    auto* rom = app.add_subcommand("rom", "run both reduced models at the test mus");
    add_common(rom, rom_c);
    auto* bump = app.add_subcommand("demo-bump", "bump alignment study");
    add_common(bump, bump_c);

    struct {
        std::string input, mesh, dofs, output;
        std::string format = "csv";
    } exp;
    auto* export_cmd = app.add_subcommand("export", "export a state record");
    export_cmd->add_option("input", exp.input, "state record file")->required();
    export_cmd->add_option("--mesh", exp.mesh, "mesh record file")->required();
    export_cmd->add_option("--dofs", exp.dofs, "mapping dofs record file");
    export_cmd->add_option("--output", exp.output, "output file")->required();
    export_cmd->add_option("--format", exp.format, "csv or vtk-legacy")
        ->check(CLI::IsMember({"csv", "vtk-legacy"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*hdm) {
            const auto cfg = load_pipeline_config(hdm_c, false);
            const double s = timed([&] { ftrom::run_hdm(cfg, hdm_c.out); });
            append_manifest(hdm_c, "hdm", s, cfg.seed);
        } else if (*reg) {
            const auto cfg = load_pipeline_config(reg_c, false);
            const double s = timed([&] { ftrom::run_register(cfg, reg_c.out); });
            append_manifest(reg_c, "register", s, cfg.seed);
        } else if (*basis) {
            const auto cfg = load_pipeline_config(basis_c, false);
            const double s = timed([&] { ftrom::run_basis(cfg, basis_c.out); });
            append_manifest(basis_c, "basis", s, cfg.seed);
        } else if (*rom) {
            const auto cfg = load_pipeline_config(rom_c, true);
            std::vector<ftrom::RomRunResult> results;
            const double s = timed([&] { results = ftrom::run_rom(cfg, rom_c.out); });
            json flags = json::array();
            bool all_converged = true;
            for (const auto& r : results) {
                flags.push_back({{"mu", r.mu},
                                 {"ft_converged", r.ft.converged},
                                 {"fm_converged", r.fm.converged}});
                all_converged = all_converged && r.ft.converged && r.fm.converged;
            }
            append_manifest(rom_c, "rom", s, cfg.seed, {{"solves", flags}});
            if (!all_converged) {
                std::cerr << "rom: some solves did not converge (see manifest)\n";
                return 3;
            }
        } else if (*bump) {
            const auto study = ftrom::bump_study_from(load_config_map(bump_c));
            const double s =
                timed([&] { ftrom::run_demo_bump(study, bump_c.out); });
            append_manifest(bump_c, "demo-bump", s,
                            bump_c.seed_set ? bump_c.seed : 0);
        } else if (*export_cmd) {
            const auto mesh = ftrom::read_mesh(exp.mesh);
            // Accept either a bare state record or a full snapshot record.
            ftrom::DiscreteState state;
            ftrom::MappingDofs dofs = ftrom::MappingDofs::identity(mesh);
            try {
                state = ftrom::read_state(exp.input);
            } catch (const ftrom::StorageError&) {
                const auto snap = ftrom::read_snapshot(exp.input);
                state = snap.Q;
                dofs = snap.xh;
            }
            if (!exp.dofs.empty()) dofs = ftrom::read_dofs(exp.dofs);
            if (exp.format == "csv")
                ftrom::export_csv(exp.output, mesh, dofs, state);
            else
                ftrom::export_vtk(exp.output, mesh, dofs, state);
        }
    } catch (const ftrom::SolverFailure& e) {
        std::cerr << "error: " << e.what()
                  << " (residual norm " << e.residual_norm << ")\n";
        return 1;
    } catch (const ftrom::RegistrationFailure& e) {
        std::cerr << "error: " << e.what();
        if (!e.offending_cells.empty()) {
            std::cerr << "; offending cells:";
            for (int c : e.offending_cells) std::cerr << " " << c;
        }
        std::cerr << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
