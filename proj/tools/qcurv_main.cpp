#include <CLI11.hpp>

#include "qcurv/cli_driver.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Numerical laboratory for the constant Q-curvature problem on model 4-manifolds"};
    app.require_subcommand(1);

    std::string config, out = ".";
    unsigned seed = 12345;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "JSON configuration file")->required();
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--seed", seed, "seed for randomized suites");
    };
    auto* sp = app.add_subcommand("spectrum", "operator spectrum, k_bar, total curvature band");
    auto* au = app.add_subcommand("audit", "quadrature, Gauss-Bonnet and invariance audits");
    auto* bu = app.add_subcommand("bubble", "test-function energy sweeps and slope fits");
    auto* pr = app.add_subcommand("project", "barycenter projection round trip");
    auto* so = app.add_subcommand("solve", "rho-continuation solves with monitors");
    for (auto* c : {sp, au, bu, pr, so}) add_common(c);

    CLI11_PARSE(app, argc, argv);

    if (sp->parsed()) return qcurv::cli::run_spectrum(config, out, seed);
    if (au->parsed()) return qcurv::cli::run_audit(config, out, seed);
    if (bu->parsed()) return qcurv::cli::run_bubble(config, out, seed);
    if (pr->parsed()) return qcurv::cli::run_project(config, out, seed);
    if (so->parsed()) return qcurv::cli::run_solve(config, out, seed);
    return qcurv::cli::kBadConfig;
}
