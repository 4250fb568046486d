#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "qcurv/cli_driver.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
constexpr double kPi = 3.14159265358979323846;

fs::path scratch() {
    auto p = fs::temp_directory_path() / "qcurv_cli_tests";
    fs::create_directories(p);
    return p;
}

fs::path write_cfg(const std::string& name, const json& j) {
    auto p = scratch() / name;
    std::ofstream out(p);
    out << j.dump(2);
    return p;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}
} // namespace

TEST_CASE("cmd spectrum: sphere boundary band and torus zero") {
    auto out = scratch() / "spec_s4";
    json cfg{{"manifold", {{"kind", "sphere"}, {"resolution", 8}}}, {"count", 10}};
    CHECK(qcurv::cli::run_spectrum(write_cfg("s4.json", cfg).string(), out.string(), 1) == 0);
    auto summary = read_json(out / "summary.json");
    CHECK(summary.at("k_bar").get<int>() == 0);
    CHECK(summary.at("k_p").at("value").get<double>() ==
          doctest::Approx(8 * kPi * kPi).epsilon(1e-8));
    CHECK(summary.at("band").get<std::string>() == "boundary-forbidden");
    CHECK(slurp(out / "spectrum.csv").substr(0, 28) == "index,eigenvalue,multiplicit");

    auto out2 = scratch() / "spec_t4";
    json cfg2{{"manifold", {{"kind", "torus"}, {"resolution", 8}}}, {"count", 10}};
    CHECK(qcurv::cli::run_spectrum(write_cfg("t4.json", cfg2).string(), out2.string(), 1) == 0);
    auto s2 = read_json(out2 / "summary.json");
    CHECK(s2.at("k_bar").get<int>() == 0);
    CHECK(s2.at("k_p").at("value").get<double>() == 0.0);

    // synthetic overrides drive k_bar
    auto out3 = scratch() / "spec_syn";
    json cfg3{{"manifold", {{"kind", "torus"}, {"resolution", 8}}},
              {"operator",
               {{"mode", "synthetic"},
                {"axis_pairs", json::array({{{"axis", 0}, {"frequency", 1}, {"eigenvalue", -2.0}}})},
                {"q_scale", 12.0}}},
              {"count", 10}};
    CHECK(qcurv::cli::run_spectrum(write_cfg("syn.json", cfg3).string(), out3.string(), 1) == 0);
    auto s3 = read_json(out3 / "summary.json");
    CHECK(s3.at("k_bar").get<int>() == 2);
    CHECK(s3.at("band").get<int>() == 1);
}

TEST_CASE("cmd audit: pass on defaults, fault injection fails with exit 2") {
    auto out = scratch() / "audit_ok";
    json cfg{{"manifold", {{"kind", "sphere"}, {"resolution", 8}}}};
    CHECK(qcurv::cli::run_audit(write_cfg("audit.json", cfg).string(), out.string(), 9) == 0);
    auto doc = read_json(out / "audit.json");
    CHECK(doc.at("pass").get<bool>());
    for (const auto& r : doc.at("records")) CHECK(r.at("pass").get<bool>());

    auto out2 = scratch() / "audit_bad";
    json cfg2 = cfg;
    cfg2["corrupt_quadrature"] = true;
    CHECK(qcurv::cli::run_audit(write_cfg("audit_bad.json", cfg2).string(), out2.string(), 9) == 2);
    auto doc2 = read_json(out2 / "audit.json");
    CHECK(!doc2.at("pass").get<bool>());
}

TEST_CASE("cmd bubble: slope verdict inside the band") {
    auto out = scratch() / "bubble";
    json cfg{{"manifold", {{"kind", "sphere"}, {"resolution", 8}}},
             {"sigma", json::array({{{"x", {1.3, 1.2, 2.0, 0.7}}, {"weight", 1.0}}})},
             {"delta", 0.1},
             {"lambda_grid", {50, 100, 200, 400, 800}}};
    CHECK(qcurv::cli::run_bubble(write_cfg("bubble.json", cfg).string(), out.string(), 1) == 0);
    auto v = read_json(out / "verdict.json");
    CHECK(v.at("in_band").get<bool>());
    // csv rows: header + grid
    std::string csv = slurp(out / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("cmd project: two-bubble round trip artifacts") {
    auto out = scratch() / "project";
    json cfg{{"manifold", {{"kind", "sphere"}, {"resolution", 8}}},
             {"sigma", json::array({{{"x", {1.2, 1.3, 1.8, 0.4}}, {"weight", 0.5}},
                                    {{"x", {2.2, 2.0, 1.0, 3.9}}, {"weight", 0.5}}})},
             {"lambda", 800.0},
             {"delta", 0.1},
             {"k", 2}};
    CHECK(qcurv::cli::run_project(write_cfg("project.json", cfg).string(), out.string(), 1) == 0);
    auto doc = read_json(out / "barycenter.json");
    CHECK(doc.at("atoms").size() == 2);
    CHECK(doc.at("distance_to_target").at("value").get<double>() < 0.1);
    CHECK(doc.at("trace").at("chosen_j").get<int>() == 2);
}

TEST_CASE("cmd solve: manufactured continuation with monitors") {
    auto out = scratch() / "solve";
    json cfg{{"manifold", {{"kind", "torus"}, {"resolution", 8}}},
             {"manufacture", {{"axis", 0}, {"amplitude", 0.15}, {"k_p_scale", 4.0}}},
             {"rho_grid", {0.98, 1.0, 1.02}},
             {"minmax",
              {{"lambda_bar", 1e6},
               {"delta", 0.2},
               {"sigma", json::array({{{"x", {3.0, 3.0, 3.0, 3.0}}, {"weight", 1.0}}})}}}};
    CHECK(qcurv::cli::run_solve(write_cfg("solve.json", cfg).string(), out.string(), 1) == 0);
    auto doc = read_json(out / "solve.json");
    CHECK(doc.at("all_converged").get<bool>());
    CHECK(doc.at("monotonicity").at("ok").get<bool>());
    for (const auto& r : doc.at("reports"))
        CHECK(r.at("residual").at("value").get<double>() <= 1e-9);

    // rejected configuration: forbidden rho value on the sphere
    json bad{{"manifold", {{"kind", "sphere"}, {"resolution", 6}}}, {"rho_grid", {1.0}}};
    CHECK(qcurv::cli::run_solve(write_cfg("bad.json", bad).string(), (scratch() / "x").string(),
                                1) == 3);
    // unparseable config path
    CHECK(qcurv::cli::run_solve("/nonexistent.json", (scratch() / "y").string(), 1) == 3);
}

TEST_CASE("determinism: identical config and seed give identical artifacts") {
    json cfg{{"manifold", {{"kind", "torus"}, {"resolution", 6}}}};
    auto a = scratch() / "det_a";
    auto b = scratch() / "det_b";
    CHECK(qcurv::cli::run_audit(write_cfg("det.json", cfg).string(), a.string(), 42) == 0);
    CHECK(qcurv::cli::run_audit(write_cfg("det.json", cfg).string(), b.string(), 42) == 0);
    CHECK(slurp(a / "audit.json") == slurp(b / "audit.json"));
}
