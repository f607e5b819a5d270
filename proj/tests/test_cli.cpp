#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "cqed/core.hpp"
#include "cqed/io.hpp"
#include "cqed/spectra.hpp"

// End-to-end checks of the installed command line tool. Every invocation
// goes through the real binary (CQED_CLI_PATH) so argument parsing, exit
// codes, and file formats are exercised exactly as a user sees them.

namespace fs = std::filesystem;

namespace {

const fs::path& work_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() /
                     ("cqed_cli_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string dir(const std::string& name) {
    const fs::path p = work_root() / name;
    fs::create_directories(p);
    return p.string();
}

int run(const std::string& args) {
    const std::string cmd =
        std::string(CQED_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

double param_value(const nlohmann::json& report, const std::string& name) {
    for (const auto& p : report.at("params"))
        if (p.at("name") == name) return p.at("value").get<double>();
    FAIL("parameter '" << name << "' not in report");
    return 0.0;
}

}  // namespace

TEST_CASE("cli: seeded simulation is byte reproducible") {
    const std::string a = dir("rep_a"), b = dir("rep_b"), c = dir("rep_c");
    REQUIRE(run("simulate spectrum --out " + a) == 0);
    REQUIRE(run("simulate spectrum --out " + b) == 0);
    CHECK(slurp(a + "/spectrum.csv") == slurp(b + "/spectrum.csv"));

    REQUIRE(run("simulate spectrum --seed 7 --out " + c) == 0);
    CHECK(slurp(a + "/spectrum.csv") != slurp(c + "/spectrum.csv"));
}

TEST_CASE("cli: a run is reproducible from its embedded configuration") {
    const std::string a = dir("emb_a"), b = dir("emb_b");
    REQUIRE(run("simulate spectrum --seed 11 --set noise=0.02 --out " + a) ==
            0);

    // reconstruct the command line from nothing but the output's metadata
    const auto f = cqed::io::read_spectrum(a + "/spectrum.csv");
    std::string args = "simulate spectrum";
    for (const auto& [k, v] : f.meta)
        if (k.rfind("config.", 0) == 0)
            args += " --set " + k.substr(7) + "=" + v;
    REQUIRE(run(args + " --out " + b) == 0);
    CHECK(slurp(a + "/spectrum.csv") == slurp(b + "/spectrum.csv"));
}

TEST_CASE("cli: spectrum round trip recovers the coupled-system parameters") {
    const std::string sd = dir("loop_sim"), fd = dir("loop_fit");
    REQUIRE(run("simulate spectrum --out " + sd) == 0);
    REQUIRE(run("fit spectrum " + sd + "/spectrum.csv --out " + fd) == 0);

    const auto j = cqed::io::read_json(fd + "/report.json");
    REQUIRE(j.at("schema") == "cqed.fit_report/1");
    REQUIRE(j.at("converged").get<bool>());
    CHECK(param_value(j, "g") == Catch::Approx(9.7).epsilon(0.02));
    CHECK(param_value(j, "kappa") == Catch::Approx(24.1).epsilon(0.02));
    CHECK(param_value(j, "eta") == Catch::Approx(0.96).margin(0.01));
    CHECK(j.at("derived").at("regime") == "near_strong");
    CHECK(j.at("derived").at("q_factor").get<double>() ==
          Catch::Approx(27000.0).epsilon(0.02));

    const std::string summary = slurp(fd + "/summary.txt");
    CHECK(summary.find("near_strong") != std::string::npos);
    CHECK(fs::exists(fd + "/residuals.csv"));

    // the residual file carries one row per data point
    const auto spec = cqed::io::read_spectrum(sd + "/spectrum.csv");
    std::istringstream rs(slurp(fd + "/residuals.csv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(rs, line))
        if (!line.empty() && line[0] != '#' &&
            (std::isdigit(line[0]) || line[0] == '-'))
            ++rows;
    CHECK(rows == spec.energy_uev.size());
}

TEST_CASE("cli: exit codes separate usage, data, and verification failures") {
    CHECK(run("bogus") == 2);
    CHECK(run("fit") == 2);
    CHECK(run("simulate spectrum --no-such-flag") == 2);

    const std::string e = dir("err");
    { std::ofstream touch(e + "/empty.csv"); }
    CHECK(run("fit spectrum " + e + "/empty.csv --out " + e) == 3);
    CHECK(run("fit spectrum " + e + "/missing.csv --out " + e) == 3);
    CHECK(run("simulate spectrum --set no_such_key=1 --out " + e) == 3);
    CHECK(run("fit purcell-dip " + e + "/missing.csv --out " + e) == 3);
}

TEST_CASE("cli: verify passes and the negative control fails") {
    const std::string v = dir("ver"), n = dir("ver_neg");
    REQUIRE(run("verify --out " + v) == 0);
    const auto j = cqed::io::read_json(v + "/verify_report.json");
    REQUIRE(j.at("schema") == "cqed.verify/1");
    CHECK(j.at("pass").get<bool>());
    CHECK(j.at("checks")[0].at("max_relative_deviation").get<double>() < 1e-3);
    CHECK(j.at("checks")[1].at("max_absolute_deviation").get<double>() < 1e-8);

    REQUIRE(run("verify --negative-control --out " + n) == 5);
    const auto jn = cqed::io::read_json(n + "/verify_report.json");
    CHECK_FALSE(jn.at("pass").get<bool>());
}

TEST_CASE("cli: decay simulation and reconvolution fit agree") {
    const std::string sd = dir("dec_sim"), fd = dir("dec_fit");
    REQUIRE(run("simulate decay --out " + sd) == 0);
    REQUIRE(run("fit lifetime " + sd + "/decay.csv --set tau_bulk_ps=1015"
                " --out " + fd) == 0);

    const auto j = cqed::io::read_json(fd + "/report.json");
    REQUIRE(j.at("converged").get<bool>());
    CHECK(param_value(j, "tau_ps") == Catch::Approx(137.0).epsilon(0.01));
    CHECK(j.at("derived").at("purcell_factor").get<double>() ==
          Catch::Approx(1015.0 / 137.0).epsilon(0.02));
}

TEST_CASE("cli: correlation estimate matches the simulated target") {
    const std::string sd = dir("g2_sim"), fd = dir("g2_fit");
    REQUIRE(run("simulate g2 --set g2_target=0.2 --out " + sd) == 0);
    REQUIRE(run("fit g2 " + sd + "/g2.csv --out " + fd) == 0);

    const auto j = cqed::io::read_json(fd + "/report.json");
    CHECK(param_value(j, "g2_zero") == Catch::Approx(0.2).margin(0.03));
    CHECK(j.at("derived").at("single_photon").get<bool>());
    CHECK(j.at("derived").at("n_side_peaks").get<int>() >= 5);
}

TEST_CASE("cli: lifetime dip fit recovers both mode crossings") {
    const std::string sd = dir("pur_sim"), fd = dir("pur_fit");
    cqed::TwoModeLifetimeModel truth;
    truth.tau_off_ps = 1100.0;
    truth.tau_on_h_ps = 220.0;
    truth.tau_on_v_ps = 220.0;
    truth.e_h_uev = 1301210.0;
    truth.e_v_uev = 1301430.0;
    truth.kappa_h_uev = 12.0;
    truth.kappa_v_uev = 12.0;

    cqed::io::LifetimeScanFile scan;
    for (int i = 0; i < 25; ++i) {
        scan.energy_uev.push_back(1301100.0 + 20.0 * i);
        scan.lifetime_ps.push_back(truth.lifetime(scan.energy_uev.back()));
    }
    cqed::io::write_lifetime_scan(sd + "/scan.csv", scan);

    REQUIRE(run("fit purcell-dip " + sd + "/scan.csv --set kappa_uev=12"
                " --out " + fd) == 0);
    const auto j = cqed::io::read_json(fd + "/report.json");
    CHECK(j.at("derived").at("tau_on_ps").get<double>() ==
          Catch::Approx(220.0).epsilon(0.01));
    CHECK(j.at("derived").at("tau_off_ps").get<double>() ==
          Catch::Approx(1100.0).epsilon(0.01));
    CHECK(j.at("derived").at("e_mode_1_uev").get<double>() ==
          Catch::Approx(1301210.0).margin(1.0));
    CHECK(j.at("derived").at("contrast").get<double>() ==
          Catch::Approx(5.0).epsilon(0.01));
}

TEST_CASE("cli: bias map jumps across the charge threshold") {
    const std::string sd = dir("bias_sim");
    REQUIRE(run("simulate biasmap --out " + sd) == 0);
    const auto m =
        cqed::io::read_grid_map(sd + "/biasmap.csv", "bias_v", "energy_uev");

    auto brightest_energy = [&](double bias) {
        std::size_t row = 0;
        for (std::size_t r = 1; r < m.rows.size(); ++r)
            if (std::abs(m.rows[r] - bias) < std::abs(m.rows[row] - bias))
                row = r;
        std::size_t best = 0;
        for (std::size_t c = 1; c < m.cols.size(); ++c)
            if (m.values[row * m.cols.size() + c] >
                m.values[row * m.cols.size() + best])
                best = c;
        return m.cols[best];
    };
    // the emission line drops by the charging shift across the threshold
    CHECK(brightest_energy(0.25) - brightest_energy(0.35) > 5000.0);
}

TEST_CASE("cli: spatial map round trip recovers the mode waist") {
    const std::string sd = dir("spat_sim");
    REQUIRE(run("simulate spatialmap --out " + sd) == 0);
    const auto m =
        cqed::io::read_grid_map(sd + "/spatialmap.csv", "y_um", "x_um");

    cqed::spectra::SpatialMap map;
    map.x_um = m.cols;
    map.y_um = m.rows;
    map.value = m.values;
    const auto fit = cqed::spectra::fit_spatial_map(map);
    REQUIRE(fit.report.converged);
    CHECK(fit.waist_um == Catch::Approx(2.2).epsilon(0.02));
    CHECK(fit.center_x_um == Catch::Approx(0.0).margin(0.05));
}
