#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <sstream>

#include "cqed/io.hpp"

using namespace cqed;
using namespace cqed::io;

namespace {

bool same_bits(double a, double b) {
    std::uint64_t ua, ub;
    std::memcpy(&ua, &a, 8);
    std::memcpy(&ub, &b, 8);
    return ua == ub;
}

}  // namespace

TEST_CASE("doubles survive the text round trip bit for bit") {
    const double cases[] = {0.0,
                            -0.0,
                            1.0 / 3.0,
                            0.1,
                            3.141592653589793,
                            -2.718281828459045e-15,
                            1e-300,
                            5e-324,
                            1.7976931348623157e308,
                            -1301400.0000000002,
                            658.2119569};
    for (double v : cases) {
        const std::string text = format_double(v);
        const double back = io::detail::parse_double(text, "mem", 1);
        INFO(text);
        CHECK(same_bits(v, back));
    }
}

TEST_CASE("key=value configs parse, override, and echo deterministically") {
    std::istringstream in(
        "# run parameters\n"
        "g = 9.7\n"
        "kappa=24.1   # field decay\n"
        "\n"
        "label = joint resonance\n"
        "verbose = true\n"
        "seed = 42\n"
        "g = 9.8\n");
    auto cfg = Config::parse(in, "run.cfg");
    CHECK(cfg.get_double("g", 0.0) == 9.8);
    CHECK(cfg.get_double("kappa", 0.0) == 24.1);
    CHECK(cfg.get("label", "") == "joint resonance");
    CHECK(cfg.get_bool("verbose", false));
    CHECK(cfg.get_u64("seed", 0) == 42);
    CHECK(cfg.get_double("absent", -1.0) == -1.0);
    CHECK_FALSE(cfg.has("absent"));

    SECTION("echo is sorted and stable") {
        CHECK(cfg.echo() ==
              "g=9.8\nkappa=24.1\nlabel=joint resonance\nseed=42\n"
              "verbose=true\n");
    }
    SECTION("malformed lines carry their line number") {
        std::istringstream bad("a=1\nnot a pair\n");
        try {
            Config::parse(bad, "broken.cfg");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("broken.cfg:2:") !=
                  std::string::npos);
            CHECK(e.line() == 2);
        }
    }
    SECTION("non-boolean rejected by get_bool") {
        std::istringstream v("flag=maybe\n");
        auto c = Config::parse(v, "x");
        CHECK_THROWS_AS(c.get_bool("flag", false), std::invalid_argument);
    }
}

TEST_CASE("spectrum files round-trip exactly") {
    SpectrumFile s;
    s.kind = SpectrumFile::Kind::reflectivity;
    s.omega_ref_uev = 1.3014e6;
    for (int i = 0; i < 40; ++i) {
        s.energy_uev.push_back(1.3014e6 - 120.5 + i * 6.17283950617284);
        s.value.push_back(0.25 + 0.7 / (1.0 + i) + 1e-13 * i);
        s.sigma.push_back(0.01 + 1e-4 * i);
    }
    s.meta["seed"] = "42";
    s.meta["config"] = "g=9.7;kappa=24.1";

    std::ostringstream out;
    write_spectrum(out, s);
    std::istringstream in(out.str());
    auto r = read_spectrum(in, "scan.csv");

    REQUIRE(r.energy_uev.size() == s.energy_uev.size());
    for (std::size_t i = 0; i < s.energy_uev.size(); ++i) {
        CHECK(same_bits(r.energy_uev[i], s.energy_uev[i]));
        CHECK(same_bits(r.value[i], s.value[i]));
        CHECK(same_bits(r.sigma[i], s.sigma[i]));
    }
    CHECK(r.kind == SpectrumFile::Kind::reflectivity);
    CHECK(same_bits(r.omega_ref_uev, s.omega_ref_uev));
    CHECK(r.meta.at("seed") == "42");
    CHECK(r.meta.at("version") == version);

    SECTION("sigma column is optional") {
        s.sigma.clear();
        std::ostringstream o2;
        write_spectrum(o2, s);
        std::istringstream i2(o2.str());
        auto r2 = read_spectrum(i2, "scan.csv");
        CHECK(r2.sigma.empty());
        CHECK(r2.value.size() == s.value.size());
    }
    SECTION("parse errors name the file and line") {
        std::istringstream bad(
            "# kind=reflectivity\n# omega_ref_uev=0\n"
            "energy_uev,value\n1,0.5\ntwo,0.6\n");
        try {
            read_spectrum(bad, "bad.csv");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("bad.csv:5:") !=
                  std::string::npos);
        }
    }
    SECTION("missing required header") {
        std::istringstream bad("energy_uev,value\n1,0.5\n");
        CHECK_THROWS_AS(read_spectrum(bad, "x.csv"), ParseError);
    }
    SECTION("descending energies rejected") {
        std::istringstream bad(
            "# kind=reflectivity\n# omega_ref_uev=0\n"
            "energy_uev,value\n2,0.5\n1,0.6\n");
        CHECK_THROWS_AS(read_spectrum(bad, "x.csv"), std::invalid_argument);
    }
    SECTION("unknown kind rejected") {
        std::istringstream bad(
            "# kind=sausage\n# omega_ref_uev=0\nenergy_uev,value\n1,0.5\n");
        CHECK_THROWS_AS(read_spectrum(bad, "x.csv"), ParseError);
    }
}

TEST_CASE("count histograms round-trip through their CSV forms") {
    SECTION("decay histogram") {
        tcspc::DecayHistogram h;
        h.bin_width_ps = 4.0;
        h.t_start_ps = 0.0;
        h.counts = {0, 5, 17, 120, 3000000007ULL, 12, 1, 0};
        for (auto c : h.counts) h.total_counts += c;

        std::ostringstream out;
        write_decay(out, h, {{"seed", "7"}});
        std::istringstream in(out.str());
        std::map<std::string, std::string> meta;
        auto r = read_decay(in, "decay.csv", &meta);
        CHECK(r.counts == h.counts);
        CHECK(r.total_counts == h.total_counts);
        CHECK(same_bits(r.bin_width_ps, 4.0));
        CHECK(meta.at("seed") == "7");
        CHECK(meta.at("kind") == "decay_histogram");
    }
    SECTION("negative counts rejected with a line number") {
        std::istringstream bad(
            "# bin_width_ps=4\n# t_start_ps=0\ncounts\n1\n-3\n");
        try {
            read_decay(bad, "d.csv");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("d.csv:5:") != std::string::npos);
        }
    }
    SECTION("correlation histogram") {
        g2::G2Histogram h;
        h.rep_period_ns = 12.5;
        h.window_ns = 12.5;
        h.bin_width_ns = 0.05;
        h.t_start_ns = -81.25;
        h.counts.assign(325, 9);
        std::ostringstream out;
        write_g2(out, h);
        std::istringstream in(out.str());
        auto r = read_g2(in, "g2.csv");
        CHECK(r.counts == h.counts);
        CHECK(same_bits(r.rep_period_ns, h.rep_period_ns));
        CHECK(same_bits(r.t_start_ns, h.t_start_ns));
    }
}

TEST_CASE("grid maps keep axes in headers and values in rows") {
    GridMapFile m;
    m.row_key = "bias_grid";
    m.col_key = "energy_grid";
    m.rows = {0.0, 0.1, 0.2};
    m.cols = {1295000.0, 1295025.0, 1295050.0, 1295075.0};
    for (int i = 0; i < 12; ++i) m.values.push_back(0.01 * i + 1.0 / 7.0);

    std::ostringstream out;
    write_grid_map(out, m);
    std::istringstream in(out.str());
    auto r = read_grid_map(in, "map.csv", "bias_grid", "energy_grid");
    REQUIRE(r.rows.size() == 3);
    REQUIRE(r.cols.size() == 4);
    for (std::size_t i = 0; i < m.values.size(); ++i)
        CHECK(same_bits(r.values[i], m.values[i]));
    for (std::size_t i = 0; i < m.rows.size(); ++i)
        CHECK(same_bits(r.rows[i], m.rows[i]));

    SECTION("ragged rows are rejected") {
        std::istringstream bad(
            "# bias_grid=0,1\n# energy_grid=5,6\n0.1,0.2\n0.3\n");
        try {
            read_grid_map(bad, "m.csv", "bias_grid", "energy_grid");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("m.csv:4:") != std::string::npos);
        }
    }
    SECTION("size mismatch rejected") {
        m.values.pop_back();
        std::ostringstream o;
        CHECK_THROWS_AS(write_grid_map(o, m), std::invalid_argument);
    }
}

TEST_CASE("fit reports serialize to the versioned schema") {
    // tiny linear fit to produce a genuine report
    std::vector<double> xs, ys;
    for (int i = 0; i < 6; ++i) {
        xs.push_back(i);
        ys.push_back(2.0 * i + 1.0);
    }
    std::vector<fit::Parameter> params(2);
    params[0] = {"slope", 0.5, -10.0, 10.0, false};
    params[1] = {"offset", 0.0, -10.0, 10.0, false};
    auto problem = fit::make_problem(
        [xs](const std::vector<double>& p) {
            std::vector<double> mu(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i)
                mu[i] = p[0] * xs[i] + p[1];
            return mu;
        },
        ys, params);
    auto report = fit::least_squares(problem);
    REQUIRE(report.converged);

    Config cfg;
    cfg.set("input", "scan.csv");
    cfg.set_double("tolerance", 1e-3);
    nlohmann::ordered_json derived;
    derived["q_factor"] = 27000.0;

    auto j = fit_report_json(report, derived, cfg, 42);
    CHECK(j["schema"] == "cqed.fit_report/1");
    CHECK(j["version"] == version);
    CHECK(j["converged"] == true);
    CHECK(j["params"].size() == 2);
    CHECK(j["params"][0]["name"] == "slope");
    CHECK(j["covariance"].size() == 2);
    CHECK(j["derived"]["q_factor"] == 27000.0);
    CHECK(j["config"]["input"] == "scan.csv");
    CHECK(j["seed"] == 42);

    SECTION("dump and parse preserve parameter values exactly") {
        auto text = j.dump(2);
        auto back = nlohmann::json::parse(text);
        const double v0 = back["params"][0]["value"].get<double>();
        CHECK(same_bits(v0, report.values[0]));
        const double c01 = back["covariance"][0][1].get<double>();
        CHECK(same_bits(c01, report.covariance(0, 1)));
    }
}

TEST_CASE("file helpers report unopenable paths") {
    CHECK_THROWS_AS(read_spectrum("/nonexistent/dir/x.csv"),
                    std::runtime_error);
    CHECK_THROWS_AS(Config::parse_file("/nonexistent/dir/x.cfg"),
                    std::runtime_error);
    SpectrumFile s;
    s.energy_uev = {1.0, 2.0};
    s.value = {0.5, 0.6};
    CHECK_THROWS_AS(write_spectrum("/nonexistent/dir/x.csv", s),
                    std::runtime_error);
}
