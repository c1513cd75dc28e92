#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using synthlat::cli::run;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("synthlat_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    int call(std::vector<std::string> args) {
        out_.str({});
        err_.str({});
        return run(args, out_, err_);
    }

    static std::string slurp(const std::string& p) {
        std::ifstream is(p);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }

    // Numeric rows of a CSV file, skipping the header and comment lines.
    static std::vector<std::vector<double>> rows(const std::string& p) {
        std::ifstream is(p);
        std::string line;
        std::vector<std::vector<double>> out;
        bool header = true;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (header) {
                header = false;
                continue;
            }
            std::vector<double> r;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
            out.push_back(std::move(r));
        }
        return out;
    }

    static std::string data(const std::string& name) { return std::string(SYNTHLAT_DATA_DIR) + "/" + name; }

    fs::path dir_;
    std::ostringstream out_, err_;
};

}  // namespace

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(call({}), 1);
    EXPECT_EQ(call({"frobnicate"}), 1);
    EXPECT_NE(err_.str().find("simulate"), std::string::npos);
    EXPECT_EQ(call({"bands", "--k", "1", "--out", path("b.csv")}), 1);
    EXPECT_EQ(call({"bands"}), 1);
    EXPECT_EQ(call({"evolve", "--state", "psi", "--out", path("m.csv")}), 1);
    EXPECT_EQ(call({"fit", "--config", data("device_lattice.json"), "--traces", path("missing.csv"), "--out",
                    path("r.json")}),
              1);
    EXPECT_EQ(call({"--help"}), 0);
    EXPECT_NE(out_.str().find("plaquette"), std::string::npos);
}

TEST_F(Cli, BandsAreFlatAtStrongCoupling) {
    ASSERT_EQ(call({"--no-timestamp", "bands", "--td", "1", "--tv", "0", "--th", "1", "--phi", "3.141592653589793",
                    "--k", "1001", "--out", path("bands.csv")}),
              0);
    EXPECT_EQ(slurp(path("bands.csv")).substr(0, 20), "k_rad,value1,value2\n");
    const auto r = rows(path("bands.csv"));
    ASSERT_EQ(r.size(), 1001u);
    for (const auto& row : r) {
        ASSERT_EQ(row.size(), 3u);
        EXPECT_NEAR(row[1], -2.0, 1e-12);
        EXPECT_NEAR(row[2], 2.0, 1e-12);
    }
    EXPECT_DOUBLE_EQ(r.front()[0], -synthlat::creutz::pi);
    EXPECT_DOUBLE_EQ(r.back()[0], synthlat::creutz::pi);
}

TEST_F(Cli, SymmetryReport) {
    ASSERT_EQ(call({"--no-timestamp", "symmetry", "--k", "101", "--out", path("s.csv")}), 0);
    for (const auto& row : rows(path("s.csv")))
        for (std::size_t c = 1; c < 4; ++c) EXPECT_LE(row[c], 1e-12);
    ASSERT_EQ(call({"--no-timestamp", "symmetry", "--phi", "0", "--k", "101", "--out", path("s0.csv")}), 0);
    double worst_c = 0.0;
    for (const auto& row : rows(path("s0.csv"))) worst_c = std::max(worst_c, row[2]);
    EXPECT_GT(worst_c, 0.1);
}

TEST_F(Cli, InvalidHoppingIsDataError) {
    EXPECT_EQ(call({"bands", "--td", "-1", "--out", path("b.csv")}), 2);
    EXPECT_NE(err_.str().find("hopping"), std::string::npos);
}

TEST_F(Cli, EvolveTimeAverage) {
    ASSERT_EQ(call({"--no-timestamp", "evolve", "--state", "chi", "--tmax", "3.14159", "--steps", "1000", "--out",
                    path("m.csv")}),
              0);
    const auto r = rows(path("m.csv"));
    ASSERT_EQ(r.size(), 1001u);
    EXPECT_NEAR(r.back()[2], 1.5, 1e-6);
    for (const auto& row : r) EXPECT_NEAR(row[1], (3.0 - std::cos(4.0 * row[0])) / 2.0, 1e-9);
    ASSERT_EQ(call({"--no-timestamp", "evolve", "--state", "a1", "--tmax", "3.14159", "--out", path("a.csv")}), 0);
    EXPECT_NEAR(rows(path("a.csv")).back()[2], 1.25, 1e-6);
}

TEST_F(Cli, PlaquetteEigenmodes) {
    ASSERT_EQ(call({"--no-timestamp", "plaquette", "--beta", "1", "--out", path("p.csv")}), 0);
    const auto r = rows(path("p.csv"));
    ASSERT_EQ(r.size(), 4u);
    EXPECT_LE(r[0][3], 1e-10);
    EXPECT_LE(r[1][3], 1e-10);
    EXPECT_GT(r[2][3], 1e-3);
    for (const auto& row : r) {
        ASSERT_EQ(row.size(), 12u);
        EXPECT_NEAR(std::hypot(row[1], row[2]), 1.0, 1e-12);  // unitary S
    }
}

TEST_F(Cli, SimulateIsDeterministic) {
    const std::vector<std::string> base{"simulate", "--config", data("plaquette.json"), "--phases", "0,1.5707963268",
                                        "--points", "21"};
    auto a = base, b = base;
    a.insert(a.begin(), "--no-timestamp");
    b.insert(b.begin(), "--no-timestamp");
    a.insert(a.end(), {"--out", path("a.csv")});
    b.insert(b.end(), {"--out", path("b.csv")});
    ASSERT_EQ(call(a), 0);
    ASSERT_EQ(call(b), 0);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    const auto text = slurp(path("a.csv"));
    EXPECT_EQ(text.rfind("delta_MHz,phi_rad,element,re,im,mag,mag_dB\n", 0), 0u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 1u + 2u * 21u * 16u);

    auto c = base;
    c.insert(c.end(), {"--out", path("c.csv")});
    ASSERT_EQ(call(c), 0);
    const auto stamped = slurp(path("c.csv"));
    EXPECT_EQ(stamped.rfind("# generated=", 0), 0u);
    EXPECT_EQ(stamped.substr(stamped.find('\n') + 1), slurp(path("a.csv")));
}

TEST_F(Cli, SynthThenFitRoundTrip) {
    ASSERT_EQ(call({"synth", "--config", data("device_lattice.json"), "--phases",
                    "0,0.7853981634,1.5707963268,3.1415926536", "--out", path("traces.csv")}),
              0)
        << err_.str();
    ASSERT_EQ(call({"fit", "--config", data("device_lattice.json"), "--traces", path("traces.csv"), "--out",
                    path("report.json")}),
              0)
        << err_.str();
    const auto report = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_EQ(report["stage2"]["parameters"].size(), 29u);
    EXPECT_EQ(report["traces"], 64);
    EXPECT_EQ(report["points"], 64 * 401);
    EXPECT_TRUE(report["stage2"]["converged"].get<bool>());
    EXPECT_TRUE(report.contains("optimizer"));
    EXPECT_TRUE(report.contains("frozen_mask"));
    EXPECT_EQ(report["fitted_config"]["modes"].size(), 4u);
}

TEST_F(Cli, FitAcceptsDecibelTraces) {
    ASSERT_EQ(call({"--no-timestamp", "synth", "--config", data("device_lattice.json"), "--phases",
                    "0,0.7853981634,1.5707963268,3.1415926536", "--points", "41", "--noise", "0.01", "--seed", "3",
                    "--units", "dB", "--out", path("traces.csv")}),
              0);
    EXPECT_NE(slurp(path("traces.csv")).find("# units=dB"), std::string::npos);
    ASSERT_EQ(call({"fit", "--config", data("device_lattice.json"), "--traces", path("traces.csv"), "--out",
                    path("report.json")}),
              0)
        << err_.str();
}

TEST_F(Cli, MalformedTracesAreDataError) {
    std::ofstream(path("bad.csv")) << "# element=S_ab\n# phi_rad=0\nfreq_GHz,value\n1,2\n";
    EXPECT_EQ(call({"fit", "--config", data("device_lattice.json"), "--traces", path("bad.csv"), "--out",
                    path("r.json")}),
              2);
    EXPECT_NE(err_.str().find("line 3"), std::string::npos);
}

TEST_F(Cli, UnidentifiableFitIsFitFailure) {
    std::ofstream(path("pair.json")) << R"({"modes": [{"label": "a", "nu_GHz": 5.0, "kappa_MHz": 1.0, "eta": 0.7},
                                                     {"label": "c", "nu_GHz": 7.0, "kappa_MHz": 2.0, "eta": 0.8}],
                                           "couplings": [{"from": "a", "to": "c", "beta": 0.8}]})";
    ASSERT_EQ(call({"synth", "--config", path("pair.json"), "--points", "41", "--noise", "0.01", "--out",
                    path("t.csv")}),
              0)
        << err_.str();
    EXPECT_EQ(call({"fit", "--config", path("pair.json"), "--traces", path("t.csv"), "--out", path("r.json")}), 3);
    EXPECT_NE(err_.str().find("phi_off"), std::string::npos);
}
