#include "doctest.h"
#include "hp/errors.hpp"
#include "hp/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace hp;

namespace {

namespace fs = std::filesystem;

Scenario parse(const std::string& text) {
    std::istringstream is(text);
    return parse_scenario(is, "t.ini");
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

StressLine sample_line_data(int n) {
    StressLine l;
    l.spec.z_xx = 0.2;
    l.spec.z_zz = 0.1;
    for (int i = 0; i < n; ++i) {
        LineSample p;
        p.r = 0.5 * i;
        p.x = 1 + p.r;
        p.y = -p.r;
        p.sxx = std::sin(p.r) + 2;
        p.sxz = 0.1 * std::cos(p.r);
        p.szz = 0.01 * p.r;
        p.Mxx = 3 - p.r;
        p.Qx = 0.3;
        l.spec.r.push_back(p.r);
        l.spec.points.emplace_back(p.x, p.y);
        l.samples.push_back(p);
    }
    return l;
}

// Cantilever small enough for a unit test.
Scenario tiny_cantilever(const std::string& out) {
    Scenario s = default_scenario("cantilever");
    s.output = out;
    s.geometry.L = s.geometry.a = 2;
    s.coupling.buffer_width = s.geometry.buffer = 0.5;
    s.mesh.n_side = 8;
    s.mesh.n_outside = 6;
    s.mesh.layers_per_ply = 1;
    s.cell.densities.n_side = 8;
    s.coupling.max_iterations = 3;
    s.descents = {DescentMode::kDisplacement};
    return s;
}

}  // namespace

TEST_CASE("config errors carry the line number") {
    CHECK(error_of("[scenario]\nname = cantilever\nbogus = 1\n").find("t.ini:3:") != std::string::npos);
    CHECK(error_of("[scenario]\nname = cantilever\n\n[nowhere]\n").find("t.ini:4:") != std::string::npos);
    CHECK(error_of("[scenario]\nname = cantilever\n[mesh]\nn_side = twelve\n").find("t.ini:4:") != std::string::npos);
    CHECK(error_of("[scenario]\nname = cantilever\n[mesh]\nn_side = 4\nn_side = 5\n").find("t.ini:5:") !=
          std::string::npos);
    CHECK(error_of("[scenario]\nname = cantilever\nreference = maybe\n").find("t.ini:3:") != std::string::npos);
    CHECK_FALSE(error_of("[scenario]\noutput = x\n").empty());
    CHECK_FALSE(error_of("[scenario]\nname = cantilever\n[coupling]\nrelaxation = 2\n").empty());
    CHECK_FALSE(error_of("[scenario]\nname = tower\n").empty());
}

TEST_CASE("comments and overrides") {
    const Scenario s = parse("# header\n[scenario]\nname = holed_plate  ; trailing\n[coupling]\nbuffer_width = 4\n"
                             "accelerator = fixed_point\n[mesh]\nn_side = 12\n");
    CHECK(s.name == "holed_plate");
    CHECK(s.coupling.buffer_width == 4);
    CHECK(s.geometry.buffer == 4);
    CHECK(s.coupling.accelerator == Accelerator::kFixedPoint);
    CHECK(s.mesh.n_side == 12);
    CHECK(s.mesh.n_radial == default_scenario("holed_plate").mesh.n_radial);
}

TEST_CASE("default configs round trip") {
    for (const char* name : {"cell", "cantilever", "holed_plate", "custom"}) {
        std::ostringstream a;
        write_scenario(a, default_scenario(name));
        std::istringstream is(a.str());
        const Scenario s = parse_scenario(is, name);
        std::ostringstream b;
        write_scenario(b, s);
        CHECK(a.str() == b.str());
        CHECK_NOTHROW(s.validate());
    }
}

TEST_CASE("line csv round trip") {
    const StressLine l = sample_line_data(9);
    std::ostringstream a;
    write_line_csv(a, l);
    std::istringstream is(a.str());
    const StressLine r = read_line_csv(is);
    REQUIRE(r.samples.size() == l.samples.size());
    CHECK(r.spec.z_xx == doctest::Approx(0.2));
    std::ostringstream b;
    write_line_csv(b, r);
    CHECK(a.str() == b.str());
    std::istringstream bad("r_mm,x_mm\n1,2\n");
    CHECK_THROWS(read_line_csv(bad));
}

TEST_CASE("line comparisons") {
    const StressLine l = sample_line_data(9);
    std::ostringstream csv, warn;
    const CompareReport self = compare_lines(l, l, nullptr, csv, warn);
    for (double v : self.rms) CHECK(v == 0.0);
    CHECK(self.pass());
    CHECK(warn.str().empty());

    StressLine off = l;
    for (auto& p : off.samples) p.sxx *= 1.1;
    CHECK(rms_deviation(l, off, LineField::kSxx) == doctest::Approx(0.1));
    CHECK(max_deviation(l, off, LineField::kSxx) == doctest::Approx(0.1));
    const CompareReport r = compare_lines(l, off, &l, csv, warn, 0.05);
    CHECK_FALSE(r.pass());

    const StressLine coarse = sample_line_data(5);
    std::ostringstream w2;
    const CompareReport rs = compare_lines(l, coarse, nullptr, csv, w2);
    CHECK(rs.resampled);
    CHECK_FALSE(w2.str().empty());
    CHECK(interpolate(l, 0.25).sxx == doctest::Approx(0.5 * (l.samples[0].sxx + l.samples[1].sxx)));
    CHECK_THROWS_AS(interpolate(l, 100), GeometryError);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(ConfigError("x")) == 4);
    CHECK(exit_code_for(FormatError("x")) == 4);
    CHECK(exit_code_for(SingularityError("x")) == 3);
    CHECK(exit_code_for(DivergenceError("x")) == 3);
}

TEST_CASE("small cantilever run is deterministic") {
    const fs::path root = fs::temp_directory_path() / "hp_cli_test";
    fs::remove_all(root);
    const ScenarioResult a = run_scenario(tiny_cantilever((root / "a").string()));
    const ScenarioResult b = run_scenario(tiny_cantilever((root / "b").string()));
    REQUIRE(a.runs.size() == 1);
    CHECK(a.has_reference);
    CHECK(a.runs[0].plate_factorizations == 1);
    REQUIRE(a.files.size() == b.files.size());
    int csvs = 0;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        const fs::path pa = a.files[i], pb = b.files[i];
        CHECK(pa.filename() == pb.filename());
        if (pa.extension() != ".csv") continue;
        ++csvs;
        CHECK(slurp(pa) == slurp(pb));
    }
    CHECK(csvs >= 4);
    CHECK(fs::exists(root / "a" / "line_reference.csv"));
    fs::remove_all(root);
}
