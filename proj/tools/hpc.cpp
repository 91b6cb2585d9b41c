// Command-line driver: basis building, scenario runs, line comparisons and config defaults.
#include "hp/errors.hpp"
#include "hp/runtime.hpp"
#include "hp/scenario.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace {

int basis_build(const std::string& config, const std::string& out) {
    hp::Scenario s = hp::load_scenario(config);
    std::vector<double> history;
    const hp::SaintVenantBasis b = hp::scenario_basis(s, &history);
    std::ofstream os(out);
    if (!os) throw hp::ConfigError("cannot write '" + out + "'");
    hp::save_basis(os, b);
    std::cout << "basis written to " << out << '\n';
    for (std::size_t i = 0; i < history.size(); ++i) std::cout << "refinement pass " << i + 1 << ": " << history[i] << '\n';
    return 0;
}

int basis_inspect(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw hp::ConfigError("cannot open basis '" + path + "'");
    const hp::SaintVenantBasis b = hp::load_basis(is);
    hp::Mat8 G;
    for (int i = 0; i < 8; ++i) G.col(i) = hp::generalized_forces(b.grid, b.tau[i]);
    std::cout << "half thickness " << b.h << "\nlayers " << b.grid.layers() << " (order " << b.grid.order
              << ")\ncell side " << b.cell_side << "\nlaminate hash " << b.laminate_hash << "\nrefinement level "
              << b.refinement_level << '\n';
    for (std::size_t i = 0; i < b.history.size(); ++i) std::cout << "refinement pass " << i + 1 << ": " << b.history[i] << '\n';
    std::cout << "max |F(tau) - I| = " << (G - hp::Mat8::Identity()).cwiseAbs().maxCoeff() << '\n';
    return 0;
}

int run(const std::string& config) {
    const hp::Scenario s = hp::load_scenario(config);
    const hp::ScenarioResult r = hp::run_scenario(s);
    hp::write_summary(std::cout, r);
    for (const auto& f : r.files) std::cout << "wrote " << f << '\n';
    return 0;
}

int compare(const std::string& ref, const std::string& hyb, const std::string& iter0, const std::string& out,
            double tol) {
    auto read = [](const std::string& p) {
        std::ifstream is(p);
        if (!is) throw hp::ConfigError("cannot open '" + p + "'");
        return hp::read_line_csv(is, p);
    };
    const hp::StressLine a = read(ref), b = read(hyb);
    hp::StressLine c;
    if (!iter0.empty()) c = read(iter0);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw hp::ConfigError("cannot write '" + out + "'");
    }
    std::ostream& csv = out.empty() ? std::cout : file;
    const hp::CompareReport rep = hp::compare_lines(a, b, iter0.empty() ? nullptr : &c, csv, std::cerr, tol);
    hp::write_compare_summary(out.empty() ? std::cerr : std::cout, rep);
    return rep.pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    hp::ensure_blas_kernel(argv);
    CLI::App app{"Hybrid plate/3D coupling"};
    app.require_subcommand(1);

    auto* basis = app.add_subcommand("basis", "Saint-Venant basis files");
    basis->require_subcommand(1);
    std::string config, out = "basis.svb", file;
    auto* build = basis->add_subcommand("build", "Build a basis from the laminate and cell settings of a config");
    build->add_option("config", config, "scenario config")->required();
    build->add_option("-o,--output", out, "basis file");
    auto* inspect = basis->add_subcommand("inspect", "Print a basis summary");
    inspect->add_option("file", file, "basis file")->required();

    auto* runc = app.add_subcommand("run", "Run a scenario");
    runc->add_option("config", config, "scenario config")->required();

    std::string ref, hyb, iter0, cmp_out;
    double tol = 0.05;
    auto* cmp = app.add_subcommand("compare", "Compare stress lines of a hybrid run with a reference");
    cmp->add_option("reference", ref, "reference line CSV")->required();
    cmp->add_option("hybrid", hyb, "hybrid line CSV")->required();
    cmp->add_option("--iter0", iter0, "submodeling line CSV of the same run");
    cmp->add_option("-o,--output", cmp_out, "comparison CSV (stdout when absent)");
    cmp->add_option("--tolerance", tol, "relative RMS tolerance");

    std::string name;
    auto* defs = app.add_subcommand("defaults", "Print the default config of a scenario");
    defs->add_option("scenario", name, "cell, cantilever, holed_plate or custom")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 4;
    }

    try {
        if (*build) return basis_build(config, out);
        if (*inspect) return basis_inspect(file);
        if (*runc) return run(config);
        if (*cmp) return compare(ref, hyb, iter0, cmp_out, tol);
        if (*defs) {
            hp::write_scenario(std::cout, hp::default_scenario(name));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return hp::exit_code_for(e);
    }
    return 0;
}
