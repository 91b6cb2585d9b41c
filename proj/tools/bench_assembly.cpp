// Element stiffness timings: OpenMP-parallel against serial, with and without the congruence cache.
#include "hp/laminate.hpp"
#include "hp/runtime.hpp"
#include "hp/scenario.hpp"
#include "hp/solid_fem.hpp"

#include "CLI11.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>

int main(int argc, char** argv) {
    hp::ensure_blas_kernel(argv);
    CLI::App app{"Element assembly benchmark"};
    std::string scenario = "holed_plate";
    int repeat = 3, n_side = 0;
    app.add_option("scenario", scenario, "cantilever or holed_plate")->check(CLI::IsMember({"cantilever", "holed_plate"}));
    app.add_option("-r,--repeat", repeat, "timed repetitions (best is reported)")->check(CLI::PositiveNumber);
    app.add_option("-n,--n-side", n_side, "override elements along a zone side");
    CLI11_PARSE(app, argc, argv);

    hp::Scenario s = hp::default_scenario(scenario);
    if (n_side > 0) s.mesh.n_side = n_side;
    const hp::SolidMesh mesh = hp::generate_solid_mesh(s.geometry, s.laminate, s.mesh, true);
    std::vector<hp::Mat6> C;
    for (const auto& p : s.laminate.plies) C.push_back(hp::ply_stiffness(p));
    std::printf("%s: %d elements, %zu nodes, %d threads\n", scenario.c_str(), mesh.num_elems(), mesh.nodes.size(),
                omp_get_max_threads());

    hp::ElementMatrices ref;
    for (bool cache : {false, true})
        for (bool parallel : {false, true}) {
            double best = 1e300;
            hp::ElementMatrices em;
            for (int k = 0; k < repeat; ++k) {
                const auto t0 = std::chrono::steady_clock::now();
                em = hp::compute_element_matrices(mesh, C, {parallel, cache});
                best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            }
            bool same = true;
            if (!parallel) {
                ref = em;
            } else {
                same = em.slot == ref.slot && em.data.size() == ref.data.size() &&
                       std::memcmp(em.data.data(), ref.data.data(), em.data.size() * sizeof(double)) == 0;
            }
            std::printf("cache=%-3s %-8s %9.4f s  unique matrices %zu%s\n", cache ? "on" : "off",
                        parallel ? "parallel" : "serial", best, em.data.size() / (em.size * em.size),
                        parallel ? (same ? "  identical to serial" : "  DIFFERS from serial") : "");
            if (!same) return 1;
        }
    return 0;
}
