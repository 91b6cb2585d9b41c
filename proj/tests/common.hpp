#pragma once

#include "hp/laminate.hpp"

namespace testing_support {

inline hp::OrthotropicPly study_ply() {
    hp::OrthotropicPly p;
    p.E_L = 25;
    p.E_T = p.E_N = 1;
    p.G_LT = p.G_LN = 0.5;
    p.G_TN = 0.2;
    p.nu_LT = p.nu_TN = p.nu_LN = 0.25;
    p.thickness = 0.1;
    return p;
}

inline hp::Laminate cross_ply() { return hp::Laminate::symmetric(study_ply(), {-45, 45}); }

inline hp::Laminate isotropic_plate(double E, double nu, double h, int plies = 4) {
    hp::Laminate lam;
    for (int k = 0; k < plies; ++k) lam.plies.push_back(hp::OrthotropicPly::isotropic(E, nu, 2 * h / plies));
    return lam;
}

}  // namespace testing_support
