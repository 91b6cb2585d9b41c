/**
 * @file shape.hpp
 * @brief Lagrange/serendipity shape functions and Gauss rules shared by the kernels.
 */
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

namespace hp::shape {

struct Gauss1D {
    std::vector<double> x, w;
};

inline Gauss1D gauss(int n) {
    switch (n) {
        case 1: return {{0.0}, {2.0}};
        case 2: {
            const double a = 1.0 / std::sqrt(3.0);
            return {{-a, a}, {1.0, 1.0}};
        }
        case 3: {
            const double a = std::sqrt(0.6);
            return {{-a, 0.0, a}, {5.0 / 9, 8.0 / 9, 5.0 / 9}};
        }
        default: {
            const double a = std::sqrt(3.0 / 7 - 2.0 / 7 * std::sqrt(1.2));
            const double b = std::sqrt(3.0 / 7 + 2.0 / 7 * std::sqrt(1.2));
            const double wa = (18 + std::sqrt(30.0)) / 36, wb = (18 - std::sqrt(30.0)) / 36;
            return {{-b, -a, a, b}, {wb, wa, wa, wb}};
        }
    }
}

// Natural coordinates of hexahedron nodes (8 corners, then 12 mid-edges for HEX20).
inline const std::array<std::array<double, 3>, 20>& hex_nodes() {
    static const std::array<std::array<double, 3>, 20> xi = {{
        {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
        {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
        {0, -1, -1},  {1, 0, -1},  {0, 1, -1}, {-1, 0, -1},
        {0, -1, 1},   {1, 0, 1},   {0, 1, 1},  {-1, 0, 1},
        {-1, -1, 0},  {1, -1, 0},  {1, 1, 0},  {-1, 1, 0},
    }};
    return xi;
}

// N (n) and dN/dxi (n x 3) for HEX8 (n=8) or HEX20 (n=20).
inline void hex(int n, double x, double y, double z, double* N, double (*dN)[3]) {
    const auto& P = hex_nodes();
    if (n == 8) {
        for (int a = 0; a < 8; ++a) {
            const double xa = P[a][0], ya = P[a][1], za = P[a][2];
            const double fx = 1 + x * xa, fy = 1 + y * ya, fz = 1 + z * za;
            N[a] = 0.125 * fx * fy * fz;
            dN[a][0] = 0.125 * xa * fy * fz;
            dN[a][1] = 0.125 * ya * fx * fz;
            dN[a][2] = 0.125 * za * fx * fy;
        }
        return;
    }
    for (int a = 0; a < 20; ++a) {
        const double xa = P[a][0], ya = P[a][1], za = P[a][2];
        if (a < 8) {
            const double fx = 1 + x * xa, fy = 1 + y * ya, fz = 1 + z * za;
            const double s = x * xa + y * ya + z * za - 2;
            N[a] = 0.125 * fx * fy * fz * s;
            dN[a][0] = 0.125 * xa * fy * fz * (s + fx);
            dN[a][1] = 0.125 * ya * fx * fz * (s + fy);
            dN[a][2] = 0.125 * za * fx * fy * (s + fz);
        } else if (xa == 0) {
            const double fy = 1 + y * ya, fz = 1 + z * za;
            N[a] = 0.25 * (1 - x * x) * fy * fz;
            dN[a][0] = -0.5 * x * fy * fz;
            dN[a][1] = 0.25 * (1 - x * x) * ya * fz;
            dN[a][2] = 0.25 * (1 - x * x) * fy * za;
        } else if (ya == 0) {
            const double fx = 1 + x * xa, fz = 1 + z * za;
            N[a] = 0.25 * (1 - y * y) * fx * fz;
            dN[a][0] = 0.25 * (1 - y * y) * xa * fz;
            dN[a][1] = -0.5 * y * fx * fz;
            dN[a][2] = 0.25 * (1 - y * y) * fx * za;
        } else {
            const double fx = 1 + x * xa, fy = 1 + y * ya;
            N[a] = 0.25 * (1 - z * z) * fx * fy;
            dN[a][0] = 0.25 * (1 - z * z) * xa * fy;
            dN[a][1] = 0.25 * (1 - z * z) * fx * ya;
            dN[a][2] = -0.5 * z * fx * fy;
        }
    }
}

// Natural coordinates of quadrilateral nodes: 4 corners ccw, then mids of edges 01,12,23,30.
inline const std::array<std::array<double, 2>, 8>& quad_nodes() {
    static const std::array<std::array<double, 2>, 8> xi = {
        {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}, {0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
    return xi;
}

// Q4 (n=4) or serendipity Q8 (n=8).
inline void quad(int n, double x, double y, double* N, double (*dN)[2]) {
    const auto& P = quad_nodes();
    if (n == 4) {
        for (int a = 0; a < 4; ++a) {
            const double xa = P[a][0], ya = P[a][1];
            N[a] = 0.25 * (1 + x * xa) * (1 + y * ya);
            dN[a][0] = 0.25 * xa * (1 + y * ya);
            dN[a][1] = 0.25 * ya * (1 + x * xa);
        }
        return;
    }
    for (int a = 0; a < 8; ++a) {
        const double xa = P[a][0], ya = P[a][1];
        if (a < 4) {
            const double fx = 1 + x * xa, fy = 1 + y * ya, s = x * xa + y * ya - 1;
            N[a] = 0.25 * fx * fy * s;
            dN[a][0] = 0.25 * xa * fy * (s + fx);
            dN[a][1] = 0.25 * ya * fx * (s + fy);
        } else if (xa == 0) {
            const double fy = 1 + y * ya;
            N[a] = 0.5 * (1 - x * x) * fy;
            dN[a][0] = -x * fy;
            dN[a][1] = 0.5 * (1 - x * x) * ya;
        } else {
            const double fx = 1 + x * xa;
            N[a] = 0.5 * (1 - y * y) * fx;
            dN[a][0] = 0.5 * (1 - y * y) * xa;
            dN[a][1] = -y * fx;
        }
    }
}

// 1D Lagrange basis on {-1, 0, 1} (quadratic) or {-1, 1} (linear).
inline void line(int n, double x, double* N, double* dN) {
    if (n == 2) {
        N[0] = 0.5 * (1 - x);
        N[1] = 0.5 * (1 + x);
        dN[0] = -0.5;
        dN[1] = 0.5;
        return;
    }
    N[0] = 0.5 * x * (x - 1);
    N[1] = 1 - x * x;
    N[2] = 0.5 * x * (x + 1);
    dN[0] = x - 0.5;
    dN[1] = -2 * x;
    dN[2] = x + 0.5;
}

}  // namespace hp::shape
