/**
 * @file sparse.hpp
 * @brief Symmetric sparse assembly over free DOFs and the CHOLMOD-backed Cholesky wrapper.
 */
#pragma once

#include <Eigen/Sparse>
#include <Eigen/CholmodSupport>

#include <atomic>
#include <memory>
#include <vector>

namespace hp {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

// Splits DOFs into free and prescribed sets.
struct DofMap {
    std::vector<int> index;  // >= 0: free index; < 0: -(prescribed index) - 1
    std::vector<int> free_dofs, fixed_dofs;

    static DofMap make(int ndof, const std::vector<char>& fixed);
    int n_free() const { return static_cast<int>(free_dofs.size()); }
    int n_fixed() const { return static_cast<int>(fixed_dofs.size()); }
};

// Node-graph adjacency (sorted, self included) from element connectivity.
std::vector<std::vector<int>> node_adjacency(int n_nodes, const std::vector<int>& conn, int npe);

// Lower-triangle K_ff with a fixed pattern, plus the K_fd / K_dd coupling blocks.
class SymAssembler {
public:
    SymAssembler(const DofMap& map, const std::vector<std::vector<int>>& adjacency, int dofs_per_node);

    void add(const int* dofs, int n, const double* Ke);  // Ke row-major n x n
    void finalize();
    void zero();

    SpMat Kff;  // lower triangle only
    SpMat Kfd, Kdd;

private:
    const DofMap& map_;
    std::vector<Triplet> fd_, dd_;
};

// Full symmetric product y = K x from a lower-triangle matrix.
Vec sym_multiply(const SpMat& lower, const Vec& x);

class Cholesky {
public:
    void factorize(const SpMat& lower);
    Vec solve(const Vec& b) const;
    Eigen::MatrixXd solve_many(const Eigen::MatrixXd& B) const;
    int rows() const { return n_; }
    bool ready() const { return ready_; }
    long factorizations() const { return count_; }

    static long global_count();

private:
    std::unique_ptr<Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower>> llt_;
    int n_ = 0;
    bool ready_ = false;
    long count_ = 0;
};

}  // namespace hp
