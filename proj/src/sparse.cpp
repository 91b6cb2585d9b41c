#include "hp/sparse.hpp"

#include "hp/errors.hpp"

#include <algorithm>

namespace hp {

namespace {
std::atomic<long> g_factorizations{0};
}

DofMap DofMap::make(int ndof, const std::vector<char>& fixed) {
    DofMap m;
    m.index.resize(ndof);
    for (int i = 0; i < ndof; ++i) {
        if (!fixed.empty() && fixed[i]) {
            m.index[i] = -static_cast<int>(m.fixed_dofs.size()) - 1;
            m.fixed_dofs.push_back(i);
        } else {
            m.index[i] = static_cast<int>(m.free_dofs.size());
            m.free_dofs.push_back(i);
        }
    }
    return m;
}

std::vector<std::vector<int>> node_adjacency(int n_nodes, const std::vector<int>& conn, int npe) {
    std::vector<std::vector<int>> adj(n_nodes);
    const std::size_t ne = conn.size() / npe;
    for (std::size_t e = 0; e < ne; ++e)
        for (int a = 0; a < npe; ++a) {
            auto& v = adj[conn[e * npe + a]];
            for (int b = 0; b < npe; ++b) v.push_back(conn[e * npe + b]);
        }
    for (auto& v : adj) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return adj;
}

SymAssembler::SymAssembler(const DofMap& map, const std::vector<std::vector<int>>& adj, int dpn) : map_(map) {
    const int nf = map.n_free();
    std::vector<int> outer(nf + 1, 0);
    std::vector<int> rows;
    std::vector<int> col;
    for (int j = 0; j < nf; ++j) {
        const int gd = map.free_dofs[j];
        const int node = gd / dpn;
        col.clear();
        for (int nb : adj[node])
            for (int c = 0; c < dpn; ++c) {
                const int fi = map.index[nb * dpn + c];
                if (fi >= j) col.push_back(fi);
            }
        std::sort(col.begin(), col.end());
        rows.insert(rows.end(), col.begin(), col.end());
        outer[j + 1] = static_cast<int>(rows.size());
    }
    Kff.resize(nf, nf);
    Kff.resizeNonZeros(static_cast<Eigen::Index>(rows.size()));
    std::copy(outer.begin(), outer.end(), Kff.outerIndexPtr());
    std::copy(rows.begin(), rows.end(), Kff.innerIndexPtr());
    std::fill(Kff.valuePtr(), Kff.valuePtr() + rows.size(), 0.0);
}

void SymAssembler::zero() {
    std::fill(Kff.valuePtr(), Kff.valuePtr() + Kff.nonZeros(), 0.0);
    fd_.clear();
    dd_.clear();
}

void SymAssembler::add(const int* dofs, int n, const double* Ke) {
    const int* outer = Kff.outerIndexPtr();
    const int* inner = Kff.innerIndexPtr();
    double* val = Kff.valuePtr();
    for (int b = 0; b < n; ++b) {
        const int jb = map_.index[dofs[b]];
        for (int a = 0; a < n; ++a) {
            const double v = Ke[a * n + b];
            const int ia = map_.index[dofs[a]];
            if (jb >= 0) {
                if (ia >= jb) {
                    const int* p = std::lower_bound(inner + outer[jb], inner + outer[jb + 1], ia);
                    val[p - inner] += v;
                }
            } else {
                if (ia >= 0) fd_.emplace_back(ia, -jb - 1, v);
                else dd_.emplace_back(-ia - 1, -jb - 1, v);
            }
        }
    }
}

void SymAssembler::finalize() {
    Kfd.resize(map_.n_free(), map_.n_fixed());
    Kfd.setFromTriplets(fd_.begin(), fd_.end());
    Kdd.resize(map_.n_fixed(), map_.n_fixed());
    Kdd.setFromTriplets(dd_.begin(), dd_.end());
    fd_.clear();
    fd_.shrink_to_fit();
    dd_.clear();
    dd_.shrink_to_fit();
}

Vec sym_multiply(const SpMat& lower, const Vec& x) {
    return lower.selfadjointView<Eigen::Lower>() * x;
}

void Cholesky::factorize(const SpMat& lower) {
    llt_ = std::make_unique<Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower>>();
    llt_->cholmod().print = 0;
    n_ = static_cast<int>(lower.rows());
    llt_->compute(lower);
    ++count_;
    ++g_factorizations;
    if (llt_->info() != Eigen::Success) {
        ready_ = false;
        throw SingularityError("Cholesky factorization failed: matrix singular or not positive definite");
    }
    ready_ = true;
}

Vec Cholesky::solve(const Vec& b) const {
    if (!ready_) throw SolverError("solve before factorization");
    Vec x = llt_->solve(b);
    return x;
}

Eigen::MatrixXd Cholesky::solve_many(const Eigen::MatrixXd& B) const {
    if (!ready_) throw SolverError("solve before factorization");
    return llt_->solve(B);
}

long Cholesky::global_count() { return g_factorizations.load(); }

}  // namespace hp
