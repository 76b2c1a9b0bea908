#pragma once

// Large-N perturbation of a rank-one dominated covariance C = gamma gamma' + C1.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mktphase/error.hpp"

namespace mktphase {

struct RankOneDecomposition {
    Eigen::VectorXd gamma;
    Eigen::MatrixXd C1;
    double E0 = 0.0;     // gamma . gamma
    double A1 = 0.0;     // (gamma, C1 gamma) / E0
    double A2 = 0.0;     // (gamma, C1^2 gamma) / E0
    Eigen::VectorXd a;   // sqrt(N / E0) * C1 gamma

    Eigen::Index size() const { return gamma.size(); }
};

inline RankOneDecomposition decompose(Eigen::VectorXd gamma, Eigen::MatrixXd C1)
{
    if (C1.rows() != gamma.size() || C1.cols() != gamma.size())
        throw ValidationError("perturbation matrix does not match gamma");
    RankOneDecomposition d;
    d.E0 = gamma.squaredNorm();
    if (!(d.E0 > 0.0)) throw ValidationError("rank-one part must have E0 > 0");
    const Eigen::VectorXd c1g = C1 * gamma;
    d.A1 = gamma.dot(c1g) / d.E0;
    d.A2 = c1g.squaredNorm() / d.E0;
    d.a = std::sqrt(static_cast<double>(gamma.size()) / d.E0) * c1g;
    d.gamma = std::move(gamma);
    d.C1 = std::move(C1);
    return d;
}

struct PerturbedLeading {
    double lambda0 = 0.0;
    Eigen::VectorXd beta;   // sqrt(N) f^0, not renormalized
};

/// Second-order leading eigenvalue and first-order eigenvector (beta scale).
inline PerturbedLeading perturb_eigenpair(const RankOneDecomposition& d)
{
    if (!(d.E0 > 0.0)) throw ValidationError("E0 must be positive");
    const double n = static_cast<double>(d.size());
    PerturbedLeading out;
    out.lambda0 = d.E0 + d.A1 + (d.A2 - d.A1 * d.A1) / d.E0;
    out.beta = (1.0 - d.A1 / d.E0) * std::sqrt(n / d.E0) * d.gamma + d.a / d.E0;
    return out;
}

struct PerturbedBulk {
    std::vector<double> lambda;     // mu = 1..N-1, in the order of the A1-diagonal basis
    Eigen::MatrixXd basis;          // columns e^mu satisfying e^nu . C1 e^mu = 0 for nu != mu
    Eigen::MatrixXd f;              // columns f^mu
};

/// Bulk eigenvalues/eigenvectors. The degenerate zero-eigenspace basis is fixed by
/// diagonalizing C1 on the orthogonal complement of e^0.
inline PerturbedBulk perturb_bulk(const RankOneDecomposition& d)
{
    if (!(d.E0 > 0.0)) throw ValidationError("E0 must be positive");
    const Eigen::Index n = d.size();
    const Eigen::VectorXd e0 = d.gamma / std::sqrt(d.E0);

    // Q's first column is +-e0; the remaining n-1 columns span its complement.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(e0);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd comp = Q.rightCols(n - 1);
    const Eigen::MatrixXd projected = comp.transpose() * d.C1 * comp;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(projected);
    if (solver.info() != Eigen::Success) throw ComputeError("complement diagonalization failed");

    PerturbedBulk out;
    out.basis = comp * solver.eigenvectors();
    out.f.resize(n, n - 1);
    out.lambda.resize(static_cast<std::size_t>(n - 1));
    const Eigen::MatrixXd c1e = d.C1 * out.basis;
    for (Eigen::Index mu = 0; mu < n - 1; ++mu) {
        const double overlap = e0.dot(c1e.col(mu));
        out.lambda[static_cast<std::size_t>(mu)] =
            out.basis.col(mu).dot(c1e.col(mu)) - overlap * overlap / d.E0;
        out.f.col(mu) = out.basis.col(mu) - (overlap / d.E0) * e0;
    }
    return out;
}

} // namespace mktphase
