#pragma once

#include "lmmlasso/core.hpp"

#include <Eigen/Cholesky>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lmmlasso {

/// How the variance components were produced; used for reporting only.
enum class CovarianceTemplate { custom, linear, random_intercept };

/// Block-diagonal storage of the variance components H_1..H_r.
///
/// An unclustered model is a single block holding every observation. Blocks
/// list observation indices, so a partition need not be contiguous.
struct CovarianceStructure {
    Index n = 0;
    std::vector<std::vector<Index>> blocks;
    /// components[k][b] is the (b, b) diagonal block of H_{k+1}.
    std::vector<std::vector<Matrix>> components;
    /// Numerical rank of each H_k: eigenvalues above 1e-8 * eta_1(H_k).
    std::vector<Index> ranks;
    bool clustered = false;
    /// twin[b] is the first block with identical components (b itself if none);
    /// such blocks share one factorization.
    std::vector<Index> twin;

    [[nodiscard]] Index r() const { return static_cast<Index>(components.size()); }
    [[nodiscard]] Index block_count() const { return static_cast<Index>(blocks.size()); }
};

/// The dependent linear model y = X beta + eps, eps ~ N(0, sum_k theta_k H_k).
struct ModelData {
    Vector y;
    Matrix X;
    std::shared_ptr<const CovarianceStructure> structure;
    /// Block id of each observation, present for clustered models.
    std::optional<std::vector<Index>> cluster_index;
    std::vector<std::string> labels;
    CovarianceTemplate kind = CovarianceTemplate::custom;

    [[nodiscard]] Index n() const { return X.rows(); }
    [[nodiscard]] Index p() const { return X.cols(); }
    [[nodiscard]] Index r() const { return structure->r(); }

    /// Dense n x n assembly of H_{k+1} (zero-based k).
    [[nodiscard]] Matrix component(Index k) const;
    /// Dense V(theta) = sum_k theta_k H_k.
    [[nodiscard]] Matrix covariance(const Vector& theta) const;
    /// Same model with a different response; shares the covariance structure.
    [[nodiscard]] ModelData with_response(Vector response) const;
    /// Same model restricted to a subset of fixed-effect columns (may be empty).
    [[nodiscard]] ModelData with_columns(std::span<const Index> columns) const;
};

/// One cluster of a clustered mixed model: y_i = X_i beta + Z_i v_i + e_i.
struct Cluster {
    Vector y;
    Matrix X;
    /// Random-effects design, n_i x q (q may be zero).
    Matrix Z;
    /// omega[k] is the coefficient matrix of theta_k in Omega_i(theta), n_i x n_i.
    std::vector<Matrix> omega;
};

/// Clustered specification with Psi(theta) = sum_k theta_k psi[k].
struct ClusteredSpec {
    std::vector<Cluster> clusters;
    std::vector<Matrix> psi;
};

/// Compiles a clustered specification into variance-component form. Clusters are
/// stacked in order and each becomes one covariance block.
[[nodiscard]] ModelData build_from_clustered(const ClusteredSpec& spec);

/// Builds an unclustered model from dense n x n components.
[[nodiscard]] ModelData build_from_components(Vector y, Matrix X, std::vector<Matrix> components);

/// Random-intercept model: H_1 = blockdiag(1 1^T) over the clusters given by
/// `cluster_of` (one label per observation, any order), H_2 = I.
[[nodiscard]] ModelData build_random_intercept(Vector y, Matrix X, std::span<const Index> cluster_of);

/// Declares a block structure for an existing model. Every component must be
/// block-diagonal conformal to the partition.
[[nodiscard]] ModelData attach_clusters(const ModelData& model, std::span<const Index> cluster_of);

/// Indices of columns of X that are linear combinations of earlier columns.
[[nodiscard]] std::vector<Index> dependent_columns(const Matrix& X);

/// Cholesky factorization of V(theta), one lower factor per covariance block.
class CovOperator {
public:
    CovOperator(Vector theta, std::shared_ptr<const CovarianceStructure> structure,
                std::vector<Matrix> factors, double logdet);

    [[nodiscard]] const Vector& theta() const { return theta_; }
    [[nodiscard]] double logdet() const { return logdet_; }
    [[nodiscard]] const std::vector<Matrix>& factors() const { return factors_; }
    [[nodiscard]] const CovarianceStructure& structure() const { return *structure_; }
    [[nodiscard]] Index n() const { return structure_->n; }

    /// Dense lower-triangular factor (rows/cols in observation order).
    [[nodiscard]] Matrix dense_factor() const;
    /// L L^T assembled densely.
    [[nodiscard]] Matrix reconstruct() const;

private:
    Vector theta_;
    std::shared_ptr<const CovarianceStructure> structure_;
    std::vector<Matrix> factors_;
    double logdet_;
};

/// Factorizes V(theta); throws FactorizationError if a block is not positive definite.
[[nodiscard]] CovOperator assemble_cov(const ModelData& model, const Vector& theta);

/// Returns L^{-1} A where V = L L^T, so ||whiten(cov, v)||^2 = v^T V^{-1} v.
template <typename Derived>
[[nodiscard]] Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>
whiten(const CovOperator& cov, const Eigen::MatrixBase<Derived>& A) {
    using Result = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>;
    if (A.rows() != cov.n()) {
        throw InputError("whiten: expected " + std::to_string(cov.n()) + " rows, got " +
                         std::to_string(A.rows()));
    }
    const auto& blocks = cov.structure().blocks;
    Result out(A.rows(), A.cols());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        Result part = A(blocks[b], Eigen::all);
        cov.factors()[b].template triangularView<Eigen::Lower>().solveInPlace(part);
        out(blocks[b], Eigen::all) = part;
    }
    return out;
}

/// C = n^{-1} X^T V(theta)^{-1} X.
[[nodiscard]] Matrix compute_C(const ModelData& model, const Vector& theta);

}  // namespace lmmlasso
