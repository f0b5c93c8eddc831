#include "lmmlasso/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace lmmlasso {

namespace {

constexpr double kSymmetryTol = 1e-8;
constexpr double kPsdTol = 1e-8;
constexpr double kPdTol = 1e-10;
constexpr double kRankTol = 1e-8;

void check_symmetric(const Matrix& H, const std::string& what) {
    const double scale = std::max(H.norm(), 1.0e-300);
    if ((H - H.transpose()).norm() > kSymmetryTol * scale) {
        throw InputError(what + " is not symmetric");
    }
}

// Validates PSD/PD of each component and computes numerical ranks.
std::vector<Index> validate_components(const CovarianceStructure& s) {
    std::vector<Index> ranks;
    const Index r = s.r();
    for (Index k = 0; k < r; ++k) {
        std::vector<double> eigs;
        for (const auto& block : s.components[k]) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(block, Eigen::EigenvaluesOnly);
            for (Index i = 0; i < es.eigenvalues().size(); ++i) eigs.push_back(es.eigenvalues()(i));
        }
        double lo = 0.0, hi = 0.0, spec = 0.0;
        if (!eigs.empty()) {
            auto [mn, mx] = std::minmax_element(eigs.begin(), eigs.end());
            lo = *mn;
            hi = *mx;
            spec = std::max(std::abs(lo), std::abs(hi));
        }
        const std::string name = "component H_" + std::to_string(k + 1);
        if (k + 1 < r) {
            if (lo < -kPsdTol * spec) throw InputError(name + " is not positive semi-definite");
        } else if (!(lo > kPdTol * spec) || spec == 0.0) {
            throw InputError("last component must be positive definite");
        }
        const double cut = kRankTol * hi;
        ranks.push_back(static_cast<Index>(
            std::count_if(eigs.begin(), eigs.end(), [cut](double e) { return e > cut; })));
        if (ranks.back() == 0) throw InputError(name + " has rank zero");
    }
    return ranks;
}

void validate_design(const Vector& y, const Matrix& X, Index n) {
    if (y.size() != n || X.rows() != n) {
        throw InputError("response/design have " + std::to_string(y.size()) + "/" +
                         std::to_string(X.rows()) + " rows, expected " + std::to_string(n));
    }
    if (X.cols() == 0) throw InputError("design matrix has no columns");
    if (X.cols() >= n) throw InputError("need p < n fixed effects");
    if (!y.allFinite() || !X.allFinite()) throw InputError("non-finite values in response or design");
    const auto dep = dependent_columns(X);
    if (!dep.empty()) {
        std::string cols;
        for (Index j : dep) cols += (cols.empty() ? "" : ", ") + std::to_string(j + 1);
        throw InputError("design matrix is rank deficient; dependent columns: " + cols);
    }
}

std::vector<Index> block_ids(const CovarianceStructure& s) {
    std::vector<Index> ids(static_cast<std::size_t>(s.n));
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        for (Index i : s.blocks[b]) ids[static_cast<std::size_t>(i)] = static_cast<Index>(b);
    }
    return ids;
}

// First earlier block whose components match block b exactly, else b.
std::vector<Index> twins(const CovarianceStructure& s) {
    std::vector<Index> twin(s.blocks.size());
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        twin[b] = static_cast<Index>(b);
        for (std::size_t a = 0; a < b; ++a) {
            if (twin[a] != static_cast<Index>(a)) continue;
            bool same = true;
            for (Index k = 0; k < s.r() && same; ++k) {
                const auto& c = s.components[static_cast<std::size_t>(k)];
                same = c[a].rows() == c[b].rows() && c[a] == c[b];
            }
            if (same) {
                twin[b] = static_cast<Index>(a);
                break;
            }
        }
    }
    return twin;
}

std::vector<std::vector<Index>> partition(std::span<const Index> cluster_of) {
    std::map<Index, std::size_t> order;
    std::vector<std::vector<Index>> blocks;
    for (std::size_t i = 0; i < cluster_of.size(); ++i) {
        auto [it, inserted] = order.try_emplace(cluster_of[i], blocks.size());
        if (inserted) blocks.emplace_back();
        blocks[it->second].push_back(static_cast<Index>(i));
    }
    return blocks;
}

}  // namespace

std::vector<Index> dependent_columns(const Matrix& X) {
    std::vector<Index> dependent;
    std::vector<Index> kept;
    const double scale = std::max(X.norm(), 1e-300);
    for (Index j = 0; j < X.cols(); ++j) {
        if (X.col(j).norm() <= 1e-12 * scale) {
            dependent.push_back(j);
            continue;
        }
        Matrix trial(X.rows(), static_cast<Index>(kept.size()) + 1);
        for (std::size_t c = 0; c < kept.size(); ++c) trial.col(static_cast<Index>(c)) = X.col(kept[c]);
        trial.col(trial.cols() - 1) = X.col(j);
        Eigen::ColPivHouseholderQR<Matrix> qr(trial);
        qr.setThreshold(1e-10);
        if (qr.rank() == trial.cols()) {
            kept.push_back(j);
        } else {
            dependent.push_back(j);
        }
    }
    return dependent;
}

Matrix ModelData::component(Index k) const {
    const auto& s = *structure;
    Matrix H = Matrix::Zero(s.n, s.n);
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        H(s.blocks[b], s.blocks[b]) = s.components[static_cast<std::size_t>(k)][b];
    }
    return H;
}

Matrix ModelData::covariance(const Vector& theta) const {
    Matrix V = Matrix::Zero(n(), n());
    for (Index k = 0; k < r(); ++k) V += theta(k) * component(k);
    return V;
}

ModelData ModelData::with_response(Vector response) const {
    if (response.size() != n()) throw InputError("with_response: length mismatch");
    ModelData out = *this;
    out.y = std::move(response);
    return out;
}

ModelData ModelData::with_columns(std::span<const Index> columns) const {
    ModelData out = *this;
    out.X.resize(n(), static_cast<Index>(columns.size()));
    out.labels.clear();
    for (std::size_t c = 0; c < columns.size(); ++c) {
        out.X.col(static_cast<Index>(c)) = X.col(columns[c]);
        if (!labels.empty()) out.labels.push_back(labels[static_cast<std::size_t>(columns[c])]);
    }
    return out;
}

ModelData build_from_clustered(const ClusteredSpec& spec) {
    if (spec.clusters.empty()) throw InputError("clustered spec has no clusters");
    const Index r = static_cast<Index>(spec.psi.size());
    if (r == 0) throw InputError("clustered spec has no variance components");
    const Index p = spec.clusters.front().X.cols();
    const Index q = spec.clusters.front().Z.cols();
    for (Index k = 0; k < r; ++k) {
        const auto& psi = spec.psi[static_cast<std::size_t>(k)];
        if (psi.rows() != q || psi.cols() != q) {
            throw InputError("psi template " + std::to_string(k + 1) + " does not match Z columns");
        }
        check_symmetric(psi, "psi template " + std::to_string(k + 1));
    }

    auto s = std::make_shared<CovarianceStructure>();
    s->clustered = true;
    s->components.assign(static_cast<std::size_t>(r), {});
    Index n = 0;
    for (std::size_t i = 0; i < spec.clusters.size(); ++i) {
        const auto& c = spec.clusters[i];
        const Index ni = c.y.size();
        const std::string name = "cluster " + std::to_string(i + 1);
        if (ni == 0) throw InputError(name + " is empty");
        if (c.X.rows() != ni || c.X.cols() != p) throw InputError(name + ": X does not conform");
        if (c.Z.rows() != ni || c.Z.cols() != q) throw InputError(name + ": Z does not conform");
        if (static_cast<Index>(c.omega.size()) != r) {
            throw InputError(name + ": omega template count differs from psi template count");
        }
        std::vector<Index> idx(static_cast<std::size_t>(ni));
        std::iota(idx.begin(), idx.end(), n);
        s->blocks.push_back(std::move(idx));
        for (Index k = 0; k < r; ++k) {
            const auto& om = c.omega[static_cast<std::size_t>(k)];
            if (om.rows() != ni || om.cols() != ni) throw InputError(name + ": omega does not conform");
            check_symmetric(om, name + " omega template " + std::to_string(k + 1));
            Matrix block = om;
            if (q > 0) block.noalias() += c.Z * spec.psi[static_cast<std::size_t>(k)] * c.Z.transpose();
            s->components[static_cast<std::size_t>(k)].push_back(0.5 * (block + block.transpose()));
        }
        n += ni;
    }
    s->n = n;

    ModelData model;
    model.y.resize(n);
    model.X.resize(n, p);
    Index row = 0;
    for (const auto& c : spec.clusters) {
        model.y.segment(row, c.y.size()) = c.y;
        model.X.middleRows(row, c.y.size()) = c.X;
        row += c.y.size();
    }
    validate_design(model.y, model.X, n);
    s->ranks = validate_components(*s);
    s->twin = twins(*s);
    model.cluster_index = block_ids(*s);
    model.structure = std::move(s);
    return model;
}

ModelData build_from_components(Vector y, Matrix X, std::vector<Matrix> components) {
    if (components.empty()) throw InputError("component list is empty");
    const Index n = y.size();
    auto s = std::make_shared<CovarianceStructure>();
    s->n = n;
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    s->blocks.push_back(std::move(all));
    for (std::size_t k = 0; k < components.size(); ++k) {
        auto& H = components[k];
        const std::string name = "component H_" + std::to_string(k + 1);
        if (H.rows() != n || H.cols() != n) throw InputError(name + " is not n x n");
        if (!H.allFinite()) throw InputError(name + " has non-finite entries");
        check_symmetric(H, name);
        s->components.push_back({0.5 * (H + H.transpose())});
    }
    validate_design(y, X, n);
    s->ranks = validate_components(*s);
    s->twin = twins(*s);

    ModelData model;
    model.y = std::move(y);
    model.X = std::move(X);
    model.structure = std::move(s);
    return model;
}

ModelData build_random_intercept(Vector y, Matrix X, std::span<const Index> cluster_of) {
    const Index n = y.size();
    if (static_cast<Index>(cluster_of.size()) != n) throw InputError("cluster labels do not match n");
    auto s = std::make_shared<CovarianceStructure>();
    s->n = n;
    s->clustered = true;
    s->blocks = partition(cluster_of);
    s->components.resize(2);
    for (const auto& block : s->blocks) {
        const Index nb = static_cast<Index>(block.size());
        s->components[0].push_back(Matrix::Ones(nb, nb));
        s->components[1].push_back(Matrix::Identity(nb, nb));
    }
    validate_design(y, X, n);
    s->ranks = validate_components(*s);
    s->twin = twins(*s);

    ModelData model;
    model.y = std::move(y);
    model.X = std::move(X);
    model.cluster_index = block_ids(*s);
    model.kind = CovarianceTemplate::random_intercept;
    model.structure = std::move(s);
    return model;
}

ModelData attach_clusters(const ModelData& model, std::span<const Index> cluster_of) {
    if (static_cast<Index>(cluster_of.size()) != model.n()) {
        throw InputError("cluster labels do not match n");
    }
    auto s = std::make_shared<CovarianceStructure>();
    s->n = model.n();
    s->clustered = true;
    s->blocks = partition(cluster_of);
    std::vector<Index> ids(cluster_of.size());
    for (std::size_t b = 0; b < s->blocks.size(); ++b) {
        for (Index i : s->blocks[b]) ids[static_cast<std::size_t>(i)] = static_cast<Index>(b);
    }
    for (Index k = 0; k < model.r(); ++k) {
        const Matrix H = model.component(k);
        const double tol = 1e-12 * std::max(H.cwiseAbs().maxCoeff(), 1e-300);
        for (Index j = 0; j < H.cols(); ++j) {
            for (Index i = 0; i < H.rows(); ++i) {
                if (ids[static_cast<std::size_t>(i)] != ids[static_cast<std::size_t>(j)] &&
                    std::abs(H(i, j)) > tol) {
                    throw InputError("component H_" + std::to_string(k + 1) +
                                     " is not block-diagonal for the given clusters");
                }
            }
        }
        std::vector<Matrix> blocks;
        for (const auto& block : s->blocks) blocks.emplace_back(H(block, block));
        s->components.push_back(std::move(blocks));
    }
    s->ranks = model.structure->ranks;
    s->twin = twins(*s);

    ModelData out = model;
    out.cluster_index = std::move(ids);
    out.structure = std::move(s);
    return out;
}

CovOperator::CovOperator(Vector theta, std::shared_ptr<const CovarianceStructure> structure,
                         std::vector<Matrix> factors, double logdet)
    : theta_(std::move(theta)), structure_(std::move(structure)), factors_(std::move(factors)),
      logdet_(logdet) {}

Matrix CovOperator::dense_factor() const {
    Matrix L = Matrix::Zero(n(), n());
    for (std::size_t b = 0; b < factors_.size(); ++b) {
        L(structure_->blocks[b], structure_->blocks[b]) = factors_[b];
    }
    return L;
}

Matrix CovOperator::reconstruct() const {
    Matrix V = Matrix::Zero(n(), n());
    for (std::size_t b = 0; b < factors_.size(); ++b) {
        V(structure_->blocks[b], structure_->blocks[b]) = factors_[b] * factors_[b].transpose();
    }
    return V;
}

CovOperator assemble_cov(const ModelData& model, const Vector& theta) {
    const auto& s = *model.structure;
    if (theta.size() != s.r()) throw InputError("theta has wrong length");
    if (!((theta.array() > 0.0).all()) || !theta.allFinite()) {
        throw InputError("theta must be strictly positive");
    }
    std::vector<Matrix> factors;
    factors.reserve(s.blocks.size());
    double logdet = 0.0;
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        Matrix V = theta(0) * s.components[0][b];
        for (Index k = 1; k < s.r(); ++k) V += theta(k) * s.components[static_cast<std::size_t>(k)][b];
        Eigen::LLT<Matrix> llt(V);
        if (llt.info() != Eigen::Success) {
            // Locate the first non-positive leading minor for the diagnostic.
            Index bad = V.rows();
            for (Index j = 1; j <= V.rows(); ++j) {
                Eigen::LLT<Matrix> lead(V.topLeftCorner(j, j));
                if (lead.info() != Eigen::Success) {
                    bad = j;
                    break;
                }
            }
            const Index global = s.blocks[b][static_cast<std::size_t>(bad - 1)] + 1;
            throw FactorizationError("V(theta) is not positive definite at leading minor " +
                                         std::to_string(bad) + " of block " + std::to_string(b + 1) +
                                         " (observation " + std::to_string(global) + ")",
                                     global);
        }
        Matrix L = llt.matrixL();
        logdet += 2.0 * L.diagonal().array().log().sum();
        factors.push_back(std::move(L));
    }
    return CovOperator(theta, model.structure, std::move(factors), logdet);
}

Matrix compute_C(const ModelData& model, const Vector& theta) {
    const CovOperator cov = assemble_cov(model, theta);
    const Matrix Xw = whiten(cov, model.X);
    Matrix C = Xw.transpose() * Xw / static_cast<double>(model.n());
    return 0.5 * (C + C.transpose());
}

}  // namespace lmmlasso
