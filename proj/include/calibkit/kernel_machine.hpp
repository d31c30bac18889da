#pragma once

#include "calibkit/domain.hpp"

#include <span>
#include <vector>

namespace calibkit {

/// gamma = 1 / (2 * median^2) over the pairwise Euclidean distances of the rows
/// of X. Falls back to 1 when fewer than two rows or a zero median.
double median_heuristic_gamma(const Matrix& X);

/// Explicit gamma, or the median heuristic on `training` when the kernel spec says Auto.
double resolve_gamma(const KernelSpec& spec, const Matrix& training);

/// RBF: exp(-gamma * |x - y|^2), Linear: x . y. An Auto gamma is resolved on X.
Matrix kernel_matrix(const Matrix& X, const Matrix& Y, const KernelSpec& spec);

struct SampleWeights {
    Vector source;
    Vector target;
};

/// Class-imbalance weights: Class1 rows weigh 1, Class2 rows weigh n1 / n2 so
/// both classes carry equal total weight. A class absent from its group gets 1.
SampleWeights sample_weights(std::span<const LabelValue> source, std::span<const LabelValue> target_labeled);
Vector balanced_weights(std::span<const LabelValue> labels);

/// One source domain paired with the current target split. Pseudo labels for
/// the unlabeled target rows may be left empty; solve_war then estimates them.
struct WarProblem {
    Matrix source_features;
    std::vector<LabelValue> source_labels;
    Matrix target_labeled_features;
    std::vector<LabelValue> target_labels;
    Matrix target_unlabeled_features;
    std::vector<LabelValue> target_pseudo;
    HyperParams params;

    Eigen::Index n() const noexcept { return source_features.rows(); }
    Eigen::Index m_l() const noexcept { return target_labeled_features.rows(); }
    Eigen::Index m_u() const noexcept { return target_unlabeled_features.rows(); }
    Eigen::Index size() const noexcept { return n() + m_l() + m_u(); }

    /// Training stack: source rows, then labeled target, then unlabeled target.
    Matrix stacked_features() const;
    void validate() const;
};

/// E is kept as its diagonal. M0 and M are dense and symmetric.
struct RegMatrices {
    Vector E;
    Matrix M0;
    Matrix M;
};

/// The MMD matrices are sums of outer products u u^T. `marginal` gives M0;
/// `conditional` holds one vector per class present on both sides and sums to M.
struct MmdFactors {
    Vector marginal;
    std::vector<Vector> conditional;
};

MmdFactors mmd_factors(const WarProblem& problem);
/// Throws MissingPseudoLabels if target_pseudo does not cover the unlabeled rows.
RegMatrices build_reg_matrices(const WarProblem& problem);

/// Kernel expansion f(x) = sum_i alpha_i K(x_i, x) over the training stack.
struct WarModel {
    Matrix train_features;
    Vector alpha;
    KernelSpec kernel;  // gamma always resolved
    double train_accuracy = 0.0;
    /// f evaluated on the training stack.
    Vector fitted;
    /// Pseudo labels used in the final solve (unlabeled target rows).
    std::vector<LabelValue> pseudo_labels;
};

enum class SolveMethod {
    /// Cholesky on the labeled block plus a low-rank update for the MMD terms.
    /// Requires sigma > 0; falls back to Dense otherwise.
    Structured,
    /// LU on the full system.
    Dense,
};

WarModel solve_war(const WarProblem& problem, SolveMethod method = SolveMethod::Structured);

/// Gram matrix of a row stacking plus the resolved kernel that built it.
struct StackedKernel {
    Matrix K;
    KernelSpec kernel;
};

/// As above with the Gram matrix of `problem.stacked_features()` supplied.
WarModel solve_war(const WarProblem& problem, StackedKernel gram, SolveMethod method = SolveMethod::Structured);

/// Gram matrix over [source; target] rows. The auto RBF width comes from the
/// whole row set.
StackedKernel stack_kernel(const Matrix& source, const Matrix& target, const KernelSpec& spec);

/// Scores f(x) for every row of `query`.
Vector predict(const WarModel& model, const Matrix& query);

/// Class-weighted kernel least squares on one labeled set: the single-domain,
/// lambda = 0 case. Used for baselines.
WarModel fit_weighted_classifier(const Matrix& features, std::span<const LabelValue> labels,
                                 const KernelSpec& kernel, double sigma);

/// Weighted sum of per-domain models.
struct FusedClassifier {
    std::vector<WarModel> models;
    Vector weights;

    Vector scores(const Matrix& query) const;
    std::vector<LabelValue> decisions(const Matrix& query) const;
};

struct WarMultiResult {
    FusedClassifier classifier;
    /// Z x m_u, row z holds model z's scores on the unlabeled target pool.
    Matrix member_scores;
    /// Fused scores on the unlabeled target pool, accuracy-weighted.
    Vector fused_scores;
};

/// One wAR model per labeled source domain, each trained against every target
/// row; fused with the recorded training accuracies.
/// Every wAR stack over one target is a row permutation of [source; all target
/// rows], so `cache` (one entry per source, filled on first use) lets later
/// rounds skip the kernel and width computations.
WarMultiResult war_multi(std::span<const DomainData> sources, const CalibrationState& state,
                         const HyperParams& params, std::vector<StackedKernel>* cache = nullptr);

}  // namespace calibkit
