#pragma once

#include "calibkit/domain.hpp"
#include "calibkit/kernel_machine.hpp"

#include <span>
#include <vector>

namespace calibkit {

/// Spectral meta-learner estimate for an ensemble of Z binary classifiers.
///
/// Off the diagonal, the covariance of +/-1 predictions of conditionally
/// independent classifiers is rank one with factor proportional to
/// (2 * bca_z - 1). The leading eigenvector of the sample covariance therefore
/// ranks the members by balanced accuracy without any labels. The recovered
/// `pi` are relative fusion weights: the eigenvector is unit-normalized, so its
/// scale (and hence the absolute BCA level) is not identified.
struct SmlEstimate {
    Matrix Q;
    /// Unit-norm leading eigenvector, sign chosen so its entries sum to >= 0.
    Vector v;
    /// clamp((v + 1) / 2, 0, 1)
    Vector pi;
    /// No usable spectrum (fewer than two samples or zero covariance); callers
    /// fall back to training-accuracy weights.
    bool degenerate = false;
};

/// Z x m sign matrix from Z x m scores; zero scores map to +1.
Matrix prediction_matrix(const Matrix& member_scores);
Matrix prediction_matrix(std::span<const WarModel> models, const Matrix& unlabeled);

/// Q is the covariance across columns of P (normalized by m, so the diagonal
/// equals 1 - mean^2 exactly). A single classifier gets pi = (1).
SmlEstimate sml_weights(const Matrix& P);

/// The eigen step alone, for a covariance supplied directly.
SmlEstimate sml_from_covariance(const Matrix& Q);

/// f(x) = sum_z pi_z f_z(x).
FusedClassifier fuse_sml(std::vector<WarModel> models, const Vector& pi);

/// SML weights when the estimate is usable, otherwise `fallback`.
Vector fusion_weights(const SmlEstimate& estimate, const Vector& fallback);

}  // namespace calibkit
