#pragma once

#include "calibkit/domain.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace calibkit {

// ---------------------------------------------------------------------------
// Domain CSV files
//
// Header `f1,...,fd,label`, one epoch per row, labels 1 / 2 / -1 (Unknown).
// Features are written in shortest round-trip decimal form, so reading a
// written file reproduces the domain bit for bit.
// ---------------------------------------------------------------------------

/// The domain id is the file stem.
DomainData read_domain_csv(const std::filesystem::path& path);
void write_domain_csv(const DomainData& domain, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

// ---------------------------------------------------------------------------
// PCA and min-max scaling
// ---------------------------------------------------------------------------

struct PcaModel {
    Vector mean;
    /// k x d, rows are orthonormal principal directions by descending variance.
    Matrix components;
    /// Sample variance along each component.
    Vector explained_variance;

    Eigen::Index k() const noexcept { return components.rows(); }
};

/// Top-k eigenvectors of the sample covariance of X. Each component's largest
/// magnitude entry is made positive. Throws RankError if k > min(N, d) and
/// InvalidParameter if N < 2 or k < 1.
PcaModel fit_pca(const Matrix& X, Eigen::Index k);

/// Scores (X - mean) * components^T.
Matrix apply_pca(const PcaModel& model, const Matrix& X);

struct MinMaxModel {
    Vector min;
    Vector max;
};

MinMaxModel fit_minmax(const Matrix& X);

/// Affine map to [0,1] per column of the fitting data. Constant columns map
/// to 0.5; values outside the fitted range are not clamped.
Matrix apply_minmax(const MinMaxModel& model, const Matrix& X);

/// Pooled PCA followed by pooled min-max over every domain's rows. Labels
/// and ids are carried through unchanged.
struct FeaturePipeline {
    PcaModel pca;
    MinMaxModel minmax;
};

FeaturePipeline fit_feature_pipeline(std::span<const DomainData> domains, Eigen::Index k);
std::vector<DomainData> apply_feature_pipeline(const FeaturePipeline& pipeline,
                                               std::span<const DomainData> domains);

// ---------------------------------------------------------------------------
// Synthetic multi-subject benchmark
// ---------------------------------------------------------------------------

struct SynthConfig {
    int n_subjects = 14;
    int epochs_per_subject = 260;
    /// Fraction of Class1 (target stimulus) epochs in every subject.
    double target_rate = 0.12;
    int d_raw = 40;
    /// Distance between the two shared class means, in noise units.
    double class_separation = 4.0;
    /// Scale of the per-subject mean offset.
    double shift_scale = 1.0;
    /// Scale of the per-subject random rotation.
    double rotation_scale = 1.5;
    double noise_sigma = 1.0;
    std::uint64_t seed = 1;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Subjects named subject01, subject02, ... Every subject draws class-conditional
/// Gaussians around shared class means, then applies its own rotation about the
/// origin and its own offset. Pure function of the config.
std::vector<DomainData> generate_synthetic(const SynthConfig& cfg);

}  // namespace calibkit
