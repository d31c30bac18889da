#pragma once

#include "calibkit/domain.hpp"

#include <span>
#include <string>
#include <vector>

namespace calibkit {

/// Per-class accuracies and their mean (balanced classification accuracy).
struct Metrics {
    double a1 = 0.0;
    double a2 = 0.0;
    double bca = 0.0;
    /// Set when one class had no true members among the scored rows.
    bool degenerate = false;
};

/// Rows whose true label is Unknown are ignored. If one class has no true
/// members, its accuracy is 1 when nothing was assigned to it, otherwise the
/// BCA collapses to the other class's accuracy.
/// Throws LengthMismatch, or NoLabeledSamples when no row has a known label.
Metrics bca(std::span<const LabelValue> truth, std::span<const LabelValue> predicted);

struct CurvePoint {
    double m_l;
    double bca;
};

/// Trapezoidal area under the BCA curve over its m_l span, divided by that span
/// (the area of a height-1 rectangle). Needs >= 2 points with strictly
/// increasing m_l; throws TooFewPoints / InvalidParameter otherwise.
double aupc(std::span<const CurvePoint> curve);

struct FriedmanResult {
    double chi2 = 0.0;
    int df = 0;
    double p = 1.0;
    /// Mean within-block rank of each treatment (rank 1 = smallest value).
    Vector mean_ranks;
};

/// Rows are blocks, columns treatments. Ties get mid-ranks and the usual tie
/// correction; a table tied in every block yields chi2 = 0, p = 1.
/// Throws DegenerateTable when there are fewer than 2 blocks or treatments.
FriedmanResult friedman_test(const Matrix& table);

struct PairwiseComparison {
    int first;
    int second;
    double z;
    double raw_p;
    double adjusted_p = 1.0;
};

/// Dunn's z = (Rbar_i - Rbar_j) / sqrt(k(k+1) / (6b)) for every pair i < j,
/// with a two-sided normal p-value. adjusted_p is left at 1.
std::vector<PairwiseComparison> dunn_posthoc(const Matrix& table);

/// Benjamini-Hochberg step-up adjustment, returned in input order.
/// Throws OutOfRange for values outside [0, 1].
std::vector<double> fdr_adjust(std::span<const double> p_values);

struct StatReport {
    std::vector<std::string> treatments;
    FriedmanResult friedman;
    std::vector<PairwiseComparison> pairwise;
};

/// Friedman test, then Dunn comparisons with FDR-adjusted p-values.
StatReport compare_treatments(const Matrix& table, std::vector<std::string> treatments);

/// P(X > x) for X ~ chi-squared with df degrees of freedom.
double chi2_upper_tail(double x, int df);
/// 2 * (1 - Phi(|z|)).
double normal_two_sided_p(double z);

}  // namespace calibkit
