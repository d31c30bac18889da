#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace calibkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LabelValue { Class1, Class2, Unknown };

/// Numeric target used by the squared-loss solver: Class1 -> +1, Class2 -> -1.
/// Unknown has no encoding and maps to 0.
double to_signed(LabelValue label) noexcept;

/// Decision rule shared by every scorer in the toolkit: ties go to Class1.
inline LabelValue decide(double score) noexcept {
    return score >= 0.0 ? LabelValue::Class1 : LabelValue::Class2;
}

struct ClassCounts {
    std::size_t class1 = 0;
    std::size_t class2 = 0;
    std::size_t unknown = 0;

    std::size_t known() const noexcept { return class1 + class2; }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// One subject's epochs: a feature matrix with one row per epoch.
struct DomainData {
    std::string id;
    Matrix features;
    std::vector<LabelValue> labels;

    std::size_t rows() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

/// Throws EmptyDomain, DimensionMismatch or NonFiniteFeature.
void validate_domain(const DomainData& domain);

ClassCounts class_counts(std::span<const LabelValue> labels) noexcept;
inline ClassCounts class_counts(const DomainData& domain) noexcept { return class_counts(domain.labels); }

/// Copy of `domain` with every label replaced by Unknown.
DomainData hide_labels(const DomainData& domain);

/// Rows of `m` selected by `rows`, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
std::vector<LabelValue> gather(std::span<const LabelValue> labels, std::span<const std::size_t> rows);

enum class KernelKind { Rbf, Linear };

struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    /// RBF width; empty means the median heuristic on the training stack.
    std::optional<double> gamma;

    void validate() const;
};

struct HyperParams {
    double w_t = 2.0;
    double sigma = 0.1;
    double lambda = 10.0;
    int p = 5;
    KernelSpec kernel;
    int pseudo_label_passes = 1;

    HyperParams() = default;
    HyperParams(double w_t, double sigma, double lambda, int p, KernelSpec kernel = {},
                int pseudo_label_passes = 1);

    /// Throws InvalidParameter on w_t < 1, negative sigma/lambda, p < 1 or passes < 1.
    void validate() const;
};

/// Target-domain labeling progress during offline calibration. Rows move only
/// from the unlabeled pool to the labeled set.
class CalibrationState {
public:
    struct Query {
        int iteration;
        std::vector<std::size_t> rows;
    };

    /// Rows whose label is already known start labeled; all others start in the pool.
    explicit CalibrationState(DomainData target);

    const DomainData& target() const noexcept { return target_; }
    const std::vector<std::size_t>& labeled() const noexcept { return labeled_; }
    /// Unlabeled rows in ascending row order.
    const std::vector<std::size_t>& unlabeled() const noexcept { return unlabeled_; }
    const std::vector<Query>& query_log() const noexcept { return log_; }

    std::size_t labeled_count() const noexcept { return labeled_.size(); }
    std::size_t unlabeled_count() const noexcept { return unlabeled_.size(); }

    Matrix labeled_features() const;
    std::vector<LabelValue> labeled_labels() const;
    Matrix unlabeled_features() const;

    /// Moves `rows` from the pool to the labeled set with the given answers.
    /// Throws InvalidParameter if a row is not in the pool or an answer is Unknown.
    void install_labels(int iteration, std::span<const std::size_t> rows,
                        std::span<const LabelValue> answers);

private:
    DomainData target_;
    std::vector<std::size_t> labeled_;
    std::vector<std::size_t> unlabeled_;
    std::vector<Query> log_;
};

}  // namespace calibkit
