#include "calibkit/domain.hpp"

#include "calibkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace calibkit {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
        case ErrorKind::EmptyDomain: return "EmptyDomain";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::RankError: return "RankError";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::InvalidParameter: return "InvalidParameter";
        case ErrorKind::MissingPseudoLabels: return "MissingPseudoLabels";
        case ErrorKind::SingularSystem: return "SingularSystem";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::NoLabeledSamples: return "NoLabeledSamples";
        case ErrorKind::TooFewPoints: return "TooFewPoints";
        case ErrorKind::DegenerateTable: return "DegenerateTable";
        case ErrorKind::OutOfRange: return "OutOfRange";
    }
    return "Unknown";
}

double to_signed(LabelValue label) noexcept {
    switch (label) {
        case LabelValue::Class1: return 1.0;
        case LabelValue::Class2: return -1.0;
        case LabelValue::Unknown: return 0.0;
    }
    return 0.0;
}

void validate_domain(const DomainData& domain) {
    if (domain.labels.empty() && domain.features.rows() == 0)
        throw Error(ErrorKind::EmptyDomain, "domain '" + domain.id + "' has no rows");
    if (static_cast<std::size_t>(domain.features.rows()) != domain.labels.size())
        throw Error(ErrorKind::DimensionMismatch,
                    "domain '" + domain.id + "': " + std::to_string(domain.features.rows()) +
                        " feature rows but " + std::to_string(domain.labels.size()) + " labels");
    if (!domain.features.allFinite())
        throw Error(ErrorKind::NonFiniteFeature, "domain '" + domain.id + "' contains a non-finite feature");
}

ClassCounts class_counts(std::span<const LabelValue> labels) noexcept {
    ClassCounts c;
    for (LabelValue l : labels) {
        switch (l) {
            case LabelValue::Class1: ++c.class1; break;
            case LabelValue::Class2: ++c.class2; break;
            case LabelValue::Unknown: ++c.unknown; break;
        }
    }
    return c;
}

DomainData hide_labels(const DomainData& domain) {
    DomainData out = domain;
    std::fill(out.labels.begin(), out.labels.end(), LabelValue::Unknown);
    return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

std::vector<LabelValue> gather(std::span<const LabelValue> labels, std::span<const std::size_t> rows) {
    std::vector<LabelValue> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels[r]);
    return out;
}

void KernelSpec::validate() const {
    if (kind == KernelKind::Rbf && gamma && !(*gamma > 0.0 && std::isfinite(*gamma)))
        throw Error(ErrorKind::InvalidParameter, "RBF gamma must be positive");
}

HyperParams::HyperParams(double w_t, double sigma, double lambda, int p, KernelSpec kernel,
                         int pseudo_label_passes)
    : w_t(w_t), sigma(sigma), lambda(lambda), p(p), kernel(kernel),
      pseudo_label_passes(pseudo_label_passes) {
    validate();
}

void HyperParams::validate() const {
    if (!(w_t >= 1.0)) throw Error(ErrorKind::InvalidParameter, "w_t must be >= 1");
    if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidParameter, "sigma must be >= 0");
    if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidParameter, "lambda must be >= 0");
    if (p < 1) throw Error(ErrorKind::InvalidParameter, "p must be >= 1");
    if (pseudo_label_passes < 1) throw Error(ErrorKind::InvalidParameter, "pseudo_label_passes must be >= 1");
    kernel.validate();
}

CalibrationState::CalibrationState(DomainData target) : target_(std::move(target)) {
    validate_domain(target_);
    for (std::size_t i = 0; i < target_.rows(); ++i) {
        if (target_.labels[i] == LabelValue::Unknown)
            unlabeled_.push_back(i);
        else
            labeled_.push_back(i);
    }
}

Matrix CalibrationState::labeled_features() const { return gather_rows(target_.features, labeled_); }

std::vector<LabelValue> CalibrationState::labeled_labels() const { return gather(target_.labels, labeled_); }

Matrix CalibrationState::unlabeled_features() const { return gather_rows(target_.features, unlabeled_); }

void CalibrationState::install_labels(int iteration, std::span<const std::size_t> rows,
                                      std::span<const LabelValue> answers) {
    if (rows.size() != answers.size())
        throw Error(ErrorKind::LengthMismatch, "one answer is required per queried row");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (answers[i] == LabelValue::Unknown)
            throw Error(ErrorKind::InvalidParameter, "cannot install an Unknown label");
        if (!std::binary_search(unlabeled_.begin(), unlabeled_.end(), rows[i]))
            throw Error(ErrorKind::InvalidParameter,
                        "row " + std::to_string(rows[i]) + " is not in the unlabeled pool");
        if (std::find(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(i), rows[i]) !=
            rows.begin() + static_cast<std::ptrdiff_t>(i))
            throw Error(ErrorKind::InvalidParameter, "duplicate row in query");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        target_.labels[rows[i]] = answers[i];
        labeled_.push_back(rows[i]);
        unlabeled_.erase(std::lower_bound(unlabeled_.begin(), unlabeled_.end(), rows[i]));
    }
    log_.push_back({iteration, std::vector<std::size_t>(rows.begin(), rows.end())});
}

}  // namespace calibkit
