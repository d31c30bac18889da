#include "calibkit/features.hpp"

#include "calibkit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

namespace calibkit {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line_no) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty())
        throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) +
                                               ": cannot parse '" + std::string(text) + "' as a number");
    return value;
}

LabelValue parse_label(std::string_view text, const std::filesystem::path& path, std::size_t line_no) {
    if (text == "1") return LabelValue::Class1;
    if (text == "2") return LabelValue::Class2;
    if (text == "-1") return LabelValue::Unknown;
    throw Error(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": label '" +
                                            std::string(text) + "' is not one of 1, 2, -1");
}

std::string_view label_text(LabelValue l) {
    switch (l) {
        case LabelValue::Class1: return "1";
        case LabelValue::Class2: return "2";
        case LabelValue::Unknown: return "-1";
    }
    return "-1";
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

DomainData read_domain_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::SchemaError, path.string() + ": missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header.back() != "label")
        throw Error(ErrorKind::SchemaError, path.string() + ": last header column must be 'label'");
    const std::size_t d = header.size() - 1;
    if (d == 0) throw Error(ErrorKind::SchemaError, path.string() + ": no feature columns");

    std::vector<double> values;
    DomainData domain;
    domain.id = path.stem().string();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != d + 1)
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                   std::to_string(d + 1) + " fields, got " +
                                                   std::to_string(fields.size()));
        for (std::size_t j = 0; j < d; ++j) values.push_back(parse_double(fields[j], path, line_no));
        domain.labels.push_back(parse_label(fields[d], path, line_no));
    }
    if (domain.labels.empty()) throw Error(ErrorKind::EmptyDomain, path.string() + " has no data rows");

    domain.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Eigen::Index>(domain.labels.size()), static_cast<Eigen::Index>(d));
    validate_domain(domain);
    return domain;
}

void write_domain_csv(const DomainData& domain, const std::filesystem::path& path) {
    if (domain.dim() == 0) throw Error(ErrorKind::SchemaError, "domain '" + domain.id + "' has no feature columns");
    validate_domain(domain);

    std::ostringstream out;
    for (std::size_t j = 0; j < domain.dim(); ++j) out << 'f' << (j + 1) << ',';
    out << "label\n";
    for (std::size_t i = 0; i < domain.rows(); ++i) {
        for (std::size_t j = 0; j < domain.dim(); ++j)
            out << format_double(domain.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << ',';
        out << label_text(domain.labels[i]) << '\n';
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    file << out.str();
    if (!file) throw Error(ErrorKind::IoError, "write to " + path.string() + " failed");
}

PcaModel fit_pca(const Matrix& X, Eigen::Index k) {
    if (X.rows() < 2) throw Error(ErrorKind::InvalidParameter, "PCA needs at least two rows");
    if (k < 1) throw Error(ErrorKind::InvalidParameter, "PCA needs k >= 1");
    if (k > std::min(X.rows(), X.cols()))
        throw Error(ErrorKind::RankError, "k = " + std::to_string(k) + " exceeds min(N, d) = " +
                                              std::to_string(std::min(X.rows(), X.cols())));
    if (!X.allFinite()) throw Error(ErrorKind::NonFiniteFeature, "PCA input contains a non-finite value");

    PcaModel model;
    model.mean = X.colwise().mean().transpose();
    const Matrix centered = X.rowwise() - model.mean.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(X.rows() - 1);

    // Eigenvalues come back ascending.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Eigen::Index d = X.cols();
    model.components.resize(k, d);
    model.explained_variance.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Vector v = eig.eigenvectors().col(d - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        model.components.row(c) = v.transpose();
        model.explained_variance(c) = std::max(0.0, eig.eigenvalues()(d - 1 - c));
    }
    return model;
}

Matrix apply_pca(const PcaModel& model, const Matrix& X) {
    if (X.cols() != model.mean.size())
        throw Error(ErrorKind::DimensionMismatch, "PCA model expects " + std::to_string(model.mean.size()) +
                                                      " columns, got " + std::to_string(X.cols()));
    return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

MinMaxModel fit_minmax(const Matrix& X) {
    if (X.rows() == 0) throw Error(ErrorKind::EmptyDomain, "cannot fit min-max scaling on no rows");
    return {X.colwise().minCoeff().transpose(), X.colwise().maxCoeff().transpose()};
}

Matrix apply_minmax(const MinMaxModel& model, const Matrix& X) {
    if (X.cols() != model.min.size())
        throw Error(ErrorKind::DimensionMismatch, "min-max model expects " + std::to_string(model.min.size()) +
                                                      " columns, got " + std::to_string(X.cols()));
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double lo = model.min(j);
        const double range = model.max(j) - lo;
        if (range > 0.0)
            out.col(j) = (X.col(j).array() - lo) / range;
        else
            out.col(j).setConstant(0.5);
    }
    return out;
}

FeaturePipeline fit_feature_pipeline(std::span<const DomainData> domains, Eigen::Index k) {
    if (domains.empty()) throw Error(ErrorKind::EmptyDomain, "no domains to featurize");
    Eigen::Index total = 0;
    const Eigen::Index d = domains.front().features.cols();
    for (const auto& dom : domains) {
        validate_domain(dom);
        if (dom.features.cols() != d)
            throw Error(ErrorKind::DimensionMismatch, "domain '" + dom.id + "' has " +
                                                          std::to_string(dom.features.cols()) + " columns, expected " +
                                                          std::to_string(d));
        total += dom.features.rows();
    }
    Matrix pooled(total, d);
    Eigen::Index at = 0;
    for (const auto& dom : domains) {
        pooled.middleRows(at, dom.features.rows()) = dom.features;
        at += dom.features.rows();
    }
    FeaturePipeline p;
    p.pca = fit_pca(pooled, k);
    p.minmax = fit_minmax(apply_pca(p.pca, pooled));
    return p;
}

std::vector<DomainData> apply_feature_pipeline(const FeaturePipeline& pipeline, std::span<const DomainData> domains) {
    std::vector<DomainData> out;
    out.reserve(domains.size());
    for (const auto& dom : domains)
        out.push_back({dom.id, apply_minmax(pipeline.minmax, apply_pca(pipeline.pca, dom.features)), dom.labels});
    return out;
}

void SynthConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw Error(ErrorKind::ConfigError, field + " " + why);
    };
    if (n_subjects < 1) fail("n_subjects", "must be >= 1");
    if (epochs_per_subject < 1) fail("epochs_per_subject", "must be >= 1");
    if (!(target_rate > 0.0 && target_rate < 1.0)) fail("target_rate", "must lie in (0, 1)");
    if (target_rate * epochs_per_subject < 2.0 || (1.0 - target_rate) * epochs_per_subject < 1.0)
        fail("target_rate", "leaves a class without epochs");
    if (d_raw < 1) fail("d_raw", "must be >= 1");
    if (!(class_separation >= 0.0)) fail("class_separation", "must be >= 0");
    if (!(shift_scale >= 0.0)) fail("shift_scale", "must be >= 0");
    if (!(rotation_scale >= 0.0)) fail("rotation_scale", "must be >= 0");
    if (!(noise_sigma > 0.0)) fail("noise_sigma", "must be > 0");
}

std::vector<DomainData> generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index d = cfg.d_raw;
    auto gaussian = [&](Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
        return v;
    };

    const Vector mean2 = gaussian(d);
    Vector direction = gaussian(d);
    direction.normalize();
    const Vector mean1 = mean2 + cfg.class_separation * cfg.noise_sigma * direction;

    const auto n = static_cast<std::size_t>(cfg.epochs_per_subject);
    const auto n_class1 = static_cast<std::size_t>(std::lround(cfg.target_rate * static_cast<double>(n)));

    std::vector<DomainData> out;
    out.reserve(static_cast<std::size_t>(cfg.n_subjects));
    for (int s = 0; s < cfg.n_subjects; ++s) {
        // Near-identity rotation: orthonormal factor of I + scale * G / sqrt(d).
        Matrix perturbed = Matrix::Identity(d, d);
        for (Eigen::Index j = 0; j < d; ++j)
            perturbed.col(j) += cfg.rotation_scale / std::sqrt(static_cast<double>(d)) * gaussian(d);
        const Eigen::HouseholderQR<Matrix> qr(perturbed);
        Matrix rotation = qr.householderQ() * Matrix::Identity(d, d);
        const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Eigen::Index j = 0; j < d; ++j)
            if (r(j, j) < 0) rotation.col(j) = -rotation.col(j);

        const Vector offset = cfg.shift_scale * cfg.noise_sigma * gaussian(d);

        std::vector<LabelValue> labels(n, LabelValue::Class2);
        std::fill_n(labels.begin(), n_class1, LabelValue::Class1);
        std::shuffle(labels.begin(), labels.end(), rng);

        DomainData dom;
        char name[32];
        std::snprintf(name, sizeof(name), "subject%02d", s + 1);
        dom.id = name;
        dom.features.resize(static_cast<Eigen::Index>(n), d);
        for (std::size_t i = 0; i < n; ++i) {
            const Vector& mu = labels[i] == LabelValue::Class1 ? mean1 : mean2;
            const Vector x = rotation * (mu + cfg.noise_sigma * gaussian(d)) + offset;
            dom.features.row(static_cast<Eigen::Index>(i)) = x.transpose();
        }
        dom.labels = std::move(labels);
        out.push_back(std::move(dom));
    }
    return out;
}

}  // namespace calibkit
