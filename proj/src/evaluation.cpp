#include "calibkit/evaluation.hpp"

#include "calibkit/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace calibkit {

Metrics bca(std::span<const LabelValue> truth, std::span<const LabelValue> predicted) {
    if (truth.size() != predicted.size())
        throw Error(ErrorKind::LengthMismatch, std::to_string(truth.size()) + " true labels vs " +
                                                   std::to_string(predicted.size()) + " predictions");
    std::size_t m1 = 0, m2 = 0, hit1 = 0, hit2 = 0, assigned1 = 0, assigned2 = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == LabelValue::Unknown) continue;
        if (predicted[i] == LabelValue::Class1) ++assigned1;
        if (predicted[i] == LabelValue::Class2) ++assigned2;
        if (truth[i] == LabelValue::Class1) {
            ++m1;
            hit1 += predicted[i] == LabelValue::Class1;
        } else {
            ++m2;
            hit2 += predicted[i] == LabelValue::Class2;
        }
    }
    if (m1 + m2 == 0) throw Error(ErrorKind::NoLabeledSamples, "no row has a known true label");

    Metrics out;
    if (m1 > 0 && m2 > 0) {
        out.a1 = static_cast<double>(hit1) / static_cast<double>(m1);
        out.a2 = static_cast<double>(hit2) / static_cast<double>(m2);
    } else if (m1 == 0) {
        out.degenerate = true;
        out.a2 = static_cast<double>(hit2) / static_cast<double>(m2);
        out.a1 = assigned1 == 0 ? 1.0 : out.a2;
    } else {
        out.degenerate = true;
        out.a1 = static_cast<double>(hit1) / static_cast<double>(m1);
        out.a2 = assigned2 == 0 ? 1.0 : out.a1;
    }
    out.bca = (out.a1 + out.a2) / 2.0;
    return out;
}

double aupc(std::span<const CurvePoint> curve) {
    if (curve.size() < 2) throw Error(ErrorKind::TooFewPoints, "AUPC needs at least two points");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double width = curve[i].m_l - curve[i - 1].m_l;
        if (!(width > 0.0)) throw Error(ErrorKind::InvalidParameter, "m_l must be strictly increasing");
        area += width * (curve[i].bca + curve[i - 1].bca) / 2.0;
    }
    return area / (curve.back().m_l - curve.front().m_l);
}

namespace {

void require_table(const Matrix& table) {
    if (table.rows() < 2 || table.cols() < 2)
        throw Error(ErrorKind::DegenerateTable, "need at least 2 blocks and 2 treatments, got " +
                                                    std::to_string(table.rows()) + " x " +
                                                    std::to_string(table.cols()));
    if (!table.allFinite()) throw Error(ErrorKind::DegenerateTable, "table contains a non-finite value");
}

/// Mid-ranks of one block; accumulates sum(t^3 - t) over its tie groups.
Vector rank_block(const Vector& row, double& tie_term) {
    const Eigen::Index k = row.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return row(a) < row(b); });
    Vector ranks(k);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && row(order[j + 1]) == row(order[i])) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks(order[t]) = mid;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double chi2_upper_tail(double x, int df) {
    if (df < 1) throw Error(ErrorKind::InvalidParameter, "chi-squared df must be >= 1");
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

FriedmanResult friedman_test(const Matrix& table) {
    require_table(table);
    const auto b = static_cast<double>(table.rows());
    const auto k = static_cast<double>(table.cols());

    Vector rank_sums = Vector::Zero(table.cols());
    double tie_term = 0.0;
    for (Eigen::Index r = 0; r < table.rows(); ++r) rank_sums += rank_block(table.row(r).transpose(), tie_term);

    FriedmanResult out;
    out.df = static_cast<int>(table.cols()) - 1;
    out.mean_ranks = rank_sums / b;
    const double statistic = 12.0 / (b * k * (k + 1.0)) * rank_sums.squaredNorm() - 3.0 * b * (k + 1.0);
    const double correction = 1.0 - tie_term / (b * (k * k * k - k));
    // Every block fully tied: no evidence of any column effect.
    out.chi2 = correction > 1e-12 ? std::max(0.0, statistic / correction) : 0.0;
    out.p = chi2_upper_tail(out.chi2, out.df);
    return out;
}

std::vector<PairwiseComparison> dunn_posthoc(const Matrix& table) {
    const FriedmanResult f = friedman_test(table);
    const auto b = static_cast<double>(table.rows());
    const auto k = static_cast<double>(table.cols());
    const double se = std::sqrt(k * (k + 1.0) / (6.0 * b));

    std::vector<PairwiseComparison> out;
    for (int i = 0; i < table.cols(); ++i) {
        for (int j = i + 1; j < table.cols(); ++j) {
            const double z = (f.mean_ranks(i) - f.mean_ranks(j)) / se;
            out.push_back({i, j, z, normal_two_sided_p(z)});
        }
    }
    return out;
}

std::vector<double> fdr_adjust(std::span<const double> p_values) {
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::OutOfRange, "p-value outside [0, 1]");
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    std::vector<double> adjusted(m);
    double running = 1.0;
    for (std::size_t pos = m; pos-- > 0;) {
        const std::size_t idx = order[pos];
        running = std::min(running, static_cast<double>(m) * p_values[idx] / static_cast<double>(pos + 1));
        adjusted[idx] = std::min(running, 1.0);
    }
    return adjusted;
}

StatReport compare_treatments(const Matrix& table, std::vector<std::string> treatments) {
    if (static_cast<Eigen::Index>(treatments.size()) != table.cols())
        throw Error(ErrorKind::LengthMismatch, "one name per treatment column is required");
    StatReport report;
    report.treatments = std::move(treatments);
    report.friedman = friedman_test(table);
    report.pairwise = dunn_posthoc(table);
    std::vector<double> raw;
    for (const auto& c : report.pairwise) raw.push_back(c.raw_p);
    const auto adjusted = fdr_adjust(raw);
    for (std::size_t i = 0; i < adjusted.size(); ++i) report.pairwise[i].adjusted_p = adjusted[i];
    return report;
}

}  // namespace calibkit
