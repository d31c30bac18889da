#include "calibkit/kernel_machine.hpp"

#include "calibkit/error.hpp"
#include "calibkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

namespace calibkit {

namespace {

constexpr double kJitter = 1e-10;
constexpr double kMinRcond = 1e-15;

Matrix squared_distances(const Matrix& X, const Matrix& Y) {
    const Vector xn = X.rowwise().squaredNorm();
    const Vector yn = Y.rowwise().squaredNorm();
    Matrix d2 = -2.0 * X * Y.transpose();
    d2.colwise() += xn;
    d2.rowwise() += yn.transpose();
    return d2.cwiseMax(0.0);
}

Vector signed_labels(std::span<const LabelValue> labels) {
    Vector y(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = to_signed(labels[i]);
    return y;
}

std::vector<LabelValue> decide_all(const Eigen::Ref<const Vector>& scores) {
    std::vector<LabelValue> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i) out[static_cast<std::size_t>(i)] = decide(scores(i));
    return out;
}

/// LU solve with one jittered retry; throws SingularSystem if both fail.
Vector dense_solve(Matrix system, const Vector& rhs) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt == 1) system.diagonal().array() += kJitter;
        const Eigen::PartialPivLU<Matrix> lu(system);
        if (!(lu.rcond() > kMinRcond)) continue;
        Vector x = lu.solve(rhs);
        if (x.allFinite()) return x;
    }
    throw Error(ErrorKind::SingularSystem, "linear system of size " + std::to_string(rhs.size()) +
                                               " is singular even after jitter");
}

/// Factorization of the labeled block E_L K_LL + sigma I through the symmetric
/// S = D K_LL D + sigma I with D = sqrt(E_L). Valid only for sigma > 0 and
/// strictly positive weights.
class LabeledBlock {
public:
    static std::optional<LabeledBlock> factor(const Matrix& K_ll, const Vector& weights, double sigma) {
        if (!(sigma > 0.0) || (weights.array() <= 0.0).any()) return std::nullopt;
        LabeledBlock block;
        block.d_ = weights.cwiseSqrt();
        Matrix S = block.d_.asDiagonal() * K_ll * block.d_.asDiagonal();
        S.diagonal().array() += sigma;
        block.llt_.compute(S);
        if (block.llt_.info() != Eigen::Success) return std::nullopt;
        return block;
    }

    /// x with (E_L K_LL + sigma I) x = rhs.
    Vector solve(const Vector& rhs) const {
        return d_.asDiagonal() * llt_.solve(rhs.cwiseQuotient(d_));
    }

private:
    Vector d_;
    Eigen::LLT<Matrix> llt_;
};

struct Stack {
    Matrix X;
    Matrix K;
    KernelSpec kernel;
    Vector y;  // signed, zero on unlabeled rows
    Vector e;  // diagonal of E
    Eigen::Index labeled = 0;
};

Stack make_stack(const WarProblem& problem, StackedKernel* gram) {
    Stack s;
    s.X = problem.stacked_features();
    if (gram) {
        if (gram->K.rows() != s.X.rows() || gram->K.cols() != s.X.rows())
            throw Error(ErrorKind::DimensionMismatch, "supplied kernel does not match the stacked rows");
        s.kernel = gram->kernel;
        s.K = std::move(gram->K);
    } else {
        s.kernel = problem.params.kernel;
        if (s.kernel.kind == KernelKind::Rbf) s.kernel.gamma = resolve_gamma(s.kernel, s.X);
        s.K = kernel_matrix(s.X, s.X, s.kernel);
    }
    s.labeled = problem.n() + problem.m_l();
    s.y = Vector::Zero(problem.size());
    s.y.head(problem.n()) = signed_labels(problem.source_labels);
    s.y.segment(problem.n(), problem.m_l()) = signed_labels(problem.target_labels);

    const SampleWeights w = sample_weights(problem.source_labels, problem.target_labels);
    s.e = Vector::Zero(problem.size());
    s.e.head(problem.n()) = w.source;
    s.e.segment(problem.n(), problem.m_l()) = problem.params.w_t * w.target;
    return s;
}

std::vector<LabelValue> initial_pseudo_labels(const WarProblem& problem, const Stack& s,
                                              const std::optional<LabeledBlock>& block) {
    const Eigen::Index L = s.labeled;
    const Eigen::Index mu = problem.m_u();
    if (mu == 0) return {};
    const Vector rhs = s.e.head(L).cwiseProduct(s.y.head(L));
    Vector alpha0;
    if (block) {
        alpha0 = block->solve(rhs);
    } else {
        Matrix system = s.e.head(L).asDiagonal() * s.K.topLeftCorner(L, L);
        system.diagonal().array() += problem.params.sigma;
        alpha0 = dense_solve(std::move(system), rhs);
    }
    const Vector f_u = s.K.bottomLeftCorner(mu, L) * alpha0;
    return decide_all(f_u);
}

Matrix factor_columns(const MmdFactors& factors) {
    Matrix W(factors.marginal.size(), static_cast<Eigen::Index>(1 + factors.conditional.size()));
    W.col(0) = factors.marginal;
    for (std::size_t c = 0; c < factors.conditional.size(); ++c)
        W.col(static_cast<Eigen::Index>(c + 1)) = factors.conditional[c];
    return W;
}

/// alpha for [(E + lambda W W^T) K + sigma I] alpha = E y.
Vector solve_dense(const Stack& s, const Matrix& W, double lambda, double sigma) {
    Matrix system = s.e.asDiagonal() * s.K;
    if (lambda > 0.0) system.noalias() += lambda * W * (s.K * W).transpose();
    system.diagonal().array() += sigma;
    return dense_solve(std::move(system), s.e.cwiseProduct(s.y));
}

/// Same system, solved as a block-triangular B = E K + sigma I (unlabeled rows of
/// E vanish) plus a Woodbury correction for the rank-r MMD term.
std::optional<Vector> solve_structured(const Stack& s, const LabeledBlock& block, const Matrix& W,
                                       double lambda, double sigma) {
    const Eigen::Index L = s.labeled;
    const Eigen::Index N = s.K.rows();
    const Eigen::Index U = N - L;
    const auto K_lu = s.K.topRightCorner(L, U);

    auto solve_b = [&](const Vector& b) {
        Vector x(N);
        x.tail(U) = b.tail(U) / sigma;
        Vector r = b.head(L);
        if (U > 0) r -= s.e.head(L).cwiseProduct(K_lu * x.tail(U));
        x.head(L) = block.solve(r);
        return x;
    };

    const Vector z = solve_b(s.e.cwiseProduct(s.y));
    if (!(lambda > 0.0)) return z;

    Matrix Y(N, W.cols());
    for (Eigen::Index c = 0; c < W.cols(); ++c) Y.col(c) = solve_b(W.col(c));
    const Matrix G = s.K * W;
    Matrix capacitance = G.transpose() * Y;
    capacitance.diagonal().array() += 1.0 / lambda;
    const Eigen::FullPivLU<Matrix> lu(capacitance);
    if (!lu.isInvertible()) return std::nullopt;
    Vector alpha = z - Y * lu.solve(G.transpose() * z);
    if (!alpha.allFinite()) return std::nullopt;
    return alpha;
}

}  // namespace

double median_heuristic_gamma(const Matrix& X) {
    const Eigen::Index n = X.rows();
    if (n < 2) return 1.0;
    const Matrix d2 = squared_distances(X, X);
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index j = 1; j < n; ++j)
        for (Eigen::Index i = 0; i < j; ++i) dist.push_back(d2(i, j));
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    double median_sq = dist[mid];
    if (dist.size() % 2 == 0) {
        const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
        const double median = (std::sqrt(median_sq) + std::sqrt(lower)) / 2.0;
        median_sq = median * median;
    }
    return median_sq > 0.0 ? 1.0 / (2.0 * median_sq) : 1.0;
}

double resolve_gamma(const KernelSpec& spec, const Matrix& training) {
    spec.validate();
    return spec.gamma ? *spec.gamma : median_heuristic_gamma(training);
}

Matrix kernel_matrix(const Matrix& X, const Matrix& Y, const KernelSpec& spec) {
    if (X.cols() != Y.cols())
        throw Error(ErrorKind::DimensionMismatch, "kernel inputs have " + std::to_string(X.cols()) + " and " +
                                                      std::to_string(Y.cols()) + " columns");
    if (spec.kind == KernelKind::Linear) return X * Y.transpose();
    const double gamma = resolve_gamma(spec, X);
    return (-gamma * squared_distances(X, Y).array()).exp().matrix();
}

Vector balanced_weights(std::span<const LabelValue> labels) {
    const ClassCounts c = class_counts(labels);
    const double class2_weight =
        (c.class1 > 0 && c.class2 > 0) ? static_cast<double>(c.class1) / static_cast<double>(c.class2) : 1.0;
    Vector w(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        w(static_cast<Eigen::Index>(i)) = labels[i] == LabelValue::Class2 ? class2_weight : 1.0;
    return w;
}

SampleWeights sample_weights(std::span<const LabelValue> source, std::span<const LabelValue> target_labeled) {
    return {balanced_weights(source), balanced_weights(target_labeled)};
}

Matrix WarProblem::stacked_features() const {
    Matrix X(size(), source_features.cols());
    X.topRows(n()) = source_features;
    if (m_l() > 0) X.middleRows(n(), m_l()) = target_labeled_features;
    if (m_u() > 0) X.bottomRows(m_u()) = target_unlabeled_features;
    return X;
}

void WarProblem::validate() const {
    if (n() < 1) throw Error(ErrorKind::EmptyDomain, "wAR needs at least one source row");
    if (m_l() + m_u() < 1) throw Error(ErrorKind::EmptyDomain, "wAR needs at least one target row");
    const Eigen::Index d = source_features.cols();
    if ((m_l() > 0 && target_labeled_features.cols() != d) || (m_u() > 0 && target_unlabeled_features.cols() != d))
        throw Error(ErrorKind::DimensionMismatch, "source and target feature dimensions differ");
    if (static_cast<Eigen::Index>(source_labels.size()) != n() ||
        static_cast<Eigen::Index>(target_labels.size()) != m_l())
        throw Error(ErrorKind::DimensionMismatch, "label vectors do not match feature rows");
    if (class_counts(source_labels).unknown > 0)
        throw Error(ErrorKind::InvalidParameter, "source labels must all be known");
    if (class_counts(target_labels).unknown > 0)
        throw Error(ErrorKind::InvalidParameter, "labeled target rows must have known labels");
    if (!target_pseudo.empty() &&
        (static_cast<Eigen::Index>(target_pseudo.size()) != m_u() || class_counts(target_pseudo).unknown > 0))
        throw Error(ErrorKind::MissingPseudoLabels, "pseudo labels must cover every unlabeled target row");
    params.validate();
}

MmdFactors mmd_factors(const WarProblem& problem) {
    if (static_cast<Eigen::Index>(problem.target_pseudo.size()) != problem.m_u() ||
        class_counts(problem.target_pseudo).unknown > 0)
        throw Error(ErrorKind::MissingPseudoLabels, "pseudo labels must cover every unlabeled target row");

    const Eigen::Index n = problem.n();
    const Eigen::Index m = problem.m_l() + problem.m_u();
    MmdFactors f;
    f.marginal = Vector::Zero(n + m);
    f.marginal.head(n).setConstant(1.0 / static_cast<double>(n));
    f.marginal.tail(m).setConstant(-1.0 / static_cast<double>(m));

    std::vector<LabelValue> target(problem.target_labels);
    target.insert(target.end(), problem.target_pseudo.begin(), problem.target_pseudo.end());
    for (LabelValue c : {LabelValue::Class1, LabelValue::Class2}) {
        const auto n_c = std::count(problem.source_labels.begin(), problem.source_labels.end(), c);
        const auto m_c = std::count(target.begin(), target.end(), c);
        if (n_c == 0 || m_c == 0) continue;
        Vector u = Vector::Zero(n + m);
        for (Eigen::Index i = 0; i < n; ++i)
            if (problem.source_labels[static_cast<std::size_t>(i)] == c) u(i) = 1.0 / static_cast<double>(n_c);
        for (Eigen::Index j = 0; j < m; ++j)
            if (target[static_cast<std::size_t>(j)] == c) u(n + j) = -1.0 / static_cast<double>(m_c);
        f.conditional.push_back(std::move(u));
    }
    return f;
}

RegMatrices build_reg_matrices(const WarProblem& problem) {
    const MmdFactors f = mmd_factors(problem);
    const SampleWeights w = sample_weights(problem.source_labels, problem.target_labels);
    RegMatrices r;
    r.E = Vector::Zero(problem.size());
    r.E.head(problem.n()) = w.source;
    r.E.segment(problem.n(), problem.m_l()) = problem.params.w_t * w.target;
    r.M0 = f.marginal * f.marginal.transpose();
    r.M = Matrix::Zero(problem.size(), problem.size());
    for (const Vector& u : f.conditional) r.M.noalias() += u * u.transpose();
    return r;
}

StackedKernel stack_kernel(const Matrix& source, const Matrix& target, const KernelSpec& spec) {
    if (source.cols() != target.cols())
        throw Error(ErrorKind::DimensionMismatch, "source and target feature dimensions differ");
    Matrix X(source.rows() + target.rows(), source.cols());
    X.topRows(source.rows()) = source;
    X.bottomRows(target.rows()) = target;
    StackedKernel out;
    out.kernel = spec;
    if (spec.kind == KernelKind::Rbf) out.kernel.gamma = resolve_gamma(spec, X);
    out.K = kernel_matrix(X, X, out.kernel);
    return out;
}

namespace {

WarModel solve_war_impl(const WarProblem& problem, StackedKernel* gram, SolveMethod method) {
    problem.validate();
    const Stack s = make_stack(problem, gram);
    const double sigma = problem.params.sigma;
    const double lambda = problem.params.lambda;

    std::optional<LabeledBlock> block;
    if (method == SolveMethod::Structured)
        block = LabeledBlock::factor(s.K.topLeftCorner(s.labeled, s.labeled), s.e.head(s.labeled), sigma);

    WarProblem working = problem;
    if (working.target_pseudo.empty()) working.target_pseudo = initial_pseudo_labels(problem, s, block);

    Vector alpha;
    Vector fitted;
    for (int pass = 0; pass < problem.params.pseudo_label_passes; ++pass) {
        const Matrix W = factor_columns(mmd_factors(working));
        std::optional<Vector> solved;
        if (block) solved = solve_structured(s, *block, W, lambda, sigma);
        alpha = solved ? std::move(*solved) : solve_dense(s, W, lambda, sigma);
        fitted = s.K * alpha;
        if (pass + 1 < problem.params.pseudo_label_passes && problem.m_u() > 0)
            working.target_pseudo = decide_all(fitted.tail(problem.m_u()));
    }

    WarModel model;
    model.train_features = s.X;
    model.alpha = std::move(alpha);
    model.kernel = s.kernel;
    model.fitted = std::move(fitted);
    model.pseudo_labels = std::move(working.target_pseudo);

    std::vector<LabelValue> truth(problem.source_labels);
    truth.insert(truth.end(), problem.target_labels.begin(), problem.target_labels.end());
    model.train_accuracy = bca(truth, decide_all(model.fitted.head(s.labeled))).bca;
    return model;
}

}  // namespace

WarModel solve_war(const WarProblem& problem, SolveMethod method) { return solve_war_impl(problem, nullptr, method); }

WarModel solve_war(const WarProblem& problem, StackedKernel gram, SolveMethod method) {
    return solve_war_impl(problem, &gram, method);
}

Vector predict(const WarModel& model, const Matrix& query) {
    if (query.cols() != model.train_features.cols())
        throw Error(ErrorKind::DimensionMismatch, "query has " + std::to_string(query.cols()) +
                                                      " columns, model expects " +
                                                      std::to_string(model.train_features.cols()));
    if (query.rows() == 0) return Vector(0);
    return kernel_matrix(query, model.train_features, model.kernel) * model.alpha;
}

WarModel fit_weighted_classifier(const Matrix& features, std::span<const LabelValue> labels,
                                 const KernelSpec& kernel, double sigma) {
    if (features.rows() == 0) throw Error(ErrorKind::EmptyDomain, "no training rows");
    if (static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw Error(ErrorKind::DimensionMismatch, "label count does not match feature rows");
    if (class_counts(labels).unknown > 0) throw Error(ErrorKind::InvalidParameter, "training labels must be known");
    if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidParameter, "sigma must be >= 0");

    WarModel model;
    model.train_features = features;
    model.kernel = kernel;
    if (kernel.kind == KernelKind::Rbf) model.kernel.gamma = resolve_gamma(kernel, features);
    const Matrix K = kernel_matrix(features, features, model.kernel);
    const Vector w = balanced_weights(labels);
    const Vector y = signed_labels(labels);

    if (auto block = LabeledBlock::factor(K, w, sigma)) {
        model.alpha = block->solve(w.cwiseProduct(y));
    } else {
        Matrix system = w.asDiagonal() * K;
        system.diagonal().array() += sigma;
        model.alpha = dense_solve(std::move(system), w.cwiseProduct(y));
    }
    model.fitted = K * model.alpha;
    model.train_accuracy = bca(labels, decide_all(model.fitted)).bca;
    return model;
}

Vector FusedClassifier::scores(const Matrix& query) const {
    if (static_cast<Eigen::Index>(models.size()) != weights.size())
        throw Error(ErrorKind::DimensionMismatch, "one fusion weight per model is required");
    Vector total = Vector::Zero(query.rows());
    for (std::size_t z = 0; z < models.size(); ++z) total += weights(static_cast<Eigen::Index>(z)) * predict(models[z], query);
    return total;
}

std::vector<LabelValue> FusedClassifier::decisions(const Matrix& query) const { return decide_all(scores(query)); }

WarMultiResult war_multi(std::span<const DomainData> sources, const CalibrationState& state,
                         const HyperParams& params, std::vector<StackedKernel>* cache) {
    if (sources.empty()) throw Error(ErrorKind::InvalidParameter, "wAR needs at least one source domain");
    if (cache && !cache->empty() && cache->size() != sources.size())
        throw Error(ErrorKind::DimensionMismatch, "kernel cache holds a different number of sources");
    if (cache && cache->empty())
        for (const DomainData& source : sources)
            cache->push_back(stack_kernel(source.features, state.target().features, params.kernel));
    const Matrix labeled = state.labeled_features();
    const std::vector<LabelValue> labels = state.labeled_labels();
    const Matrix unlabeled = state.unlabeled_features();

    WarMultiResult out;
    const auto Z = static_cast<Eigen::Index>(sources.size());
    const auto m_u = static_cast<Eigen::Index>(state.unlabeled_count());
    out.member_scores.resize(Z, m_u);
    out.classifier.weights.resize(Z);
    for (Eigen::Index z = 0; z < Z; ++z) {
        const DomainData& source = sources[static_cast<std::size_t>(z)];
        WarProblem problem{source.features, source.labels, labeled, labels, unlabeled, {}, params};
        WarModel model;
        if (cache) {
            // Row order of the stack: source, labeled target, unlabeled target.
            const Eigen::Index n = source.features.rows();
            std::vector<Eigen::Index> order;
            order.reserve(static_cast<std::size_t>(problem.size()));
            for (Eigen::Index i = 0; i < n; ++i) order.push_back(i);
            for (std::size_t r : state.labeled()) order.push_back(n + static_cast<Eigen::Index>(r));
            for (std::size_t r : state.unlabeled()) order.push_back(n + static_cast<Eigen::Index>(r));
            const StackedKernel& full = (*cache)[static_cast<std::size_t>(z)];
            model = solve_war(problem, StackedKernel{full.K(order, order), full.kernel});
        } else {
            model = solve_war(problem);
        }
        out.member_scores.row(z) = model.fitted.tail(m_u).transpose();
        out.classifier.weights(z) = model.train_accuracy;
        out.classifier.models.push_back(std::move(model));
    }
    out.fused_scores = out.member_scores.transpose() * out.classifier.weights;
    return out;
}

}  // namespace calibkit
