#include "calibkit/error.hpp"
#include "calibkit/features.hpp"
#include "calibkit/kernel_machine.hpp"

#include "../support/instances.hpp"

#include <doctest.h>

#include <random>

using namespace calibkit;

namespace {

constexpr auto C1 = LabelValue::Class1;
constexpr auto C2 = LabelValue::Class2;

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::OutOfRange;
}

Matrix uniform(int n, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = u(rng);
    return X;
}

}  // namespace

TEST_CASE("kernel_matrix") {
    const Matrix X = uniform(5, 3, 1);
    const Matrix K = kernel_matrix(X, X, KernelSpec{KernelKind::Rbf, 0.7});
    for (int i = 0; i < 5; ++i) CHECK(K(i, i) == 1.0);

    Matrix x(1, 1), y(1, 1);
    x << 0;
    y << 1;
    CHECK(kernel_matrix(x, y, KernelSpec{KernelKind::Rbf, 1.0})(0, 0) == doctest::Approx(0.36787944117144233));

    const Matrix Y = uniform(4, 3, 2);
    const Matrix R = kernel_matrix(X, Y, KernelSpec{KernelKind::Rbf, 0.7});
    CHECK((R - oracle::rbf(X, Y, 0.7)).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix L = kernel_matrix(X, Y, KernelSpec{KernelKind::Linear, std::nullopt});
    CHECK((L - oracle::product(X, Y.transpose())).cwiseAbs().maxCoeff() < 1e-12);

    CHECK(kind_of([&] { kernel_matrix(X, uniform(2, 2, 3), KernelSpec{}); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("median heuristic") {
    // Pairwise distances 1, 2, 3: median 2, gamma = 1 / (2 * 4).
    Matrix X(3, 1);
    X << 0, 1, 3;
    CHECK(median_heuristic_gamma(X) == doctest::Approx(0.125));
    // Distances 1, 1, 2, 2, 3, 4 (even count): median 2.
    Matrix Y(4, 1);
    Y << 0, 1, 2, 4;
    const double med = (2.0 + 2.0) / 2;
    CHECK(median_heuristic_gamma(Y) == doctest::Approx(1 / (2 * med * med)));
    CHECK(resolve_gamma(KernelSpec{}, X) == doctest::Approx(0.125));
    CHECK(resolve_gamma(KernelSpec{KernelKind::Rbf, 3.0}, X) == 3.0);
}

TEST_CASE("sample weights") {
    const std::vector<LabelValue> src{C1, C1, C1, C2};
    const SampleWeights w = sample_weights(src, std::vector<LabelValue>{C1, C2});
    CHECK(w.source == (Vector(4) << 1, 1, 1, 3).finished());
    CHECK(w.target == (Vector(2) << 1, 1).finished());

    const Vector all1 = balanced_weights(std::vector<LabelValue>{C1, C1});
    CHECK(all1 == Vector::Ones(2));
    const Vector all2 = balanced_weights(std::vector<LabelValue>{C2, C2, C2});
    CHECK(all2 == Vector::Ones(3));
    CHECK(balanced_weights(std::vector<LabelValue>{}).size() == 0);

    // Class masses balance whenever both classes are present.
    const std::vector<LabelValue> mixed{C1, C2, C2, C2, C1, C2, C2};
    const Vector m = balanced_weights(mixed);
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < mixed.size(); ++i) (mixed[i] == C1 ? s1 : s2) += m(static_cast<Eigen::Index>(i));
    CHECK(s1 == doctest::Approx(s2));
}

TEST_CASE("regularization matrices") {
    WarProblem tiny;
    tiny.source_features = Matrix::Zero(1, 1);
    tiny.source_labels = {C1};
    tiny.target_labeled_features = Matrix(0, 1);
    tiny.target_unlabeled_features = Matrix::Ones(1, 1);
    tiny.target_pseudo = {C1};
    const RegMatrices r = build_reg_matrices(tiny);
    CHECK(r.M0 == (Matrix(2, 2) << 1, -1, -1, 1).finished());

    auto c = oracle::random_case(4, 6, 3, 2);
    const RegMatrices g = build_reg_matrices(c.problem);
    CHECK(g.E.size() == 11);
    CHECK(g.E(9) == 0.0);
    CHECK(g.E(10) == 0.0);
    const auto ws = oracle::class_weights(c.problem.source_labels);
    const auto wt = oracle::class_weights(c.problem.target_labels);
    for (int i = 0; i < 6; ++i) CHECK(g.E(i) == doctest::Approx(ws[i]));
    for (int i = 0; i < 3; ++i) CHECK(g.E(6 + i) == doctest::Approx(c.problem.params.w_t * wt[i]));
    CHECK((g.M0 - g.M0.transpose()).norm() == 0.0);
    CHECK((g.M - g.M.transpose()).norm() == 0.0);
    CHECK((g.M0 * Vector::Ones(11)).cwiseAbs().maxCoeff() < 1e-15);

    // Entry values of M0 by block.
    CHECK(g.M0(0, 1) == doctest::Approx(1.0 / 36));
    CHECK(g.M0(7, 10) == doctest::Approx(1.0 / 25));
    CHECK(g.M0(2, 8) == doctest::Approx(-1.0 / 30));

    c.problem.target_pseudo.pop_back();
    CHECK(kind_of([&] { build_reg_matrices(c.problem); }) == ErrorKind::MissingPseudoLabels);
}

TEST_CASE("MMD quadratic forms equal squared mean gaps") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = oracle::random_case(seed, 5 + seed % 4, seed % 3, 3 + seed % 5);
        const RegMatrices r = build_reg_matrices(c.problem);
        std::mt19937_64 rng(seed + 100);
        std::normal_distribution<double> normal;
        Vector f(r.E.size());
        for (auto& v : f) v = normal(rng);

        const auto& labels = c.instance.labels;
        const int n = c.instance.n;
        auto gap = [&](std::optional<LabelValue> cls) {
            double s = 0, t = 0;
            int ns = 0, nt = 0;
            for (int i = 0; i < f.size(); ++i) {
                if (cls && labels[i] != *cls) continue;
                (i < n ? s : t) += f(i);
                ++(i < n ? ns : nt);
            }
            return ns && nt ? std::pow(s / ns - t / nt, 2) : 0.0;
        };
        CHECK(std::abs(f.dot(r.M0 * f) - gap(std::nullopt)) < 1e-12);
        CHECK(std::abs(f.dot(r.M * f) - gap(C1) - gap(C2)) < 1e-12);

        const MmdFactors fac = mmd_factors(c.problem);
        for (const Vector& u : fac.conditional) {
            const LabelValue cls = u(0) != 0 ? labels[0] : (labels[0] == C1 ? C2 : C1);
            CHECK(std::abs(std::pow(u.dot(f), 2) - gap(cls)) < 1e-12);
        }
    }
}

TEST_CASE("solve_war diagonal closed form") {
    WarProblem p;
    p.source_features = Matrix::Identity(6, 6).topRows(2);
    p.source_labels = {C1, C2};
    p.target_labeled_features = Matrix::Identity(6, 6).middleRows(2, 2);
    p.target_labels = {C2, C1};
    p.target_unlabeled_features = Matrix::Identity(6, 6).bottomRows(2);
    p.target_pseudo = {C1, C2};
    p.params = HyperParams(1.0, 0.25, 0.0, 5, KernelSpec{KernelKind::Linear, std::nullopt});
    for (SolveMethod method : {SolveMethod::Structured, SolveMethod::Dense}) {
        const WarModel m = solve_war(p, method);
        const Vector expected = (Vector(6) << 1, -1, -1, 1, 0, 0).finished() / 1.25;
        CHECK((m.alpha - expected).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("solve_war minimizes the objective") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = oracle::random_case(seed, 6, 4, 4);
        const Vector best = oracle::minimize(c.instance);
        for (SolveMethod method : {SolveMethod::Structured, SolveMethod::Dense}) {
            const WarModel m = solve_war(c.problem, method);
            CHECK(m.alpha.size() == 14);
            CHECK(oracle::relative_gap(c.instance, m.alpha, best) < 1e-6);
            CHECK(oracle::objective(c.instance, m.alpha) <= oracle::objective(c.instance, Vector::Zero(14)));
        }
    }
}

TEST_CASE("structured and dense solves agree") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto c = oracle::random_case(seed, 20, static_cast<int>(seed % 6), 15);
        c.problem.target_pseudo.clear();  // estimated inside
        const WarModel a = solve_war(c.problem, SolveMethod::Structured);
        const WarModel b = solve_war(c.problem, SolveMethod::Dense);
        CHECK(a.pseudo_labels == b.pseudo_labels);
        CHECK((a.alpha - b.alpha).norm() <= 1e-7 * std::max(1.0, b.alpha.norm()));
    }
    // sigma = 0 takes the dense path.
    auto c = oracle::random_case(3, 8, 2, 4);
    c.problem.params.sigma = 0.0;
    const WarModel z = solve_war(c.problem);
    CHECK(z.alpha.allFinite());
}

TEST_CASE("lambda = 0 reduces to weighted kernel ridge") {
    auto c = oracle::random_case(9, 10, 5, 6);
    c.problem.params.lambda = 0.0;
    const WarModel m = solve_war(c.problem);

    const Matrix& X = c.instance.X;
    const Matrix K = oracle::rbf(X, X, c.instance.gamma);
    const auto ws = oracle::class_weights(c.problem.source_labels);
    const auto wt = oracle::class_weights(c.problem.target_labels);
    std::vector<double> w(ws), y;
    for (double v : wt) w.push_back(c.problem.params.w_t * v);
    for (int i = 0; i < 6; ++i) w.push_back(0.0);
    for (std::size_t i = 0; i < c.instance.labels.size(); ++i)
        y.push_back(i < 15 ? oracle::label_sign(c.instance.labels[i]) : 0.0);
    const Vector alpha = oracle::weighted_ridge(K, w, y, c.problem.params.sigma);

    const Matrix Q = uniform(7, 2, 10);
    const Vector expected = oracle::rbf(Q, X, c.instance.gamma) * alpha;
    CHECK((predict(m, Q) - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pseudo-label passes") {
    auto c = oracle::random_case(12, 15, 3, 12);
    c.problem.target_pseudo.clear();
    const WarModel one = solve_war(c.problem);
    c.problem.params.pseudo_label_passes = 2;
    const WarModel two = solve_war(c.problem);
    // The second pass uses the first pass's decisions as pseudo labels.
    std::vector<LabelValue> expected;
    for (Eigen::Index i = one.fitted.size() - 12; i < one.fitted.size(); ++i) expected.push_back(decide(one.fitted(i)));
    CHECK(two.pseudo_labels == expected);
}

TEST_CASE("ridge shrinkage in sigma") {
    auto c = oracle::random_case(21, 10, 3, 6);
    double previous = std::numeric_limits<double>::infinity();
    for (double sigma : {0.01, 0.1, 1.0, 10.0}) {
        c.problem.params.sigma = sigma;
        const double norm = solve_war(c.problem).alpha.norm();
        CHECK(norm < previous);
        previous = norm;
    }
}

TEST_CASE("solve_war errors") {
    auto c = oracle::random_case(1, 4, 2, 2);
    auto bad = c.problem;
    bad.target_labeled_features = Matrix::Zero(2, 3);
    CHECK(kind_of([&] { solve_war(bad); }) == ErrorKind::DimensionMismatch);
    bad = c.problem;
    bad.source_labels[0] = LabelValue::Unknown;
    CHECK(kind_of([&] { solve_war(bad); }) == ErrorKind::InvalidParameter);
    bad = c.problem;
    bad.source_features = Matrix(0, 2);
    bad.source_labels.clear();
    CHECK(kind_of([&] { solve_war(bad); }) == ErrorKind::EmptyDomain);
    bad = c.problem;
    bad.target_pseudo.pop_back();
    CHECK(kind_of([&] { solve_war(bad); }) == ErrorKind::MissingPseudoLabels);

    // Rank one with entries near 1e10: the jitter cannot lift it.
    WarProblem zero;
    zero.source_features = Matrix::Constant(2, 1, 1e5);
    zero.source_labels = {C1, C2};
    zero.target_labeled_features = Matrix(0, 1);
    zero.target_unlabeled_features = Matrix::Constant(2, 1, 1e5);
    zero.params = HyperParams(2, 0, 0, 5, KernelSpec{KernelKind::Linear, std::nullopt});
    CHECK(kind_of([&] { solve_war(zero); }) == ErrorKind::SingularSystem);
}

TEST_CASE("predict") {
    WarModel m;
    m.train_features = uniform(4, 2, 7);
    m.kernel = KernelSpec{KernelKind::Rbf, 0.9};
    m.alpha = Vector::Zero(4);
    m.alpha(2) = 1.0;
    CHECK(predict(m, m.train_features.row(2))(0) == doctest::Approx(1.0));

    m.alpha.setZero();
    const Vector zero = predict(m, uniform(3, 2, 8));
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
    CHECK(decide(zero(0)) == C1);

    m.alpha = Vector::Random(4);
    const Matrix Q = uniform(6, 2, 9);
    const Vector s = predict(m, Q);
    for (int q = 0; q < 6; ++q) {
        double sum = 0;
        for (int i = 0; i < 4; ++i)
            sum += m.alpha(i) * std::exp(-0.9 * (Q.row(q) - m.train_features.row(i)).squaredNorm());
        CHECK(std::abs(s(q) - sum) < 1e-12);
    }
    CHECK(kind_of([&] { predict(m, uniform(1, 3, 1)); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("weighted classifier") {
    const Matrix X = uniform(12, 2, 30);
    std::vector<LabelValue> y;
    for (int i = 0; i < 12; ++i) y.push_back(X(i, 0) > 0.3 ? C1 : C2);
    const WarModel m = fit_weighted_classifier(X, y, KernelSpec{KernelKind::Rbf, 1.0}, 0.1);
    const Matrix K = oracle::rbf(X, X, 1.0);
    std::vector<double> ys;
    for (auto l : y) ys.push_back(oracle::label_sign(l));
    const Vector alpha = oracle::weighted_ridge(K, oracle::class_weights(y), ys, 0.1);
    CHECK((m.alpha - alpha).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(m.train_accuracy >= 0.0);
    CHECK(m.train_accuracy <= 1.0);
}

TEST_CASE("war_multi") {
    SynthConfig cfg;
    cfg.n_subjects = 4;
    cfg.epochs_per_subject = 40;
    cfg.d_raw = 5;
    cfg.target_rate = 0.25;
    const auto d = generate_synthetic(cfg);
    std::vector<DomainData> sources(d.begin(), d.begin() + 3);
    CalibrationState st(hide_labels(d[3]));
    const std::vector<std::size_t> rows{0, 5, 9};
    const std::vector<LabelValue> answers{d[3].labels[0], d[3].labels[5], d[3].labels[9]};
    st.install_labels(0, rows, answers);
    const HyperParams params;

    const WarMultiResult r = war_multi(sources, st, params);
    REQUIRE(r.classifier.models.size() == 3);
    const Matrix U = st.unlabeled_features();
    Vector by_hand = Vector::Zero(U.rows());
    for (int z = 0; z < 3; ++z) {
        const Vector s = predict(r.classifier.models[z], U);
        CHECK((s.transpose() - r.member_scores.row(z)).cwiseAbs().maxCoeff() < 1e-9);
        by_hand += r.classifier.models[z].train_accuracy * s;
        CHECK(r.classifier.weights(z) == r.classifier.models[z].train_accuracy);
    }
    CHECK((r.fused_scores - by_hand).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((r.classifier.scores(U) - by_hand).cwiseAbs().maxCoeff() < 1e-9);

    // Cached kernels reproduce the uncached fit.
    std::vector<StackedKernel> cache;
    const WarMultiResult cached = war_multi(sources, st, params, &cache);
    CHECK(cache.size() == 3);
    CHECK((cached.fused_scores - r.fused_scores).cwiseAbs().maxCoeff() < 1e-9);

    // One source: fused decision is that model's decision.
    const std::vector<DomainData> single(d.begin(), d.begin() + 1);
    const WarMultiResult one = war_multi(single, st, params);
    for (Eigen::Index j = 0; j < U.rows(); ++j) CHECK(decide(one.fused_scores(j)) == decide(one.member_scores(0, j)));

    // Two identical sources decide like one.
    const std::vector<DomainData> twice{d[0], d[0]};
    const WarMultiResult two = war_multi(twice, st, params);
    for (Eigen::Index j = 0; j < U.rows(); ++j) CHECK(decide(two.fused_scores(j)) == decide(one.fused_scores(j)));

    CHECK(kind_of([&] { war_multi(std::vector<DomainData>{}, st, params); }) == ErrorKind::InvalidParameter);
}
