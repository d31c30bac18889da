#include "calibkit/pipeline.hpp"

#include "calibkit/active.hpp"
#include "calibkit/error.hpp"
#include "calibkit/evaluation.hpp"
#include "calibkit/sml.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace calibkit {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t stream_seed(std::uint64_t master, std::string_view tag, std::string_view target_id, int run) {
    std::uint64_t h = splitmix(master);
    h = splitmix(h ^ fnv1a(tag));
    h = splitmix(h ^ fnv1a(target_id));
    return splitmix(h ^ static_cast<std::uint64_t>(run));
}

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::vector<LabelValue> decide_all(const Vector& scores) {
    std::vector<LabelValue> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i) out[static_cast<std::size_t>(i)] = decide(scores(i));
    return out;
}

RunRecord make_record(Algorithm algorithm, const CellKey& cell, int iteration, std::size_t m_l, const Metrics& m,
                      double wall_ms) {
    RunRecord r;
    r.algorithm = algorithm;
    r.target_id = cell.target_id;
    r.run = cell.run;
    r.iteration = iteration;
    r.m_l = static_cast<int>(m_l);
    r.bca = m.bca;
    r.wall_ms = wall_ms;
    r.seed = cell.seed;
    r.degenerate_eval = m.degenerate;
    return r;
}

/// Scores BCA of `predicted` against the hidden truth of the current pool.
Metrics score_pool(const DomainData& target, const CalibrationState& state, std::span<const LabelValue> predicted) {
    return bca(gather(target.labels, state.unlabeled()), predicted);
}

/// Answers the query with the hidden truth.
void answer_query(const DomainData& target, CalibrationState& state, int iteration,
                  const std::vector<std::size_t>& rows) {
    state.install_labels(iteration, rows, gather(target.labels, rows));
}

std::vector<DomainData> pick(std::span<const DomainData> domains, const std::vector<std::size_t>& idx) {
    std::vector<DomainData> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(domains[i]);
    return out;
}

}  // namespace

std::string_view to_string(Algorithm algorithm) noexcept {
    switch (algorithm) {
        case Algorithm::BL1: return "BL1";
        case Algorithm::BL2: return "BL2";
        case Algorithm::WAR: return "wAR";
        case Algorithm::ASTL: return "ASTL";
    }
    return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
    std::string upper(name);
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "BL1") return Algorithm::BL1;
    if (upper == "BL2") return Algorithm::BL2;
    if (upper == "WAR") return Algorithm::WAR;
    if (upper == "ASTL") return Algorithm::ASTL;
    return std::nullopt;
}

void ExperimentConfig::validate(std::size_t n_domains) const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
    if (n_labeled_sources < 0 || n_unlabeled_sources < 0) fail("source counts must be non-negative");
    if (runs < 1) fail("runs must be >= 1");
    if (max_iterations < 1) fail("max_iterations must be >= 1");
    if (algorithms.empty()) fail("no algorithms selected");
    if (static_cast<std::size_t>(n_labeled_sources + n_unlabeled_sources + 1) > n_domains)
        fail("n_labeled_sources + n_unlabeled_sources + 1 = " +
             std::to_string(n_labeled_sources + n_unlabeled_sources + 1) + " exceeds the " +
             std::to_string(n_domains) + " available domains");
    for (Algorithm a : algorithms) {
        if ((a == Algorithm::BL1 || a == Algorithm::WAR || a == Algorithm::ASTL) && n_labeled_sources < 1)
            fail(std::string(to_string(a)) + " needs at least one labeled source");
    }
    try {
        params.validate();
    } catch (const Error& e) {
        fail(e.detail());
    }
}

std::uint64_t cell_seed(std::uint64_t master, Algorithm algorithm, std::string_view target_id, int run) {
    return stream_seed(master, to_string(algorithm), target_id, run);
}

SourceRoles assign_roles(const ExperimentConfig& cfg, std::size_t n_domains, std::size_t target_index,
                         std::string_view target_id, int run) {
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < n_domains; ++i)
        if (i != target_index) others.push_back(i);
    std::mt19937_64 rng(stream_seed(cfg.seed, "roles", target_id, run));
    std::shuffle(others.begin(), others.end(), rng);

    const auto n_l = static_cast<std::size_t>(cfg.n_labeled_sources);
    const auto n_u = static_cast<std::size_t>(cfg.n_unlabeled_sources);
    if (n_l + n_u > others.size()) throw Error(ErrorKind::ConfigError, "not enough domains for the source split");
    SourceRoles roles;
    roles.labeled.assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(n_l));
    roles.unlabeled.assign(others.begin() + static_cast<std::ptrdiff_t>(n_l),
                           others.begin() + static_cast<std::ptrdiff_t>(n_l + n_u));
    std::sort(roles.labeled.begin(), roles.labeled.end());
    std::sort(roles.unlabeled.begin(), roles.unlabeled.end());
    return roles;
}

DomainData pseudo_label_sources(std::span<const DomainData> labeled_sources, const DomainData& unlabeled_source,
                                const HyperParams& params) {
    const CalibrationState state(hide_labels(unlabeled_source));
    const WarMultiResult res = war_multi(labeled_sources, state, params);
    const SmlEstimate est = sml_weights(prediction_matrix(res.member_scores));
    const Vector weights = fusion_weights(est, res.classifier.weights);

    DomainData out = unlabeled_source;
    out.labels = decide_all(res.member_scores.transpose() * weights);
    return out;
}

std::vector<RunRecord> run_transfer(const ExperimentConfig& cfg, std::span<const DomainData> sources,
                                    const DomainData& target, const TransferOptions& options, Algorithm label,
                                    const CellKey& cell) {
    CalibrationState state(hide_labels(target));
    std::mt19937_64 rng(cell.seed);
    const auto p = static_cast<std::size_t>(cfg.params.p);

    std::vector<RunRecord> records;
    std::vector<StackedKernel> kernels;
    for (int it = 0; it < cfg.max_iterations && state.unlabeled_count() > 0; ++it) {
        const auto start = Clock::now();
        const WarMultiResult res = war_multi(sources, state, cfg.params, &kernels);
        Vector weights = res.classifier.weights;
        if (options.fusion == FusionRule::Sml)
            weights = fusion_weights(sml_weights(prediction_matrix(res.member_scores)), weights);
        const Vector scores = res.member_scores.transpose() * weights;

        const Metrics m = score_pool(target, state, decide_all(scores));
        records.push_back(make_record(label, cell, it, state.labeled_count(), m, elapsed_ms(start)));

        if (it + 1 == cfg.max_iterations) break;
        std::vector<std::size_t> query;
        if (options.selection == SelectionRule::Uncertain) {
            for (std::size_t pos : select_uncertain(std::span<const double>(scores.data(), scores.size()), p))
                query.push_back(state.unlabeled()[pos]);
        } else {
            query = select_random(state.unlabeled(), p, rng);
        }
        answer_query(target, state, it, query);
    }
    return records;
}

std::vector<RunRecord> run_astl(const ExperimentConfig& cfg, std::span<const DomainData> labeled_sources,
                                std::span<const DomainData> unlabeled_sources, const DomainData& target,
                                const CellKey& cell, const TransferOptions& options) {
    const auto start = Clock::now();
    std::vector<DomainData> sources(labeled_sources.begin(), labeled_sources.end());
    for (const DomainData& u : unlabeled_sources) sources.push_back(pseudo_label_sources(labeled_sources, u, cfg.params));
    const double setup_ms = elapsed_ms(start);

    auto records = run_transfer(cfg, sources, target, options, Algorithm::ASTL, cell);
    if (!records.empty()) records.front().wall_ms += setup_ms;
    return records;
}

std::vector<RunRecord> run_war_baseline(const ExperimentConfig& cfg, std::span<const DomainData> labeled_sources,
                                        const DomainData& target, const CellKey& cell,
                                        const TransferOptions& options) {
    return run_transfer(cfg, labeled_sources, target, options, Algorithm::WAR, cell);
}

std::vector<RunRecord> run_bl1(const ExperimentConfig& cfg, std::span<const DomainData> labeled_sources,
                               const DomainData& target, const CellKey& cell) {
    if (labeled_sources.empty()) throw Error(ErrorKind::InvalidParameter, "BL1 needs labeled sources");
    const auto start = Clock::now();
    Eigen::Index total = 0;
    for (const auto& s : labeled_sources) total += s.features.rows();
    Matrix pooled(total, target.features.cols());
    std::vector<LabelValue> labels;
    Eigen::Index at = 0;
    for (const auto& s : labeled_sources) {
        if (s.features.cols() != pooled.cols())
            throw Error(ErrorKind::DimensionMismatch, "source '" + s.id + "' has a different feature dimension");
        pooled.middleRows(at, s.features.rows()) = s.features;
        at += s.features.rows();
        labels.insert(labels.end(), s.labels.begin(), s.labels.end());
    }
    const WarModel model = fit_weighted_classifier(pooled, labels, cfg.params.kernel, cfg.params.sigma);
    const Metrics m = bca(target.labels, decide_all(predict(model, target.features)));
    const double ms = elapsed_ms(start);

    std::vector<RunRecord> records;
    for (int it = 0; it < cfg.max_iterations; ++it)
        records.push_back(make_record(Algorithm::BL1, cell, it, static_cast<std::size_t>(it * cfg.params.p), m,
                                      it == 0 ? ms : 0.0));
    return records;
}

WarModel fit_cv_classifier(const Matrix& features, std::span<const LabelValue> labels, const HyperParams& params) {
    const ClassCounts counts = class_counts(labels);
    if (params.kernel.kind != KernelKind::Rbf || counts.class1 < 2 || counts.class2 < 2)
        return fit_weighted_classifier(features, labels, params.kernel, params.sigma);

    // Stratified fold assignment: each class dealt round-robin over the folds.
    const bool leave_one_out = std::min(counts.class1, counts.class2) < 5;
    const std::size_t n = labels.size();
    const std::size_t folds = leave_one_out ? n : 5;
    std::vector<std::size_t> fold(n);
    std::size_t next1 = 0, next2 = 0, next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (leave_one_out)
            fold[i] = next++;
        else
            fold[i] = labels[i] == LabelValue::Class1 ? next1++ % folds : next2++ % folds;
    }

    const double base = median_heuristic_gamma(features);
    constexpr std::array<double, 5> kScales{1.0, 0.5, 2.0, 0.25, 4.0};
    double best_gamma = base;
    double best_bca = -1.0;
    for (double scale : kScales) {
        KernelSpec spec{KernelKind::Rbf, base * scale};
        std::vector<LabelValue> out_of_fold(n, LabelValue::Unknown);
        for (std::size_t f = 0; f < folds; ++f) {
            std::vector<std::size_t> train, test;
            for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
            if (test.empty() || train.empty()) continue;
            const WarModel m = fit_weighted_classifier(gather_rows(features, train), gather(labels, train), spec,
                                                       params.sigma);
            const Vector s = predict(m, gather_rows(features, test));
            for (std::size_t t = 0; t < test.size(); ++t) out_of_fold[test[t]] = decide(s(static_cast<Eigen::Index>(t)));
        }
        const double score = bca(labels, out_of_fold).bca;
        if (score > best_bca) {
            best_bca = score;
            best_gamma = base * scale;
        }
    }
    return fit_weighted_classifier(features, labels, KernelSpec{KernelKind::Rbf, best_gamma}, params.sigma);
}

std::vector<RunRecord> run_bl2(const ExperimentConfig& cfg, const DomainData& target, const CellKey& cell) {
    CalibrationState state(hide_labels(target));
    std::mt19937_64 rng(cell.seed);
    const auto p = static_cast<std::size_t>(cfg.params.p);

    std::vector<RunRecord> records;
    for (int it = 0; it < cfg.max_iterations && state.unlabeled_count() > 0; ++it) {
        const auto start = Clock::now();
        Metrics m;
        if (state.labeled_count() == 0) {
            // Nothing to train on: chance level by definition.
            m.a1 = m.a2 = m.bca = 0.5;
        } else {
            const WarModel model = fit_cv_classifier(state.labeled_features(), state.labeled_labels(), cfg.params);
            m = score_pool(target, state, decide_all(predict(model, state.unlabeled_features())));
        }
        records.push_back(make_record(Algorithm::BL2, cell, it, state.labeled_count(), m, elapsed_ms(start)));
        if (it + 1 == cfg.max_iterations) break;
        answer_query(target, state, it, select_random(state.unlabeled(), p, rng));
    }
    return records;
}

std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg, std::size_t n_domains) {
    std::vector<CellSpec> cells;
    for (Algorithm a : cfg.algorithms)
        for (std::size_t t = 0; t < n_domains; ++t)
            for (int r = 0; r < cfg.runs; ++r) cells.push_back({a, t, r});
    return cells;
}

std::vector<RunRecord> run_cell(const ExperimentConfig& cfg, std::span<const DomainData> domains,
                                const CellSpec& spec) {
    const DomainData& target = domains[spec.target_index];
    const SourceRoles roles = assign_roles(cfg, domains.size(), spec.target_index, target.id, spec.run);
    const CellKey key{target.id, spec.run, cell_seed(cfg.seed, spec.algorithm, target.id, spec.run)};
    switch (spec.algorithm) {
        case Algorithm::BL1: return run_bl1(cfg, pick(domains, roles.labeled), target, key);
        case Algorithm::BL2: return run_bl2(cfg, target, key);
        case Algorithm::WAR: return run_war_baseline(cfg, pick(domains, roles.labeled), target, key);
        case Algorithm::ASTL:
            return run_astl(cfg, pick(domains, roles.labeled), pick(domains, roles.unlabeled), target, key);
    }
    return {};
}

void run_experiment(const ExperimentConfig& cfg, std::span<const DomainData> domains, unsigned jobs,
                    const CellFilter& skip, const CellSink& sink) {
    cfg.validate(domains.size());
    std::vector<CellSpec> cells;
    for (const CellSpec& c : enumerate_cells(cfg, domains.size()))
        if (!skip || !skip(c)) cells.push_back(c);

    std::vector<std::optional<std::vector<RunRecord>>> done(cells.size());
    std::size_t next_to_emit = 0;
    std::atomic<std::size_t> next_cell{0};
    std::atomic<bool> failed{false};
    std::exception_ptr failure;
    std::mutex mutex;

    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t i = next_cell.fetch_add(1);
            if (i >= cells.size()) return;
            const CellSpec& c = cells[i];
            try {
                auto records = run_cell(cfg, domains, c);
                std::lock_guard lock(mutex);
                done[i] = std::move(records);
                while (next_to_emit < cells.size() && done[next_to_emit]) {
                    sink(cells[next_to_emit], *done[next_to_emit]);
                    done[next_to_emit].reset();
                    ++next_to_emit;
                }
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failed.exchange(true)) {
                    const std::string where = std::string(to_string(c.algorithm)) + " target=" +
                                              domains[c.target_index].id + " run=" + std::to_string(c.run);
                    try {
                        throw;
                    } catch (const Error& e) {
                        failure = std::make_exception_ptr(Error(e.kind(), "cell " + where + ": " + e.detail()));
                    } catch (...) {
                        failure = std::current_exception();
                    }
                }
                return;
            }
        }
    };

    const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace calibkit
