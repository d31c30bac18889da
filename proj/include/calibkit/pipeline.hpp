#pragma once

#include "calibkit/domain.hpp"
#include "calibkit/kernel_machine.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace calibkit {

enum class Algorithm { BL1, BL2, WAR, ASTL };

std::string_view to_string(Algorithm algorithm) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;

struct ExperimentConfig {
    int n_labeled_sources = 7;
    int n_unlabeled_sources = 6;
    int runs = 30;
    /// Number of evaluated rounds; round k sees m_l = k * p labels, so 11
    /// rounds at p = 5 cover m_l = 0..50.
    int max_iterations = 11;
    /// Hyperparameters, including the per-round query size p.
    HyperParams params;
    std::vector<Algorithm> algorithms{Algorithm::BL1, Algorithm::BL2, Algorithm::WAR, Algorithm::ASTL};
    std::uint64_t seed = 0;

    /// Throws ConfigError. `n_domains` is the number of subjects available.
    void validate(std::size_t n_domains) const;
};

/// One evaluated round of one (algorithm, target, run) cell.
struct RunRecord {
    Algorithm algorithm = Algorithm::ASTL;
    std::string target_id;
    int run = 0;
    int iteration = 0;
    int m_l = 0;
    double bca = 0.0;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
    /// The evaluation pool lacked one of the classes.
    bool degenerate_eval = false;
};

/// Identity of a cell as seen by the algorithms.
struct CellKey {
    std::string target_id;
    int run = 0;
    /// Stream seed for every random choice made inside the cell.
    std::uint64_t seed = 0;
};

/// Per-cell stream: hash of (master seed, algorithm, target id, run).
std::uint64_t cell_seed(std::uint64_t master, Algorithm algorithm, std::string_view target_id, int run);

/// Which of the other subjects act as labeled / unlabeled sources in one run.
/// Depends only on (master seed, target id, run), so every algorithm in the
/// same cell sees the same split. Both lists are in config order.
struct SourceRoles {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
};

SourceRoles assign_roles(const ExperimentConfig& cfg, std::size_t n_domains, std::size_t target_index,
                         std::string_view target_id, int run);

enum class FusionRule { TrainingAccuracy, Sml };
enum class SelectionRule { Uncertain, Random };

struct TransferOptions {
    FusionRule fusion = FusionRule::Sml;
    SelectionRule selection = SelectionRule::Uncertain;
};

/// Labels every row of `unlabeled_source` by SML-fused wAR models trained on the
/// labeled sources with the unlabeled source in the target role (m_l = 0).
DomainData pseudo_label_sources(std::span<const DomainData> labeled_sources, const DomainData& unlabeled_source,
                                const HyperParams& params);

/// The shared iterative loop: each round fits wAR against every source, fuses,
/// scores BCA on the remaining pool, then queries p labels from `target`'s truth.
std::vector<RunRecord> run_transfer(const ExperimentConfig& cfg, std::span<const DomainData> sources,
                                    const DomainData& target, const TransferOptions& options, Algorithm label,
                                    const CellKey& cell);

/// Pseudo-labels the unlabeled sources, then runs the loop over all of them.
std::vector<RunRecord> run_astl(const ExperimentConfig& cfg, std::span<const DomainData> labeled_sources,
                                std::span<const DomainData> unlabeled_sources, const DomainData& target,
                                const CellKey& cell, const TransferOptions& options = {});

/// Labeled sources only, accuracy-weighted fusion, random queries by default.
std::vector<RunRecord> run_war_baseline(const ExperimentConfig& cfg, std::span<const DomainData> labeled_sources,
                                        const DomainData& target, const CellKey& cell,
                                        const TransferOptions& options = {FusionRule::TrainingAccuracy,
                                                                          SelectionRule::Random});

/// One class-weighted kernel classifier on the pooled labeled sources; never updated.
std::vector<RunRecord> run_bl1(const ExperimentConfig& cfg, std::span<const DomainData> labeled_sources,
                               const DomainData& target, const CellKey& cell);

/// Target labels only: random queries, classifier width tuned by cross-validation.
/// With no labels the round scores 0.5.
std::vector<RunRecord> run_bl2(const ExperimentConfig& cfg, const DomainData& target, const CellKey& cell);

/// Class-weighted kernel classifier whose RBF width is picked from the
/// median-heuristic gamma times {0.25, 0.5, 1, 2, 4} by stratified 5-fold CV BCA
/// (leave-one-out when a class has fewer than 5 rows).
WarModel fit_cv_classifier(const Matrix& features, std::span<const LabelValue> labels, const HyperParams& params);

// ---------------------------------------------------------------------------
// Experiment grid
// ---------------------------------------------------------------------------

struct CellSpec {
    Algorithm algorithm;
    std::size_t target_index;
    int run;
};

/// Every (algorithm, target, run) cell, algorithm-major in config order.
std::vector<CellSpec> enumerate_cells(const ExperimentConfig& cfg, std::size_t n_domains);

std::vector<RunRecord> run_cell(const ExperimentConfig& cfg, std::span<const DomainData> domains,
                                const CellSpec& spec);

using CellFilter = std::function<bool(const CellSpec&)>;
using CellSink = std::function<void(const CellSpec&, const std::vector<RunRecord>&)>;

/// Runs every cell not rejected by `skip` on up to `jobs` threads. `sink` is
/// called once per finished cell, serialized and in enumeration order, so the
/// emitted sequence is independent of scheduling. A failing cell stops the
/// grid and rethrows with the cell identified.
void run_experiment(const ExperimentConfig& cfg, std::span<const DomainData> domains, unsigned jobs,
                    const CellFilter& skip, const CellSink& sink);

}  // namespace calibkit
