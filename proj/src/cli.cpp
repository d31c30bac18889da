#include "calibkit/cli.hpp"

#include "calibkit/error.hpp"
#include "calibkit/evaluation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace calibkit::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write to " + path.string() + " failed");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::IoError, "cannot create directory " + dir.string());
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    std::istringstream ss(value);
    ss >> out;
    if (!ss || !ss.eof()) throw Error(ErrorKind::ConfigError, key + ": cannot parse '" + value + "'");
    return out;
}

std::vector<Algorithm> parse_algorithm_list(const std::string& text) {
    std::vector<Algorithm> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        const std::string name = trim(item);
        if (name.empty()) continue;
        const auto a = parse_algorithm(name);
        if (!a) throw Error(ErrorKind::ConfigError, "unknown algorithm '" + name + "'");
        if (std::find(out.begin(), out.end(), *a) == out.end()) out.push_back(*a);
    }
    return out;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

const std::map<std::string, std::string>& synth_flag_names() {
    static const std::map<std::string, std::string> names{
        {"n_subjects", "--subjects"},         {"epochs_per_subject", "--epochs"},
        {"target_rate", "--target-rate"},     {"d_raw", "--d-raw"},
        {"class_separation", "--separation"}, {"shift_scale", "--shift-scale"},
        {"rotation_scale", "--rotation-scale"}, {"noise_sigma", "--noise-sigma"},
    };
    return names;
}

int cmd_synth(const SynthConfig& cfg, const fs::path& out_dir, std::ostream& out) {
    try {
        cfg.validate();
    } catch (const Error& e) {
        std::string msg = e.detail();
        for (const auto& [field, flag] : synth_flag_names()) {
            if (msg.rfind(field + " ", 0) == 0) {
                msg = "invalid " + flag + ": " + msg.substr(field.size() + 1);
                break;
            }
        }
        throw Error(ErrorKind::ConfigError, msg);
    }
    const auto domains = generate_synthetic(cfg);
    json meta{{"generator", "synth"},
              {"subjects", cfg.n_subjects},
              {"epochs_per_subject", cfg.epochs_per_subject},
              {"target_rate", cfg.target_rate},
              {"d_raw", cfg.d_raw},
              {"class_separation", cfg.class_separation},
              {"shift_scale", cfg.shift_scale},
              {"rotation_scale", cfg.rotation_scale},
              {"noise_sigma", cfg.noise_sigma},
              {"seed", cfg.seed}};
    write_dataset(out_dir, domains, meta.dump());
    out << "wrote " << domains.size() << " domains to " << out_dir.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

int cmd_featurize(const fs::path& in_dir, const fs::path& out_dir, int k, std::ostream& out) {
    const auto domains = read_dataset(in_dir);
    FeaturePipeline pipeline;
    try {
        pipeline = fit_feature_pipeline(domains, k);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::RankError || e.kind() == ErrorKind::InvalidParameter)
            throw Error(ErrorKind::ConfigError, "invalid --pca-k: " + e.detail());
        throw;
    }
    const auto transformed = apply_feature_pipeline(pipeline, domains);

    json meta{{"generator", "featurize"}, {"input", in_dir.string()}, {"pca_k", k}};
    write_dataset(out_dir, transformed, meta.dump());

    json model{{"pca",
                {{"k", pipeline.pca.k()},
                 {"mean", vector_json(pipeline.pca.mean)},
                 {"components", matrix_json(pipeline.pca.components)},
                 {"explained_variance", vector_json(pipeline.pca.explained_variance)}}},
               {"minmax", {{"min", vector_json(pipeline.minmax.min)}, {"max", vector_json(pipeline.minmax.max)}}}};
    write_file(out_dir / "feature_model.json", model.dump(2) + "\n");
    out << "featurized " << transformed.size() << " domains to " << k << " components in " << out_dir.string()
        << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

using RecordKey = std::tuple<std::string, std::string, int, int>;

RecordKey key_of(const RunRecord& r) { return {std::string(to_string(r.algorithm)), r.target_id, r.run, r.iteration}; }

int expected_rounds(const ExperimentConfig& cfg, Algorithm a, const DomainData& target) {
    if (a == Algorithm::BL1) return cfg.max_iterations;
    const auto n = static_cast<long long>(target.rows());
    const long long by_pool = (n + cfg.params.p - 1) / cfg.params.p;
    return static_cast<int>(std::min<long long>(cfg.max_iterations, by_pool));
}

fs::path curves_path_for(const fs::path& results) {
    fs::path p = results;
    p.replace_filename(results.stem().string() + "_curves.csv");
    return p;
}

void write_curves(const fs::path& path, const std::vector<RunRecord>& records) {
    // (algorithm, target or ALL, m_l) -> bca values
    std::map<std::tuple<int, std::string, int>, std::vector<double>> groups;
    for (const auto& r : records) {
        groups[{static_cast<int>(r.algorithm), r.target_id, r.m_l}].push_back(r.bca);
        groups[{static_cast<int>(r.algorithm), "ALL", r.m_l}].push_back(r.bca);
    }
    std::ostringstream out;
    out << "algorithm,target_id,m_l,mean_bca,std_bca,count\n";
    for (const auto& [key, values] : groups) {
        const auto& [alg, target, m_l] = key;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
        out << to_string(static_cast<Algorithm>(alg)) << ',' << target << ',' << m_l << ',' << format_double(mean)
            << ',' << format_double(sd) << ',' << values.size() << '\n';
    }
    write_file(path, out.str());
}

struct RunOptions {
    fs::path data;
    fs::path config;
    fs::path out;
    bool resume = false;
    unsigned jobs = 0;
    bool quiet = false;
    std::optional<int> runs;
    std::optional<int> max_iterations;
    std::optional<std::string> algorithms;
    std::optional<std::uint64_t> seed;
};

int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    if (!opt.config.empty()) cfg = load_config(opt.config);
    if (const char* env = std::getenv("CALIBKIT_SEED")) cfg.seed = parse_number<std::uint64_t>("CALIBKIT_SEED", env);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.runs) cfg.runs = *opt.runs;
    if (opt.max_iterations) cfg.max_iterations = *opt.max_iterations;
    if (opt.algorithms) cfg.algorithms = parse_algorithm_list(*opt.algorithms);

    const auto domains = read_dataset(opt.data);
    cfg.validate(domains.size());

    std::set<RecordKey> present;
    if (opt.resume && fs::exists(opt.out)) {
        std::size_t skipped = 0;
        for (const auto& r : read_results(opt.out, &skipped)) present.insert(key_of(r));
        if (skipped > 0) err << "resume: ignored " << skipped << " malformed line(s) in " << opt.out.string() << "\n";
        // A torn final line must not swallow the next record.
        const std::string existing = read_file(opt.out);
        if (!existing.empty() && existing.back() != '\n') {
            std::ofstream fix(opt.out, std::ios::binary | std::ios::app);
            fix << '\n';
        }
    }

    std::ofstream results(opt.out, std::ios::binary | (opt.resume ? std::ios::app : std::ios::trunc));
    if (!results) throw Error(ErrorKind::IoError, "cannot open " + opt.out.string() + " for writing");

    auto cell_done = [&](const CellSpec& c) {
        const DomainData& target = domains[c.target_index];
        const int rounds = expected_rounds(cfg, c.algorithm, target);
        for (int it = 0; it < rounds; ++it)
            if (!present.count({std::string(to_string(c.algorithm)), target.id, c.run, it})) return false;
        return true;
    };

    std::size_t written = 0;
    std::size_t degenerate = 0;
    auto sink = [&](const CellSpec& c, const std::vector<RunRecord>& records) {
        std::string block;
        double ms = 0.0;
        for (const auto& r : records) {
            ms += r.wall_ms;
            if (present.count(key_of(r))) continue;
            block += record_to_json(r) + "\n";
            ++written;
            degenerate += r.degenerate_eval;
        }
        results << block;
        results.flush();
        if (!results) throw Error(ErrorKind::IoError, "write to " + opt.out.string() + " failed");
        if (!opt.quiet)
            err << "[cell] " << to_string(c.algorithm) << " target=" << domains[c.target_index].id << " run=" << c.run
                << " rounds=" << records.size() << " ms=" << static_cast<long long>(ms) << "\n";
    };

    const unsigned jobs = opt.jobs > 0 ? opt.jobs : std::max(1u, std::thread::hardware_concurrency());
    run_experiment(cfg, domains, jobs, cell_done, sink);
    results.close();

    const auto all = read_results(opt.out);
    write_curves(curves_path_for(opt.out), all);
    out << "wrote " << written << " records to " << opt.out.string() << " (" << all.size() << " total)\n";
    if (degenerate > 0) err << "note: " << degenerate << " evaluation(s) had a single-class pool\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AupcSummary {
    Algorithm algorithm;
    double mean;
    double sd;
    std::size_t cells;
};

int cmd_analyze(const fs::path& results_path, fs::path prefix, std::ostream& out, std::ostream& err) {
    std::size_t skipped = 0;
    const auto records = read_results(results_path, &skipped);
    if (skipped > 0) err << "ignored " << skipped << " malformed line(s)\n";

    // AUPC per (algorithm, target, run).
    std::map<std::tuple<int, std::string, int>, std::vector<CurvePoint>> curves;
    for (const auto& r : records)
        curves[{static_cast<int>(r.algorithm), r.target_id, r.run}].push_back({static_cast<double>(r.m_l), r.bca});
    std::map<std::tuple<int, std::string, int>, double> aupcs;
    for (auto& [key, points] : curves) {
        std::sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.m_l < b.m_l; });
        if (points.size() >= 2) aupcs[key] = aupc(points);
    }

    std::vector<AupcSummary> summaries;
    for (Algorithm a : {Algorithm::BL1, Algorithm::BL2, Algorithm::WAR, Algorithm::ASTL}) {
        std::vector<double> values;
        for (const auto& [key, v] : aupcs)
            if (std::get<0>(key) == static_cast<int>(a)) values.push_back(v);
        if (values.empty()) continue;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
        summaries.push_back({a, mean, sd, values.size()});
    }

    // Friedman blocks: (target, run) pairs scored by every iterative algorithm.
    std::vector<Algorithm> treatments;
    for (const auto& s : summaries)
        if (s.algorithm != Algorithm::BL1) treatments.push_back(s.algorithm);
    if (treatments.size() < 2)
        throw Error(ErrorKind::ConfigError, "analysis needs AUPC curves for at least two iterative algorithms");

    std::set<std::pair<std::string, int>> blocks;
    for (const auto& [key, v] : aupcs) blocks.insert({std::get<1>(key), std::get<2>(key)});
    std::vector<std::vector<double>> rows;
    for (const auto& [target, run] : blocks) {
        std::vector<double> row;
        for (Algorithm a : treatments) {
            const auto it = aupcs.find({static_cast<int>(a), target, run});
            if (it == aupcs.end()) break;
            row.push_back(it->second);
        }
        if (row.size() == treatments.size()) rows.push_back(std::move(row));
    }
    if (rows.size() < 2) throw Error(ErrorKind::ConfigError, "analysis needs at least two complete (target, run) blocks");
    Matrix table(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(treatments.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < treatments.size(); ++j)
            table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

    std::vector<std::string> names;
    for (Algorithm a : treatments) names.emplace_back(to_string(a));
    const StatReport report = compare_treatments(table, names);

    json j;
    j["results"] = results_path.string();
    j["aupc"] = json::array();
    for (const auto& s : summaries)
        j["aupc"].push_back({{"algorithm", to_string(s.algorithm)}, {"mean", s.mean}, {"std", s.sd}, {"cells", s.cells}});
    j["friedman"] = {{"treatments", names},
                     {"blocks", rows.size()},
                     {"chi2", report.friedman.chi2},
                     {"df", report.friedman.df},
                     {"p", report.friedman.p}};
    j["pairwise"] = json::array();
    for (const auto& c : report.pairwise)
        j["pairwise"].push_back({{"first", names[static_cast<std::size_t>(c.first)]},
                                 {"second", names[static_cast<std::size_t>(c.second)]},
                                 {"z", c.z},
                                 {"raw_p", c.raw_p},
                                 {"fdr_p", c.adjusted_p}});

    std::ostringstream text;
    text << "AUPC by algorithm (" << results_path.string() << ")\n";
    text << "algorithm  mean  std  cells\n";
    for (const auto& s : summaries)
        text << to_string(s.algorithm) << "  " << format_double(s.mean) << "  " << format_double(s.sd) << "  "
             << s.cells << "\n";
    text << "\nFriedman test over " << rows.size() << " (target, run) blocks:\n";
    text << "chi2 = " << format_double(report.friedman.chi2) << "  df = " << report.friedman.df
         << "  p = " << format_double(report.friedman.p) << "\n";
    text << "\nDunn pairwise comparisons (FDR-adjusted):\n";
    text << "pair  z  raw_p  fdr_p\n";
    for (const auto& c : report.pairwise)
        text << names[static_cast<std::size_t>(c.first)] << " vs " << names[static_cast<std::size_t>(c.second)]
             << "  " << format_double(c.z) << "  " << format_double(c.raw_p) << "  " << format_double(c.adjusted_p)
             << "\n";

    if (prefix.empty()) {
        prefix = results_path;
        prefix.replace_filename(results_path.stem().string() + "_report");
    }
    fs::path txt = prefix, js = prefix;
    txt += ".txt";
    js += ".json";
    write_file(txt, text.str());
    write_file(js, j.dump(2) + "\n");
    out << text.str();
    return kOk;
}

}  // namespace

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::IoError: return kIo;
        case ErrorKind::SingularSystem: return kNumerical;
        default: return kConfig;
    }
}

void write_dataset(const fs::path& dir, const std::vector<DomainData>& domains, const std::string& metadata_json) {
    ensure_dir(dir);
    json manifest;
    manifest["domains"] = json::array();
    for (const auto& d : domains) {
        const std::string file = d.id + ".csv";
        write_domain_csv(d, dir / file);
        manifest["domains"].push_back({{"id", d.id}, {"file", file}});
    }
    manifest["metadata"] = json::parse(metadata_json);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<DomainData> read_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, manifest_path.string() + ": " + e.what());
    }
    if (!manifest.contains("domains") || !manifest["domains"].is_array())
        throw Error(ErrorKind::SchemaError, manifest_path.string() + ": missing 'domains' array");
    std::vector<DomainData> out;
    for (const auto& entry : manifest["domains"]) {
        DomainData d = read_domain_csv(dir / entry.at("file").get<std::string>());
        d.id = entry.at("id").get<std::string>();
        if (!out.empty() && d.dim() != out.front().dim())
            throw Error(ErrorKind::DimensionMismatch, "domain '" + d.id + "' has a different feature dimension");
        out.push_back(std::move(d));
    }
    if (out.empty()) throw Error(ErrorKind::EmptyDomain, manifest_path.string() + " lists no domains");
    return out;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig cfg) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key == "n_labeled_sources") cfg.n_labeled_sources = parse_number<int>(key, value);
        else if (key == "n_unlabeled_sources") cfg.n_unlabeled_sources = parse_number<int>(key, value);
        else if (key == "runs") cfg.runs = parse_number<int>(key, value);
        else if (key == "max_iterations") cfg.max_iterations = parse_number<int>(key, value);
        else if (key == "p") cfg.params.p = parse_number<int>(key, value);
        else if (key == "w_t") cfg.params.w_t = parse_number<double>(key, value);
        else if (key == "sigma") cfg.params.sigma = parse_number<double>(key, value);
        else if (key == "lambda") cfg.params.lambda = parse_number<double>(key, value);
        else if (key == "pseudo_label_passes") cfg.params.pseudo_label_passes = parse_number<int>(key, value);
        else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "algorithms") cfg.algorithms = parse_algorithm_list(value);
        else if (key == "kernel") {
            if (value == "rbf") cfg.params.kernel.kind = KernelKind::Rbf;
            else if (value == "linear") cfg.params.kernel.kind = KernelKind::Linear;
            else throw Error(ErrorKind::ConfigError, "kernel must be 'rbf' or 'linear'");
        } else if (key == "gamma") {
            if (value == "auto") cfg.params.kernel.gamma.reset();
            else cfg.params.kernel.gamma = parse_number<double>(key, value);
        } else {
            throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path, ExperimentConfig base) {
    return parse_config(read_file(path), std::move(base));
}

std::string record_to_json(const RunRecord& r) {
    json j{{"algorithm", to_string(r.algorithm)},
           {"target_id", r.target_id},
           {"run", r.run},
           {"iteration", r.iteration},
           {"m_l", r.m_l},
           {"bca", r.bca},
           {"wall_ms", r.wall_ms},
           {"seed", r.seed}};
    return j.dump();
}

RunRecord record_from_json(std::string_view line) {
    try {
        const json j = json::parse(line);
        RunRecord r;
        const auto a = parse_algorithm(j.at("algorithm").get<std::string>());
        if (!a) throw Error(ErrorKind::ParseError, "unknown algorithm in record");
        r.algorithm = *a;
        r.target_id = j.at("target_id").get<std::string>();
        r.run = j.at("run").get<int>();
        r.iteration = j.at("iteration").get<int>();
        r.m_l = j.at("m_l").get<int>();
        r.bca = j.at("bca").get<double>();
        r.wall_ms = j.at("wall_ms").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed record: ") + e.what());
    }
}

std::vector<RunRecord> read_results(const fs::path& path, std::size_t* skipped) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::vector<RunRecord> out;
    std::size_t bad = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        try {
            out.push_back(record_from_json(line));
        } catch (const Error&) {
            ++bad;
        }
    }
    if (skipped) *skipped = bad;
    return out;
}

int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"calibkit: active semi-supervised transfer learning for offline calibration"};
    app.require_subcommand(1);

    SynthConfig synth;
    fs::path synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-subject dataset");
    synth_cmd->add_option("--subjects", synth.n_subjects, "Number of subjects");
    synth_cmd->add_option("--epochs", synth.epochs_per_subject, "Epochs per subject");
    synth_cmd->add_option("--target-rate", synth.target_rate, "Fraction of Class1 epochs");
    synth_cmd->add_option("--d-raw", synth.d_raw, "Raw feature dimension");
    synth_cmd->add_option("--separation", synth.class_separation, "Class mean distance in noise units");
    synth_cmd->add_option("--shift-scale", synth.shift_scale, "Per-subject offset scale");
    synth_cmd->add_option("--rotation-scale", synth.rotation_scale, "Per-subject rotation scale");
    synth_cmd->add_option("--noise-sigma", synth.noise_sigma, "Noise standard deviation");
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();

    fs::path feat_in, feat_out;
    int pca_k = 20;
    auto* feat_cmd = app.add_subcommand("featurize", "Pooled PCA then min-max scaling of a dataset");
    feat_cmd->add_option("--in", feat_in, "Input dataset directory")->required();
    feat_cmd->add_option("--out", feat_out, "Output dataset directory")->required();
    feat_cmd->add_option("--pca-k", pca_k, "Number of principal components");

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run the calibration experiment grid");
    run_cmd->add_option("--data", run.data, "Dataset directory")->required();
    run_cmd->add_option("--config", run.config, "Config file (key = value)");
    run_cmd->add_option("--out", run.out, "Results file (JSON lines)")->required();
    run_cmd->add_flag("--resume", run.resume, "Append only records missing from an existing results file");
    run_cmd->add_option("--jobs", run.jobs, "Worker threads (default: number of processors)");
    run_cmd->add_flag("--quiet", run.quiet, "No per-cell log lines");
    run_cmd->add_option("--runs", run.runs, "Override runs");
    run_cmd->add_option("--max-iterations", run.max_iterations, "Override max_iterations");
    run_cmd->add_option("--algorithms", run.algorithms, "Override algorithms, comma separated");
    run_cmd->add_option("--seed", run.seed, "Override seed");

    fs::path results_path, report_prefix;
    auto* an_cmd = app.add_subcommand("analyze", "AUPC table, Friedman test and Dunn comparisons");
    an_cmd->add_option("--results", results_path, "Results file from `run`")->required();
    an_cmd->add_option("--out", report_prefix, "Report path prefix (writes .txt and .json)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kConfig;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth, synth_out, out);
        if (*feat_cmd) return cmd_featurize(feat_in, feat_out, pca_k, out);
        if (*run_cmd) return cmd_run(run, out, err);
        if (*an_cmd) return cmd_analyze(results_path, report_prefix, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    }
    return kConfig;
}

}  // namespace calibkit::cli
