#pragma once

#include "calibkit/domain.hpp"
#include "calibkit/error.hpp"
#include "calibkit/features.hpp"
#include "calibkit/pipeline.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace calibkit::cli {

enum ExitCode : int { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

/// Entry point behind the `calibkit` binary. `args` excludes the program name.
int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(ErrorKind kind) noexcept;

// Dataset directories hold one CSV per domain plus manifest.json listing them
// in experiment order.
// `metadata_json` is a JSON object stored under "metadata" in the manifest.
void write_dataset(const std::filesystem::path& dir, const std::vector<DomainData>& domains,
                   const std::string& metadata_json = "{}");

std::vector<DomainData> read_dataset(const std::filesystem::path& dir);

/// Flat `key = value` config; `#` starts a comment. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// One line of the results file (no trailing newline).
std::string record_to_json(const RunRecord& record);
/// Throws ParseError on malformed input.
RunRecord record_from_json(std::string_view line);

/// Records from a results file. Malformed lines (e.g. a torn final write) are
/// skipped and counted in `skipped` when given.
std::vector<RunRecord> read_results(const std::filesystem::path& path, std::size_t* skipped = nullptr);

}  // namespace calibkit::cli
