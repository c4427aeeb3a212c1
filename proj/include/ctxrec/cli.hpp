// Configuration parsing, experiment orchestration, and result reporting.
// Config files are line-oriented `key=value`; values may carry short
// (`-name v`) and long (`--name v`) options.

#ifndef CTXREC_CLI_HPP
#define CTXREC_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxrec/core.hpp"
#include "ctxrec/engine.hpp"
#include "ctxrec/eval.hpp"

namespace ctxrec {

struct RatingsSetup {
    double threshold = -1.0;        // < 0: keep ratings as-is
    int data_transformation = 1;    // <= 0: reuse cached binary data

    bool operator==(const RatingsSetup&) const = default;
};

struct ItemRankingSetup {
    bool enabled = false;
    int top_n = 10;

    bool operator==(const ItemRankingSetup&) const = default;
};

struct OutputSetup {
    std::string folder = "CARSKit.Workspace";
    bool verbose = false;
    std::string results_file = "results.txt";

    bool operator==(const OutputSetup&) const = default;
};

struct ExperimentConfig {
    std::string data_path_windows;
    std::string data_path_other;
    RatingsSetup ratings;
    std::string recommender;
    ItemRankingSetup ranking;
    Protocol protocol;
    OutputSetup output;
    HyperParams hyper;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Parses config text. Unknown keys and options warn (to `warnings` when
/// given) instead of failing; a missing recommender or a malformed option
/// value is an error carrying the line number.
ExperimentConfig parse_config(const std::string& text, std::ostream* warnings = nullptr);

/// Canonical rendering; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& config);

/// platform is "windows" or anything else; prefers the matching path key
/// and falls back to the other one.
std::string resolve_data_path(const ExperimentConfig& config,
                              const std::string& platform);

const char* host_platform();

void print_stats(const DatasetStats& stats, const RatingScale& scale,
                 std::ostream& out);

/// One results line (no trailing newline): timestamp, algorithm, task,
/// metric=value pairs at six decimals, then the parameter string.
std::string results_line(const EvalReport& report, const std::string& timestamp);

void write_results(const EvalReport& report, const std::filesystem::path& results_path);

std::string iso8601_utc_now();

/// Runs each config in order; a failing config is reported and the run
/// continues. Returns 0 when every config succeeded.
int run(const std::vector<std::string>& config_paths, std::ostream& out,
        std::ostream& err);

}  // namespace ctxrec

#endif  // CTXREC_CLI_HPP
