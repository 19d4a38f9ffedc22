#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcfl/federation.hpp"

namespace dcfl {

inline constexpr const char* kArtifactVersion = "dcfl 0.1.0";

/// Columns: round,accuracy,n_selected,selected_ids,up_floats,down_floats,wall_ms.
/// selected_ids are ';'-separated.
void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> log);
/// Reads the columns above (model/condensed split is not recoverable: the
/// totals land in model_up/model_down). Throws FormatError.
std::vector<RoundMetrics> read_metrics_csv(std::istream& in);
std::vector<RoundMetrics> read_metrics_file(const std::filesystem::path& path);

/// "-" for a target that was never reached.
std::string format_toa(std::optional<std::size_t> round);

struct SeedStats {
    std::vector<double> values;
    double mean = 0;
    double std = 0;  // population
};
SeedStats seed_stats(std::vector<double> values);

struct RunOutputs {
    std::vector<std::uint64_t> seeds;
    std::vector<std::filesystem::path> seed_dirs;
    std::vector<std::vector<RoundMetrics>> logs;
    SeedStats final_accuracy;
};

/// Runs every seed in cfg.seeds and writes out_root/<name>/<seed>/
/// {metrics.csv, summary.json, manifest.json} plus out_root/<name>/summary.json.
RunOutputs cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_root, std::ostream& log);

/// Config stored in a manifest (its seed list is the manifest's seed).
ExperimentConfig config_from_manifest(const std::filesystem::path& manifest);

/// Table of ToA values: one row per file, one column per target.
void cmd_toa(std::span<const std::filesystem::path> metrics_files, std::span<const double> targets,
             std::ostream& out);

struct CompareCell {
    std::string method;  // "dcfl" or "tradition"
    Aggregation scheme = Aggregation::FedAvg;
    SeedStats final_accuracy;
    std::vector<std::vector<std::optional<std::size_t>>> toa;  // [target][seed]
};

struct CompareReport {
    std::vector<double> targets;
    std::vector<CompareCell> cells;  // methods x schemes, method-major
};

/// Config for a named method: "dcfl" keeps cfg, "tradition" applies as_tradition.
ExperimentConfig method_config(const ExperimentConfig& cfg, std::string_view method, Aggregation scheme);

CompareReport cmd_compare(const ExperimentConfig& cfg, std::span<const std::string> methods,
                          std::span<const Aggregation> schemes, std::span<const double> targets,
                          const std::filesystem::path& out_root, std::ostream& log);
void print_compare(const CompareReport& report, std::ostream& out);

/// Writes cka.csv, emd.csv and divergence.csv under out_dir.
ComplementarityStudy cmd_cka_matrix(const ExperimentConfig& cfg, std::size_t local_epochs,
                                    const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace dcfl
