#include "dcfl/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dcfl/config.hpp"
#include "json.hpp"

namespace dcfl {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const char* kMetricsHeader = "round,accuracy,n_selected,selected_ids,up_floats,down_floats,wall_ms";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class T>
T parse_cell(const std::string& s, std::size_t line) {
    std::istringstream in(s);
    T v{};
    if (!(in >> v) || !(in >> std::ws).eof())
        throw FormatError("metrics line " + std::to_string(line) + ": bad value '" + s + "'");
    return v;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

ordered_json comm_json(const CommReport& c) {
    return ordered_json{{"model_up", c.model_up},
                        {"model_down", c.model_down},
                        {"condensed_up", c.condensed_up},
                        {"condensed_down", c.condensed_down},
                        {"classes_per_client", c.cpc},
                        {"formula_upload", c.formula.upload},
                        {"formula_download", c.formula.download},
                        {"formula_model_traffic_per_round", c.formula.baseline_per_round}};
}

ordered_json config_json(const ExperimentConfig& cfg) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
    return j;
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> log) {
    out << kMetricsHeader << '\n';
    for (const auto& m : log) {
        out << m.round << ',' << format_double(m.accuracy) << ',' << m.selected.size() << ',';
        for (std::size_t i = 0; i < m.selected.size(); ++i) out << (i ? ";" : "") << m.selected[i];
        out << ',' << m.up_floats() << ',' << m.down_floats() << ',' << format_double(m.wall_ms) << '\n';
    }
}

std::vector<RoundMetrics> read_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics: missing or wrong header");
    std::vector<RoundMetrics> log;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 7) throw FormatError("metrics line " + std::to_string(line_no) + ": expected 7 columns");
        RoundMetrics m;
        m.round = parse_cell<std::size_t>(cells[0], line_no);
        m.accuracy = parse_cell<double>(cells[1], line_no);
        const auto n = parse_cell<std::size_t>(cells[2], line_no);
        std::stringstream ids(cells[3]);
        std::string id;
        while (std::getline(ids, id, ';')) m.selected.push_back(parse_cell<std::size_t>(id, line_no));
        if (m.selected.size() != n) throw FormatError("metrics line " + std::to_string(line_no) + ": id count");
        m.model_up = parse_cell<std::size_t>(cells[4], line_no);
        m.model_down = parse_cell<std::size_t>(cells[5], line_no);
        m.wall_ms = parse_cell<double>(cells[6], line_no);
        if (!(m.accuracy >= 0.0 && m.accuracy <= 1.0))
            throw FormatError("metrics line " + std::to_string(line_no) + ": accuracy outside [0, 1]");
        log.push_back(std::move(m));
    }
    return log;
}

std::vector<RoundMetrics> read_metrics_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    return read_metrics_csv(in);
}

std::string format_toa(std::optional<std::size_t> round) { return round ? std::to_string(*round) : "-"; }

SeedStats seed_stats(std::vector<double> values) {
    SeedStats s;
    s.values = std::move(values);
    if (s.values.empty()) return s;
    for (double v : s.values) s.mean += v;
    s.mean /= static_cast<double>(s.values.size());
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.values.size()));
    return s;
}

RunOutputs cmd_run(const ExperimentConfig& cfg, const fs::path& out_root, std::ostream& log) {
    cfg.validate();
    RunOutputs out;
    std::vector<double> finals;
    const fs::path run_dir = out_root / cfg.name;
    for (auto seed : cfg.seeds) {
        ExperimentConfig c = cfg;
        c.seed = seed;
        c.seeds = {seed};
        const ExperimentResult res = run_experiment(c);
        const auto& metrics = res.state.metrics;
        const fs::path dir = run_dir / std::to_string(seed);

        std::ostringstream csv;
        write_metrics_csv(csv, metrics);
        write_file(dir / "metrics.csv", csv.str());

        const double final_acc = metrics.back().accuracy;
        ordered_json summary{{"seed", seed},
                             {"rounds", c.T},
                             {"final_accuracy", final_acc},
                             {"pretrain_accuracy", metrics.front().accuracy},
                             {"communication", comm_json(res.comm)}};
        write_file(dir / "summary.json", summary.dump(2) + "\n");

        ordered_json manifest{{"version", kArtifactVersion},
                              {"seed", seed},
                              {"data_fingerprint", hex64(res.data_fingerprint)},
                              {"config", config_json(c)},
                              {"outputs", {{"metrics", "metrics.csv"}, {"summary", "summary.json"}}}};
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");

        log << cfg.name << " seed " << seed << ": final accuracy " << format_double(final_acc) << '\n';
        finals.push_back(final_acc);
        out.seeds.push_back(seed);
        out.seed_dirs.push_back(dir);
        out.logs.push_back(metrics);
    }
    out.final_accuracy = seed_stats(finals);
    ordered_json summary{{"name", cfg.name},
                         {"seeds", out.seeds},
                         {"final_accuracy", finals},
                         {"mean", out.final_accuracy.mean},
                         {"std", out.final_accuracy.std}};
    write_file(run_dir / "summary.json", summary.dump(2) + "\n");
    log << cfg.name << ": " << format_double(out.final_accuracy.mean) << " +- "
        << format_double(out.final_accuracy.std) << " over " << finals.size() << " seed(s)\n";
    return out;
}

ExperimentConfig config_from_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot read " + manifest.string());
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest: " + std::string(e.what()));
    }
    if (!j.contains("config") || !j["config"].is_object()) throw FormatError("manifest: no config object");
    ExperimentConfig cfg;
    for (const auto& [k, v] : j["config"].items()) {
        if (!v.is_string()) throw FormatError("manifest: config values must be strings");
        apply_setting(cfg, k, v.get<std::string>());
    }
    return cfg;
}

void cmd_toa(std::span<const fs::path> metrics_files, std::span<const double> targets, std::ostream& out) {
    for (double t : targets)
        if (!(t > 0.0 && t < 1.0)) throw ArgumentError("toa: targets must lie in (0, 1)");
    out << "file";
    for (double t : targets) out << ",toa@" << format_double(t);
    out << '\n';
    for (const auto& f : metrics_files) {
        const auto log = read_metrics_file(f);
        out << f.string();
        for (double t : targets) out << ',' << format_toa(rounds_to_accuracy(log, t));
        out << '\n';
    }
}

ExperimentConfig method_config(const ExperimentConfig& cfg, std::string_view method, Aggregation scheme) {
    ExperimentConfig c;
    if (method == "dcfl") c = cfg;
    else if (method == "tradition") c = as_tradition(cfg);
    else throw ValidationError("method", "unknown method '" + std::string(method) + "'");
    c.aggregation = scheme;
    c.name = cfg.name + "/" + std::string(method) + "-" + std::string(to_string(scheme));
    return c;
}

CompareReport cmd_compare(const ExperimentConfig& cfg, std::span<const std::string> methods,
                          std::span<const Aggregation> schemes, std::span<const double> targets,
                          const fs::path& out_root, std::ostream& log) {
    CompareReport report;
    report.targets.assign(targets.begin(), targets.end());
    ordered_json grid = ordered_json::array();
    for (const auto& method : methods) {
        for (auto scheme : schemes) {
            const auto run = cmd_run(method_config(cfg, method, scheme), out_root, log);
            CompareCell cell{method, scheme, run.final_accuracy, {}};
            for (double t : targets) {
                std::vector<std::optional<std::size_t>> row;
                for (const auto& l : run.logs) row.push_back(rounds_to_accuracy(l, t));
                cell.toa.push_back(std::move(row));
            }
            ordered_json toa = ordered_json::object();
            for (std::size_t i = 0; i < targets.size(); ++i) {
                std::vector<std::string> v;
                for (const auto& x : cell.toa[i]) v.push_back(format_toa(x));
                toa[format_double(targets[i])] = v;
            }
            grid.push_back({{"method", method},
                            {"scheme", to_string(scheme)},
                            {"final_accuracy", cell.final_accuracy.values},
                            {"mean", cell.final_accuracy.mean},
                            {"std", cell.final_accuracy.std},
                            {"toa", toa}});
            report.cells.push_back(std::move(cell));
        }
    }
    write_file(out_root / cfg.name / "compare.json", grid.dump(2) + "\n");
    std::ostringstream table;
    print_compare(report, table);
    write_file(out_root / cfg.name / "compare.txt", table.str());
    return report;
}

void print_compare(const CompareReport& report, std::ostream& out) {
    std::vector<std::string> methods;
    std::vector<Aggregation> schemes;
    for (const auto& c : report.cells) {
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
        if (std::find(schemes.begin(), schemes.end(), c.scheme) == schemes.end()) schemes.push_back(c.scheme);
    }
    out << std::left << std::setw(12) << "method";
    for (auto s : schemes) out << std::setw(20) << to_string(s);
    out << '\n';
    std::size_t i = 0;
    for (const auto& m : methods) {
        out << std::setw(12) << m;
        for (std::size_t s = 0; s < schemes.size(); ++s, ++i) {
            const auto& st = report.cells[i].final_accuracy;
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2) << 100.0 * st.mean << " +- " << 100.0 * st.std;
            out << std::setw(20) << cell.str();
        }
        out << '\n';
    }
    for (std::size_t t = 0; t < report.targets.size(); ++t) {
        out << "toa@" << format_double(report.targets[t]) << '\n';
        for (const auto& c : report.cells) {
            out << "  " << std::setw(10) << c.method << std::setw(9) << to_string(c.scheme);
            for (const auto& v : c.toa[t]) out << ' ' << format_toa(v);
            out << '\n';
        }
    }
}

ComplementarityStudy cmd_cka_matrix(const ExperimentConfig& cfg, std::size_t local_epochs, const fs::path& out_dir,
                                    std::ostream& log) {
    const auto st = complementarity_study(cfg, local_epochs);
    auto dump = [&](const std::string& file, const std::vector<std::vector<double>>& m) {
        std::ostringstream s;
        s << "client";
        for (std::size_t j = 0; j < m.size(); ++j) s << ',' << j;
        s << '\n';
        for (std::size_t i = 0; i < m.size(); ++i) {
            s << i;
            for (double v : m[i]) s << ',' << format_double(v);
            s << '\n';
        }
        write_file(out_dir / file, s.str());
    };
    dump("cka.csv", st.cka);
    dump("emd.csv", st.emd);
    dump("divergence.csv", st.divergence);
    log << "spearman(cka, -emd) = " << format_double(st.spearman_cka_vs_neg_emd) << '\n';
    return st;
}

}  // namespace dcfl
