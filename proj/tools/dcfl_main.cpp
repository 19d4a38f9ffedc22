// dcfl command-line front end: run, compare, toa, cka-matrix.
#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <sstream>

#include "dcfl/config.hpp"
#include "dcfl/harness.hpp"

namespace {

using namespace dcfl;

// Config flags shared by the experiment verbs; applied after --config.
struct ConfigFlags {
    std::string config_path;
    std::string manifest_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> values;  // flag name -> raw value

    void attach(CLI::App* app, bool with_manifest) {
        app->add_option("--config", config_path, "key = value config file");
        if (with_manifest) app->add_option("--manifest", manifest_path, "re-run the config stored in a manifest");
        app->add_option("--set", sets, "extra key=value override (repeatable)");
        std::vector<std::string> names = config_keys();
        for (const char* alias : {"clients", "rounds", "pretrain_rounds", "participation", "pretrain_participation",
                                  "eps", "filter_ratio", "lr", "lr_client", "lr_finetune", "batch", "batch_client",
                                  "batch_finetune", "local_epochs", "finetune_epochs", "E_f", "cpc", "data-dir"})
            names.emplace_back(alias);
        for (const auto& n : names) app->add_option("--" + n, values[n], "config key " + canonical_key(n));
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg;
        if (!manifest_path.empty()) cfg = config_from_manifest(manifest_path);
        if (!config_path.empty()) cfg = load_config(config_path, cfg);
        for (const auto& [k, v] : values)
            if (!v.empty()) apply_setting(cfg, k, v);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        cfg.validate();
        return cfg;
    }
};

std::vector<double> parse_targets(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator with condensed-data assistance"};
    app.require_subcommand(1);
    std::string out_root = "out";

    auto* run = app.add_subcommand("run", "run one configuration over its seeds");
    ConfigFlags run_flags;
    run_flags.attach(run, true);
    run->add_option("--out", out_root, "output root");

    auto* compare = app.add_subcommand("compare", "tradition vs dcfl across aggregation schemes");
    ConfigFlags cmp_flags;
    cmp_flags.attach(compare, false);
    compare->add_option("--out", out_root, "output root");
    std::string methods = "tradition,dcfl", schemes = "fedavg,fedprox,fednova", cmp_targets = "0.5,0.7,0.8";
    compare->add_option("--methods", methods, "comma-separated methods");
    compare->add_option("--schemes", schemes, "comma-separated aggregation schemes");
    compare->add_option("--targets", cmp_targets, "ToA targets");

    auto* toa = app.add_subcommand("toa", "rounds to reach target accuracies");
    std::vector<std::string> files;
    std::string toa_targets = "0.5,0.7,0.8";
    toa->add_option("files", files, "metrics.csv files")->required();
    toa->add_option("--targets", toa_targets, "comma-separated targets in (0,1)");

    auto* cka = app.add_subcommand("cka-matrix", "pairwise classifier CKA, label EMD and weight divergence");
    ConfigFlags cka_flags;
    cka_flags.attach(cka, false);
    std::size_t epochs = 10;
    std::string cka_out = "out/cka";
    cka->add_option("--epochs", epochs, "local epochs per client");
    cka->add_option("--out", cka_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            ExperimentConfig cfg = run_flags.resolve();
            cmd_run(cfg, out_root, std::cout);
        } else if (compare->parsed()) {
            const ExperimentConfig cfg = cmp_flags.resolve();
            std::vector<std::string> ms;
            std::vector<Aggregation> ss;
            std::stringstream m(methods), s(schemes);
            for (std::string x; std::getline(m, x, ',');) ms.push_back(x);
            for (std::string x; std::getline(s, x, ',');) {
                ExperimentConfig probe;
                apply_setting(probe, "aggregation", x);
                ss.push_back(probe.aggregation);
            }
            const auto report = cmd_compare(cfg, ms, ss, parse_targets(cmp_targets), out_root, std::cout);
            print_compare(report, std::cout);
        } else if (toa->parsed()) {
            std::vector<std::filesystem::path> paths(files.begin(), files.end());
            cmd_toa(paths, parse_targets(toa_targets), std::cout);
        } else if (cka->parsed()) {
            ExperimentConfig cfg = cka_flags.resolve();
            cmd_cka_matrix(cfg, epochs, cka_out, std::cout);
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error (" << e.field() << "): " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
