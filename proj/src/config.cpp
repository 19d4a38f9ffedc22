#include "dcfl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dcfl {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end || v.empty())
        throw ValidationError(std::string(key), "cannot parse '" + std::string(v) + "'");
    return out;
}

std::size_t parse_count(std::string_view key, std::string_view v) { return parse_number<std::size_t>(key, v); }
double parse_real(std::string_view key, std::string_view v) { return parse_number<double>(key, v); }

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ValidationError(std::string(key), "expected a boolean, got '" + std::string(v) + "'");
}

std::vector<std::size_t> parse_counts(std::string_view key, std::string_view v) {
    std::vector<std::size_t> out;
    for (auto part : split(v, ',')) out.push_back(parse_count(key, part));
    return out;
}

template <class E>
E parse_enum(std::string_view key, std::string_view v, std::initializer_list<E> options) {
    for (E e : options)
        if (to_string(e) == v) return e;
    throw ValidationError(std::string(key), "unknown value '" + std::string(v) + "'");
}

std::string join(const auto& values) {
    std::string s;
    for (const auto& x : values) {
        if (!s.empty()) s += ',';
        s += std::to_string(x);
    }
    return s;
}

struct Field {
    std::function<void(ExperimentConfig&, std::string_view key, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define COUNT_FIELD(member) \
    {#member, {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.member = parse_count(k, v); }, \
               [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define REAL_FIELD(member) \
    {#member, {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.member = parse_real(k, v); }, \
               [](const ExperimentConfig& c) { return format_double(c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"name", {[](ExperimentConfig& c, std::string_view, std::string_view v) { c.name = std::string(v); },
                  [](const ExperimentConfig& c) { return c.name; }}},
        {"dataset",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.dataset = parse_enum(k, v, {DatasetKind::Blobs, DatasetKind::Mnist, DatasetKind::Fashion});
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.dataset)); }}},
        {"data_dir", {[](ExperimentConfig& c, std::string_view, std::string_view v) { c.data_dir = std::string(v); },
                      [](const ExperimentConfig& c) { return c.data_dir; }}},
        {"blob_classes",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.blob_classes = parse_number<int>(k, v); },
          [](const ExperimentConfig& c) { return std::to_string(c.blob_classes); }}},
        COUNT_FIELD(blob_dim),
        COUNT_FIELD(blob_train_per_class),
        COUNT_FIELD(blob_test_per_class),
        REAL_FIELD(blob_spread),
        {"partition",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.partition = parse_enum(k, v, {PartitionKind::Dirichlet, PartitionKind::Pathological,
                                              PartitionKind::Grouped});
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.partition)); }}},
        REAL_FIELD(alpha),
        COUNT_FIELD(classes_per_client),
        {"group_sizes",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.group_sizes = parse_counts(k, v); },
          [](const ExperimentConfig& c) { return join(c.group_sizes); }}},
        {"hidden", {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.hidden = parse_counts(k, v); },
                    [](const ExperimentConfig& c) { return join(c.hidden); }}},
        COUNT_FIELD(K),
        COUNT_FIELD(T),
        COUNT_FIELD(M),
        REAL_FIELD(C_com),
        REAL_FIELD(C_pre),
        REAL_FIELD(epsilon),
        REAL_FIELD(r),
        REAL_FIELD(eta_c),
        REAL_FIELD(eta_s),
        COUNT_FIELD(B_c),
        COUNT_FIELD(B_s),
        COUNT_FIELD(E_c),
        COUNT_FIELD(E_s),
        COUNT_FIELD(ipc),
        COUNT_FIELD(group_size),
        {"aggregation",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.aggregation = parse_enum(k, v, {Aggregation::FedAvg, Aggregation::FedProx, Aggregation::FedNova});
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.aggregation)); }}},
        REAL_FIELD(mu),
        {"selection",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.selection = parse_enum(k, v, {Selection::Random, Selection::CkaGuided});
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.selection)); }}},
        {"condensation",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.condensation = parse_bool(k, v); },
          [](const ExperimentConfig& c) { return std::string(c.condensation ? "true" : "false"); }}},
        COUNT_FIELD(condense_iters),
        REAL_FIELD(condense_lr),
        COUNT_FIELD(condense_real_batch),
        {"augment",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              try {
                  c.augment = AugmentPolicy::from_list(v);
              } catch (const PolicyError& e) {
                  throw ValidationError(std::string(k), e.what());
              }
          },
          [](const ExperimentConfig& c) { return c.augment.op_list(); }}},
        {"filter_keep",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.filter_keep = parse_enum(k, v, {FilterKeep::LowLoss, FilterKeep::HighLoss});
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.filter_keep)); }}},
        {"cka_mode",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.cka_mode = parse_enum(k, v, {CkaMode::Weights, CkaMode::Activations});
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.cka_mode)); }}},
        COUNT_FIELD(probe_size),
        {"seed", {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
                      c.seed = parse_number<std::uint64_t>(k, v);
                  },
                  [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
        {"seeds",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
              c.seeds.clear();
              for (auto part : split(v, ',')) c.seeds.push_back(parse_number<std::uint64_t>(k, part));
          },
          [](const ExperimentConfig& c) { return join(c.seeds); }}},
        {"record_wall_time",
         {[](ExperimentConfig& c, std::string_view k, std::string_view v) { c.record_wall_time = parse_bool(k, v); },
          [](const ExperimentConfig& c) { return std::string(c.record_wall_time ? "true" : "false"); }}},
    };
    return table;
}

#undef COUNT_FIELD
#undef REAL_FIELD

const std::map<std::string, std::string, std::less<>>& aliases() {
    static const std::map<std::string, std::string, std::less<>> a = {
        {"clients", "K"},
        {"rounds", "T"},
        {"pretrain_rounds", "M"},
        {"participation", "C_com"},
        {"pretrain_participation", "C_pre"},
        {"eps", "epsilon"},
        {"\xCE\xB5", "epsilon"},  // Greek small epsilon
        {"filter_ratio", "r"},
        {"lr", "eta_c"},
        {"lr_client", "eta_c"},
        {"lr_finetune", "eta_s"},
        {"batch", "B_c"},
        {"batch_client", "B_c"},
        {"batch_finetune", "B_s"},
        {"local_epochs", "E_c"},
        {"finetune_epochs", "E_s"},
        {"E_f", "E_s"},
        {"cpc", "classes_per_client"},
        {"seed_list", "seeds"},
        {"data-dir", "data_dir"},
    };
    return a;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string canonical_key(std::string_view key) {
    for (const auto& [name, _] : fields())
        if (name == key) return name;
    if (auto it = aliases().find(key); it != aliases().end()) return it->second;
    return {};
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    const std::string name = canonical_key(trim(key));
    if (name.empty()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    for (const auto& [n, f] : fields())
        if (n == name) return f.set(cfg, name, trim(value));
}

ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base) {
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, f] : fields()) out.emplace_back(name, f.get(cfg));
    return out;
}

std::string to_config_text(const ExperimentConfig& cfg) {
    std::string s;
    for (const auto& [k, v] : config_entries(cfg)) s += k + " = " + v + "\n";
    return s;
}

}  // namespace dcfl
