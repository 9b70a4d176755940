#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gibbsforge/common.hpp"
#include "gibbsforge/noise.hpp"
#include "gibbsforge/spinmodel.hpp"

namespace gibbsforge {

// Experiment configs are TOML-compatible key/value trees restricted to the
// features used here: [table.path] headers, key = value lines, strings,
// integers, floats, booleans, (nested) arrays, comments, and a root-level
// `include = "file"` that merges a shared tree before the including file's
// own keys are applied.

// ============================================================================
// Value tree
// ============================================================================

class ConfigValue {
  public:
    using Array = std::vector<ConfigValue>;
    using Table = std::map<std::string, ConfigValue>;
    using Storage =
        std::variant<std::monostate, bool, std::int64_t, double, std::string, Array, Table>;

    ConfigValue() = default;
    explicit ConfigValue(Storage s) : storage_(std::move(s)) {}

    static ConfigValue table() { return ConfigValue(Storage(Table{})); }

    bool is_table() const { return std::holds_alternative<Table>(storage_); }
    bool is_array() const { return std::holds_alternative<Array>(storage_); }

    Table& as_table() {
        if (!is_table()) throw ConfigError("config: expected a table");
        return std::get<Table>(storage_);
    }
    const Table& as_table() const {
        if (!is_table()) throw ConfigError("config: expected a table");
        return std::get<Table>(storage_);
    }
    const Array& as_array(const std::string& key) const {
        if (!is_array()) throw ConfigError("config: '" + key + "' must be an array");
        return std::get<Array>(storage_);
    }

    bool as_bool(const std::string& key) const {
        if (auto* b = std::get_if<bool>(&storage_)) return *b;
        throw ConfigError("config: '" + key + "' must be a boolean");
    }
    std::int64_t as_int(const std::string& key) const {
        if (auto* i = std::get_if<std::int64_t>(&storage_)) return *i;
        throw ConfigError("config: '" + key + "' must be an integer");
    }
    double as_double(const std::string& key) const {
        if (auto* d = std::get_if<double>(&storage_)) return *d;
        if (auto* i = std::get_if<std::int64_t>(&storage_)) return static_cast<double>(*i);
        throw ConfigError("config: '" + key + "' must be a number");
    }
    const std::string& as_string(const std::string& key) const {
        if (auto* s = std::get_if<std::string>(&storage_)) return *s;
        throw ConfigError("config: '" + key + "' must be a string");
    }

    const ConfigValue* find(const std::string& key) const {
        if (!is_table()) return nullptr;
        auto it = as_table().find(key);
        return it == as_table().end() ? nullptr : &it->second;
    }

    /// Deep merge: values from `other` override, tables merge recursively.
    void merge_from(const ConfigValue& other) {
        if (!is_table() || !other.is_table()) {
            *this = other;
            return;
        }
        for (const auto& [key, value] : other.as_table()) {
            auto it = as_table().find(key);
            if (it != as_table().end() && it->second.is_table() && value.is_table())
                it->second.merge_from(value);
            else
                as_table()[key] = value;
        }
    }

    void dump(std::ostream& os, int indent = 0) const {
        const std::string pad(indent, ' ');
        if (is_table()) {
            for (const auto& [key, value] : as_table()) {
                if (value.is_table()) {
                    os << pad << key << ":\n";
                    value.dump(os, indent + 2);
                } else {
                    os << pad << key << " = ";
                    value.dump_scalar(os);
                    os << '\n';
                }
            }
        } else {
            dump_scalar(os);
            os << '\n';
        }
    }

    void dump_scalar(std::ostream& os) const {
        if (auto* b = std::get_if<bool>(&storage_)) {
            os << (*b ? "true" : "false");
        } else if (auto* i = std::get_if<std::int64_t>(&storage_)) {
            os << *i;
        } else if (auto* d = std::get_if<double>(&storage_)) {
            std::ostringstream tmp;
            tmp.precision(17);
            tmp << *d;
            os << tmp.str();
        } else if (auto* s = std::get_if<std::string>(&storage_)) {
            os << '"' << *s << '"';
        } else if (auto* a = std::get_if<Array>(&storage_)) {
            os << '[';
            for (std::size_t k = 0; k < a->size(); ++k) {
                if (k) os << ", ";
                (*a)[k].dump_scalar(os);
            }
            os << ']';
        } else {
            os << "null";
        }
    }

  private:
    Storage storage_;
};

// ============================================================================
// Parser
// ============================================================================

namespace detail {

inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline ConfigValue parse_value(const std::string& raw, int line_no);

inline ConfigValue parse_array(const std::string& raw, int line_no) {
    ConfigValue::Array items;
    std::size_t i = 1;  // past '['
    const std::size_t end = raw.size() - 1;
    while (i < end) {
        while (i < end && (std::isspace(static_cast<unsigned char>(raw[i])) || raw[i] == ',')) ++i;
        if (i >= end) break;
        std::size_t j = i;
        if (raw[i] == '[') {
            int depth = 0;
            bool in_string = false;
            for (; j < end; ++j) {
                if (raw[j] == '"') in_string = !in_string;
                if (in_string) continue;
                if (raw[j] == '[') ++depth;
                if (raw[j] == ']' && --depth == 0) {
                    ++j;
                    break;
                }
            }
        } else if (raw[i] == '"') {
            ++j;
            while (j < end && raw[j] != '"') ++j;
            if (j < end) ++j;
        } else {
            while (j < end && raw[j] != ',') ++j;
        }
        const std::string item = trim(raw.substr(i, j - i));
        if (!item.empty()) items.push_back(parse_value(item, line_no));
        i = j;
    }
    return ConfigValue(ConfigValue::Storage(std::move(items)));
}

inline ConfigValue parse_value(const std::string& raw, int line_no) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty value");
    if (v.front() == '[') {
        if (v.back() != ']')
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
        return parse_array(v, line_no);
    }
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated string");
        return ConfigValue(ConfigValue::Storage(v.substr(1, v.size() - 2)));
    }
    if (v == "true") return ConfigValue(ConfigValue::Storage(true));
    if (v == "false") return ConfigValue(ConfigValue::Storage(false));
    const bool looks_float = v.find_first_of(".eE") != std::string::npos &&
                             v.find_first_not_of("+-0123456789.eE") == std::string::npos;
    try {
        std::size_t pos = 0;
        if (!looks_float) {
            const std::int64_t i = std::stoll(v, &pos);
            if (pos == v.size()) return ConfigValue(ConfigValue::Storage(i));
        }
        pos = 0;
        const double d = std::stod(v, &pos);
        if (pos == v.size()) return ConfigValue(ConfigValue::Storage(d));
    } catch (const std::exception&) {
        // fall through to the error below
    }
    throw ConfigError("config line " + std::to_string(line_no) + ": cannot parse value '" + v +
                      "'");
}

}  // namespace detail

/// Parse the TOML subset; `base_dir` resolves include paths.
inline ConfigValue parse_config_text(const std::string& text,
                                     const std::filesystem::path& base_dir,
                                     int include_depth = 0);

inline ConfigValue parse_config_file(const std::filesystem::path& path, int include_depth = 0) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path.parent_path(), include_depth);
}

inline ConfigValue parse_config_text(const std::string& text,
                                     const std::filesystem::path& base_dir, int include_depth) {
    if (include_depth > 8) throw ConfigError("config: include chain too deep");
    ConfigValue root = ConfigValue::table();
    ConfigValue* current = &root;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::string pending;
    int pending_line = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string content = detail::trim(detail::strip_comment(line));
        if (!pending.empty()) {
            pending += " " + content;
            content = pending;
        } else {
            pending_line = line_no;
        }
        if (content.empty()) continue;

        // multi-line arrays: wait for the brackets to balance
        int depth = 0;
        bool in_string = false;
        for (char c : content) {
            if (c == '"') in_string = !in_string;
            if (in_string) continue;
            if (c == '[') ++depth;
            if (c == ']') --depth;
        }
        if (depth > 0 && content.find('=') != std::string::npos) {
            pending = content;
            continue;
        }
        pending.clear();

        if (content.front() == '[') {
            if (content.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed table header");
            const std::string path = detail::trim(content.substr(1, content.size() - 2));
            current = &root;
            std::size_t start = 0;
            while (start <= path.size()) {
                const std::size_t dot = path.find('.', start);
                const std::string part =
                    detail::trim(path.substr(start, dot == std::string::npos ? dot : dot - start));
                if (part.empty())
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": empty table name");
                auto& table = current->as_table();
                auto it = table.find(part);
                if (it == table.end()) it = table.emplace(part, ConfigValue::table()).first;
                current = &it->second;
                if (dot == std::string::npos) break;
                start = dot + 1;
            }
            continue;
        }

        const std::size_t eq = content.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(content.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        ConfigValue value = detail::parse_value(content.substr(eq + 1), pending_line);

        if (key == "include" && current == &root) {
            const std::string rel = value.as_string("include");
            ConfigValue included = parse_config_file(base_dir / rel, include_depth + 1);
            included.merge_from(root);  // keys seen so far win over the include
            root = std::move(included);
            current = &root;
            continue;
        }
        current->as_table()[key] = std::move(value);
    }
    if (!pending.empty())
        throw ConfigError("config line " + std::to_string(pending_line) +
                          ": unterminated multi-line value");
    return root;
}

// ============================================================================
// Experiment configuration
// ============================================================================

enum class RunMode { kSectorExact, kCircuit };

struct ShockConfig {
    std::vector<int> steps;          // explicit shock steps
    int cascade_count = 0;           // generator: count shocks ...
    int first_step = 2;              // ... starting here ...
    int stride = 0;                  // ... spaced by this (0 = spread to fill)
    NoiseKind kind = NoiseKind::kHaarBlock;
    double probability = 0.5;                     // phase-flip weight
    int n_sites = 3;                              // sampled noisy-set size
    std::vector<std::vector<int>> sites;          // explicit noisy sets (optional)
    bool exclude_test = true;                     // sampled sites avoid T
    std::shared_ptr<PauliChannelSpec> pauli;      // kind == kPauli
};

struct CircuitConfig {
    int n_traj = 500;
    double noise_p = 0.01;
    int n_steps = 0;  // 0 = derived from the 0.5 rad angle cap
    int order = 1;
    int record_stride = 1;
};

struct SweepConfig {
    std::string axis;  // frequency | n_noisy | size | j_perp
    std::vector<double> grid;
};

struct ExperimentConfig {
    RunMode mode = RunMode::kSectorExact;
    int length = 24;
    int up_count = 3;
    CouplingParams couplings;
    std::vector<int> initial_up_sites = {0, 1, 2};

    double t_max = 20.0;
    int n_steps = 50;
    ShockConfig shock;

    std::vector<int> test_sites;                  // T
    std::vector<std::vector<int>> noisy_sets;     // N list (mi runs)
    std::vector<std::string> metrics = {"trace_dist"};

    double fit_window_lo = -1.0;  // -1 = one sample after the last shock
    double fit_window_hi = -1.0;  // -1 = t_max
    double flat_kappa = 0.02;

    int n_seeds = 10;
    std::uint64_t master_seed = 20240601;
    std::string out_dir = "runs/out";
    int threads = 0;

    CircuitConfig circuit;
    SweepConfig sweep;

    int dos_grid_points = 512;
    double dos_bandwidth = 0.0;  // 0 = Silverman

    std::string source_text;  // resolved echo, set by load()

    std::uint64_t initial_pattern() const {
        std::uint64_t mask = 0;
        for (int s : initial_up_sites) mask |= std::uint64_t{1} << s;
        return mask;
    }

    /// Concrete shock steps; the generator spreads `cascade_count` shocks from
    /// `first_step` across the sampling grid when no explicit list is given.
    std::vector<int> shock_steps() const {
        if (!shock.steps.empty()) return shock.steps;
        std::vector<int> steps;
        if (shock.cascade_count <= 0) return steps;
        int stride = shock.stride;
        if (stride <= 0)
            stride = std::max(1, (n_steps - shock.first_step) / shock.cascade_count);
        for (int k = 0; k < shock.cascade_count; ++k) {
            const int step = shock.first_step + k * stride;
            if (step >= n_steps) break;
            steps.push_back(step);
        }
        return steps;
    }

    void validate() const;
    static ExperimentConfig from_tree(const ConfigValue& root);
    static ExperimentConfig load(const std::filesystem::path& path);
};

namespace detail {

inline std::vector<int> int_list(const ConfigValue& v, const std::string& key) {
    std::vector<int> out;
    for (const ConfigValue& item : v.as_array(key))
        out.push_back(static_cast<int>(item.as_int(key)));
    return out;
}

inline std::vector<std::vector<int>> nested_int_list(const ConfigValue& v,
                                                     const std::string& key) {
    std::vector<std::vector<int>> out;
    for (const ConfigValue& item : v.as_array(key)) out.push_back(int_list(item, key));
    return out;
}

inline void require_known_keys(const ConfigValue& table, const std::string& name,
                               std::initializer_list<const char*> known) {
    for (const auto& [key, value] : table.as_table()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) ok = true;
        if (!ok)
            throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
    }
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_tree(const ConfigValue& root) {
    ExperimentConfig cfg;
    detail::require_known_keys(root, "root",
                               {"mode", "lattice", "couplings", "initial", "schedule", "noise",
                                "subsets", "metrics", "fit", "run", "circuit", "sweep", "dos"});

    if (const ConfigValue* v = root.find("mode")) {
        const std::string& m = v->as_string("mode");
        if (m == "sector-exact")
            cfg.mode = RunMode::kSectorExact;
        else if (m == "circuit")
            cfg.mode = RunMode::kCircuit;
        else
            throw ConfigError("config: mode must be 'sector-exact' or 'circuit'");
    }
    if (const ConfigValue* t = root.find("lattice")) {
        detail::require_known_keys(*t, "lattice", {"length", "up_count"});
        if (const ConfigValue* v = t->find("length"))
            cfg.length = static_cast<int>(v->as_int("length"));
        if (const ConfigValue* v = t->find("up_count"))
            cfg.up_count = static_cast<int>(v->as_int("up_count"));
    }
    if (const ConfigValue* t = root.find("couplings")) {
        detail::require_known_keys(*t, "couplings", {"j", "j_perp", "j_prime", "j_prime_perp"});
        if (const ConfigValue* v = t->find("j")) cfg.couplings.j = v->as_double("j");
        if (const ConfigValue* v = t->find("j_perp"))
            cfg.couplings.j_perp = v->as_double("j_perp");
        if (const ConfigValue* v = t->find("j_prime"))
            cfg.couplings.j_prime = v->as_double("j_prime");
        if (const ConfigValue* v = t->find("j_prime_perp"))
            cfg.couplings.j_prime_perp = v->as_double("j_prime_perp");
    }
    if (const ConfigValue* t = root.find("initial")) {
        detail::require_known_keys(*t, "initial", {"up_sites"});
        if (const ConfigValue* v = t->find("up_sites"))
            cfg.initial_up_sites = detail::int_list(*v, "up_sites");
    }
    if (const ConfigValue* t = root.find("schedule")) {
        detail::require_known_keys(
            *t, "schedule", {"t_max", "n_steps", "shock_steps", "cascade_count", "first_step",
                             "stride"});
        if (const ConfigValue* v = t->find("t_max")) cfg.t_max = v->as_double("t_max");
        if (const ConfigValue* v = t->find("n_steps"))
            cfg.n_steps = static_cast<int>(v->as_int("n_steps"));
        if (const ConfigValue* v = t->find("shock_steps"))
            cfg.shock.steps = detail::int_list(*v, "shock_steps");
        if (const ConfigValue* v = t->find("cascade_count"))
            cfg.shock.cascade_count = static_cast<int>(v->as_int("cascade_count"));
        if (const ConfigValue* v = t->find("first_step"))
            cfg.shock.first_step = static_cast<int>(v->as_int("first_step"));
        if (const ConfigValue* v = t->find("stride"))
            cfg.shock.stride = static_cast<int>(v->as_int("stride"));
    }
    if (const ConfigValue* t = root.find("noise")) {
        detail::require_known_keys(*t, "noise",
                                   {"kind", "probability", "n_sites", "sites", "exclude_test",
                                    "strings", "support", "probs"});
        if (const ConfigValue* v = t->find("kind")) {
            const std::string& k = v->as_string("kind");
            if (k == "haar")
                cfg.shock.kind = NoiseKind::kHaarBlock;
            else if (k == "phase_flip")
                cfg.shock.kind = NoiseKind::kPhaseFlip;
            else if (k == "pauli")
                cfg.shock.kind = NoiseKind::kPauli;
            else
                throw ConfigError("config: noise kind must be haar, phase_flip or pauli");
        }
        if (const ConfigValue* v = t->find("probability"))
            cfg.shock.probability = v->as_double("probability");
        if (const ConfigValue* v = t->find("n_sites"))
            cfg.shock.n_sites = static_cast<int>(v->as_int("n_sites"));
        if (const ConfigValue* v = t->find("sites"))
            cfg.shock.sites = detail::nested_int_list(*v, "sites");
        if (const ConfigValue* v = t->find("exclude_test"))
            cfg.shock.exclude_test = v->as_bool("exclude_test");
        if (const ConfigValue* strings = t->find("strings")) {
            // Pauli channel: strings like "ZZ", "XX!" (trailing ! = antiparallel
            // projector), aligned with [noise].probs, acting on [noise].support.
            const ConfigValue* support = t->find("support");
            const ConfigValue* probs = t->find("probs");
            if (!support || !probs)
                throw ConfigError("config: pauli noise needs strings, support and probs");
            auto spec = std::make_shared<PauliChannelSpec>();
            const std::vector<int> sites = detail::int_list(*support, "support");
            const auto& string_items = strings->as_array("strings");
            const auto& prob_items = probs->as_array("probs");
            if (string_items.size() != prob_items.size())
                throw ConfigError("config: pauli strings and probs differ in length");
            for (std::size_t i = 0; i < string_items.size(); ++i) {
                PauliChannelSpec::Term term;
                std::string letters = string_items[i].as_string("strings");
                if (!letters.empty() && letters.back() == '!') {
                    term.zz_projector = true;
                    letters.pop_back();
                }
                if (letters.size() != sites.size())
                    throw ConfigError("config: pauli string length must match support size");
                term.letters = letters;
                term.sites = sites;
                term.prob = prob_items[i].as_double("probs");
                spec->terms.push_back(std::move(term));
            }
            cfg.shock.pauli = std::move(spec);
        }
    }
    if (const ConfigValue* t = root.find("subsets")) {
        detail::require_known_keys(*t, "subsets", {"test", "noisy_sets"});
        if (const ConfigValue* v = t->find("test"))
            cfg.test_sites = detail::int_list(*v, "test");
        if (const ConfigValue* v = t->find("noisy_sets"))
            cfg.noisy_sets = detail::nested_int_list(*v, "noisy_sets");
    }
    if (const ConfigValue* t = root.find("metrics")) {
        detail::require_known_keys(*t, "metrics", {"list"});
        if (const ConfigValue* v = t->find("list")) {
            cfg.metrics.clear();
            for (const ConfigValue& item : v->as_array("list"))
                cfg.metrics.push_back(item.as_string("list"));
        }
    }
    if (const ConfigValue* t = root.find("fit")) {
        detail::require_known_keys(*t, "fit", {"window_lo", "window_hi", "flat_kappa"});
        if (const ConfigValue* v = t->find("window_lo"))
            cfg.fit_window_lo = v->as_double("window_lo");
        if (const ConfigValue* v = t->find("window_hi"))
            cfg.fit_window_hi = v->as_double("window_hi");
        if (const ConfigValue* v = t->find("flat_kappa"))
            cfg.flat_kappa = v->as_double("flat_kappa");
    }
    if (const ConfigValue* t = root.find("run")) {
        detail::require_known_keys(*t, "run", {"seeds", "master_seed", "out_dir", "threads"});
        if (const ConfigValue* v = t->find("seeds"))
            cfg.n_seeds = static_cast<int>(v->as_int("seeds"));
        if (const ConfigValue* v = t->find("master_seed"))
            cfg.master_seed = static_cast<std::uint64_t>(v->as_int("master_seed"));
        if (const ConfigValue* v = t->find("out_dir")) cfg.out_dir = v->as_string("out_dir");
        if (const ConfigValue* v = t->find("threads"))
            cfg.threads = static_cast<int>(v->as_int("threads"));
    }
    if (const ConfigValue* t = root.find("circuit")) {
        detail::require_known_keys(*t, "circuit",
                                   {"n_traj", "noise_p", "n_steps", "order", "record_stride"});
        if (const ConfigValue* v = t->find("n_traj"))
            cfg.circuit.n_traj = static_cast<int>(v->as_int("n_traj"));
        if (const ConfigValue* v = t->find("noise_p"))
            cfg.circuit.noise_p = v->as_double("noise_p");
        if (const ConfigValue* v = t->find("n_steps"))
            cfg.circuit.n_steps = static_cast<int>(v->as_int("n_steps"));
        if (const ConfigValue* v = t->find("order"))
            cfg.circuit.order = static_cast<int>(v->as_int("order"));
        if (const ConfigValue* v = t->find("record_stride"))
            cfg.circuit.record_stride = static_cast<int>(v->as_int("record_stride"));
    }
    if (const ConfigValue* t = root.find("sweep")) {
        detail::require_known_keys(*t, "sweep", {"axis", "grid"});
        if (const ConfigValue* v = t->find("axis")) cfg.sweep.axis = v->as_string("axis");
        if (const ConfigValue* v = t->find("grid"))
            for (const ConfigValue& item : v->as_array("grid"))
                cfg.sweep.grid.push_back(item.as_double("grid"));
    }
    if (const ConfigValue* t = root.find("dos")) {
        detail::require_known_keys(*t, "dos", {"grid_points", "bandwidth"});
        if (const ConfigValue* v = t->find("grid_points"))
            cfg.dos_grid_points = static_cast<int>(v->as_int("grid_points"));
        if (const ConfigValue* v = t->find("bandwidth"))
            cfg.dos_bandwidth = v->as_double("bandwidth");
    }
    cfg.validate();
    return cfg;
}

inline void ExperimentConfig::validate() const {
    LatticeSpec spec{length, up_count};
    spec.validate();
    for (int s : initial_up_sites)
        if (s < 0 || s >= length) throw ConfigError("config: initial up site outside lattice");
    if (mode == RunMode::kSectorExact &&
        static_cast<int>(initial_up_sites.size()) != up_count)
        throw ConfigError("config: initial state must carry up_count up spins in sector mode");
    if (t_max <= 0.0) throw ConfigError("config: t_max must be positive");
    if (n_steps < 1) throw ConfigError("config: n_steps must be >= 1");
    for (int s : test_sites)
        if (s < 0 || s >= length) throw ConfigError("config: test site outside lattice");
    for (const auto& set : noisy_sets)
        SiteSubset(set).validate_for(length);
    if (shock.probability < 0.0 || shock.probability > 1.0)
        throw ConfigError("config: noise probability outside [0, 1]");
    if (shock.n_sites < 1 || shock.n_sites > length)
        throw ConfigError("config: noise n_sites outside [1, L]");
    for (const auto& set : shock.sites) SiteSubset(set).validate_for(length);
    for (int s : shock_steps())
        if (s < 0 || s >= n_steps) throw ConfigError("config: shock step outside [0, n_steps)");
    for (const std::string& m : metrics)
        if (!metric_from_name(m)) throw ConfigError("config: unknown metric '" + m + "'");
    if (n_seeds < 1) throw ConfigError("config: need at least one seed");
    if (circuit.order != 1 && circuit.order != 2)
        throw ConfigError("config: circuit order must be 1 or 2");
    if (!sweep.axis.empty() && sweep.axis != "frequency" && sweep.axis != "n_noisy" &&
        sweep.axis != "size" && sweep.axis != "j_perp")
        throw ConfigError("config: sweep axis must be frequency, n_noisy, size or j_perp");
    if (shock.kind == NoiseKind::kPauli && !shock.pauli)
        throw ConfigError("config: pauli noise requires [noise] strings/support/probs");
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    const ConfigValue tree = parse_config_file(path);
    ExperimentConfig cfg = from_tree(tree);
    std::ostringstream echo;
    tree.dump(echo);
    cfg.source_text = echo.str();
    return cfg;
}

}  // namespace gibbsforge
