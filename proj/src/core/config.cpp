#include "core/config.hpp"

#include "core/capacity.hpp"
#include "core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace drb {

run_mode parse_run_mode(const std::string& text) {
    if (text == "rehearsal")
        return run_mode::rehearsal;
    if (text == "incremental")
        return run_mode::incremental;
    if (text == "from_scratch" || text == "from-scratch")
        return run_mode::from_scratch;
    throw config_error("unknown mode '" + text +
                       "' (expected rehearsal | incremental | from_scratch)");
}

std::string to_string(run_mode mode) {
    switch (mode) {
    case run_mode::rehearsal: return "rehearsal";
    case run_mode::incremental: return "incremental";
    case run_mode::from_scratch: return "from_scratch";
    }
    return "?";
}

unsigned run_config::effective_topk() const {
    if (eval_topk != 0)
        return eval_topk;
    return n_classes >= 10 ? 5 : 1;
}

std::size_t run_config::resolve_capacity(std::size_t train_samples) const {
    if (per_worker_capacity != 0)
        return per_worker_capacity;
    const auto aggregate = static_cast<std::size_t>(
        std::llround(buffer_fraction * static_cast<double>(train_samples)));
    const std::size_t per_worker = aggregate / std::max(1u, n_workers);
    if (per_worker < n_classes)
        throw config_error("buffer_fraction " + std::to_string(buffer_fraction) +
                           " yields only " + std::to_string(per_worker) +
                           " samples per worker, below one slot per class (K=" +
                           std::to_string(n_classes) + ")");
    return per_worker;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T v{};
    in >> v;
    if (in.fail() || !trim(value.substr(static_cast<std::size_t>(in.tellg()) == std::string::npos
                                            ? value.size()
                                            : static_cast<std::size_t>(in.tellg())))
                          .empty())
        throw config_error("bad value '" + value + "' for key '" + key + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes")
        return true;
    if (value == "0" || value == "false" || value == "no")
        return false;
    throw config_error("bad boolean '" + value + "' for key '" + key + "'");
}

// "epoch:mult,epoch:mult" -> milestone list, sorted by epoch.
std::vector<std::pair<unsigned, double>> parse_milestones(const std::string& value) {
    std::vector<std::pair<unsigned, double>> out;
    if (trim(value).empty() || value == "none")
        return out;
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw config_error("bad lr_milestones entry '" + item + "' (want epoch:multiplier)");
        out.emplace_back(parse_number<unsigned>("lr_milestones", trim(item.substr(0, colon))),
                         parse_number<double>("lr_milestones", trim(item.substr(colon + 1))));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string format_milestones(const std::vector<std::pair<unsigned, double>>& ms) {
    if (ms.empty())
        return "none";
    std::ostringstream out;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (i)
            out << ",";
        out << ms[i].first << ":" << ms[i].second;
    }
    return out.str();
}

std::string format_double(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

} // namespace

void set_config_key(run_config& cfg, const std::string& key, const std::string& value) {
    if (key == "n_workers") cfg.n_workers = parse_number<unsigned>(key, value);
    else if (key == "n_classes") cfg.n_classes = parse_number<unsigned>(key, value);
    else if (key == "n_tasks") cfg.n_tasks = parse_number<unsigned>(key, value);
    else if (key == "epochs_per_task") cfg.epochs_per_task = parse_number<unsigned>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<unsigned>(key, value);
    else if (key == "rep_count") cfg.rep_count = parse_number<unsigned>(key, value);
    else if (key == "candidate_count") cfg.candidate_count = parse_number<unsigned>(key, value);
    else if (key == "per_worker_capacity") cfg.per_worker_capacity = parse_number<std::size_t>(key, value);
    else if (key == "buffer_fraction") cfg.buffer_fraction = parse_number<double>(key, value);
    else if (key == "feature_dim") cfg.feature_dim = parse_number<unsigned>(key, value);
    else if (key == "hidden_dim") cfg.hidden_dim = parse_number<unsigned>(key, value);
    else if (key == "base_lr") cfg.lr.base_rate = parse_number<double>(key, value);
    else if (key == "warmup_epochs") cfg.lr.warmup_epochs = parse_number<unsigned>(key, value);
    else if (key == "lr_milestones") cfg.lr.milestones = parse_milestones(value);
    else if (key == "lr_scale_with_workers") cfg.lr.scale_with_workers = parse_bool(key, value);
    else if (key == "lr_cap") cfg.lr.cap = parse_number<double>(key, value);
    else if (key == "momentum") cfg.lr.momentum = parse_number<double>(key, value);
    else if (key == "rng_seed") cfg.rng_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "roster") cfg.roster_path = value;
    else if (key == "mode") cfg.mode = parse_run_mode(value);
    else if (key == "dataset") cfg.dataset_path = value;
    else if (key == "results_dir") cfg.results_dir = value;
    else if (key == "eval_topk") cfg.eval_topk = parse_number<unsigned>(key, value);
    else if (key == "breakdown_window") cfg.breakdown_window = parse_number<unsigned>(key, value);
    else if (key == "synth_per_class") cfg.synth_per_class = parse_number<unsigned>(key, value);
    else if (key == "synth_separation") cfg.synth_separation = parse_number<double>(key, value);
    else if (key == "verbose") cfg.verbose = parse_bool(key, value);
    else
        throw config_error("unknown config key '" + key + "'");
}

std::string get_config_key(const run_config& cfg, const std::string& key) {
    if (key == "n_workers") return std::to_string(cfg.n_workers);
    if (key == "n_classes") return std::to_string(cfg.n_classes);
    if (key == "n_tasks") return std::to_string(cfg.n_tasks);
    if (key == "epochs_per_task") return std::to_string(cfg.epochs_per_task);
    if (key == "batch_size") return std::to_string(cfg.batch_size);
    if (key == "rep_count") return std::to_string(cfg.rep_count);
    if (key == "candidate_count") return std::to_string(cfg.candidate_count);
    if (key == "per_worker_capacity") return std::to_string(cfg.per_worker_capacity);
    if (key == "buffer_fraction") return format_double(cfg.buffer_fraction);
    if (key == "feature_dim") return std::to_string(cfg.feature_dim);
    if (key == "hidden_dim") return std::to_string(cfg.hidden_dim);
    if (key == "base_lr") return format_double(cfg.lr.base_rate);
    if (key == "warmup_epochs") return std::to_string(cfg.lr.warmup_epochs);
    if (key == "lr_milestones") return format_milestones(cfg.lr.milestones);
    if (key == "lr_scale_with_workers") return cfg.lr.scale_with_workers ? "1" : "0";
    if (key == "lr_cap") return format_double(cfg.lr.cap);
    if (key == "momentum") return format_double(cfg.lr.momentum);
    if (key == "rng_seed") return std::to_string(cfg.rng_seed);
    if (key == "roster") return cfg.roster_path;
    if (key == "mode") return to_string(cfg.mode);
    if (key == "dataset") return cfg.dataset_path;
    if (key == "results_dir") return cfg.results_dir;
    if (key == "eval_topk") return std::to_string(cfg.eval_topk);
    if (key == "breakdown_window") return std::to_string(cfg.breakdown_window);
    if (key == "synth_per_class") return std::to_string(cfg.synth_per_class);
    if (key == "synth_separation") return format_double(cfg.synth_separation);
    if (key == "verbose") return cfg.verbose ? "1" : "0";
    throw config_error("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> config_keys() {
    return {
        {"n_workers", "number of cooperating worker processes N"},
        {"n_classes", "total class count K"},
        {"n_tasks", "number of tasks T in the class-incremental schedule"},
        {"epochs_per_task", "epochs trained per task"},
        {"batch_size", "incoming mini-batch size b"},
        {"rep_count", "representatives r appended to each augmented batch"},
        {"candidate_count", "candidates c inserted into the buffer per batch"},
        {"per_worker_capacity", "buffer budget S_max per worker, in samples (0 = use buffer_fraction)"},
        {"buffer_fraction", "aggregate buffer size as a fraction of the training set"},
        {"feature_dim", "feature vector length"},
        {"hidden_dim", "classifier hidden layer width"},
        {"base_lr", "base learning rate"},
        {"warmup_epochs", "linear warmup epochs at each task start"},
        {"lr_milestones", "epoch:multiplier list, e.g. 6:0.5,8:0.1 (or 'none')"},
        {"lr_scale_with_workers", "multiply the rate by N (linear scaling rule)"},
        {"lr_cap", "absolute learning-rate cap"},
        {"momentum", "SGD momentum (0 = plain SGD)"},
        {"rng_seed", "seed for every derived RNG stream"},
        {"roster", "path to the roster file (one 'worker_id host:port' line per worker)"},
        {"mode", "rehearsal | incremental | from_scratch"},
        {"dataset", "path to the dataset file"},
        {"results_dir", "directory for result files"},
        {"eval_topk", "top-k for the secondary accuracy log (0 = auto)"},
        {"breakdown_window", "minibatch window for breakdown averaging"},
        {"synth_per_class", "samples per class for gen-dataset"},
        {"synth_separation", "minimum distance between synthetic class means"},
        {"verbose", "chatty per-worker logging"},
    };
}

run_config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open config file: " + path);
    run_config cfg;
    std::string line;
    unsigned lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(lineno) +
                               ": expected 'key = value', got '" + line + "'");
        set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void write_config_file(const run_config& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw io_error("cannot write config file: " + path);
    for (const auto& [key, _] : config_keys())
        out << key << " = " << get_config_key(cfg, key) << "\n";
}

void validate(const run_config& cfg) {
    if (cfg.n_workers == 0)
        throw config_error("n_workers must be >= 1");
    if (cfg.n_classes == 0)
        throw config_error("n_classes must be >= 1");
    if (cfg.n_tasks == 0 || cfg.n_tasks > cfg.n_classes)
        throw config_error("n_tasks must be in [1, n_classes]");
    if (cfg.batch_size == 0)
        throw config_error("batch_size must be >= 1");
    if (cfg.candidate_count > cfg.batch_size)
        throw config_error("candidate_count c must not exceed batch_size b");
    if (cfg.feature_dim == 0 || cfg.hidden_dim == 0)
        throw config_error("feature_dim and hidden_dim must be >= 1");
    if (!(cfg.lr.base_rate > 0.0) || !(cfg.lr.cap > 0.0))
        throw config_error("learning rate and cap must be > 0");
    if (cfg.per_worker_capacity != 0)
        per_class_capacity(cfg.per_worker_capacity, cfg.n_classes); // throws when < 1 slot/class
    else if (!(cfg.buffer_fraction > 0.0) || cfg.buffer_fraction > 1.0)
        throw config_error("buffer_fraction must be in (0, 1] when per_worker_capacity is 0");
}

std::vector<roster_entry> parse_roster_lines(const std::vector<std::string>& lines) {
    std::vector<roster_entry> roster;
    for (const auto& raw : lines) {
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream in(line);
        roster_entry e;
        std::string addr;
        if (!(in >> e.id >> addr))
            throw config_error("bad roster line: '" + raw + "'");
        const auto colon = addr.rfind(':');
        if (colon == std::string::npos)
            throw config_error("roster address missing port: '" + addr + "'");
        e.host = addr.substr(0, colon);
        e.port = static_cast<std::uint16_t>(parse_number<unsigned>("roster port", addr.substr(colon + 1)));
        roster.push_back(std::move(e));
    }
    std::sort(roster.begin(), roster.end(),
              [](const roster_entry& a, const roster_entry& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < roster.size(); ++i)
        if (roster[i].id != i)
            throw config_error("roster worker ids must be 0..N-1 without gaps");
    return roster;
}

std::vector<roster_entry> load_roster_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open roster file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        lines.push_back(line);
    return parse_roster_lines(lines);
}

} // namespace drb
