// drb: dataset generation, scenario runs (single rank or local mesh spawn),
// sampling-bias tests and overlap benchmarks, all through the C API.

#include <drb.h>

#include <CLI11.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

extern char** environ;

namespace {

struct config_handle {
    drb_config* ptr;
    config_handle() : ptr(drb_config_create()) {}
    ~config_handle() { drb_config_destroy(ptr); }
    config_handle(const config_handle&) = delete;
    config_handle& operator=(const config_handle&) = delete;
};

[[noreturn]] void fail(const std::string& what) {
    std::cerr << "drb: " << what << "\n";
    std::exit(1);
}

void check(drb_status status, const std::string& what) {
    if (status != DRB_OK)
        fail(what + ": " + drb_last_error());
}

void set_key(config_handle& cfg, const std::string& key, const std::string& value) {
    check(drb_config_set(cfg.ptr, key.c_str(), value.c_str()), "bad --" + key);
}

std::string get_key(const config_handle& cfg, const std::string& key) {
    char buf[4096];
    check(drb_config_get(cfg.ptr, key.c_str(), buf, sizeof buf), "get " + key);
    return buf;
}

// Option plumbing: every flag writes through to its config key after the
// config file (if any) has been loaded, so flags override file values.
struct pending_options {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> assignments;

    void apply(config_handle& cfg) const {
        if (!config_path.empty())
            check(drb_config_load(cfg.ptr, config_path.c_str()), "load config");
        for (const auto& [key, value] : assignments)
            set_key(cfg, key, value);
    }
};

void add_config_options(CLI::App* cmd, pending_options& pending) {
    cmd->add_option("--config,-c", pending.config_path, "config file (key = value lines)");
    auto add = [cmd, &pending](const std::string& flag, const std::string& key,
                               const std::string& help) {
        cmd->add_option_function<std::string>(
               flag, [&pending, key](const std::string& v) { pending.assignments.emplace_back(key, v); },
               help)
            ->type_name("VALUE");
    };
    add("--workers", "n_workers", "worker process count N");
    add("--classes", "n_classes", "class count K");
    add("--tasks", "n_tasks", "task count T");
    add("--epochs", "epochs_per_task", "epochs per task");
    add("--batch-size", "batch_size", "mini-batch size b");
    add("--rep-count", "rep_count", "representatives r per augmented batch");
    add("--candidate-count", "candidate_count", "buffer candidates c per batch");
    add("--capacity", "per_worker_capacity", "per-worker buffer budget S_max (samples)");
    add("--buffer-fraction", "buffer_fraction", "aggregate buffer size as dataset fraction");
    add("--feature-dim", "feature_dim", "feature vector length");
    add("--hidden-dim", "hidden_dim", "hidden layer width");
    add("--base-lr", "base_lr", "base learning rate");
    add("--warmup-epochs", "warmup_epochs", "warmup epochs per task");
    add("--lr-milestones", "lr_milestones", "epoch:multiplier list");
    add("--lr-scale", "lr_scale_with_workers", "scale rate by N (0/1)");
    add("--lr-cap", "lr_cap", "absolute rate cap");
    add("--momentum", "momentum", "SGD momentum");
    add("--seed", "rng_seed", "RNG seed");
    add("--roster", "roster", "roster file (worker_id host:port per line)");
    add("--mode", "mode", "rehearsal | incremental | from_scratch");
    add("--dataset", "dataset", "dataset file path");
    add("--results", "results_dir", "results directory");
    add("--eval-topk", "eval_topk", "top-k for the secondary accuracy metric");
    add("--window", "breakdown_window", "breakdown averaging window");
    add("--per-class", "synth_per_class", "synthetic samples per class");
    add("--separation", "synth_separation", "synthetic class mean separation");
    add("--verbose", "verbose", "chatty logging (0/1)");
}

unsigned workers_of(const config_handle& cfg) {
    return static_cast<unsigned>(std::stoul(get_key(cfg, "n_workers")));
}

std::uint16_t find_free_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        fail("socket: " + std::string(std::strerror(errno)));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        fail("bind: " + std::string(std::strerror(errno)));
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

std::string self_exe() {
    char buf[4096];
    const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n <= 0)
        fail("cannot resolve own executable path");
    buf[n] = '\0';
    return buf;
}

void ensure_dir(const std::string& path) {
    if (::mkdir(path.c_str(), 0755) != 0 && errno != EEXIST)
        fail("mkdir " + path + ": " + std::strerror(errno));
}

/// Write the roster and resolved config, spawn one child per rank running
/// `subcommand --rank i`, and wait for all of them. Returns the worst child
/// exit code.
int spawn_local(config_handle& cfg, const std::string& subcommand,
                const std::vector<std::string>& extra_args) {
    const unsigned n = workers_of(cfg);
    const std::string results = get_key(cfg, "results_dir");
    ensure_dir(results);

    const std::string roster_path = results + "/roster.txt";
    {
        std::ofstream roster(roster_path, std::ios::trunc);
        if (!roster)
            fail("cannot write " + roster_path);
        for (unsigned i = 0; i < n; ++i)
            roster << i << " 127.0.0.1:" << find_free_port() << "\n";
    }
    set_key(cfg, "roster", roster_path);
    const std::string conf_path = results + "/run.conf";
    check(drb_config_save(cfg.ptr, conf_path.c_str()), "save resolved config");

    const std::string exe = self_exe();
    std::vector<pid_t> children;
    for (unsigned rank = 0; rank < n; ++rank) {
        std::vector<std::string> args = {exe, subcommand, "--config", conf_path,
                                         "--rank", std::to_string(rank)};
        args.insert(args.end(), extra_args.begin(), extra_args.end());
        std::vector<char*> argv;
        for (auto& a : args)
            argv.push_back(a.data());
        argv.push_back(nullptr);
        pid_t pid = 0;
        const int rc = ::posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ);
        if (rc != 0)
            fail("posix_spawn: " + std::string(std::strerror(rc)));
        children.push_back(pid);
    }

    int worst = 0;
    for (const pid_t pid : children) {
        int status = 0;
        if (::waitpid(pid, &status, 0) < 0)
            fail("waitpid: " + std::string(std::strerror(errno)));
        if (WIFEXITED(status))
            worst = std::max(worst, WEXITSTATUS(status));
        else
            worst = std::max(worst, 128);
    }
    return worst;
}

/// Concatenate per-rank breakdown shards into breakdown.csv, ordered by
/// (iteration, worker).
void merge_breakdowns(const std::string& results, unsigned n_workers) {
    struct row {
        long iteration;
        long worker;
        std::string text;
    };
    std::vector<row> rows;
    std::string header;
    for (unsigned rank = 0; rank < n_workers; ++rank) {
        std::ifstream in(results + "/breakdown_rank_" + std::to_string(rank) + ".csv");
        if (!in)
            continue;
        std::string line;
        std::getline(in, line);
        header = line;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            row r;
            r.text = line;
            std::sscanf(line.c_str(), "%ld,%ld", &r.iteration, &r.worker);
            rows.push_back(std::move(r));
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const row& a, const row& b) {
        return std::tie(a.iteration, a.worker) < std::tie(b.iteration, b.worker);
    });
    std::ofstream out(results + "/breakdown.csv", std::ios::trunc);
    out << (header.empty()
                ? "iteration,worker,load_ms,train_ms,populate_buffer_ms,augment_batch_ms,wait_ms"
                : header)
        << "\n";
    for (const auto& r : rows)
        out << r.text << "\n";
}

long read_violations(const std::string& results) {
    std::ifstream in(results + "/summary.txt");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("invariant_violations=", 0) == 0)
            return std::stol(line.substr(line.find('=') + 1));
    }
    return -1;
}

std::map<std::string, double> read_report(const std::string& path) {
    std::map<std::string, double> values;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        try {
            values[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
        } catch (...) {
        }
    }
    return values;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed rehearsal-buffer engine for class-incremental training"};
    app.require_subcommand(1);

    // gen-dataset ------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-dataset", "write a synthetic Gaussian-blob dataset");
    pending_options gen_opts;
    add_config_options(gen, gen_opts);
    std::string gen_out;
    gen->add_option("--out,-o", gen_out, "output dataset path")->required();
    gen->callback([&] {
        config_handle cfg;
        gen_opts.apply(cfg);
        check(drb_generate_dataset(cfg.ptr, gen_out.c_str()), "gen-dataset");
        std::cout << "wrote " << gen_out << " (classes=" << get_key(cfg, "n_classes")
                  << ", per_class=" << get_key(cfg, "synth_per_class")
                  << ", feature_dim=" << get_key(cfg, "feature_dim") << ")\n";
    });

    // run ---------------------------------------------------------------------
    auto* run = app.add_subcommand("run", "run the configured scenario");
    pending_options run_opts;
    add_config_options(run, run_opts);
    bool run_spawn = false;
    int run_rank = -1;
    run->add_flag("--spawn-local", run_spawn, "spawn N local worker processes and wait");
    run->add_option("--rank", run_rank, "join the mesh as this worker id")
        ->check(CLI::NonNegativeNumber);
    run->callback([&] {
        config_handle cfg;
        run_opts.apply(cfg);
        if (run_rank >= 0) {
            drb_run_stats stats{};
            check(drb_run_worker(cfg.ptr, static_cast<uint32_t>(run_rank), &stats), "run");
            if (stats.invariant_violations != 0)
                fail("invariant violations: " + std::to_string(stats.invariant_violations));
            return;
        }
        if (!run_spawn && workers_of(cfg) != 1)
            fail("multi-worker run needs --spawn-local or --rank");
        check(drb_config_validate(cfg.ptr), "config");
        const std::string results = get_key(cfg, "results_dir");
        const unsigned n = workers_of(cfg);
        const int rc = spawn_local(cfg, "run", {});
        merge_breakdowns(results, n);
        const long violations = read_violations(results);
        if (rc != 0)
            fail("worker failed with exit code " + std::to_string(rc));
        if (violations != 0)
            fail("invariant violations reported: " + std::to_string(violations));
        const auto summary = read_report(results + "/summary.txt");
        const auto acc = summary.find("accuracy_T_top1");
        std::cout << "accuracy_T=" << (acc != summary.end() ? acc->second : 0.0)
                  << "  results in " << results << "\n";
    });

    // bias-test ---------------------------------------------------------------
    auto* bias = app.add_subcommand("bias-test", "global sampling uniformity chi-square test");
    pending_options bias_opts;
    add_config_options(bias, bias_opts);
    std::uint64_t bias_draws = 100000;
    std::uint64_t bias_fill = 40;
    bool bias_control = false;
    int bias_rank = -1;
    bias->add_option("--draws", bias_draws, "sampling plans to draw");
    bias->add_option("--fill", bias_fill, "total samples frozen across all buffers");
    bias->add_flag("--biased-control", bias_control,
                   "use the deliberately local-only planner (negative control)");
    bias->add_option("--rank", bias_rank, "join as this worker id")->group("");
    bias->callback([&] {
        config_handle cfg;
        bias_opts.apply(cfg);
        std::vector<std::string> extra = {"--draws", std::to_string(bias_draws), "--fill",
                                          std::to_string(bias_fill)};
        if (bias_control)
            extra.push_back("--biased-control");
        if (bias_rank >= 0) {
            double p = 1.0;
            check(drb_bias_test(cfg.ptr, static_cast<uint32_t>(bias_rank), bias_draws,
                                bias_fill, bias_control ? 1 : 0, &p),
                  "bias-test");
            return;
        }
        const int rc = spawn_local(cfg, "bias-test", extra);
        if (rc != 0)
            fail("bias-test worker failed with exit code " + std::to_string(rc));
        const std::string results = get_key(cfg, "results_dir");
        const auto report = read_report(results + "/bias_report.txt");
        const auto p = report.find("p_value");
        if (p == report.end())
            fail("bias report missing p_value");
        std::cout << "chi-square p-value: " << p->second << "  (report in " << results
                  << "/bias_report.txt)\n";
    });

    // overlap-bench -----------------------------------------------------------
    auto* bench = app.add_subcommand("overlap-bench",
                                     "measure training-thread wait under a simulated step");
    pending_options bench_opts;
    add_config_options(bench, bench_opts);
    double bench_cost = -1.0;
    std::uint64_t bench_iters = 500;
    int bench_rank = -1;
    bench->add_option("--train-cost-ms", bench_cost,
                      "simulated training cost per iteration (negative = 10x background)");
    bench->add_option("--iters", bench_iters, "measured iterations");
    bench->add_option("--rank", bench_rank, "join as this worker id")->group("");
    bench->callback([&] {
        config_handle cfg;
        bench_opts.apply(cfg);
        if (bench_rank >= 0) {
            check(drb_overlap_bench(cfg.ptr, static_cast<uint32_t>(bench_rank), bench_cost,
                                    bench_iters, nullptr),
                  "overlap-bench");
            return;
        }
        const std::vector<std::string> extra = {"--train-cost-ms", std::to_string(bench_cost),
                                                "--iters", std::to_string(bench_iters)};
        const int rc = spawn_local(cfg, "overlap-bench", extra);
        if (rc != 0)
            fail("overlap-bench worker failed with exit code " + std::to_string(rc));
        const std::string results = get_key(cfg, "results_dir");
        auto report = read_report(results + "/overlap_report.txt");
        std::cout << "mean wait " << report["mean_wait_ms"] << " ms over mean iteration "
                  << report["mean_iteration_ms"] << " ms (train cost "
                  << report["train_cost_ms"] << " ms)\n";
    });

    // breakdown ----------------------------------------------------------------
    auto* brk = app.add_subcommand("breakdown",
                                   "short rehearsal run reporting per-phase time means");
    pending_options brk_opts;
    add_config_options(brk, brk_opts);
    brk->callback([&] {
        config_handle cfg;
        brk_opts.apply(cfg);
        set_key(cfg, "mode", "rehearsal");
        const std::string results = get_key(cfg, "results_dir");
        const unsigned n = workers_of(cfg);
        const int rc = spawn_local(cfg, "run", {});
        merge_breakdowns(results, n);
        if (rc != 0)
            fail("worker failed with exit code " + std::to_string(rc));

        const unsigned window = static_cast<unsigned>(std::stoul(get_key(cfg, "breakdown_window")));
        std::ifstream in(results + "/breakdown.csv");
        std::string line;
        std::getline(in, line); // header
        std::vector<std::array<double, 5>> rows;
        while (std::getline(in, line)) {
            std::array<double, 5> r{};
            long it, w;
            if (std::sscanf(line.c_str(), "%ld,%ld,%lf,%lf,%lf,%lf,%lf", &it, &w, &r[0], &r[1],
                            &r[2], &r[3], &r[4]) == 7)
                rows.push_back(r);
        }
        const std::size_t take = std::min<std::size_t>(window == 0 ? rows.size() : window,
                                                       rows.size());
        std::array<double, 5> mean{};
        for (std::size_t i = rows.size() - take; i < rows.size(); ++i)
            for (int k = 0; k < 5; ++k)
                mean[k] += rows[i][k];
        for (auto& v : mean)
            v /= std::max<std::size_t>(1, take);
        std::cout << "mean over last " << take << " iterations (ms): load=" << mean[0]
                  << " train=" << mean[1] << " populate_buffer=" << mean[2]
                  << " augment_batch=" << mean[3] << " wait=" << mean[4] << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}
