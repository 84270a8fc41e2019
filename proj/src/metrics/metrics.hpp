#pragma once

#include "core/config.hpp"
#include "metrics/stats.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace drb {

/**
 * Lower-triangular a[i][j] (1-based, j <= i <= T): accuracy on task j's eval
 * subset using the model snapshot from the end of task i.
 */
class accuracy_matrix {
public:
    explicit accuracy_matrix(unsigned n_tasks);

    void set(unsigned i, unsigned j, double top1, double topk);
    bool row_complete(unsigned i) const;

    double top1(unsigned i, unsigned j) const;
    double topk(unsigned i, unsigned j) const;

    /// Mean of a[T][1..T] (top-1). Throws usage_error when the row has gaps.
    double accuracy_T(unsigned i) const;
    double accuracy_T_topk(unsigned i) const;

    unsigned n_tasks() const { return m_n_tasks; }

private:
    struct cell {
        bool set = false;
        double top1 = 0.0;
        double topk = 0.0;
    };
    const cell& at(unsigned i, unsigned j) const;

    unsigned m_n_tasks;
    std::vector<std::vector<cell>> m_cells;
};

/// Per-iteration durations in milliseconds, mirroring the training loop's
/// phases; populate/augment run in the background, wait is the blocked time
/// in update().
struct breakdown_record {
    std::uint64_t iteration = 0;
    worker_id worker = 0;
    double load_ms = 0.0;
    double train_ms = 0.0;
    double populate_ms = 0.0;
    double augment_ms = 0.0;
    double wait_ms = 0.0;
};

struct breakdown_summary {
    double load_ms = 0.0;
    double train_ms = 0.0;
    double populate_ms = 0.0;
    double augment_ms = 0.0;
    double wait_ms = 0.0;
    std::size_t iterations = 0;
};

/// Mean of each phase over the trailing `window` records (0 = all).
breakdown_summary summarize_breakdown(const std::vector<breakdown_record>& records,
                                      std::size_t window);

struct bias_report {
    double statistic = 0.0;
    std::uint64_t df = 0;
    double p_value = 1.0;
    std::uint64_t draws = 0;
    std::uint64_t slots = 0;
};

/**
 * Pearson chi-square of per-slot selection counts against the uniform
 * expectation rep_count * draws / slots. Requires a frozen buffer and
 * draws >= 100 * slots; zero expected counts are a test-setup error.
 */
bias_report make_bias_report(std::span<const std::uint64_t> observed, std::size_t rep_count,
                             std::uint64_t draws);

struct run_summary {
    run_config config;
    run_mode mode = run_mode::rehearsal;
    double accuracy_top1 = 0.0;
    double accuracy_topk = 0.0;
    double total_train_seconds = 0.0;
    double total_wait_seconds = 0.0;
    std::uint64_t epochs_trained = 0;
    std::uint64_t iterations = 0;
    std::uint64_t invariant_violations = 0;
};

// -- result files ------------------------------------------------------------

/// i, j, a_ij, accuracy_T (the latter only on row-complete i). Deterministic
/// bytes for a given matrix.
void write_accuracy_csv(const accuracy_matrix& matrix, const std::string& path);

void write_breakdown_csv(const std::vector<breakdown_record>& records,
                         const std::string& path);

/// Schema-stable first 10 lines (key=value), then a config echo.
void write_summary(const run_summary& summary, const std::string& path);

void write_bias_report(const bias_report& report, const std::string& path);

std::optional<double> read_summary_value(const std::string& path, const std::string& key);

} // namespace drb
