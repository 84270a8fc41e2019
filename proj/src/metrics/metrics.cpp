#include "metrics/metrics.hpp"

#include "core/errors.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace drb {

accuracy_matrix::accuracy_matrix(unsigned n_tasks) : m_n_tasks(n_tasks) {
    if (n_tasks == 0)
        throw usage_error("accuracy_matrix: need at least one task");
    m_cells.resize(n_tasks);
    for (unsigned i = 0; i < n_tasks; ++i)
        m_cells[i].resize(i + 1);
}

const accuracy_matrix::cell& accuracy_matrix::at(unsigned i, unsigned j) const {
    if (i < 1 || i > m_n_tasks || j < 1 || j > i)
        throw usage_error("accuracy_matrix: index (" + std::to_string(i) + "," +
                          std::to_string(j) + ") outside the lower triangle");
    return m_cells[i - 1][j - 1];
}

void accuracy_matrix::set(unsigned i, unsigned j, double top1, double topk) {
    at(i, j); // bounds check
    m_cells[i - 1][j - 1] = cell{true, top1, topk};
}

bool accuracy_matrix::row_complete(unsigned i) const {
    for (unsigned j = 1; j <= i; ++j)
        if (!at(i, j).set)
            return false;
    return true;
}

double accuracy_matrix::top1(unsigned i, unsigned j) const {
    const auto& c = at(i, j);
    if (!c.set)
        throw usage_error("accuracy_matrix: entry (" + std::to_string(i) + "," +
                          std::to_string(j) + ") missing (evaluation incomplete)");
    return c.top1;
}

double accuracy_matrix::topk(unsigned i, unsigned j) const {
    const auto& c = at(i, j);
    if (!c.set)
        throw usage_error("accuracy_matrix: entry missing (evaluation incomplete)");
    return c.topk;
}

double accuracy_matrix::accuracy_T(unsigned i) const {
    double sum = 0.0;
    for (unsigned j = 1; j <= i; ++j)
        sum += top1(i, j);
    return sum / static_cast<double>(i);
}

double accuracy_matrix::accuracy_T_topk(unsigned i) const {
    double sum = 0.0;
    for (unsigned j = 1; j <= i; ++j)
        sum += topk(i, j);
    return sum / static_cast<double>(i);
}

breakdown_summary summarize_breakdown(const std::vector<breakdown_record>& records,
                                      std::size_t window) {
    breakdown_summary s;
    if (records.empty())
        return s;
    const std::size_t n = window == 0 ? records.size() : std::min(window, records.size());
    for (std::size_t i = records.size() - n; i < records.size(); ++i) {
        s.load_ms += records[i].load_ms;
        s.train_ms += records[i].train_ms;
        s.populate_ms += records[i].populate_ms;
        s.augment_ms += records[i].augment_ms;
        s.wait_ms += records[i].wait_ms;
    }
    s.load_ms /= n;
    s.train_ms /= n;
    s.populate_ms /= n;
    s.augment_ms /= n;
    s.wait_ms /= n;
    s.iterations = n;
    return s;
}

bias_report make_bias_report(std::span<const std::uint64_t> observed, std::size_t rep_count,
                             std::uint64_t draws) {
    if (observed.empty())
        throw usage_error("make_bias_report: no slots observed");
    const double expected = static_cast<double>(rep_count) * static_cast<double>(draws) /
                            static_cast<double>(observed.size());
    if (!(expected > 0.0))
        throw usage_error("make_bias_report: zero expected count per slot");
    std::vector<double> expectations(observed.size(), expected);
    const auto chi = pearson_chi_square(observed, expectations);
    bias_report report;
    report.statistic = chi.statistic;
    report.df = chi.df;
    report.p_value = chi.p_value;
    report.draws = draws;
    report.slots = observed.size();
    return report;
}

namespace {

std::string fixed6(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6) << v;
    return out.str();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw io_error("cannot write results file: " + path);
    return out;
}

} // namespace

void write_accuracy_csv(const accuracy_matrix& matrix, const std::string& path) {
    auto out = open_out(path);
    out << "i,j,a_ij,accuracy_T\n";
    for (unsigned i = 1; i <= matrix.n_tasks(); ++i) {
        if (!matrix.row_complete(i))
            continue;
        const std::string row_mean = fixed6(matrix.accuracy_T(i));
        for (unsigned j = 1; j <= i; ++j)
            out << i << "," << j << "," << fixed6(matrix.top1(i, j)) << "," << row_mean
                << "\n";
    }
    if (!out)
        throw io_error("short write: " + path);
}

void write_breakdown_csv(const std::vector<breakdown_record>& records,
                         const std::string& path) {
    auto out = open_out(path);
    out << "iteration,worker,load_ms,train_ms,populate_buffer_ms,augment_batch_ms,wait_ms\n";
    for (const auto& r : records)
        out << r.iteration << "," << r.worker << "," << fixed6(r.load_ms) << ","
            << fixed6(r.train_ms) << "," << fixed6(r.populate_ms) << ","
            << fixed6(r.augment_ms) << "," << fixed6(r.wait_ms) << "\n";
    if (!out)
        throw io_error("short write: " + path);
}

void write_summary(const run_summary& summary, const std::string& path) {
    auto out = open_out(path);
    // First 10 lines are schema-stable for scripting; keep the order fixed.
    out << "mode=" << to_string(summary.mode) << "\n";
    out << "workers=" << summary.config.n_workers << "\n";
    out << "classes=" << summary.config.n_classes << "\n";
    out << "tasks=" << summary.config.n_tasks << "\n";
    out << "accuracy_T_top1=" << fixed6(summary.accuracy_top1) << "\n";
    out << "accuracy_T_top" << summary.config.effective_topk() << "="
        << fixed6(summary.accuracy_topk) << "\n";
    out << "total_train_seconds=" << fixed6(summary.total_train_seconds) << "\n";
    out << "total_wait_seconds=" << fixed6(summary.total_wait_seconds) << "\n";
    out << "epochs_trained=" << summary.epochs_trained << "\n";
    out << "invariant_violations=" << summary.invariant_violations << "\n";
    out << "\n# configuration\n";
    for (const auto& [key, _] : config_keys())
        out << key << " = " << get_config_key(summary.config, key) << "\n";
    out << "iterations = " << summary.iterations << "\n";
    if (!out)
        throw io_error("short write: " + path);
}

void write_bias_report(const bias_report& report, const std::string& path) {
    auto out = open_out(path);
    out << "slots=" << report.slots << "\n";
    out << "draws=" << report.draws << "\n";
    out << "chi_square=" << fixed6(report.statistic) << "\n";
    out << "df=" << report.df << "\n";
    out << "p_value=" << std::scientific << std::setprecision(9) << report.p_value << "\n";
    if (!out)
        throw io_error("short write: " + path);
}

std::optional<double> read_summary_value(const std::string& path, const std::string& key) {
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        auto k = line.substr(0, eq);
        while (!k.empty() && k.back() == ' ')
            k.pop_back();
        if (k == key) {
            try {
                return std::stod(line.substr(eq + 1));
            } catch (...) {
                return std::nullopt;
            }
        }
    }
    return std::nullopt;
}

} // namespace drb
