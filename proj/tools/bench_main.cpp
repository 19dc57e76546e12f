// bench: run the accuracy grid for the weightless agent and its baselines.
//
//   bench run    --config cell.json  [--results results.json]
//   bench suite  --config grid.json  [--results results.json]
//   bench report --format csv|json|md --out report.md [--results results.json]

#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "wnnrec/bench.hpp"

namespace {

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw wnnrec::IoError("cannot open " + path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw wnnrec::FormatError(path + ": " + e.what());
    }
}

void write_results(const std::vector<wnnrec::ResultRow>& rows, const std::string& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << wnnrec::rows_to_json(rows).dump(2) << '\n')) {
        throw wnnrec::IoError("cannot write " + path);
    }
}

void print_summary(const std::vector<wnnrec::ResultRow>& rows)
{
    std::cout << wnnrec::format_rows(rows, wnnrec::ReportFormat::markdown);
    for (const auto& r : rows) {
        std::cout << wnnrec::to_string(r.model) << " R=" << r.reviews_per_user << " macro=" << r.macro_accuracy
                  << " macro@0.5=" << r.macro_accuracy_half << " micro=" << r.micro_accuracy
                  << " users=" << r.n_users_effective << " train_s=" << r.train_time_s
                  << " predict_s=" << r.predict_time_s << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weightless-agent recommender benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    std::string results_path = "bench_results.json";
    std::string format = "md";
    std::string out_path;

    auto* run = app.add_subcommand("run", "Run one experiment cell");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--results", results_path, "Where to write result rows (JSON)");

    auto* suite = app.add_subcommand("suite", "Run the models x reviews-per-user grid");
    suite->add_option("--config", config_path, "Suite config (JSON)")->required();
    suite->add_option("--results", results_path, "Where to write result rows (JSON)");

    auto* report = app.add_subcommand("report", "Render stored result rows");
    report->add_option("--format", format, "csv | json | md")->check(CLI::IsMember({"csv", "json", "md"}));
    report->add_option("--out", out_path, "Output path")->required();
    report->add_option("--results", results_path, "Result rows written by run/suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = wnnrec::experiment_config_from_json(read_json(config_path));
            cfg.data = wnnrec::apply_env_overrides(cfg.data);
            const auto corpus = wnnrec::load_corpus(cfg.data);
            const std::vector<wnnrec::ResultRow> rows{wnnrec::run_experiment(cfg, corpus)};
            write_results(rows, results_path);
            print_summary(rows);
        } else if (*suite) {
            auto grid = wnnrec::suite_config_from_json(read_json(config_path));
            grid.base.data = wnnrec::apply_env_overrides(grid.base.data);
            const auto corpus = wnnrec::load_corpus(grid.base.data);
            const auto rows = wnnrec::run_suite(grid, corpus);
            write_results(rows, results_path);
            print_summary(rows);
        } else if (*report) {
            const auto rows = wnnrec::rows_from_json(read_json(results_path));
            wnnrec::emit_report(rows, wnnrec::report_format_from_string(format), out_path);
        }
    } catch (const std::exception& e) {
        std::cerr << "bench: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
