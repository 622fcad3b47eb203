// Command-line driver for the separation pipeline.
#include "geosep/io.hpp"
#include "geosep/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace geosep;

int main(int argc, char** argv) {
    CLI::App app{"Blind separation of a trajectory into independent subspaces by curvature"};
    std::string config_path, out_dir = "out", stage_name = "run-all";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool print_config = false;
    std::vector<std::string> to_csv, from_csv;
    app.add_option("--config", config_path, "config file (key = value); defaults when omitted")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "override stimulus.seed");
    app.add_option("--stage", stage_name,
                   "simulate, sense, embed, metric, curvature, separate, chart, evaluate, plot or run-all");
    app.add_option("--out", out_dir, "artifact directory");
    app.add_option("--threads", threads, "worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    app.add_flag("--print-config", print_config, "print the resolved config and exit");
    app.add_option("--to-csv", to_csv, "convert a series file: IN.gbss OUT.csv")->expected(2);
    app.add_option("--from-csv", from_csv, "convert a series file: IN.csv OUT.gbss")->expected(2);
    CLI11_PARSE(app, argc, argv);

    try {
        if (!to_csv.empty()) {
            std::ofstream out(to_csv[1]);
            io::write_series_csv(out, io::load_series(to_csv[0]));
            if (!out) throw FormatError("write failed for " + to_csv[1]);
            return 0;
        }
        if (!from_csv.empty()) {
            std::ifstream in(from_csv[0]);
            if (!in) throw FormatError("cannot read " + from_csv[0]);
            io::save_series(from_csv[1], io::read_series_csv(in));
            return 0;
        }
        auto cfg = config_path.empty() ? pipeline::default_config() : pipeline::parse_config(io::load_text(config_path));
        if (seed) cfg.stimulus.rng_seed = *seed;
        if (threads) cfg.threads = *threads;
        if (print_config) {
            std::cout << pipeline::write_config(cfg);
            return 0;
        }
        const auto stage = pipeline::stage_from_string(stage_name);
        const int code = pipeline::run_stage(stage, cfg, out_dir);
        const std::string report = out_dir + "/" + pipeline::files::kReport;
        if ((stage == pipeline::Stage::Separate || stage == pipeline::Stage::RunAll)) {
            const auto root = separation::read_report(io::load_text(report));
            std::cout << "status " << separation::to_string(root.status) << "  blocks";
            for (int b : root.leaf_sizes()) std::cout << " " << b;
            std::cout << "\n";
        }
        return code;
    } catch (const pipeline::StageError& e) {
        std::cerr << "error in stage " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
}
