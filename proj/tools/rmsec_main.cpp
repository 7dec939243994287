#include <CLI11.hpp>

#include "rmsec/cli.hpp"

// rmsec: reward-machine agent workbench. Subcommands: train agents, run
// attack/evaluation sessions, merge metric reports, validate assets.
int main(int argc, char** argv) {
    CLI::App app{"reward-machine agent training and labeling-attack workbench"};
    app.require_subcommand(1);

    rmsec::cli::CliOverrides ovr;
    std::string config_path;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;
    std::string out_flag;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (key = value lines)")->required();
        sub->add_option("--seed", seed_flag, "override the config seed")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--out", out_flag, "override the output directory");
        sub->add_option("--workers", ovr.workers, "worker threads (never affects results)")
            ->default_val(1);
    };

    CLI::App* train = app.add_subcommand("train", "train agents per a training config");
    add_common(train);
    CLI::App* attack = app.add_subcommand("attack", "run an attack/evaluation session");
    add_common(attack);

    CLI::App* report = app.add_subcommand("report", "merge metrics CSVs into one table");
    std::vector<std::string> report_paths;
    report->add_option("files", report_paths, "metrics.csv files")->required();
    report->add_option("--out", out_flag, "write the merged table here (default: stdout)");

    CLI::App* validate = app.add_subcommand("validate", "check maps and reward machines");
    std::string map_path, rm_path, domain_str;
    validate->add_option("--map", map_path, "map file to check");
    validate->add_option("--rm", rm_path, "reward machine file to check");
    validate->add_option("--domain", domain_str, "bind this domain against --map");

    CLI11_PARSE(app, argc, argv);

    if (seed_given) ovr.seed = seed_flag;
    if (!out_flag.empty()) ovr.out = out_flag;

    try {
        if (train->parsed()) return rmsec::cli::cmd_train(config_path, ovr);
        if (attack->parsed()) return rmsec::cli::cmd_attack(config_path, ovr);
        if (report->parsed()) return rmsec::cli::cmd_report(report_paths, ovr);
        if (validate->parsed()) return rmsec::cli::cmd_validate(map_path, rm_path, domain_str);
    } catch (const rmsec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return rmsec::cli::kExitConfig;
    } catch (const rmsec::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return rmsec::cli::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rmsec::cli::kExitRuntime;
    }
    return rmsec::cli::kExitConfig;
}
