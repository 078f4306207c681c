#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "trajsim/commands.hpp"
#include "trajsim/error.hpp"

namespace fs = std::filesystem;
using namespace trajsim;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3, numeric_error = 4 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory similarity toolkit: ground truth, pretraining, fine-tuning and retrieval"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    bool planar = false;
    app.add_option("--config", config_path, "Config file with key = value lines")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");
    app.add_flag("--planar", planar, "Treat coordinates as planar (raw units) in heuristic distances");

    std::string in, out, csv, matrix, ckpt, init, query_id, metric_name = "sspd";
    std::size_t k = 10;
    std::size_t count = 300;
    std::size_t clusters = 10;

    auto* pre = app.add_subcommand("preprocess", "Filter trajectories by bounding box and length; write the split");
    pre->add_option("input", in, "Input trajectory CSV")->required()->check(CLI::ExistingFile);
    pre->add_option("output", out, "Filtered CSV")->required();

    auto* dist = app.add_subcommand("distmatrix", "Compute a heuristic distance matrix");
    dist->add_option("csv", csv, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    dist->add_option("--metric", metric_name, "sspd, hausdorff or frechet")
        ->check(CLI::IsMember({"sspd", "hausdorff", "frechet"}));
    dist->add_option("-o,--out", out, "Output matrix file")->required();

    auto* pt = app.add_subcommand("pretrain", "Bridge pretraining on the training split");
    pt->add_option("csv", csv, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    pt->add_option("-o,--out", out, "Output checkpoint")->required();

    auto* ft = app.add_subcommand("finetune", "Fine-tune against a heuristic matrix");
    ft->add_option("csv", csv, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    ft->add_option("--matrix", matrix, "Distance matrix over the CSV")->required()->check(CLI::ExistingFile);
    ft->add_option("--init", init, "Starting checkpoint (cold start when omitted)")->check(CLI::ExistingFile);
    ft->add_option("-o,--out", out, "Output checkpoint")->required();

    auto* ev = app.add_subcommand("evaluate", "HR@k and Recall-5@20 on the test split");
    ev->add_option("csv", csv, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--matrix", matrix, "Distance matrix over the CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--ckpt", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("-o,--out", out, "Metric report CSV")->required();

    auto* qu = app.add_subcommand("query", "Most similar trajectories to one id");
    qu->add_option("csv", csv, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    qu->add_option("--ckpt", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    qu->add_option("--id", query_id, "Query trajectory id")->required();
    qu->add_option("-k", k, "Number of results");

    auto* sy = app.add_subcommand("synth", "Write a synthetic clustered corpus");
    sy->add_option("--count", count, "Number of trajectories");
    sy->add_option("--clusters", clusters, "Number of clusters");
    sy->add_option("-o,--out", out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::config_error;
    }

    try {
        CommandContext ctx;
        ctx.config = resolve_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt, seed);
        ctx.threads = threads;
        ctx.planar = planar;
        ctx.log = &std::cerr;

        if (*pre) {
            const auto s = cmd_preprocess(ctx, in, out);
            std::cout << "input " << s.input << "\nremoved " << s.removed << "\nkept " << s.kept << "\ntrain "
                      << s.train << "\neval " << s.eval << "\ntest " << s.test << "\n";
        } else if (*dist) {
            cmd_distmatrix(ctx, csv, parse_metric(metric_name), out);
        } else if (*pt) {
            cmd_pretrain(ctx, csv, out);
        } else if (*ft) {
            cmd_finetune(ctx, csv, matrix, init.empty() ? std::nullopt : std::optional<fs::path>(init), out);
        } else if (*ev) {
            const auto report = cmd_evaluate(ctx, csv, matrix, ckpt, out);
            write_report_csv(std::cout, report);
        } else if (*qu) {
            const auto hits = cmd_query(ctx, ckpt, csv, query_id, k);
            std::cout << "rank,traj_id,similarity\n";
            std::cout.precision(17);
            for (std::size_t i = 0; i < hits.size(); ++i) {
                std::cout << i + 1 << ',' << hits[i].id << ',' << hits[i].similarity << '\n';
            }
        } else if (*sy) {
            cmd_synth(ctx, count, clusters, out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return Exit::numeric_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return Exit::data_error;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return Exit::data_error;
    } catch (const std::out_of_range& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return Exit::data_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::failure;
    }
    return Exit::ok;
}
