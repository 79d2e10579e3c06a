// Command-line surface: prompt-to-image pipeline runs, layout-only runs, and
// the benchmark harness (run + eval).

#include "instancegen/benchmark.hpp"
#include "instancegen/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace instancegen;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;

struct CommonOpts {
    std::string config_path;
    std::string backend_set;  // "", "synthetic", "real"
};

RunConfig make_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = load_run_config_file(opts.config_path);
    if (opts.backend_set == "synthetic") {
        cfg.backends.diffusion = "synthetic";
        cfg.backends.detector = "synthetic";
        cfg.backends.point_segmenter = "synthetic";
        cfg.backends.chat = "rule";
        cfg.backends.judge = "const:yes";
        cfg.backends.similarity = "const:0.5";
    }
    // "real" keeps whatever the config file selected (plugins by name)
    return cfg;
}

int run_and_report(const RunConfig& cfg, bool layout_only) {
    BackendSuite backends = make_backend_suite(cfg.backends);
    RunRecord record = layout_only ? run_layout_stage(cfg, backends) : run_pipeline(cfg, backends);
    std::cout << record.to_json() << "\n";
    if (record.success) return kExitOk;
    return record.error_kind == "backend" ? kExitBackend : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"training-free instance-level guided image generation pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string prompt, out_dir, suite_path, results_dir, judge_name, similarity_name;
    std::uint64_t seed = 0;
    int jobs = 1;
    int limit = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "JSON config file");
        cmd->add_option("--backend-set", opts.backend_set, "synthetic|real")
            ->check(CLI::IsMember({"synthetic", "real", ""}));
    };

    auto* generate = app.add_subcommand("generate", "run the full pipeline for one prompt");
    generate->add_option("--prompt", prompt, "text prompt")->required();
    generate->add_option("--seed", seed, "base seed");
    generate->add_option("--out", out_dir, "run output directory")->required();
    add_common(generate);

    auto* layout_cmd = app.add_subcommand("layout", "stop after the segment summary");
    layout_cmd->add_option("--prompt", prompt, "text prompt")->required();
    layout_cmd->add_option("--seed", seed, "base seed");
    layout_cmd->add_option("--out", out_dir, "run output directory")->required();
    add_common(layout_cmd);

    auto* bench = app.add_subcommand("bench", "benchmark harness");
    bench->require_subcommand(1);

    auto* bench_run_cmd = bench->add_subcommand("run", "generate images for a prompt suite");
    bench_run_cmd->add_option("--suite", suite_path, "suite JSONL file")->required();
    bench_run_cmd->add_option("--out", out_dir, "output directory")->required();
    bench_run_cmd->add_option("--jobs", jobs, "concurrent runs");
    bench_run_cmd->add_option("--limit", limit, "run only the first N prompts (0 = all)");
    bench_run_cmd->add_option("--seed", seed, "base seed");
    add_common(bench_run_cmd);

    auto* bench_eval_cmd = bench->add_subcommand("eval", "score generated images");
    bench_eval_cmd->add_option("--results", results_dir, "directory produced by bench run")
        ->required();
    bench_eval_cmd->add_option("--suite", suite_path, "suite JSONL file")->required();
    bench_eval_cmd->add_option("--judge", judge_name, "judge backend name")->required();
    bench_eval_cmd->add_option("--similarity", similarity_name, "similarity backend name");
    bench_eval_cmd->add_option("--out", out_dir, "report output directory")->required();
    add_common(bench_eval_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed() || layout_cmd->parsed()) {
            RunConfig cfg = make_config(opts);
            cfg.prompt = prompt;
            if (generate->count("--seed") || layout_cmd->count("--seed")) cfg.seed = seed;
            cfg.output_dir = out_dir;
            return run_and_report(cfg, layout_cmd->parsed());
        }

        if (bench_run_cmd->parsed()) {
            RunConfig cfg = make_config(opts);
            if (bench_run_cmd->count("--seed")) cfg.seed = seed;
            auto suite = bench::load_suite(suite_path);
            if (limit > 0 && limit < int(suite.size())) suite.resize(std::size_t(limit));
            auto stats = bench::bench_run(suite, cfg, out_dir, jobs);
            std::cout << "bench run: " << stats.succeeded << "/" << stats.total << " succeeded, "
                      << stats.failed << " failed\n";
            return stats.failed == 0 ? kExitOk : kExitBackend;
        }

        if (bench_eval_cmd->parsed()) {
            RunConfig cfg = make_config(opts);
            auto suite = bench::load_suite(suite_path);
            auto judge = make_judge_backend(judge_name, cfg.backends.policy);
            auto similarity = make_similarity_backend(
                similarity_name.empty() ? cfg.backends.similarity : similarity_name,
                cfg.backends.policy);
            auto result = bench::evaluate(results_dir, suite, *judge, *similarity);
            bench::report(result, out_dir);
            std::cout << "evaluated " << result.evaluated_count << " prompts ("
                      << result.missing_count << " missing images)\n"
                      << "overall vqa_acc " << format_fixed(result.overall_acc, 4) << ", vqa_sim "
                      << format_fixed(result.mean_sim, 4) << "\n";
            return kExitOk;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
