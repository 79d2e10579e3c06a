#pragma once

#include "instancegen/backends.hpp"
#include "instancegen/pipeline.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace instancegen::bench {

enum class Tier { A, B, C };
enum class CountBand { Low, Mid, High };  // 2-3 / 4-5 / 6-7 objects

std::string tier_name(Tier t);
Tier tier_from_name(const std::string& name);
std::string band_name(CountBand b);
CountBand band_from_name(const std::string& name);

/// One suite entry. Tier A carries one (counting) question, tier B two
/// (+attribute counting), tier C three (+spatial).
struct BenchmarkPrompt {
    int family_id = 0;  // 1..60
    Tier tier = Tier::A;
    CountBand band = CountBand::Low;
    std::string prompt;
    std::vector<std::string> questions;
    std::string provenance;  // "paper" for verbatim prompts, "authored" otherwise

    /// Stable key used for run directories and image lookup, e.g. "007_B_mid".
    std::string key() const;
};

/// Load the JSONL suite and enforce its structure: 540 prompts, 60 families
/// with 9 variants each, per-tier question counts, no duplicate prompts.
std::vector<BenchmarkPrompt> load_suite(const std::string& path);

/// Canonical JSONL form; load_suite(file) -> suite_to_jsonl reproduces the
/// file byte for byte.
std::string suite_to_jsonl(const std::vector<BenchmarkPrompt>& suite);

/// 1 iff every answer is positive; empty answer vectors are an error.
int score_vqa_accuracy(const std::vector<bool>& answers);

struct PromptResult {
    BenchmarkPrompt prompt;
    std::vector<bool> answers;
    int vqa_acc = 0;
    double vqa_sim = 0.0;
    std::string image_path;
    bool evaluated = false;  // false when the image is missing
};

struct EvalResult {
    std::vector<PromptResult> per_prompt;
    std::map<std::string, double> acc_by_tier;   // "A"/"B"/"C"
    std::map<std::string, double> acc_by_band;   // "low"/"mid"/"high"
    double overall_acc = 0.0;
    double mean_sim = 0.0;
    int evaluated_count = 0;
    int missing_count = 0;  // prompts without an image (excluded from means)
};

/// Ask the judge every paired question per generated image and aggregate.
/// Images are looked up as <results_dir>/<key>/output.png.
EvalResult evaluate(const std::string& results_dir, const std::vector<BenchmarkPrompt>& suite,
                    JudgeBackend& judge, SimilarityBackend& similarity);

/// results.csv, summary.json, and the two bar charts.
void report(const EvalResult& result, const std::string& out_dir);

/// Generate images for every suite prompt with the pipeline; one run directory
/// per prompt under out_dir. Runs execute concurrently up to `jobs`, each with
/// its own backend suite built from `config.backends`.
struct BenchRunStats {
    int total = 0;
    int succeeded = 0;
    int failed = 0;
};
BenchRunStats bench_run(const std::vector<BenchmarkPrompt>& suite, const RunConfig& base_config,
                        const std::string& out_dir, int jobs = 1);

}  // namespace instancegen::bench
