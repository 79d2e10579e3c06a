#pragma once

#include "instancegen/adapters.hpp"
#include "instancegen/attention.hpp"
#include "instancegen/backends.hpp"
#include "instancegen/guidance.hpp"
#include "instancegen/layout.hpp"
#include "instancegen/prompt_parser.hpp"

#include <map>
#include <string>
#include <vector>

namespace instancegen {

struct RunConfig {
    std::string prompt;
    std::uint64_t seed = 0;
    int seed_search_max = 5;
    std::string output_dir = "run";
    BackendSelection backends;
    GenerationConfig generation;
    CaptureSpec capture;
    attn::AggregationConfig aggregation;
    layout::LayoutParams layout_params;
    guide::GuidanceWeights weights;
    guide::OptimizationSchedule schedule;
    int assign_max_attempts = 5;
};

/// Config file: one JSON document, every module's defaults overridable under
/// namespaced keys (generation.*, aggregation.*, layout.*, guidance.*, ...).
RunConfig run_config_from_json(const std::string& json_text);
RunConfig load_run_config_file(const std::string& path);

struct StageTiming {
    std::string stage;
    double ms = 0;
};

struct RunRecord {
    std::string run_id;
    std::map<std::string, std::string> artifacts;  // logical name -> path
    std::vector<StageTiming> timings;
    std::uint64_t seed_used = 0;
    int deficit_repaired = 0;
    bool success = false;
    std::string error_stage;
    std::string error_kind;  // "validation" | "backend"
    std::string error_message;

    std::string to_json(int indent = 2) const;
};

struct SeedSearchOutcome {
    DiffusionRun run;
    layout::InstanceLayout layout;
    std::uint64_t seed_used = 0;
    int deficit_repaired = 0;
    int attempts = 0;
};

/// Probe consecutive seeds until a layout holds at least the required number
/// of instances; otherwise take the attempt with the most masks and repair the
/// deficit by instance copying.
SeedSearchOutcome seed_search(const ParsedPrompt& parsed, const RunConfig& config,
                              BackendSuite& backends);

/// Aggregated attention maps for the parsed prompt's words; words the record
/// does not know come back as zero maps (and a warning) so a disagreeing chat
/// cannot crash the run.
std::vector<std::pair<std::string, GridD>> object_word_maps(const AttentionRecord& record,
                                                            const ParsedPrompt& parsed,
                                                            const attn::AggregationConfig& agg);
std::vector<std::pair<std::string, GridD>> attribute_word_maps(const AttentionRecord& record,
                                                               const ParsedPrompt& parsed,
                                                               const attn::AggregationConfig& agg);

/// Full pipeline: parse -> seed search -> summary -> assignment -> guided
/// generation, persisting every stage artifact under config.output_dir.
/// Stage failures are recorded (stage name + error) instead of thrown.
RunRecord run_pipeline(const RunConfig& config, BackendSuite& backends);

/// run_pipeline stopping after segments.json (the `layout` CLI subcommand).
RunRecord run_layout_stage(const RunConfig& config, BackendSuite& backends);

}  // namespace instancegen
