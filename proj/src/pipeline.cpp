#include "instancegen/pipeline.hpp"

#include "instancegen/assignment.hpp"

#include <json.hpp>

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>

namespace instancegen {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

IndexRange range_from(const json& j, IndexRange fallback) {
    if (j.is_array() && j.size() == 2) return {j[0].get<int>(), j[1].get<int>()};
    if (j.is_array() && j.empty()) return {0, -1};
    return fallback;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig run_config_from_json(const std::string& json_text) {
    RunConfig cfg;
    json doc = json::parse(json_text);

    maybe(doc, "prompt", cfg.prompt);
    maybe(doc, "seed", cfg.seed);
    maybe(doc, "seed_search_max", cfg.seed_search_max);
    maybe(doc, "output_dir", cfg.output_dir);
    if (cfg.seed_search_max < 1)
        throw ValidationError("config: seed_search_max must be >= 1");

    if (doc.contains("backends")) {
        const json& b = doc["backends"];
        maybe(b, "diffusion", cfg.backends.diffusion);
        maybe(b, "detector", cfg.backends.detector);
        maybe(b, "point_segmenter", cfg.backends.point_segmenter);
        maybe(b, "chat", cfg.backends.chat);
        maybe(b, "judge", cfg.backends.judge);
        maybe(b, "similarity", cfg.backends.similarity);
        maybe(b, "scene_fixture", cfg.backends.scene_fixture);
        maybe(b, "timeout_s", cfg.backends.policy.timeout_s);
        maybe(b, "retries", cfg.backends.policy.retries);
    }
    if (doc.contains("generation")) {
        const json& g = doc["generation"];
        maybe(g, "num_steps", cfg.generation.num_steps);
        maybe(g, "guidance_scale", cfg.generation.guidance_scale);
        maybe(g, "image_size", cfg.generation.image_size);
        maybe(g, "attn_resolution", cfg.generation.attn_resolution);
        maybe(g, "self_resolution", cfg.generation.self_resolution);
        maybe(g, "latent_channels", cfg.generation.latent_channels);
    }
    if (doc.contains("capture")) {
        const json& c = doc["capture"];
        if (c.contains("cross_layers")) cfg.capture.cross_layers = range_from(c["cross_layers"], cfg.capture.cross_layers);
        if (c.contains("cross_timesteps")) cfg.capture.cross_timesteps = range_from(c["cross_timesteps"], cfg.capture.cross_timesteps);
        if (c.contains("self_layers")) cfg.capture.self_layers = range_from(c["self_layers"], cfg.capture.self_layers);
        if (c.contains("self_timesteps")) cfg.capture.self_timesteps = range_from(c["self_timesteps"], cfg.capture.self_timesteps);
        if (c.contains("cfg_branch"))
            cfg.capture.cfg_branch = c["cfg_branch"].get<std::string>() == "combined"
                                         ? CaptureSpec::CfgBranch::Combined
                                         : CaptureSpec::CfgBranch::Conditional;
    }
    if (doc.contains("aggregation")) {
        const json& a = doc["aggregation"];
        if (a.contains("timestep_range")) cfg.aggregation.timestep_range = range_from(a["timestep_range"], cfg.aggregation.timestep_range);
        if (a.contains("layer_range")) cfg.aggregation.layer_range = range_from(a["layer_range"], cfg.aggregation.layer_range);
        maybe(a, "peak_min_distance", cfg.aggregation.peak_min_distance);
    }
    if (doc.contains("layout")) {
        const json& l = doc["layout"];
        maybe(l, "oversize_fraction", cfg.layout_params.oversize_fraction);
        maybe(l, "min_mask_pixels", cfg.layout_params.min_mask_pixels);
        maybe(l, "margin_pixels", cfg.layout_params.margin_pixels);
        maybe(l, "merge_overlap_fraction", cfg.layout_params.merge_overlap_fraction);
        maybe(l, "copy_max_attempts", cfg.layout_params.copy_max_attempts);
    }
    if (doc.contains("guidance")) {
        const json& g = doc["guidance"];
        maybe(g, "foreground_pixel_weight", cfg.weights.foreground_pixel_weight);
        maybe(g, "object_weight", cfg.weights.object_weight);
        maybe(g, "attr_weight", cfg.weights.attr_weight);
        maybe(g, "bg_weight", cfg.weights.bg_weight);
        maybe(g, "suppression_delta", cfg.weights.suppression_delta);
        maybe(g, "clamp_epsilon", cfg.weights.clamp_epsilon);
        if (!(cfg.weights.clamp_epsilon > 0.0 && cfg.weights.clamp_epsilon < 0.5))
            throw ValidationError("config: clamp_epsilon must be in (0, 0.5)");
        maybe(g, "learning_rate", cfg.schedule.learning_rate);
        maybe(g, "base_iterations", cfg.schedule.base_iterations);
        if (g.contains("optimize_window"))
            cfg.schedule.optimize_window = range_from(g["optimize_window"], cfg.schedule.optimize_window);
        if (g.contains("extra_iterations")) {
            cfg.schedule.extra_iterations.clear();
            for (auto& [k, v] : g["extra_iterations"].items())
                cfg.schedule.extra_iterations[std::stoi(k)] = v.get<int>();
        }
        if (g.contains("self_mask_window")) {
            cfg.schedule.self_mask_timesteps = range_from(g["self_mask_window"].value("timesteps", json::array()), cfg.schedule.self_mask_timesteps);
            cfg.schedule.self_mask_layers = range_from(g["self_mask_window"].value("layers", json::array()), cfg.schedule.self_mask_layers);
        }
        if (g.contains("cross_mask_window")) {
            cfg.schedule.cross_mask_timesteps = range_from(g["cross_mask_window"].value("timesteps", json::array()), cfg.schedule.cross_mask_timesteps);
            cfg.schedule.cross_mask_layers = range_from(g["cross_mask_window"].value("layers", json::array()), cfg.schedule.cross_mask_layers);
        }
    }
    if (doc.contains("assignment")) maybe(doc["assignment"], "max_attempts", cfg.assign_max_attempts);

    cfg.backends.image_size = cfg.generation.image_size;
    return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
    return run_config_from_json(read_text_file(path));
}

// ---------------------------------------------------------------------------
// RunRecord
// ---------------------------------------------------------------------------

std::string RunRecord::to_json(int indent) const {
    nlohmann::ordered_json doc;
    doc["run_id"] = run_id;
    doc["success"] = success;
    doc["seed_used"] = seed_used;
    doc["deficit_repaired"] = deficit_repaired;
    doc["artifacts"] = artifacts;
    doc["timings_ms"] = nlohmann::ordered_json::object();
    for (const auto& t : timings) doc["timings_ms"][t.stage] = t.ms;
    if (!success) {
        doc["error"] = {{"stage", error_stage}, {"kind", error_kind}, {"message", error_message}};
    }
    return doc.dump(indent);
}

// ---------------------------------------------------------------------------
// Seed search
// ---------------------------------------------------------------------------

SeedSearchOutcome seed_search(const ParsedPrompt& parsed, const RunConfig& config,
                              BackendSuite& backends) {
    backends.require("diffusion");
    backends.require("detector");
    backends.require("point_segmenter");

    const int required = required_instance_count(parsed);
    SeedSearchOutcome best;
    int best_count = -1;

    for (int attempt = 0; attempt < config.seed_search_max; ++attempt) {
        std::uint64_t seed = config.seed + std::uint64_t(attempt);
        DiffusionRun run = diffusion_generate(*backends.diffusion, config.prompt, seed,
                                              config.generation, config.capture);
        layout::InstanceLayout lay =
            layout::build_layout(run.image, run.attention, parsed, *backends.detector,
                                 *backends.point_segmenter, config.aggregation, config.layout_params);
        int count = int(lay.masks.size());
        log_info("seed search attempt " + std::to_string(attempt + 1) + " (seed " +
                 std::to_string(seed) + "): " + std::to_string(count) + "/" +
                 std::to_string(required) + " masks");
        if (count >= required) {
            return {std::move(run), std::move(lay), seed, 0, attempt + 1};
        }
        if (count > best_count) {
            best_count = count;
            best.run = std::move(run);
            best.layout = std::move(lay);
            best.seed_used = seed;
        }
    }

    best.attempts = config.seed_search_max;
    best.deficit_repaired = required - best_count;
    log_info("seed search exhausted; copying " + std::to_string(best.deficit_repaired) +
             " instances into the best layout (seed " + std::to_string(best.seed_used) + ")");
    best.layout = layout::copy_instances(std::move(best.layout), best.deficit_repaired,
                                         mix64(best.seed_used ^ 0xc0ffee00d1ceull),
                                         config.layout_params);
    return best;
}

// ---------------------------------------------------------------------------
// Word maps
// ---------------------------------------------------------------------------

namespace {
GridD map_or_zeros(const AttentionRecord& record, const std::string& word,
                   const attn::AggregationConfig& agg) {
    if (!record.has_word(word)) {
        log_warn("attention record has no tokens for '" + word + "'; using a zero map");
        return GridD::Zero(record.attn_rows, record.attn_cols);
    }
    return attn::aggregate_word_map(record, word, agg);
}
}  // namespace

std::vector<std::pair<std::string, GridD>> object_word_maps(const AttentionRecord& record,
                                                            const ParsedPrompt& parsed,
                                                            const attn::AggregationConfig& agg) {
    std::vector<std::pair<std::string, GridD>> maps;
    for (const auto& obj : parsed.objects)
        maps.emplace_back(obj.word, map_or_zeros(record, obj.word, agg));
    return maps;
}

std::vector<std::pair<std::string, GridD>> attribute_word_maps(const AttentionRecord& record,
                                                               const ParsedPrompt& parsed,
                                                               const attn::AggregationConfig& agg) {
    std::vector<std::pair<std::string, GridD>> maps;
    for (const auto& obj : parsed.objects)
        for (const auto& attr : obj.attributes)
            maps.emplace_back(attr.text, map_or_zeros(record, attr.text, agg));
    return maps;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

class StageClock {
public:
    explicit StageClock(RunRecord& record) : record_(record) {}
    template <typename F>
    auto time(const std::string& stage, F&& f) {
        auto start = std::chrono::steady_clock::now();
        auto finish = [&] {
            auto end = std::chrono::steady_clock::now();
            record_.timings.push_back(
                {stage, std::chrono::duration<double, std::milli>(end - start).count()});
        };
        try {
            auto result = f();
            finish();
            return result;
        } catch (...) {
            finish();
            throw;
        }
    }

private:
    RunRecord& record_;
};

RunRecord run_stages(const RunConfig& config, BackendSuite& backends, bool layout_only) {
    RunRecord record;
    record.run_id = sanitize_filename(config.prompt.substr(0, 32)) + "_" + std::to_string(config.seed);
    fs::path out_dir(config.output_dir);
    fs::create_directories(out_dir);
    StageClock clock(record);

    auto persist = [&](const std::string& name, const std::string& filename,
                       const std::string& content) {
        fs::path path = out_dir / filename;
        write_text_file(path.string(), content);
        record.artifacts[name] = path.string();
    };
    auto persist_png = [&](const std::string& name, const std::string& filename,
                           const ImageU8& img) {
        fs::path path = out_dir / filename;
        write_png(path.string(), img);
        record.artifacts[name] = path.string();
    };

    std::string stage = "parse";
    try {
        backends.require("chat");
        ParsedPrompt parsed = clock.time(stage, [&] { return parse_prompt(config.prompt, *backends.chat); });
        persist("parsed_prompt", "parsed_prompt.json", serialize_parsed(parsed));

        stage = "seed_search";
        SeedSearchOutcome found = clock.time(stage, [&] { return seed_search(parsed, config, backends); });
        record.seed_used = found.seed_used;
        record.deficit_repaired = found.deficit_repaired;
        persist_png("initial", "initial.png", found.run.image);
        persist("layout", "layout.json", layout::layout_to_json(found.layout));
        persist_png("layout_png", "layout.png", layout::render_layout(found.run.image, found.layout));

        stage = "summary";
        auto word_maps = object_word_maps(found.run.attention, parsed, config.aggregation);
        auto attr_maps = attribute_word_maps(found.run.attention, parsed, config.aggregation);
        layout::SegmentSummary summary =
            clock.time(stage, [&] { return layout::build_summary(found.layout, word_maps, attr_maps); });
        persist("segments", "segments.json", summary.to_json());

        // per-word attention debug dumps
        fs::create_directories(out_dir / "attention");
        for (const auto& [word, map] : word_maps) {
            ImageU8 img = grid_to_image(map, 4);
            if (found.run.attention.has_word(word)) {
                attn::WordAttention wa = attn::analyze_word(found.run.attention, word, config.aggregation);
                for (const auto& a : wa.anchors) draw_dot(img, a.row * 4 + 2, a.col * 4 + 2, 2, 0, 255, 0);
            }
            fs::path p = out_dir / "attention" / (sanitize_filename(word) + ".png");
            write_png(p.string(), img);
        }

        if (layout_only) {
            record.success = true;
            persist("run", "run.json", record.to_json());
            return record;
        }

        stage = "assignment";
        assign::AssignmentResult assignment = clock.time(stage, [&] {
            return assign::assign_instances(parsed, summary, *backends.chat, config.assign_max_attempts);
        });
        persist("assignment", "assignment.json", assign::plan_to_json(assignment.plan));
        persist("assignment_transcript", "assignment_transcript.txt", assignment.transcript);

        stage = "guided_generation";
        guide::GuidedResult guided = clock.time(stage, [&] {
            return guide::run_guided_generation(config.prompt, assignment.plan, found.layout,
                                                found.run, config.schedule, config.weights,
                                                *backends.diffusion, config.generation);
        });
        persist_png("output", "output.png", guided.run.image);
        persist("guidance_trace", "guidance_trace.csv", guided.trace.to_csv());

        record.success = true;
    } catch (const ValidationError& e) {
        record.error_stage = stage;
        record.error_kind = "validation";
        record.error_message = e.what();
        log_message(LogLevel::Error, "pipeline stage '" + stage + "' failed: " + e.what());
    } catch (const BackendError& e) {
        record.error_stage = stage;
        record.error_kind = "backend";
        record.error_message = e.what();
        log_message(LogLevel::Error, "pipeline stage '" + stage + "' failed: " + e.what());
    }

    persist("run", "run.json", record.to_json());
    return record;
}

}  // namespace

RunRecord run_pipeline(const RunConfig& config, BackendSuite& backends) {
    return run_stages(config, backends, false);
}

RunRecord run_layout_stage(const RunConfig& config, BackendSuite& backends) {
    return run_stages(config, backends, true);
}

}  // namespace instancegen
