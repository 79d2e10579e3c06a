#include "instancegen/backends.hpp"

#include <algorithm>
#include <cctype>

namespace instancegen {

std::vector<double> SimilarityBackend::score_batch(const std::string& image_ref,
                                                   const std::vector<std::string>& prompts) {
    std::vector<double> out;
    out.reserve(prompts.size());
    for (const auto& p : prompts) out.push_back(score(image_ref, p));
    return out;
}

void BackendSuite::require(const std::string& capability) const {
    bool ok = (capability == "diffusion" && diffusion) || (capability == "detector" && detector) ||
              (capability == "point_segmenter" && point_segmenter) ||
              (capability == "chat" && chat) || (capability == "judge" && judge) ||
              (capability == "similarity" && similarity);
    if (!ok) throw BackendError("backend unavailable: " + capability);
}

namespace {

void check_capture(const CaptureSpec& capture, int num_layers, int num_steps) {
    auto in_bounds = [](const IndexRange& r, int n) {
        return r.empty() || (r.lo >= 0 && r.hi < n);
    };
    if (!in_bounds(capture.cross_layers, num_layers) ||
        !in_bounds(capture.self_layers, num_layers))
        throw ValidationError("capture range out of bounds: layer range exceeds backend layers");
    if (!in_bounds(capture.cross_timesteps, num_steps) ||
        !in_bounds(capture.self_timesteps, num_steps))
        throw ValidationError("capture range out of bounds: timestep range exceeds num_steps");
}

void check_run(const DiffusionRun& run, const GenerationConfig& config) {
    if (int(run.latents_per_timestep.size()) != config.num_steps + 1)
        throw BackendError("diffusion run latent count != num_steps + 1");
    for (const auto& [key, map] : run.attention.cross) {
        (void)key;
        if (!map.isFinite().all() || (map < 0.0).any())
            throw BackendError("captured cross attention must be finite and >= 0");
    }
    for (const auto& [word, tokens] : run.attention.token_grouping) {
        for (int tok : tokens) {
            bool found = false;
            for (const auto& [key, map] : run.attention.cross) {
                (void)map;
                if (key.token == tok) {
                    found = true;
                    break;
                }
            }
            if (!found && !run.attention.cross.empty())
                throw BackendError("token grouping references token " + std::to_string(tok) +
                                   " (word '" + word + "') absent from captured cross maps");
        }
    }
}

}  // namespace

DiffusionRun diffusion_generate(DiffusionBackend& backend, const std::string& prompt,
                                std::uint64_t seed, const GenerationConfig& config,
                                const CaptureSpec& capture) {
    if (config.num_steps < 1) throw ValidationError("num_steps must be >= 1");
    check_capture(capture, backend.num_layers(), config.num_steps);
    DiffusionRun run = backend.generate(prompt, seed, config, capture);
    check_run(run, config);
    return run;
}

DiffusionRun diffusion_guided_generate(DiffusionBackend& backend, const std::string& prompt,
                                       std::uint64_t seed, const GenerationConfig& config,
                                       const CaptureSpec& capture, const GuidanceHooks& hooks) {
    if (config.num_steps < 1) throw ValidationError("num_steps must be >= 1");
    check_capture(capture, backend.num_layers(), config.num_steps);
    DiffusionRun run = backend.guided_generate(prompt, seed, config, capture, hooks);
    check_run(run, config);
    return run;
}

std::vector<Detection> detect_instances(DetectorBackend& backend, const ImageU8& image) {
    if (image.empty()) throw ValidationError("detect_instances: empty image");
    std::vector<Detection> raw = backend.detect(image);
    for (const auto& d : raw) {
        if (d.confidence < 0.0 || d.confidence > 1.0)
            throw ValidationError("detector confidence out of [0,1]: " +
                                  std::to_string(d.confidence));
        if (d.mask.rows() != image.height || d.mask.cols() != image.width)
            throw ValidationError("detector mask resolution != image resolution");
        if ((d.mask > 1).any()) throw ValidationError("detector mask is not binary");
    }
    return raw;
}

MaskGrid segment_at_point(PointSegmenterBackend& backend, const ImageU8& image, Pixel point) {
    if (point.row < 0 || point.col < 0 || point.row >= image.height || point.col >= image.width)
        throw ValidationError("segment_at_point: point out of image bounds");
    MaskGrid mask = backend.segment_at(image, point);
    if (mask.rows() != image.height || mask.cols() != image.width)
        throw BackendError("point segmenter mask resolution != image resolution");
    return mask;
}

std::string chat_complete(ChatBackend& backend, const std::string& instruction,
                          const std::vector<ChatTurn>& transcript) {
    std::string reply = backend.complete(instruction, transcript);
    if (reply.empty()) throw BackendError("chat backend returned an empty response");
    return reply;
}

namespace {
std::optional<bool> parse_yes_no(const std::string& reply) {
    std::string head;
    for (char c : reply) {
        if (std::isalpha(static_cast<unsigned char>(c)))
            head.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        else if (!head.empty())
            break;
        if (head.size() > 3) break;
    }
    if (head == "yes") return true;
    if (head == "no") return false;
    return std::nullopt;
}
}  // namespace

bool judge_yes_no(JudgeBackend& judge, const std::string& image_ref, const std::string& question) {
    std::string reply = judge.answer(image_ref, question);
    if (auto v = parse_yes_no(reply)) return *v;
    // one reprompt, then give up
    reply = judge.answer(image_ref, question + " Answer strictly yes or no.");
    if (auto v = parse_yes_no(reply)) return *v;
    throw BackendError("judge reply is not yes/no: '" + reply + "'");
}

double similarity_score(SimilarityBackend& backend, const std::string& image_ref,
                        const std::string& prompt) {
    double s = backend.score(image_ref, prompt);
    if (!(s >= 0.0 && s <= 1.0))
        throw BackendError("similarity score out of [0,1]: " + std::to_string(s));
    return s;
}

}  // namespace instancegen
