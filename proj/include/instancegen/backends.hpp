#pragma once

#include "instancegen/common.hpp"
#include "instancegen/grid.hpp"
#include "instancegen/image.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace instancegen {

// ---------------------------------------------------------------------------
// Attention capture
// ---------------------------------------------------------------------------

/// Inclusive [lo, hi] index range; empty() ranges capture nothing.
struct IndexRange {
    int lo = 0;
    int hi = -1;
    bool empty() const { return hi < lo; }
    bool contains(int v) const { return v >= lo && v <= hi; }
    int count() const { return empty() ? 0 : hi - lo + 1; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct CaptureSpec {
    IndexRange cross_layers{2, 20};
    IndexRange cross_timesteps{0, 25};
    // self maps are big; capture none unless a consumer asks
    IndexRange self_layers{0, -1};
    IndexRange self_timesteps{0, -1};
    // Under classifier-free guidance a backend may expose the conditional
    // branch only or the combined maps; we do not pick for the model.
    enum class CfgBranch { Conditional, Combined } cfg_branch = CfgBranch::Conditional;
};

struct LayerTimestepToken {
    int layer = 0;
    int timestep = 0;
    int token = 0;
    friend auto operator<=>(const LayerTimestepToken&, const LayerTimestepToken&) = default;
};

struct LayerTimestep {
    int layer = 0;
    int timestep = 0;
    friend auto operator<=>(const LayerTimestep&, const LayerTimestep&) = default;
};

/// Cross/self attention captured from one diffusion run.
struct AttentionRecord {
    // (layer, timestep, token) -> map in [0,1] at attn_rows x attn_cols
    std::map<LayerTimestepToken, GridD> cross;
    // (layer, timestep) -> pixel-pair map, (self_rows*self_cols)^2;
    // pixel pairs are row-major flattened, p = row * self_cols + col
    std::map<LayerTimestep, GridD> self_maps;
    // word -> token indices associated with it
    std::map<std::string, std::vector<int>> token_grouping;
    int attn_rows = 0;
    int attn_cols = 0;
    int self_rows = 0;
    int self_cols = 0;

    bool has_word(const std::string& word) const { return token_grouping.count(word) > 0; }
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationConfig {
    int num_steps = 26;
    double guidance_scale = 4.0;
    int image_size = 128;       // square output raster
    int attn_resolution = 32;   // cross-attention / latent grid
    int self_resolution = 12;   // self-attention grid
    int latent_channels = 2;
    friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

/// Multi-channel latent grid.
struct Latent {
    std::vector<GridD> channels;

    static Latent zeros_like(const Latent& other) {
        Latent l;
        for (const auto& ch : other.channels) l.channels.push_back(GridD::Zero(ch.rows(), ch.cols()));
        return l;
    }
    bool same_shape(const Latent& other) const {
        if (channels.size() != other.channels.size()) return false;
        for (std::size_t i = 0; i < channels.size(); ++i)
            if (channels[i].rows() != other.channels[i].rows() ||
                channels[i].cols() != other.channels[i].cols())
                return false;
        return true;
    }
    bool all_finite() const {
        for (const auto& ch : channels)
            if (!ch.isFinite().all()) return false;
        return true;
    }
};

struct DiffusionRun {
    ImageU8 image;
    std::vector<Latent> latents_per_timestep;  // size num_steps + 1
    AttentionRecord attention;
    std::uint64_t seed = 0;
    int num_steps = 0;
    double guidance_scale = 0.0;
};

// ---------------------------------------------------------------------------
// Guidance hooks
// ---------------------------------------------------------------------------

/// View of live model state handed to the latent-loss callback. Word maps are
/// functions of latent channel 0 with an elementwise (diagonal) jacobian,
/// which is what word_map_grad exposes.
class LatentProbe {
public:
    virtual ~LatentProbe() = default;
    virtual int timestep() const = 0;
    virtual const Latent& latents() const = 0;
    /// Live attention map for a word, values in [0, 1].
    virtual GridD word_map(const std::string& word) const = 0;
    /// Elementwise d(word_map)/d(latent channel 0).
    virtual GridD word_map_grad(const std::string& word) const = 0;
};

/// Hooks a guided generation routes its internals through. All members are
/// optional; a default-constructed value reproduces the plain run.
struct GuidanceHooks {
    /// Gradient steps to apply to z^(t) before denoising step t.
    std::function<int(int timestep)> iterations;
    double learning_rate = 0.015;
    /// Loss over live state; fills grad (same shape as the latents) and
    /// returns the scalar loss.
    std::function<double(const LatentProbe&, Latent& grad)> latent_loss;
    /// In-place transform of a cross-attention score map.
    std::function<void(int layer, int timestep, int token, GridD& scores)> cross_transform;
    /// In-place transform of a self-attention score map.
    std::function<void(int layer, int timestep, GridD& scores)> self_transform;

    bool empty() const { return !iterations && !latent_loss && !cross_transform && !self_transform; }
};

// ---------------------------------------------------------------------------
// Backend interfaces
// ---------------------------------------------------------------------------

struct Detection {
    MaskGrid mask;  // binary, image resolution
    std::string label;
    double confidence = 0.0;
};

class DiffusionBackend {
public:
    virtual ~DiffusionBackend() = default;
    virtual int num_layers() const = 0;
    virtual DiffusionRun generate(const std::string& prompt, std::uint64_t seed,
                                  const GenerationConfig& config, const CaptureSpec& capture) = 0;
    virtual DiffusionRun guided_generate(const std::string& prompt, std::uint64_t seed,
                                         const GenerationConfig& config, const CaptureSpec& capture,
                                         const GuidanceHooks& hooks) = 0;
};

class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    virtual std::vector<Detection> detect(const ImageU8& image) = 0;
};

class PointSegmenterBackend {
public:
    virtual ~PointSegmenterBackend() = default;
    /// Binary mask containing `point`, or an empty mask if the segmenter abstains.
    virtual MaskGrid segment_at(const ImageU8& image, Pixel point) = 0;
};

struct ChatTurn {
    std::string role;  // "user" | "assistant"
    std::string content;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const std::string& instruction,
                                 const std::vector<ChatTurn>& transcript) = 0;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    /// Raw reply to a yes/no question about the referenced image. image_ref is
    /// an opaque handle (path or fixture id); adapters load it as needed.
    virtual std::string answer(const std::string& image_ref, const std::string& question) = 0;
};

class SimilarityBackend {
public:
    virtual ~SimilarityBackend() = default;
    virtual double score(const std::string& image_ref, const std::string& prompt) = 0;
    /// Batched variant; scores returned in input order.
    virtual std::vector<double> score_batch(const std::string& image_ref,
                                            const std::vector<std::string>& prompts);
};

/// One handle per capability. Handles are single-owner per pipeline run;
/// synthetic backends are pure and safely shareable read-only.
struct BackendSuite {
    std::shared_ptr<DiffusionBackend> diffusion;
    std::shared_ptr<DetectorBackend> detector;
    std::shared_ptr<PointSegmenterBackend> point_segmenter;
    std::shared_ptr<ChatBackend> chat;
    std::shared_ptr<JudgeBackend> judge;
    std::shared_ptr<SimilarityBackend> similarity;

    void require(const std::string& capability) const;
};

// ---------------------------------------------------------------------------
// Contract-checked entry points (the rest of the pipeline calls these, not the
// virtuals directly)
// ---------------------------------------------------------------------------

DiffusionRun diffusion_generate(DiffusionBackend& backend, const std::string& prompt,
                                std::uint64_t seed, const GenerationConfig& config,
                                const CaptureSpec& capture);

DiffusionRun diffusion_guided_generate(DiffusionBackend& backend, const std::string& prompt,
                                       std::uint64_t seed, const GenerationConfig& config,
                                       const CaptureSpec& capture, const GuidanceHooks& hooks);

/// Detector output with adapter-contract validation (mask shape/binaries,
/// confidence in [0,1]).
std::vector<Detection> detect_instances(DetectorBackend& backend, const ImageU8& image);

MaskGrid segment_at_point(PointSegmenterBackend& backend, const ImageU8& image, Pixel point);

std::string chat_complete(ChatBackend& backend, const std::string& instruction,
                          const std::vector<ChatTurn>& transcript = {});

/// Parses the judge reply ("yes"/"no", case-insensitive, leading word); one
/// reprompt on anything else, then a BackendError.
bool judge_yes_no(JudgeBackend& judge, const std::string& image_ref, const std::string& question);

double similarity_score(SimilarityBackend& backend, const std::string& image_ref,
                        const std::string& prompt);

}  // namespace instancegen
