#pragma once

#include "instancegen/backends.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace instancegen::synth {

// ---------------------------------------------------------------------------
// Prompt structure grammar
//
// The synthetic stack understands a small, regular prompt grammar:
//   "<count> <noun>" clauses introduce objects ("two dogs and three cats ..."),
//   "<count> of the <noun> is/are <attr>" introduces instance attributes, and
//   "the <desc with noun> is <attr>" introduces a spatially constrained
//   attribute ("the cat on the far right is a sphinx"). Environment nouns
//   after prepositions ("in a forest") are ignored.
// Both the synthetic diffusion model and the rule chat share this parse, so a
// whole pipeline run agrees with itself without any external model.
// ---------------------------------------------------------------------------

struct PromptObject {
    std::string word;  // surface form as written in the prompt
    int count = 0;
};

struct PromptAttribute {
    std::string text;     // attribute text with articles stripped
    std::string object;   // owning object word
    int amount = 1;
    std::string spatial;  // optional constraint text, kept opaque
};

struct PromptStructure {
    std::vector<PromptObject> objects;
    std::vector<PromptAttribute> attributes;

    int total_count() const {
        int n = 0;
        for (const auto& o : objects) n += o.count;
        return n;
    }
};

PromptStructure parse_prompt_structure(const std::string& prompt);

/// True if `candidate` names `object_word` (exact, plural-s, or a common
/// irregular plural).
bool word_matches_object(const std::string& candidate, const std::string& object_word);

// ---------------------------------------------------------------------------
// Blob scenes
// ---------------------------------------------------------------------------

/// One prompt token with its synthetic attention field: a max-of-Gaussians
/// bump per instance center, scaled into [0, scale].
struct SceneToken {
    int index = 0;
    std::string group;   // grouping key: object word or full attribute text
    double scale = 1.0;
    std::vector<Pixel> centers;  // attention-resolution coordinates
};

struct Scene {
    PromptStructure structure;
    std::vector<SceneToken> tokens;
    std::map<std::string, std::vector<int>> grouping;
    std::map<std::string, std::vector<Pixel>> object_centers;  // per object word
    int attn_rows = 0;
    int attn_cols = 0;
};

/// Explicit scene override loaded from a fixture file; keyed by prompt and
/// optionally by seed.
struct SceneFixture {
    struct ObjectSpec {
        std::string word;
        std::vector<Pixel> centers;  // attention resolution
    };
    struct SceneSpec {
        std::vector<ObjectSpec> objects;
    };
    struct Entry {
        std::optional<SceneSpec> default_scene;
        std::map<std::uint64_t, SceneSpec> per_seed;
    };
    std::map<std::string, Entry> by_prompt;

    static SceneFixture load(const std::string& path);
};

/// Deterministic scene derivation; fixture entries override the placement.
Scene derive_scene(const std::string& prompt, std::uint64_t seed, const GenerationConfig& config,
                   const SceneFixture* fixture = nullptr);

/// The token's attention bump field at the scene's attention resolution.
GridD token_field(const Scene& scene, const SceneToken& token);

// ---------------------------------------------------------------------------
// Synthetic backends
// ---------------------------------------------------------------------------

/// Deterministic stand-in for the text-to-image model. Renders blob scenes,
/// exposes cross/self attention as analytic bump fields, and supports the full
/// guidance hook surface. Pure in (prompt, seed, config, hooks).
class SyntheticDiffusion : public DiffusionBackend {
public:
    static constexpr int kNumLayers = 22;

    SyntheticDiffusion() = default;
    explicit SyntheticDiffusion(SceneFixture fixture) : fixture_(std::move(fixture)) {}

    int num_layers() const override { return kNumLayers; }

    DiffusionRun generate(const std::string& prompt, std::uint64_t seed,
                          const GenerationConfig& config, const CaptureSpec& capture) override;

    DiffusionRun guided_generate(const std::string& prompt, std::uint64_t seed,
                                 const GenerationConfig& config, const CaptureSpec& capture,
                                 const GuidanceHooks& hooks) override;

private:
    SceneFixture fixture_;
};

/// Segments bright blobs via luminance threshold + connected components.
class BlobDetector : public DetectorBackend {
public:
    explicit BlobDetector(int threshold = 80) : threshold_(threshold) {}
    std::vector<Detection> detect(const ImageU8& image) override;

private:
    int threshold_;
};

/// Replays a fixed detection list regardless of input image.
class ScriptedDetector : public DetectorBackend {
public:
    explicit ScriptedDetector(std::vector<Detection> detections)
        : detections_(std::move(detections)) {}
    static ScriptedDetector from_fixture(const std::string& path, int image_size);
    std::vector<Detection> detect(const ImageU8& image) override { return detections_; }

private:
    std::vector<Detection> detections_;
};

/// Returns the connected bright blob under the query point; empty mask on
/// background points.
class BlobPointSegmenter : public PointSegmenterBackend {
public:
    explicit BlobPointSegmenter(int threshold = 80) : threshold_(threshold) {}
    MaskGrid segment_at(const ImageU8& image, Pixel point) override;

private:
    int threshold_;
};

/// Replays canned replies in order; errors once the script is exhausted.
/// Received instructions are kept for test inspection.
class ScriptedChat : public ChatBackend {
public:
    explicit ScriptedChat(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    static ScriptedChat from_fixture(const std::string& path);

    std::string complete(const std::string& instruction,
                         const std::vector<ChatTurn>& transcript) override;

    const std::vector<std::string>& received() const { return received_; }
    std::size_t calls() const { return received_.size(); }

private:
    std::vector<std::string> replies_;
    std::vector<std::string> received_;
};

/// Deterministic chat model implementing the two pipeline tasks: prompt
/// breakdown (via the shared grammar) and greedy instance assignment over the
/// segment summary. Makes whole-pipeline runs possible without an LLM.
class RuleChat : public ChatBackend {
public:
    std::string complete(const std::string& instruction,
                         const std::vector<ChatTurn>& transcript) override;
};

/// Judge with a scripted (image, question) -> reply table and a default reply.
class ScriptedJudge : public JudgeBackend {
public:
    ScriptedJudge() = default;
    explicit ScriptedJudge(std::string default_reply) : default_reply_(std::move(default_reply)) {}
    static ScriptedJudge from_fixture(const std::string& path);

    void add(const std::string& image_ref, const std::string& question, const std::string& reply);
    std::string answer(const std::string& image_ref, const std::string& question) override;

private:
    std::map<std::pair<std::string, std::string>, std::string> answers_;
    std::string default_reply_ = "yes";
};

class ConstSimilarity : public SimilarityBackend {
public:
    explicit ConstSimilarity(double value = 0.5) : value_(value) {}
    double score(const std::string&, const std::string&) override { return value_; }

private:
    double value_;
};

/// Similarity with scripted (image, prompt) -> score pairs and a default.
class ScriptedSimilarity : public SimilarityBackend {
public:
    explicit ScriptedSimilarity(double default_score = 0.5) : default_(default_score) {}
    static ScriptedSimilarity from_fixture(const std::string& path);

    void add(const std::string& image_ref, const std::string& prompt, double score);
    double score(const std::string& image_ref, const std::string& prompt) override;

private:
    std::map<std::pair<std::string, std::string>, double> scores_;
    double default_;
};

/// All-synthetic suite (blob diffusion/detector/segmenter, rule chat,
/// yes-judge, constant similarity).
BackendSuite make_synthetic_suite(const SceneFixture* fixture = nullptr);

}  // namespace instancegen::synth
