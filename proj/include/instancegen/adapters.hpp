#pragma once

#include "instancegen/backends.hpp"
#include "instancegen/synthetic.hpp"

#include <map>
#include <memory>
#include <string>

namespace instancegen {

/// Remote-call policy shared by all network adapters.
struct AdapterPolicy {
    double timeout_s = 120.0;
    int retries = 1;  // automatic retries after the first failure
};

/// Chat served over HTTP: POST {"instruction": ..., "transcript": [...]} to
/// `url`, expects {"reply": "..."}.
class HttpChat : public ChatBackend {
public:
    HttpChat(std::string url, AdapterPolicy policy = {});
    std::string complete(const std::string& instruction,
                         const std::vector<ChatTurn>& transcript) override;

private:
    std::string url_;
    AdapterPolicy policy_;
};

/// Judge over HTTP: POST {"image": ..., "question": ...} -> {"reply": "..."}.
class HttpJudge : public JudgeBackend {
public:
    HttpJudge(std::string url, AdapterPolicy policy = {});
    std::string answer(const std::string& image_ref, const std::string& question) override;

private:
    std::string url_;
    AdapterPolicy policy_;
};

/// Similarity over HTTP: POST {"image": ..., "prompt": ...} -> {"score": x}.
class HttpSimilarity : public SimilarityBackend {
public:
    HttpSimilarity(std::string url, AdapterPolicy policy = {});
    double score(const std::string& image_ref, const std::string& prompt) override;

private:
    std::string url_;
    AdapterPolicy policy_;
};

// ---------------------------------------------------------------------------
// Backend selection
//
// Backend names accepted in config keys (backends.diffusion etc.):
//   "synthetic"            deterministic fake for the capability
//   "rule"                 rule chat (chat only)
//   "scripted:<file>"      scripted fake fed from a JSON fixture
//   "const:<value>"        constant judge reply / similarity score
//   "<name>"               adapter plugin: loads <name>.json from the
//                          directory named by $INSTANCEGEN_BACKEND_DIR; the
//                          manifest selects an adapter type and its settings,
//                          e.g. {"type": "http_chat", "url": "...",
//                                "timeout_s": 120, "retries": 1}
// Missing plugins raise BackendError; nothing is loaded at import time.
// ---------------------------------------------------------------------------

struct BackendSelection {
    std::string diffusion = "synthetic";
    std::string detector = "synthetic";
    std::string point_segmenter = "synthetic";
    std::string chat = "rule";
    std::string judge = "const:yes";
    std::string similarity = "const:0.5";
    AdapterPolicy policy;
    std::string scene_fixture;  // optional blob-scene fixture for the synthetic diffusion
    int image_size = 128;       // scripted detectors need the target resolution
};

std::shared_ptr<ChatBackend> make_chat_backend(const std::string& name, const AdapterPolicy& policy);
std::shared_ptr<JudgeBackend> make_judge_backend(const std::string& name, const AdapterPolicy& policy);
std::shared_ptr<SimilarityBackend> make_similarity_backend(const std::string& name,
                                                           const AdapterPolicy& policy);

BackendSuite make_backend_suite(const BackendSelection& selection);

}  // namespace instancegen
