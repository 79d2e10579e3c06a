#include "instancegen/adapters.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>

namespace instancegen {

using nlohmann::json;

namespace {

struct UrlParts {
    std::string host_port;  // scheme://host:port
    std::string path;
};

UrlParts split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("bad adapter url: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// POST with the adapter policy applied: per-call timeout, one automatic retry.
json post_json(const std::string& url, const json& body, const AdapterPolicy& policy) {
    UrlParts parts = split_url(url);
    std::string error;
    for (int attempt = 0; attempt <= policy.retries; ++attempt) {
        httplib::Client client(parts.host_port);
        client.set_connection_timeout(int(policy.timeout_s), 0);
        client.set_read_timeout(int(policy.timeout_s), 0);
        auto res = client.Post(parts.path, body.dump(), "application/json");
        if (res && res->status == 200) {
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                error = std::string("bad json reply: ") + e.what();
            }
        } else {
            error = res ? "http status " + std::to_string(res->status)
                        : "connection failed or timed out";
        }
        if (attempt < policy.retries)
            log_warn("adapter call to " + url + " failed (" + error + "), retrying");
    }
    throw BackendError("adapter call to " + url + " failed: " + error);
}

}  // namespace

HttpChat::HttpChat(std::string url, AdapterPolicy policy)
    : url_(std::move(url)), policy_(policy) {}

std::string HttpChat::complete(const std::string& instruction,
                               const std::vector<ChatTurn>& transcript) {
    log_info("http chat request (" + std::to_string(instruction.size()) + " chars)");
    json body;
    body["instruction"] = instruction;
    body["transcript"] = json::array();
    for (const auto& turn : transcript)
        body["transcript"].push_back({{"role", turn.role}, {"content", turn.content}});
    return post_json(url_, body, policy_).at("reply").get<std::string>();
}

HttpJudge::HttpJudge(std::string url, AdapterPolicy policy)
    : url_(std::move(url)), policy_(policy) {}

std::string HttpJudge::answer(const std::string& image_ref, const std::string& question) {
    json body{{"image", image_ref}, {"question", question}};
    return post_json(url_, body, policy_).at("reply").get<std::string>();
}

HttpSimilarity::HttpSimilarity(std::string url, AdapterPolicy policy)
    : url_(std::move(url)), policy_(policy) {}

double HttpSimilarity::score(const std::string& image_ref, const std::string& prompt) {
    json body{{"image", image_ref}, {"prompt", prompt}};
    return post_json(url_, body, policy_).at("score").get<double>();
}

// ---------------------------------------------------------------------------
// Selection / registry
// ---------------------------------------------------------------------------

namespace {

json load_plugin_manifest(const std::string& name) {
    const char* dir = std::getenv("INSTANCEGEN_BACKEND_DIR");
    if (!dir)
        throw BackendError("backend '" + name +
                           "' is not built in and INSTANCEGEN_BACKEND_DIR is not set");
    auto path = std::filesystem::path(dir) / (name + ".json");
    if (!std::filesystem::exists(path))
        throw BackendError("backend plugin manifest not found: " + path.string());
    return json::parse(read_text_file(path.string()));
}

AdapterPolicy manifest_policy(const json& manifest, const AdapterPolicy& base) {
    AdapterPolicy p = base;
    if (manifest.contains("timeout_s")) p.timeout_s = manifest["timeout_s"].get<double>();
    if (manifest.contains("retries")) p.retries = manifest["retries"].get<int>();
    return p;
}

bool has_prefix(const std::string& s, const std::string& prefix, std::string& rest) {
    if (s.rfind(prefix, 0) != 0) return false;
    rest = s.substr(prefix.size());
    return true;
}

}  // namespace

std::shared_ptr<ChatBackend> make_chat_backend(const std::string& name,
                                               const AdapterPolicy& policy) {
    std::string arg;
    if (name == "rule" || name == "synthetic") return std::make_shared<synth::RuleChat>();
    if (has_prefix(name, "scripted:", arg))
        return std::make_shared<synth::ScriptedChat>(synth::ScriptedChat::from_fixture(arg));
    auto manifest = load_plugin_manifest(name);
    std::string type = manifest.at("type").get<std::string>();
    if (type == "http_chat")
        return std::make_shared<HttpChat>(manifest.at("url").get<std::string>(),
                                          manifest_policy(manifest, policy));
    throw BackendError("plugin '" + name + "' has unsupported chat type '" + type + "'");
}

std::shared_ptr<JudgeBackend> make_judge_backend(const std::string& name,
                                                 const AdapterPolicy& policy) {
    std::string arg;
    if (name == "synthetic") return std::make_shared<synth::ScriptedJudge>("yes");
    if (has_prefix(name, "const:", arg)) return std::make_shared<synth::ScriptedJudge>(arg);
    if (has_prefix(name, "scripted:", arg))
        return std::make_shared<synth::ScriptedJudge>(synth::ScriptedJudge::from_fixture(arg));
    auto manifest = load_plugin_manifest(name);
    std::string type = manifest.at("type").get<std::string>();
    if (type == "http_judge")
        return std::make_shared<HttpJudge>(manifest.at("url").get<std::string>(),
                                           manifest_policy(manifest, policy));
    throw BackendError("plugin '" + name + "' has unsupported judge type '" + type + "'");
}

std::shared_ptr<SimilarityBackend> make_similarity_backend(const std::string& name,
                                                           const AdapterPolicy& policy) {
    std::string arg;
    if (name == "synthetic") return std::make_shared<synth::ConstSimilarity>(0.5);
    if (has_prefix(name, "const:", arg)) return std::make_shared<synth::ConstSimilarity>(std::stod(arg));
    if (has_prefix(name, "scripted:", arg))
        return std::make_shared<synth::ScriptedSimilarity>(
            synth::ScriptedSimilarity::from_fixture(arg));
    auto manifest = load_plugin_manifest(name);
    std::string type = manifest.at("type").get<std::string>();
    if (type == "http_similarity")
        return std::make_shared<HttpSimilarity>(manifest.at("url").get<std::string>(),
                                                manifest_policy(manifest, policy));
    throw BackendError("plugin '" + name + "' has unsupported similarity type '" + type + "'");
}

BackendSuite make_backend_suite(const BackendSelection& sel) {
    BackendSuite suite;
    std::string arg;

    if (sel.diffusion == "synthetic") {
        if (!sel.scene_fixture.empty()) {
            auto fixture = synth::SceneFixture::load(sel.scene_fixture);
            suite.diffusion = std::make_shared<synth::SyntheticDiffusion>(std::move(fixture));
        } else {
            suite.diffusion = std::make_shared<synth::SyntheticDiffusion>();
        }
    } else {
        // real diffusion backends are adapter plugins; none ship built in
        load_plugin_manifest(sel.diffusion);
        throw BackendError("no diffusion adapter implementation for '" + sel.diffusion + "'");
    }

    if (sel.detector == "synthetic") {
        suite.detector = std::make_shared<synth::BlobDetector>();
    } else if (has_prefix(sel.detector, "scripted:", arg)) {
        suite.detector = std::make_shared<synth::ScriptedDetector>(
            synth::ScriptedDetector::from_fixture(arg, sel.image_size));
    } else {
        load_plugin_manifest(sel.detector);
        throw BackendError("no detector adapter implementation for '" + sel.detector + "'");
    }

    if (sel.point_segmenter == "synthetic") {
        suite.point_segmenter = std::make_shared<synth::BlobPointSegmenter>();
    } else {
        load_plugin_manifest(sel.point_segmenter);
        throw BackendError("no point segmenter adapter implementation for '" +
                           sel.point_segmenter + "'");
    }

    suite.chat = make_chat_backend(sel.chat, sel.policy);
    suite.judge = make_judge_backend(sel.judge, sel.policy);
    suite.similarity = make_similarity_backend(sel.similarity, sel.policy);
    return suite;
}

}  // namespace instancegen
