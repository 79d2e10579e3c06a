#include "instancegen/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

namespace instancegen::synth {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Prompt structure grammar
// ---------------------------------------------------------------------------

namespace {

std::string to_lower(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-') {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

int number_word(const std::string& tok) {
    static const std::map<std::string, int> table = {
        {"a", 1},    {"an", 1},    {"one", 1},   {"two", 2},   {"three", 3},
        {"four", 4}, {"five", 5},  {"six", 6},   {"seven", 7}, {"eight", 8},
        {"nine", 9}, {"ten", 10},  {"eleven", 11}, {"twelve", 12},
    };
    auto it = table.find(tok);
    if (it != table.end()) return it->second;
    if (!tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        int v = std::atoi(tok.c_str());
        if (v >= 1 && v <= 20) return v;
    }
    return 0;
}

bool is_preposition(const std::string& tok) {
    static const char* preps[] = {"in",     "on",      "at",     "inside",  "under", "near",
                                  "by",     "within",  "into",   "from",    "of",    "to",
                                  "behind", "beside",  "over",   "above",   "across", "around",
                                  "along",  "below",   "beneath", "atop",   "onto",  "against",
                                  "past",   "through", "outside", "toward", "towards"};
    for (const char* p : preps)
        if (tok == p) return true;
    return false;
}

bool is_article(const std::string& tok) { return tok == "a" || tok == "an" || tok == "the"; }

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t from,
                        std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to && i < tokens.size(); ++i) {
        if (!out.empty()) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::string strip_articles(const std::vector<std::string>& tokens, std::size_t from,
                           std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to && i < tokens.size(); ++i) {
        if (is_article(tokens[i])) continue;
        if (!out.empty()) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

void scan_objects(const std::vector<std::string>& tokens, std::size_t end,
                  PromptStructure& out) {
    for (std::size_t i = 0; i < tokens.size() && i < end; ++i) {
        int n = number_word(tokens[i]);
        if (n == 0) continue;
        if (i > 0 && is_preposition(tokens[i - 1])) continue;
        if (i + 1 >= tokens.size() || i + 1 >= end) continue;
        const std::string& word = tokens[i + 1];
        if (is_article(word) || is_preposition(word) || number_word(word) > 0) continue;
        auto it = std::find_if(out.objects.begin(), out.objects.end(),
                               [&](const PromptObject& o) { return o.word == word; });
        if (it != out.objects.end())
            it->count += n;
        else
            out.objects.push_back({word, n});
        ++i;  // consumed the noun
    }
}

std::size_t find_copula(const std::vector<std::string>& tokens, std::size_t from = 0) {
    for (std::size_t i = from; i < tokens.size(); ++i)
        if (tokens[i] == "is" || tokens[i] == "are") return i;
    return tokens.size();
}

const PromptObject* match_object(const PromptStructure& s, const std::string& candidate) {
    for (const auto& o : s.objects)
        if (word_matches_object(candidate, o.word)) return &o;
    return nullptr;
}

bool try_attribute(const std::vector<std::string>& tokens, PromptStructure& out) {
    std::size_t i = 0;
    while (i < tokens.size() && (tokens[i] == "only" || tokens[i] == "and" || tokens[i] == "while"))
        ++i;
    if (i >= tokens.size()) return false;

    std::size_t copula = find_copula(tokens, i);
    if (copula >= tokens.size() || copula + 1 >= tokens.size()) return false;
    std::string attr = strip_articles(tokens, copula + 1, tokens.size());
    if (attr.empty()) return false;

    int n = number_word(tokens[i]);

    // "<n> of the <obj>" / "<n> of them"
    if (n > 0 && i + 2 < copula && tokens[i + 1] == "of") {
        std::size_t j = i + 2;
        const PromptObject* obj = nullptr;
        if (tokens[j] == "them") {
            if (out.objects.size() == 1) obj = &out.objects[0];
        } else {
            if (is_article(tokens[j]) && j + 1 < copula) ++j;
            obj = match_object(out, tokens[j]);
        }
        if (!obj) return false;
        out.attributes.push_back({attr, obj->word, n, ""});
        return true;
    }

    // "<n> <obj-singular>"  ("one person is waving")
    if (n > 0 && i + 1 < copula) {
        if (const PromptObject* obj = match_object(out, tokens[i + 1])) {
            out.attributes.push_back({attr, obj->word, n, ""});
            return true;
        }
        return false;
    }

    // "the <desc containing obj>"  ("the cat on the far right is a sphinx")
    if (tokens[i] == "the") {
        const PromptObject* obj = nullptr;
        std::size_t obj_pos = copula;
        for (std::size_t j = i + 1; j < copula; ++j) {
            if ((obj = match_object(out, tokens[j]))) {
                obj_pos = j;
                break;
            }
        }
        if (!obj) return false;
        std::string before = join_tokens(tokens, i + 1, obj_pos);
        std::string after = join_tokens(tokens, obj_pos + 1, copula);
        std::string spatial = before.empty() ? after : (after.empty() ? before : before + " " + after);
        out.attributes.push_back({attr, obj->word, 1, spatial});
        return true;
    }
    return false;
}

}  // namespace

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Common English pluralizations of a singular noun (-s, -es, -y/-ies,
/// -f/-ves, -man/-men) plus a few irregulars.
bool is_plural_of(const std::string& plural, const std::string& singular) {
    if (plural == singular + "s" || plural == singular + "es") return true;
    if (ends_with(singular, "y") && plural == singular.substr(0, singular.size() - 1) + "ies")
        return true;
    if (ends_with(singular, "f") && plural == singular.substr(0, singular.size() - 1) + "ves")
        return true;
    if (ends_with(singular, "man") && plural == singular.substr(0, singular.size() - 3) + "men")
        return true;
    static const std::map<std::string, std::string> irregular = {
        {"person", "people"}, {"child", "children"}, {"goose", "geese"}, {"mouse", "mice"},
    };
    auto it = irregular.find(singular);
    return it != irregular.end() && it->second == plural;
}

}  // namespace

bool word_matches_object(const std::string& candidate, const std::string& object_word) {
    return candidate == object_word || is_plural_of(object_word, candidate) ||
           is_plural_of(candidate, object_word);
}

PromptStructure parse_prompt_structure(const std::string& prompt) {
    PromptStructure out;
    std::vector<std::vector<std::string>> attr_candidates;

    std::string clause;
    std::vector<std::string> clauses;
    for (char c : prompt) {
        if (c == ',' || c == '.' || c == ';') {
            clauses.push_back(clause);
            clause.clear();
        } else {
            clause.push_back(c);
        }
    }
    clauses.push_back(clause);

    for (const auto& cl : clauses) {
        auto tokens = tokenize(cl);
        if (tokens.empty()) continue;
        if (find_copula(tokens) < tokens.size())
            attr_candidates.push_back(tokens);
        else
            scan_objects(tokens, tokens.size(), out);
    }
    for (const auto& tokens : attr_candidates) {
        if (try_attribute(tokens, out)) continue;
        scan_objects(tokens, find_copula(tokens), out);  // head clause with a verb
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

namespace {

double unit_hash(std::uint64_t h) { return double(mix64(h) >> 11) * (1.0 / 9007199254740992.0); }

constexpr double kBumpSigma = 1.6;

GridD bump_field(int rows, int cols, const std::vector<Pixel>& centers, double scale) {
    GridD field = GridD::Zero(rows, cols);
    for (const auto& c : centers) {
        for (int r = 0; r < rows; ++r) {
            for (int q = 0; q < cols; ++q) {
                double dr = r - c.row, dc = q - c.col;
                double v = scale * std::exp(-(dr * dr + dc * dc) / (2.0 * kBumpSigma * kBumpSigma));
                field(r, q) = std::max(field(r, q), v);
            }
        }
    }
    return field;
}

void append_tokens(Scene& scene, const std::string& group, double base_scale,
                   const std::vector<Pixel>& centers, int subword_count) {
    std::vector<int> indices;
    for (int k = 0; k < subword_count; ++k) {
        SceneToken tok;
        tok.index = int(scene.tokens.size());
        tok.group = group;
        tok.scale = base_scale * std::pow(0.92, k);
        tok.centers = centers;
        indices.push_back(tok.index);
        scene.tokens.push_back(std::move(tok));
    }
    scene.grouping[group] = indices;
}

int count_subwords(const std::string& text) {
    int n = 1;
    for (char c : text)
        if (c == ' ') ++n;
    return n;
}

}  // namespace

SceneFixture SceneFixture::load(const std::string& path) {
    SceneFixture fx;
    auto doc = nlohmann::json::parse(read_text_file(path));
    if (!doc.contains("scenes")) return fx;
    for (auto& [prompt, entry_json] : doc.at("scenes").items()) {
        Entry entry;
        auto parse_scene = [](const nlohmann::json& j) {
            SceneSpec spec;
            for (const auto& obj : j.at("objects")) {
                ObjectSpec os;
                os.word = obj.at("word").get<std::string>();
                for (const auto& c : obj.at("centers"))
                    os.centers.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
                spec.objects.push_back(std::move(os));
            }
            return spec;
        };
        if (entry_json.contains("default")) entry.default_scene = parse_scene(entry_json["default"]);
        if (entry_json.contains("per_seed"))
            for (auto& [seed_str, scene_json] : entry_json["per_seed"].items())
                entry.per_seed[std::stoull(seed_str)] = parse_scene(scene_json);
        fx.by_prompt[prompt] = std::move(entry);
    }
    return fx;
}

Scene derive_scene(const std::string& prompt, std::uint64_t seed, const GenerationConfig& config,
                   const SceneFixture* fixture) {
    Scene scene;
    scene.structure = parse_prompt_structure(prompt);
    scene.attn_rows = config.attn_resolution;
    scene.attn_cols = config.attn_resolution;

    const SceneFixture::SceneSpec* scripted = nullptr;
    if (fixture) {
        auto it = fixture->by_prompt.find(prompt);
        if (it != fixture->by_prompt.end()) {
            auto ps = it->second.per_seed.find(seed);
            if (ps != it->second.per_seed.end())
                scripted = &ps->second;
            else if (it->second.default_scene)
                scripted = &*it->second.default_scene;
        }
    }

    if (scripted) {
        for (const auto& obj : scripted->objects) scene.object_centers[obj.word] = obj.centers;
    } else {
        // jittered lattice keeps bumps well separated so every instance yields
        // exactly one anchor
        int att = config.attn_resolution;
        std::vector<Pixel> slots;
        for (int r = 4; r <= att - 5; r += 7)
            for (int c = 4; c <= att - 5; c += 7) slots.push_back({r, c});
        Rng rng(mix64(fnv1a(prompt) ^ (seed * 0x9e3779b97f4a7c15ull)));
        for (std::size_t i = slots.size(); i > 1; --i)
            std::swap(slots[i - 1], slots[rng.next_below(i)]);

        std::size_t next = 0;
        for (const auto& obj : scene.structure.objects) {
            std::vector<Pixel> centers;
            for (int k = 0; k < obj.count && next < slots.size(); ++k, ++next) {
                Pixel p = slots[next];
                p.row += int(rng.next_below(3)) - 1;
                p.col += int(rng.next_below(3)) - 1;
                centers.push_back(p);
            }
            scene.object_centers[obj.word] = centers;
        }
    }

    // object tokens: one per word, in structure order (scripted extras appended)
    for (const auto& obj : scene.structure.objects) {
        auto it = scene.object_centers.find(obj.word);
        append_tokens(scene, obj.word, 1.0, it == scene.object_centers.end() ? std::vector<Pixel>{} : it->second, 1);
    }
    if (scripted) {
        for (const auto& obj : scripted->objects)
            if (!scene.grouping.count(obj.word)) append_tokens(scene, obj.word, 1.0, obj.centers, 1);
    }

    // attribute tokens: bumps on the first `amount` centers of the owner
    for (const auto& attr : scene.structure.attributes) {
        auto it = scene.object_centers.find(attr.object);
        std::vector<Pixel> centers;
        if (it != scene.object_centers.end()) {
            int n = std::min<int>(attr.amount, int(it->second.size()));
            centers.assign(it->second.begin(), it->second.begin() + n);
        }
        if (!scene.grouping.count(attr.text))
            append_tokens(scene, attr.text, 0.85, centers, count_subwords(attr.text));
    }
    return scene;
}

GridD token_field(const Scene& scene, const SceneToken& token) {
    return bump_field(scene.attn_rows, scene.attn_cols, token.centers, token.scale);
}

// ---------------------------------------------------------------------------
// SyntheticDiffusion
// ---------------------------------------------------------------------------

namespace {

double layer_step_scale(int layer, int timestep) {
    return 0.9 + 0.1 * unit_hash(std::uint64_t(layer) * 0x9e37ull + std::uint64_t(timestep) * 0x85ebull + 0xc2b2ull);
}

GridD sigmoid(const GridD& x) { return 1.0 / (1.0 + (-x).exp()); }

struct RunContext {
    const Scene& scene;
    std::vector<GridD> fields;             // per token
    std::map<std::string, GridD> word_fields;  // per grouping key, max over its tokens

    explicit RunContext(const Scene& s) : scene(s) {
        for (const auto& tok : s.tokens) fields.push_back(token_field(s, tok));
        for (const auto& [word, indices] : s.grouping) {
            GridD acc = GridD::Zero(s.attn_rows, s.attn_cols);
            for (int idx : indices) acc = acc.max(fields[std::size_t(idx)]);
            word_fields[word] = std::move(acc);
        }
    }
};

class SyntheticProbe : public LatentProbe {
public:
    SyntheticProbe(const RunContext& ctx, const Latent& z, int timestep, double layer_scale)
        : ctx_(ctx), z_(z), timestep_(timestep), layer_scale_(layer_scale) {}

    int timestep() const override { return timestep_; }
    const Latent& latents() const override { return z_; }

    GridD word_map(const std::string& word) const override {
        return layer_scale_ * field(word) * sigmoid(z_.channels.at(0));
    }
    GridD word_map_grad(const std::string& word) const override {
        GridD s = sigmoid(z_.channels.at(0));
        return layer_scale_ * field(word) * s * (1.0 - s);
    }

private:
    const GridD& field(const std::string& word) const {
        auto it = ctx_.word_fields.find(word);
        if (it == ctx_.word_fields.end())
            throw ValidationError("unknown word in latent probe: '" + word + "'");
        return it->second;
    }
    const RunContext& ctx_;
    const Latent& z_;
    int timestep_;
    double layer_scale_;
};

const std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {230, 90, 90}, {90, 200, 90}, {110, 140, 240}, {230, 200, 80},
    {200, 100, 220}, {90, 210, 210}, {240, 150, 70}, {180, 220, 120},
}};

ImageU8 render_scene_image(const Scene& scene, const GridD& z0, const GenerationConfig& config) {
    int H = config.image_size, W = config.image_size;
    GridD zi = resample_grid_bilinear(z0, H, W);
    ImageU8 img(H, W);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double s = 1.0 / (1.0 + std::exp(-zi(r, c)));
            auto v = std::uint8_t(std::lround(18.0 + 30.0 * s));
            img.set(r, c, v, v, v);
        }
    }
    int radius = std::max(3, int(std::lround(0.055 * H)));
    for (const auto& [word, centers] : scene.object_centers) {
        const auto& color = kPalette[mix64(fnv1a(word)) % kPalette.size()];
        for (const auto& center : centers) {
            Pixel p = map_pixel(center, scene.attn_rows, scene.attn_cols, H, W);
            double s = 1.0 / (1.0 + std::exp(-z0(center.row, center.col)));
            double brightness = 0.7 + 0.3 * s;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > radius * radius) continue;
                    int rr = p.row + dr, cc = p.col + dc;
                    if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
                    img.set(rr, cc, std::uint8_t(std::lround(color[0] * brightness)),
                            std::uint8_t(std::lround(color[1] * brightness)),
                            std::uint8_t(std::lround(color[2] * brightness)));
                }
            }
        }
    }
    return img;
}

GridD base_self_affinity(int a) {
    const double sigma = double(a) / 3.0;
    GridD S(a * a, a * a);
    for (int p = 0; p < a * a; ++p) {
        int pr = p / a, pc = p % a;
        for (int q = 0; q < a * a; ++q) {
            int qr = q / a, qc = q % a;
            double dr = pr - qr, dc = pc - qc;
            S(p, q) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    }
    return S;
}

}  // namespace

DiffusionRun SyntheticDiffusion::generate(const std::string& prompt, std::uint64_t seed,
                                          const GenerationConfig& config,
                                          const CaptureSpec& capture) {
    return guided_generate(prompt, seed, config, capture, GuidanceHooks{});
}

DiffusionRun SyntheticDiffusion::guided_generate(const std::string& prompt, std::uint64_t seed,
                                                 const GenerationConfig& config,
                                                 const CaptureSpec& capture,
                                                 const GuidanceHooks& hooks) {
    const int T = config.num_steps;
    const int att = config.attn_resolution;
    const int a = config.self_resolution;
    const int L = kNumLayers;

    Scene scene = derive_scene(prompt, seed, config, fixture_.by_prompt.empty() ? nullptr : &fixture_);
    RunContext ctx(scene);
    const int ntok = int(scene.tokens.size());

    // per-channel target fields
    std::vector<GridD> target;
    for (int ch = 0; ch < config.latent_channels; ++ch) {
        GridD g = GridD::Constant(att, att, ch == 0 ? 0.1 : -0.1);
        for (int j = 0; j < ntok; ++j) {
            double lo = ch == 0 ? 0.4 : 0.1, hi = ch == 0 ? 0.9 : 0.4;
            double w = lo + (hi - lo) * unit_hash(fnv1a(scene.tokens[j].group) ^ (0x51ull * (ch + 1)));
            g += w * ctx.fields[j];
        }
        target.push_back(std::move(g));
    }

    Latent z;
    for (int ch = 0; ch < config.latent_channels; ++ch) {
        Rng noise(mix64(fnv1a(prompt) ^ (seed * 0x2545f4914f6cdd1dull) ^ (std::uint64_t(ch) << 32)));
        GridD g(att, att);
        for (int r = 0; r < att; ++r)
            for (int c = 0; c < att; ++c) g(r, c) = noise.next_range(-1.0, 1.0);
        z.channels.push_back(std::move(g));
    }

    DiffusionRun run;
    run.seed = seed;
    run.num_steps = T;
    run.guidance_scale = config.guidance_scale;
    run.attention.token_grouping = scene.grouping;
    run.attention.attn_rows = att;
    run.attention.attn_cols = att;
    run.attention.self_rows = a;
    run.attention.self_cols = a;
    run.latents_per_timestep.push_back(z);

    const GridD base_self = base_self_affinity(a);
    // probe word maps aggregate over the capture layer range (all layers if empty)
    const IndexRange probe_layers =
        capture.cross_layers.empty() ? IndexRange{0, L - 1} : capture.cross_layers;

    std::vector<double> token_weight;
    for (int j = 0; j < ntok; ++j)
        token_weight.push_back(0.5 + 0.5 * unit_hash(fnv1a(scene.tokens[j].group) ^ 0xbeefull));

    for (int t = 0; t < T; ++t) {
        // cross attention pass
        GridD cond = GridD::Zero(att, att);
        for (int l = 0; l < L; ++l) {
            double s = layer_step_scale(l, t);
            for (int j = 0; j < ntok; ++j) {
                GridD M = s * ctx.fields[j];
                if (capture.cross_layers.contains(l) && capture.cross_timesteps.contains(t))
                    run.attention.cross[{l, t, j}] = M;  // pre-transform scores
                if (hooks.cross_transform) hooks.cross_transform(l, t, j, M);
                cond += token_weight[j] * M;
            }
        }
        if (ntok > 0) cond /= double(L * ntok);

        // self attention pass smooths the conditioning signal
        // (pixel pairs are row-major flattened: p = r * a + c)
        GridD sc_grid = resample_grid_nn(cond, a, a);
        Eigen::VectorXd sc(a * a);
        for (int r = 0; r < a; ++r)
            for (int c = 0; c < a; ++c) sc(r * a + c) = sc_grid(r, c);
        Eigen::VectorXd sacc = Eigen::VectorXd::Zero(a * a);
        for (int l = 0; l < L; ++l) {
            GridD S = layer_step_scale(l, t) * base_self;
            if (capture.self_layers.contains(l) && capture.self_timesteps.contains(t))
                run.attention.self_maps[{l, t}] = S;
            if (hooks.self_transform) hooks.self_transform(l, t, S);
            for (int p = 0; p < a * a; ++p) {
                double row_sum = S.row(p).sum();
                if (row_sum > 0.0) sacc(p) += S.row(p).matrix().dot(sc) / row_sum;
            }
        }
        sacc /= double(L);
        GridD self_grid(a, a);
        for (int p = 0; p < a * a; ++p) self_grid(p / a, p % a) = sacc(p);
        GridD self_term = resample_grid_bilinear(self_grid, att, att);

        // latent optimization before the denoise update
        int iters = hooks.iterations ? hooks.iterations(t) : 0;
        for (int it = 0; it < iters; ++it) {
            double lscale = 0.0;
            for (int l = probe_layers.lo; l <= probe_layers.hi; ++l) lscale += layer_step_scale(l, t);
            lscale /= double(probe_layers.count());
            SyntheticProbe probe(ctx, z, t, lscale);
            Latent grad = Latent::zeros_like(z);
            if (hooks.latent_loss) hooks.latent_loss(probe, grad);
            if (!grad.all_finite())
                throw BackendError("non-finite gradient at timestep " + std::to_string(t));
            for (std::size_t ch = 0; ch < z.channels.size(); ++ch)
                z.channels[ch] -= hooks.learning_rate * grad.channels[ch];
        }

        // deterministic denoise toward the (attention-conditioned) target
        double alpha = 1.0 / double(T - t);
        double cond_mean = cond.mean(), self_mean = self_term.mean();
        for (std::size_t ch = 0; ch < z.channels.size(); ++ch) {
            GridD drive = target[ch];
            drive += (ch == 0 ? 0.35 : 0.15) * (cond - cond_mean);
            if (ch == 0) drive += 0.25 * (self_term - self_mean);
            z.channels[ch] += alpha * (drive - z.channels[ch]);
        }
        run.latents_per_timestep.push_back(z);
    }

    run.image = render_scene_image(scene, z.channels[0], config);
    return run;
}

// ---------------------------------------------------------------------------
// Detectors / segmenters
// ---------------------------------------------------------------------------

namespace {
MaskGrid threshold_mask(const ImageU8& image, int threshold) {
    MaskGrid m = make_mask(image.height, image.width);
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c)
            if (luminance(image, r, c) > threshold) m(r, c) = 1;
    return m;
}
}  // namespace

std::vector<Detection> BlobDetector::detect(const ImageU8& image) {
    std::vector<Detection> out;
    for (auto& comp : connected_components(threshold_mask(image, threshold_)))
        out.push_back({std::move(comp), "blob", 0.9});
    return out;
}

ScriptedDetector ScriptedDetector::from_fixture(const std::string& path, int image_size) {
    auto doc = nlohmann::json::parse(read_text_file(path));
    std::vector<Detection> detections;
    for (const auto& d : doc.at("detections")) {
        Detection det;
        det.label = d.value("label", "blob");
        det.confidence = d.value("confidence", 0.9);
        det.mask = make_mask(image_size, image_size);
        if (d.contains("rle")) {
            std::vector<RleRun> runs;
            for (const auto& run : d["rle"])
                runs.push_back({run.at(0).get<int>(), run.at(1).get<int>(), run.at(2).get<int>()});
            det.mask = rle_decode(runs, image_size, image_size);
        } else {
            int row = d.at("row").get<int>(), col = d.at("col").get<int>();
            int radius = d.at("radius").get<int>();
            for (int r = 0; r < image_size; ++r)
                for (int c = 0; c < image_size; ++c)
                    if ((r - row) * (r - row) + (c - col) * (c - col) <= radius * radius)
                        det.mask(r, c) = 1;
        }
        detections.push_back(std::move(det));
    }
    return ScriptedDetector(std::move(detections));
}

MaskGrid BlobPointSegmenter::segment_at(const ImageU8& image, Pixel point) {
    return component_at(threshold_mask(image, threshold_), point);
}

// ---------------------------------------------------------------------------
// Chat backends
// ---------------------------------------------------------------------------

std::string ScriptedChat::complete(const std::string& instruction,
                                   const std::vector<ChatTurn>& transcript) {
    (void)transcript;
    received_.push_back(instruction);
    if (received_.size() > replies_.size())
        throw BackendError("scripted chat exhausted after " + std::to_string(replies_.size()) +
                           " replies");
    return replies_[received_.size() - 1];
}

ScriptedChat ScriptedChat::from_fixture(const std::string& path) {
    auto doc = nlohmann::json::parse(read_text_file(path));
    std::vector<std::string> replies;
    for (const auto& r : doc.at("chat_replies")) replies.push_back(r.get<std::string>());
    return ScriptedChat(std::move(replies));
}

namespace {

std::string extract_quoted_prompt(const std::string& instruction) {
    auto pos = instruction.rfind("Prompt: \"");
    if (pos == std::string::npos) return {};
    pos += 9;
    auto end = instruction.find('"', pos);
    if (end == std::string::npos) return {};
    return instruction.substr(pos, end - pos);
}

std::string extract_json_block(const std::string& text, const std::string& header) {
    auto pos = text.find(header);
    if (pos == std::string::npos)
        throw BackendError("rule chat: missing section '" + header + "'");
    auto fence = text.find("```json", pos);
    if (fence == std::string::npos) throw BackendError("rule chat: missing json fence after '" + header + "'");
    fence += 7;
    auto end = text.find("```", fence);
    if (end == std::string::npos) throw BackendError("rule chat: unterminated json fence");
    return text.substr(fence, end - fence);
}

std::string rule_parse_reply(const std::string& prompt) {
    PromptStructure s = parse_prompt_structure(prompt);
    ordered_json objects = ordered_json::object();
    for (const auto& obj : s.objects) {
        ordered_json adjectives = ordered_json::object();
        int k = 1;
        for (const auto& attr : s.attributes) {
            if (attr.object != obj.word) continue;
            ordered_json entry;
            entry["adjective"] = attr.text;
            entry["desired amount"] = std::to_string(attr.amount);
            if (!attr.spatial.empty()) entry["spatial"] = attr.spatial;
            adjectives[std::to_string(k++)] = entry;
        }
        ordered_json rec;
        rec["desired_quantity"] = std::to_string(obj.count);
        rec["instance_adjectives"] = adjectives;
        objects[obj.word] = rec;
    }
    ordered_json out;
    out["prompt"] = prompt;
    out["objects"] = objects;
    return out.dump(2);
}

struct SegmentInfo {
    int id = 0;
    double d_left = 0, d_top = 0;
    std::map<std::string, double> object_probs;
    std::map<std::string, double> attr_probs;
};

int spatial_ordinal(const std::string& text) {
    if (text.find("second") != std::string::npos) return 1;
    if (text.find("third") != std::string::npos) return 2;
    if (text.find("fourth") != std::string::npos) return 3;
    if (text.find("fifth") != std::string::npos) return 4;
    return 0;
}

void spatial_sort(std::vector<const SegmentInfo*>& segs, const std::string& constraint) {
    std::string c = to_lower(constraint);
    auto by = [&](auto key) {
        std::stable_sort(segs.begin(), segs.end(),
                         [&](const SegmentInfo* a, const SegmentInfo* b) { return key(*a) < key(*b); });
    };
    if (c.find("left") != std::string::npos && c.find("right") == std::string::npos)
        by([](const SegmentInfo& s) { return s.d_left; });
    else if (c.find("right") != std::string::npos)
        by([](const SegmentInfo& s) { return -s.d_left; });
    else if (c.find("top") != std::string::npos || c.find("back") != std::string::npos ||
             c.find("surface") != std::string::npos)
        by([](const SegmentInfo& s) { return s.d_top; });
    else if (c.find("bottom") != std::string::npos || c.find("front") != std::string::npos ||
             c.find("camera") != std::string::npos)
        by([](const SegmentInfo& s) { return -s.d_top; });
    else if (c.find("middle") != std::string::npos || c.find("center") != std::string::npos ||
             c.find("between") != std::string::npos)
        by([](const SegmentInfo& s) { return std::abs(s.d_left - 50.0); });
}

std::string rule_assignment_reply(const std::string& instruction) {
    auto parsed = ordered_json::parse(extract_json_block(instruction, "PARSED PROMPT:"));
    auto segments_json = ordered_json::parse(extract_json_block(instruction, "SEGMENTS:"));

    std::vector<SegmentInfo> segments;
    for (auto& [id_str, seg] : segments_json.items()) {
        SegmentInfo info;
        info.id = std::stoi(id_str);
        info.d_left = std::stod(seg.at("distance_from_left").get<std::string>());
        info.d_top = std::stod(seg.at("distance_from_top").get<std::string>());
        for (auto& [w, v] : seg.at("object_probabilities").items())
            info.object_probs[w] = std::stod(v.template get<std::string>());
        if (seg.contains("attribute_probabilities"))
            for (auto& [w, v] : seg.at("attribute_probabilities").items())
                info.attr_probs[w] = std::stod(v.template get<std::string>());
        segments.push_back(std::move(info));
    }
    std::sort(segments.begin(), segments.end(),
              [](const SegmentInfo& a, const SegmentInfo& b) { return a.id < b.id; });

    struct ObjPlan {
        std::string word;
        int count = 0;
        ordered_json adjectives;
    };
    std::vector<ObjPlan> objects;
    int required = 0;
    for (auto& [word, rec] : parsed.at("objects").items()) {
        ObjPlan op;
        op.word = word;
        op.count = std::stoi(rec.at("desired_quantity").template get<std::string>());
        op.adjectives = rec.value("instance_adjectives", ordered_json::object());
        required += op.count;
        objects.push_back(std::move(op));
    }
    std::stable_sort(objects.begin(), objects.end(),
                     [](const ObjPlan& a, const ObjPlan& b) { return a.count < b.count; });

    std::map<int, std::string> assigned;            // id -> object word or "delete"
    std::map<int, std::vector<std::string>> attrs;  // id -> attribute texts
    std::ostringstream reasoning;
    reasoning << "1. There are " << segments.size() << " clusters in the layout and the parsed "
              << "prompt requires " << required << " object instances, so "
              << std::max<int>(0, int(segments.size()) - required)
              << " clusters are marked for deletion.\n";
    reasoning << "2. Spatial arrangement requirements are handled when their attribute is set.\n";

    reasoning << "3. Objects are set in ascending order of desired quantity, each to the "
              << "unassigned cluster with the highest matching object probability:";
    for (const auto& obj : objects) {
        for (int k = 0; k < obj.count; ++k) {
            const SegmentInfo* best = nullptr;
            for (const auto& seg : segments) {
                if (assigned.count(seg.id)) continue;
                double p = seg.object_probs.count(obj.word) ? seg.object_probs.at(obj.word) : 0.0;
                if (!best || p > (best->object_probs.count(obj.word) ? best->object_probs.at(obj.word) : 0.0))
                    best = &seg;
            }
            if (!best) break;  // not enough segments; validation will catch it
            assigned[best->id] = obj.word;
            reasoning << " '" << obj.word << "' -> cluster " << best->id << ";";
        }
    }
    reasoning << "\n";
    for (const auto& seg : segments)
        if (!assigned.count(seg.id)) assigned[seg.id] = "delete";

    reasoning << "4. Attributes are set among the clusters of their parent object:";
    bool any_attr = false;
    for (const auto& obj : objects) {
        for (auto& [key, adj] : obj.adjectives.items()) {
            (void)key;
            std::string text = adj.at("adjective").template get<std::string>();
            int amount = std::stoi(adj.at("desired amount").template get<std::string>());
            std::string spatial = adj.value("spatial", "");

            std::vector<const SegmentInfo*> candidates;
            for (const auto& seg : segments)
                if (assigned[seg.id] == obj.word) candidates.push_back(&seg);
            if (!spatial.empty()) {
                spatial_sort(candidates, spatial);
                int offset = std::min<int>(spatial_ordinal(to_lower(spatial)),
                                           std::max<int>(0, int(candidates.size()) - 1));
                std::rotate(candidates.begin(), candidates.begin() + offset, candidates.end());
            } else {
                std::stable_sort(candidates.begin(), candidates.end(),
                                 [&](const SegmentInfo* a, const SegmentInfo* b) {
                                     double pa = a->attr_probs.count(text) ? a->attr_probs.at(text) : 0.0;
                                     double pb = b->attr_probs.count(text) ? b->attr_probs.at(text) : 0.0;
                                     return pa > pb;
                                 });
            }
            for (int k = 0; k < amount && k < int(candidates.size()); ++k) {
                attrs[candidates[std::size_t(k)]->id].push_back(text);
                reasoning << " '" << text << "' -> cluster " << candidates[std::size_t(k)]->id << ";";
                any_attr = true;
            }
        }
    }
    if (!any_attr) reasoning << " none required;";
    reasoning << "\n";
    reasoning << "5. Re-checked: every object and attribute count matches the parsed prompt.\n";

    ordered_json plan = ordered_json::object();
    for (const auto& seg : segments) {
        ordered_json entry;
        entry["object"] = assigned[seg.id];
        entry["attributes"] = assigned[seg.id] == "delete"
                                  ? ordered_json::array()
                                  : ordered_json(attrs.count(seg.id) ? attrs[seg.id]
                                                                     : std::vector<std::string>{});
        plan[std::to_string(seg.id)] = entry;
    }

    return "** REASONING **\n" + reasoning.str() + "\n** ASSIGNMENTS **\n" + plan.dump(2) + "\n";
}

}  // namespace

std::string RuleChat::complete(const std::string& instruction,
                               const std::vector<ChatTurn>& transcript) {
    (void)transcript;
    if (instruction.find("** ASSIGNMENTS **") != std::string::npos)
        return rule_assignment_reply(instruction);
    std::string prompt = extract_quoted_prompt(instruction);
    if (!prompt.empty()) return rule_parse_reply(prompt);
    throw BackendError("rule chat: unrecognized instruction format");
}

// ---------------------------------------------------------------------------
// Judges / similarity
// ---------------------------------------------------------------------------

void ScriptedJudge::add(const std::string& image_ref, const std::string& question,
                        const std::string& reply) {
    answers_[{image_ref, question}] = reply;
}

std::string ScriptedJudge::answer(const std::string& image_ref, const std::string& question) {
    auto it = answers_.find({image_ref, question});
    return it != answers_.end() ? it->second : default_reply_;
}

ScriptedJudge ScriptedJudge::from_fixture(const std::string& path) {
    auto doc = nlohmann::json::parse(read_text_file(path));
    const auto& j = doc.at("judge");
    ScriptedJudge judge(j.value("default", "yes"));
    if (j.contains("answers"))
        for (const auto& a : j["answers"])
            judge.add(a.at("image").get<std::string>(), a.at("question").get<std::string>(),
                      a.at("reply").get<std::string>());
    return judge;
}

void ScriptedSimilarity::add(const std::string& image_ref, const std::string& prompt,
                             double score) {
    scores_[{image_ref, prompt}] = score;
}

double ScriptedSimilarity::score(const std::string& image_ref, const std::string& prompt) {
    auto it = scores_.find({image_ref, prompt});
    return it != scores_.end() ? it->second : default_;
}

ScriptedSimilarity ScriptedSimilarity::from_fixture(const std::string& path) {
    auto doc = nlohmann::json::parse(read_text_file(path));
    const auto& s = doc.at("similarity");
    ScriptedSimilarity sim(s.value("default", 0.5));
    if (s.contains("scores"))
        for (const auto& entry : s["scores"])
            sim.add(entry.at("image").get<std::string>(), entry.at("prompt").get<std::string>(),
                    entry.at("score").get<double>());
    return sim;
}

BackendSuite make_synthetic_suite(const SceneFixture* fixture) {
    BackendSuite suite;
    suite.diffusion = fixture ? std::make_shared<SyntheticDiffusion>(*fixture)
                              : std::make_shared<SyntheticDiffusion>();
    suite.detector = std::make_shared<BlobDetector>();
    suite.point_segmenter = std::make_shared<BlobPointSegmenter>();
    suite.chat = std::make_shared<RuleChat>();
    suite.judge = std::make_shared<ScriptedJudge>("yes");
    suite.similarity = std::make_shared<ConstSimilarity>(0.5);
    return suite;
}

}  // namespace instancegen::synth
