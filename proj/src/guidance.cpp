#include "instancegen/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace instancegen::guide {

int OptimizationSchedule::iterations_at(int timestep) const {
    if (!optimize_window.contains(timestep)) return 0;
    int n = base_iterations;
    auto it = extra_iterations.find(timestep);
    if (it != extra_iterations.end()) n += it->second;
    return n;
}

ForegroundPartition ForegroundPartition::from_foreground(MaskGrid fg) {
    ForegroundPartition p;
    p.background = (fg == 0).cast<std::uint8_t>();
    p.foreground = std::move(fg);
    return p;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

void check_shapes(const GridD& map, const MaskGrid& mask, const char* what) {
    if (map.rows() != mask.rows() || map.cols() != mask.cols())
        throw ValidationError(std::string(what) + ": map / mask shape mismatch");
}

inline double clamp_prob(double v, double eps) { return std::min(std::max(v, eps), 1.0 - eps); }

}  // namespace

double object_loss(const GridD& word_map, const MaskGrid& mask, const GuidanceWeights& weights) {
    check_shapes(word_map, mask, "object_loss");
    const double eps = weights.clamp_epsilon;
    double loss = 0.0;
    for (Eigen::Index r = 0; r < word_map.rows(); ++r) {
        for (Eigen::Index c = 0; c < word_map.cols(); ++c) {
            const double p = clamp_prob(word_map(r, c), eps);
            const bool fg = mask(r, c) != 0;
            const double lambda = fg ? weights.foreground_pixel_weight : 1.0;
            loss -= lambda * (fg ? std::log(p) : std::log(1.0 - p));
        }
    }
    return loss;
}

GridD object_loss_grad(const GridD& word_map, const MaskGrid& mask,
                       const GuidanceWeights& weights) {
    check_shapes(word_map, mask, "object_loss_grad");
    const double eps = weights.clamp_epsilon;
    GridD grad = GridD::Zero(word_map.rows(), word_map.cols());
    for (Eigen::Index r = 0; r < word_map.rows(); ++r) {
        for (Eigen::Index c = 0; c < word_map.cols(); ++c) {
            const double v = word_map(r, c);
            if (v < eps || v > 1.0 - eps) continue;  // clamped: flat
            const bool fg = mask(r, c) != 0;
            const double lambda = fg ? weights.foreground_pixel_weight : 1.0;
            grad(r, c) = fg ? -lambda / v : lambda / (1.0 - v);
        }
    }
    return grad;
}

double attribute_loss(const GridD& attr_map, const MaskGrid& mask, const GuidanceWeights& weights) {
    check_shapes(attr_map, mask, "attribute_loss");
    const double eps = weights.clamp_epsilon;
    double loss = 0.0;
    for (Eigen::Index r = 0; r < attr_map.rows(); ++r)
        for (Eigen::Index c = 0; c < attr_map.cols(); ++c)
            if (mask(r, c)) loss -= std::log(clamp_prob(attr_map(r, c), eps));
    return loss;
}

GridD attribute_loss_grad(const GridD& attr_map, const MaskGrid& mask,
                          const GuidanceWeights& weights) {
    check_shapes(attr_map, mask, "attribute_loss_grad");
    const double eps = weights.clamp_epsilon;
    GridD grad = GridD::Zero(attr_map.rows(), attr_map.cols());
    for (Eigen::Index r = 0; r < attr_map.rows(); ++r) {
        for (Eigen::Index c = 0; c < attr_map.cols(); ++c) {
            if (!mask(r, c)) continue;
            const double v = attr_map(r, c);
            if (v < eps || v > 1.0 - eps) continue;
            grad(r, c) = -1.0 / v;
        }
    }
    return grad;
}

double background_loss(const Latent& reference, const Latent& live, const MaskGrid& background) {
    if (!reference.same_shape(live))
        throw ValidationError("background_loss: latent shape mismatch");
    const std::int64_t n = mask_area(background);
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t ch = 0; ch < live.channels.size(); ++ch) {
        const GridD& ref = reference.channels[ch];
        const GridD& z = live.channels[ch];
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            for (Eigen::Index c = 0; c < z.cols(); ++c) {
                if (!background(r, c)) continue;
                const double d = ref(r, c) - z(r, c);
                sum += d * d;
            }
        }
    }
    return sum / (double(n) * double(live.channels.size()));
}

Latent background_loss_grad(const Latent& reference, const Latent& live,
                            const MaskGrid& background) {
    if (!reference.same_shape(live))
        throw ValidationError("background_loss_grad: latent shape mismatch");
    Latent grad = Latent::zeros_like(live);
    const std::int64_t n = mask_area(background);
    if (n == 0) return grad;
    const double scale = 2.0 / (double(n) * double(live.channels.size()));
    for (std::size_t ch = 0; ch < live.channels.size(); ++ch) {
        for (Eigen::Index r = 0; r < live.channels[ch].rows(); ++r) {
            for (Eigen::Index c = 0; c < live.channels[ch].cols(); ++c) {
                if (!background(r, c)) continue;
                grad.channels[ch](r, c) =
                    scale * (live.channels[ch](r, c) - reference.channels[ch](r, c));
            }
        }
    }
    return grad;
}

double total_loss(const std::vector<double>& object_losses,
                  const std::vector<double>& attribute_losses, double bg_loss,
                  const GuidanceWeights& weights) {
    double obj = 0.0, att = 0.0;
    for (double v : object_losses) obj += v;
    for (double v : attribute_losses) att += v;
    return weights.object_weight * obj + weights.attr_weight * att + weights.bg_weight * bg_loss;
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

void cross_attention_transform(GridD& scores, const MaskGrid& suppress, double delta) {
    if (scores.rows() != suppress.rows() || scores.cols() != suppress.cols())
        throw ValidationError("cross_attention_transform: shape mismatch");
    for (Eigen::Index r = 0; r < scores.rows(); ++r)
        for (Eigen::Index c = 0; c < scores.cols(); ++c)
            if (suppress(r, c)) scores(r, c) = delta * scores(r, c);
}

void self_attention_transform(GridD& scores, const MaskGrid& foreground) {
    const Eigen::Index n = foreground.rows() * foreground.cols();
    if (scores.rows() != n || scores.cols() != n)
        throw ValidationError("self_attention_transform: scores must be (pixels x pixels)");
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(n), 0);
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < foreground.rows(); ++r)
        for (Eigen::Index c = 0; c < foreground.cols(); ++c) fg[std::size_t(k++)] = foreground(r, c);
    for (Eigen::Index p = 0; p < n; ++p)
        for (Eigen::Index q = 0; q < n; ++q)
            if (fg[std::size_t(p)] != fg[std::size_t(q)]) scores(p, q) = 0.0;
}

// ---------------------------------------------------------------------------
// Guided generation
// ---------------------------------------------------------------------------

GuidanceSetup build_guidance_setup(const assign::AssignmentPlan& plan,
                                   const layout::InstanceLayout& layout, Eigen::Index attn_rows,
                                   Eigen::Index attn_cols) {
    GuidanceSetup setup;
    auto union_into = [&](std::vector<std::pair<std::string, MaskGrid>>& dst,
                          const std::string& key, const MaskGrid& mask) {
        for (auto& [k, m] : dst) {
            if (k == key) {
                m = (m != 0 || mask != 0).cast<std::uint8_t>();
                return;
            }
        }
        dst.emplace_back(key, mask);
    };

    MaskGrid fg = make_mask(attn_rows, attn_cols);
    for (const auto& [id, sa] : plan.segments) {
        if (sa.deleted()) continue;
        const layout::InstanceMask* mask = nullptr;
        for (const auto& m : layout.masks)
            if (m.id == id) mask = &m;
        if (!mask)
            throw ValidationError("plan references segment " + std::to_string(id) +
                                  " absent from the layout");
        MaskGrid att = resample_mask_nn(mask->pixels, attn_rows, attn_cols);
        fg = (fg != 0 || att != 0).cast<std::uint8_t>();
        union_into(setup.object_masks, sa.object, att);
        for (const auto& attr : sa.attributes) union_into(setup.attribute_masks, attr, att);
    }
    setup.partition = ForegroundPartition::from_foreground(std::move(fg));
    return setup;
}

std::string GuidanceTrace::to_csv() const {
    std::ostringstream out;
    out << "timestep,iteration,obj,att,bg,total\n";
    for (const auto& row : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%.9g\n", row.timestep, row.iteration,
                      row.obj, row.att, row.bg, row.total);
        out << buf;
    }
    return out.str();
}

GuidedResult run_guided_generation(const std::string& prompt, const assign::AssignmentPlan& plan,
                                   const layout::InstanceLayout& layout,
                                   const DiffusionRun& reference,
                                   const OptimizationSchedule& schedule,
                                   const GuidanceWeights& weights, DiffusionBackend& diffusion,
                                   const GenerationConfig& config, const CaptureSpec& capture) {
    const Eigen::Index att_rows = reference.attention.attn_rows;
    const Eigen::Index att_cols = reference.attention.attn_cols;
    GuidanceSetup setup = build_guidance_setup(plan, layout, att_rows, att_cols);

    // suppression masks: object words are confined to their own segments (other
    // segments AND background suppressed); attribute words only lose the other
    // assigned segments
    std::map<std::string, MaskGrid> suppression;
    for (const auto& [word, mask] : setup.object_masks)
        suppression[word] = (mask == 0).cast<std::uint8_t>();
    for (const auto& [text, mask] : setup.attribute_masks)
        suppression[text] =
            (setup.partition.foreground != 0 && mask == 0).cast<std::uint8_t>();

    // token -> suppression mask (via the reference run's token grouping)
    std::map<int, const MaskGrid*> token_suppression;
    for (const auto& [word, tokens] : reference.attention.token_grouping) {
        auto it = suppression.find(word);
        if (it == suppression.end()) continue;
        for (int tok : tokens) token_suppression[tok] = &it->second;
    }

    // self partition at the backend's self-attention resolution
    MaskGrid self_fg = resample_mask_nn(setup.partition.foreground,
                                        std::max(1, reference.attention.self_rows),
                                        std::max(1, reference.attention.self_cols));

    auto trace = std::make_shared<GuidanceTrace>();
    auto iter_index = std::make_shared<std::map<int, int>>();

    GuidanceHooks hooks;
    hooks.learning_rate = schedule.learning_rate;
    hooks.iterations = [schedule](int t) { return schedule.iterations_at(t); };

    hooks.cross_transform = [&, trace](int layer, int t, int token, GridD& scores) {
        if (!schedule.cross_mask_timesteps.contains(t) || !schedule.cross_mask_layers.contains(layer))
            return;
        auto it = token_suppression.find(token);
        if (it == token_suppression.end()) return;
        cross_attention_transform(scores, *it->second, weights.suppression_delta);
        trace->cross_applied.insert({layer, t});
    };

    hooks.self_transform = [&, trace](int layer, int t, GridD& scores) {
        if (!schedule.self_mask_timesteps.contains(t) || !schedule.self_mask_layers.contains(layer))
            return;
        self_attention_transform(scores, self_fg);
        trace->self_applied.insert({layer, t});
    };

    hooks.latent_loss = [&, trace, iter_index](const LatentProbe& probe, Latent& grad) -> double {
        const int t = probe.timestep();
        const Latent& live = probe.latents();

        std::vector<double> obj_losses, att_losses;
        GridD grad0 = GridD::Zero(att_rows, att_cols);

        for (const auto& [word, mask] : setup.object_masks) {
            GridD map = probe.word_map(word);
            obj_losses.push_back(object_loss(map, mask, weights));
            if (weights.object_weight != 0.0)
                grad0 += weights.object_weight * object_loss_grad(map, mask, weights) *
                         probe.word_map_grad(word);
        }
        for (const auto& [text, mask] : setup.attribute_masks) {
            GridD map = probe.word_map(text);
            att_losses.push_back(attribute_loss(map, mask, weights));
            if (weights.attr_weight != 0.0)
                grad0 += weights.attr_weight * attribute_loss_grad(map, mask, weights) *
                         probe.word_map_grad(text);
        }

        const Latent& ref = reference.latents_per_timestep.at(std::size_t(t));
        double bg = background_loss(ref, live, setup.partition.background);
        if (weights.bg_weight != 0.0) {
            Latent bg_grad = background_loss_grad(ref, live, setup.partition.background);
            for (std::size_t ch = 0; ch < grad.channels.size(); ++ch)
                grad.channels[ch] += weights.bg_weight * bg_grad.channels[ch];
        }
        grad.channels[0] += grad0;

        double obj_sum = 0, att_sum = 0;
        for (double v : obj_losses) obj_sum += v;
        for (double v : att_losses) att_sum += v;
        double total = total_loss(obj_losses, att_losses, bg, weights);
        if (!std::isfinite(total))
            throw BackendError("guided generation: non-finite loss at timestep " +
                               std::to_string(t) + " (obj=" + std::to_string(obj_sum) +
                               " att=" + std::to_string(att_sum) + " bg=" + std::to_string(bg) + ")");

        int iter = (*iter_index)[t]++;
        trace->rows.push_back({t, iter, obj_sum, att_sum, bg, total});
        trace->loss_evaluations++;
        return total;
    };

    // re-run on the reference seed so z-bar and z line up per timestep
    GuidedResult result;
    result.run = diffusion_guided_generate(diffusion, prompt, reference.seed, config, capture, hooks);
    result.trace = std::move(*trace);
    return result;
}

}  // namespace instancegen::guide
