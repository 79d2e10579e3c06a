#pragma once

#include "instancegen/assignment.hpp"
#include "instancegen/backends.hpp"
#include "instancegen/layout.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace instancegen::guide {

struct GuidanceWeights {
    double foreground_pixel_weight = 1.5;  // per-pixel weight inside the mask; 1.0 outside
    double object_weight = 1.0;            // weight of the summed object losses in the total
    double attr_weight = 0.8;
    double bg_weight = 0.3;
    double suppression_delta = -1.5;
    double clamp_epsilon = 1e-6;  // probability clamp for the log terms, in (0, 0.5)
};

struct OptimizationSchedule {
    IndexRange optimize_window{0, 20};
    int base_iterations = 1;  // per timestep inside the window, before extras
    std::map<int, int> extra_iterations{{0, 15}, {5, 15}, {10, 5}};
    double learning_rate = 0.015;
    IndexRange self_mask_timesteps{0, 3};
    IndexRange self_mask_layers{10, 21};
    IndexRange cross_mask_timesteps{0, 22};
    IndexRange cross_mask_layers{0, 21};

    int iterations_at(int timestep) const;
};

/// Foreground = union of assigned masks; background = its complement.
struct ForegroundPartition {
    MaskGrid foreground;
    MaskGrid background;

    static ForegroundPartition from_foreground(MaskGrid fg);
};

// --- attention losses -------------------------------------------------------
// Probabilities are clamped into [eps, 1-eps] before the logs; gradients are
// zero where the clamp is active (the loss is flat there).

/// Weighted binary cross entropy between a word's attention map and its mask.
double object_loss(const GridD& word_map, const MaskGrid& mask, const GuidanceWeights& weights);
GridD object_loss_grad(const GridD& word_map, const MaskGrid& mask, const GuidanceWeights& weights);

/// Cross entropy pulling attribute attention up inside the mask only.
double attribute_loss(const GridD& attr_map, const MaskGrid& mask, const GuidanceWeights& weights);
GridD attribute_loss_grad(const GridD& attr_map, const MaskGrid& mask,
                          const GuidanceWeights& weights);

/// Mean squared difference between reference and live latents over background
/// pixels, averaged over channels; 0 for an empty background.
double background_loss(const Latent& reference, const Latent& live, const MaskGrid& background);
Latent background_loss_grad(const Latent& reference, const Latent& live,
                            const MaskGrid& background);

double total_loss(const std::vector<double>& object_losses,
                  const std::vector<double>& attribute_losses, double bg_loss,
                  const GuidanceWeights& weights);

// --- attention masking ---------------------------------------------------------

/// Multiply scores by delta where suppress==1 (applied to pre-softmax scores).
void cross_attention_transform(GridD& scores, const MaskGrid& suppress, double delta);

/// Zero self-attention between foreground and background pixels. `scores` is
/// (N x N) over row-major flattened pixels of `foreground`.
void self_attention_transform(GridD& scores, const MaskGrid& foreground);

// --- guided generation -----------------------------------------------------------

/// Per-word mask unions at attention resolution, derived from a plan + layout.
struct GuidanceSetup {
    std::vector<std::pair<std::string, MaskGrid>> object_masks;     // word -> union of its segments
    std::vector<std::pair<std::string, MaskGrid>> attribute_masks;  // text -> union of carriers
    ForegroundPartition partition;
};

GuidanceSetup build_guidance_setup(const assign::AssignmentPlan& plan,
                                   const layout::InstanceLayout& layout, Eigen::Index attn_rows,
                                   Eigen::Index attn_cols);

struct TraceRow {
    int timestep = 0;
    int iteration = 0;
    double obj = 0, att = 0, bg = 0, total = 0;
};

struct GuidanceTrace {
    std::vector<TraceRow> rows;
    std::set<std::pair<int, int>> cross_applied;  // (layer, timestep) the cross transform touched
    std::set<std::pair<int, int>> self_applied;
    int loss_evaluations = 0;

    std::string to_csv() const;
};

struct GuidedResult {
    DiffusionRun run;
    GuidanceTrace trace;
};

/// Assignment-conditioned re-generation: installs the attention transforms
/// inside their windows and optimizes the latents against the total loss on
/// the schedule. The reference run supplies the per-timestep target latents
/// for the background term; its seed is reused so the latent trajectories
/// align. Aborts on a non-finite loss.
GuidedResult run_guided_generation(const std::string& prompt, const assign::AssignmentPlan& plan,
                                   const layout::InstanceLayout& layout,
                                   const DiffusionRun& reference,
                                   const OptimizationSchedule& schedule,
                                   const GuidanceWeights& weights, DiffusionBackend& diffusion,
                                   const GenerationConfig& config,
                                   const CaptureSpec& capture = CaptureSpec{
                                       .cross_layers = {0, -1},
                                       .cross_timesteps = {0, -1},
                                   });

}  // namespace instancegen::guide
