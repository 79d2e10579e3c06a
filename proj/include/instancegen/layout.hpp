#pragma once

#include "instancegen/attention.hpp"
#include "instancegen/backends.hpp"
#include "instancegen/prompt_parser.hpp"

#include <map>
#include <string>
#include <vector>

namespace instancegen::layout {

enum class Provenance { Detector, PointPrompt, Copied };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

/// One instance mask at image resolution. Anchor coordinates are image-space.
struct InstanceMask {
    int id = 0;  // 1-based, assigned contiguously
    MaskGrid pixels;
    std::vector<attn::AnchorPoint> anchors;
    Provenance provenance = Provenance::Detector;
    int source_id = 0;  // for copies: id of the source mask

    std::int64_t area() const { return mask_area(pixels); }
};

struct InstanceLayout {
    std::vector<InstanceMask> masks;
    int image_rows = 0;
    int image_cols = 0;
    /// Anchors that ended up inside no mask; non-empty marks the layout deficient.
    std::vector<attn::AnchorPoint> unassigned_anchors;

    bool deficient() const { return !unassigned_anchors.empty(); }
};

/// Segment summary handed to the assignment model. Values are kept in their
/// wire string form (sizes/distances one decimal, object scores two decimals,
/// attribute scores three).
struct SegmentRecord {
    std::string cluster_size;
    std::string distance_from_top;
    std::string distance_from_left;
    std::vector<std::pair<std::string, std::string>> object_probabilities;
    std::vector<std::pair<std::string, std::string>> attribute_probabilities;
};

struct SegmentSummary {
    std::vector<std::pair<int, SegmentRecord>> segments;  // ordered by mask id

    const SegmentRecord* find(int id) const;
    std::string to_json(int indent = 2) const;
};

struct LayoutParams {
    double oversize_fraction = 0.33;      // drop detector masks above this image fraction
    int min_mask_pixels = 30;
    int margin_pixels = 2;                // minimum Chebyshev separation between masks
    double merge_overlap_fraction = 0.666;
    int copy_max_attempts = 100;
};

// --- construction steps -------------------------------------------------------

/// Each anchor goes to the smallest containing mask; masks that attract no
/// anchor are discarded. Anchors contained by nothing come back as unresolved.
std::pair<std::vector<InstanceMask>, std::vector<attn::AnchorPoint>> assign_anchors(
    const std::vector<attn::AnchorPoint>& anchors, std::vector<InstanceMask> detector_masks);

/// Remove masks covering more than `oversize_fraction` of the image area.
std::vector<InstanceMask> filter_oversized(std::vector<InstanceMask> masks,
                                           std::int64_t image_area, double oversize_fraction);

/// Make masks pairwise disjoint: every overlapping region goes to the smaller
/// (by pre-resolution area) mask of the pair; ties keep the earlier mask.
/// Pairs are processed in ascending (i, j) order.
std::vector<InstanceMask> resolve_detector_overlaps(std::vector<InstanceMask> masks);

/// Point-prompt one candidate mask per unresolved anchor; empty candidates are
/// dropped (their anchors stay unresolved).
std::pair<std::vector<InstanceMask>, std::vector<attn::AnchorPoint>> point_prompt_masks(
    const ImageU8& image, const std::vector<attn::AnchorPoint>& unresolved,
    PointSegmenterBackend& segmenter);

/// Overlap handling for point-prompted masks: a pair overlapping by at least
/// `merge_overlap_fraction` of BOTH areas becomes one mask (anchors
/// concatenated); smaller overlaps go to the smaller mask. Runs to fixpoint.
std::vector<InstanceMask> merge_point_masks(std::vector<InstanceMask> masks,
                                            double merge_overlap_fraction);

/// Drop masks below `min_mask_pixels`, then enforce the inter-mask margin by
/// eroding the larger mask of every too-close pair; the size floor is
/// re-checked afterwards.
std::vector<InstanceMask> postprocess(std::vector<InstanceMask> masks, const LayoutParams& params);

// --- whole-stage entry points ---------------------------------------------------

/// Full layout construction from one diffusion run: per-word anchors,
/// detector + point-prompt masks, overlap resolution, postprocessing, and
/// anchor re-association. Pure given its inputs.
InstanceLayout build_layout(const ImageU8& image, const AttentionRecord& record,
                            const ParsedPrompt& parsed, DetectorBackend& detector,
                            PointSegmenterBackend& segmenter, const attn::AggregationConfig& agg,
                            const LayoutParams& params);

/// Repair undergeneration: duplicate `deficit` randomly chosen original masks
/// into eroded background. Original pixel sets are never modified; copies
/// carry provenance Copied and their source id.
InstanceLayout copy_instances(InstanceLayout layout, int deficit, std::uint64_t rng_seed,
                              const LayoutParams& params = {});

/// Attention-score summary for the assignment stage. Maps are keyed by object
/// word / attribute text at attention resolution.
SegmentSummary build_summary(const InstanceLayout& layout,
                             const std::vector<std::pair<std::string, GridD>>& word_maps,
                             const std::vector<std::pair<std::string, GridD>>& attribute_maps);

// --- serialization ----------------------------------------------------------------

std::string layout_to_json(const InstanceLayout& layout, int indent = 2);
InstanceLayout layout_from_json(const std::string& json_text);

/// Color overlay of the layout over the source image.
ImageU8 render_layout(const ImageU8& image, const InstanceLayout& layout);

}  // namespace instancegen::layout
