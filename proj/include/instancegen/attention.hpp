#pragma once

#include "instancegen/backends.hpp"
#include "instancegen/grid.hpp"

#include <string>
#include <vector>

namespace instancegen::attn {

struct AggregationConfig {
    IndexRange timestep_range{0, 25};
    IndexRange layer_range{2, 20};
    int peak_min_distance = 2;  // anchor separation, attention pixels
};

struct AnchorPoint {
    int row = 0;
    int col = 0;
    std::string word;
    double value = 0.0;
    friend bool operator==(const AnchorPoint&, const AnchorPoint&) = default;
};

struct WordAttention {
    std::string word;
    GridD map;
    MaskGrid foreground;
    std::vector<AnchorPoint> anchors;
};

/// Per pixel: max over the word's tokens of the mean over (layer, timestep) in
/// the configured ranges of the captured cross maps.
GridD aggregate_word_map(const AttentionRecord& record, const std::string& word,
                         const AggregationConfig& cfg);

/// Otsu threshold over a 256-bin histogram spanning [min, max]; returned value
/// is the center of the selected bin (ties pick the lowest bin). Degenerate
/// (constant) maps have no threshold and yield an empty foreground.
double otsu_threshold(const GridD& map);

/// Foreground = pixels strictly above the Otsu threshold. Constant map -> all
/// false: a uniform-attention word carries no localization signal.
MaskGrid otsu_foreground(const GridD& map);

/// Local maxima of the map restricted to the foreground, separated by at least
/// `min_distance` (Euclidean), sorted by descending value. A plateau is
/// represented by its lexicographically smallest (row, col).
std::vector<AnchorPoint> extract_anchors(const GridD& word_map, const MaskGrid& foreground,
                                         const std::string& word, int min_distance = 2);

/// Full per-word analysis: aggregate, threshold, extract.
WordAttention analyze_word(const AttentionRecord& record, const std::string& word,
                           const AggregationConfig& cfg);

/// Mean of the map over the mask. The mask may be at image resolution; it is
/// registered to the map by nearest-neighbor downsampling first. Errors if the
/// registered mask is empty.
double segment_attention_score(const GridD& map, const MaskGrid& mask);

}  // namespace instancegen::attn
