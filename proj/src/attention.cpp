#include "instancegen/attention.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace instancegen::attn {

GridD aggregate_word_map(const AttentionRecord& record, const std::string& word,
                         const AggregationConfig& cfg) {
    auto it = record.token_grouping.find(word);
    if (it == record.token_grouping.end())
        throw ValidationError("aggregate_word_map: unknown word '" + word + "'");
    if (cfg.timestep_range.empty() || cfg.layer_range.empty())
        throw ValidationError("aggregate_word_map: empty aggregation range");

    GridD out;
    bool first_token = true;
    for (int token : it->second) {
        GridD mean = GridD::Zero(record.attn_rows, record.attn_cols);
        int n = 0;
        for (int l = cfg.layer_range.lo; l <= cfg.layer_range.hi; ++l) {
            for (int t = cfg.timestep_range.lo; t <= cfg.timestep_range.hi; ++t) {
                auto map_it = record.cross.find({l, t, token});
                if (map_it == record.cross.end()) continue;
                mean += map_it->second;
                ++n;
            }
        }
        if (n == 0)
            throw ValidationError("aggregate_word_map: no captured maps for token " +
                                  std::to_string(token) + " in the requested ranges");
        mean /= double(n);
        if (first_token) {
            out = std::move(mean);
            first_token = false;
        } else {
            out = out.max(mean);
        }
    }
    return out;
}

double otsu_threshold(const GridD& map) {
    if (!map.isFinite().all()) throw ValidationError("otsu: map has non-finite values");
    const double lo = map.minCoeff(), hi = map.maxCoeff();
    if (!(hi > lo)) return std::numeric_limits<double>::quiet_NaN();

    constexpr int kBins = 256;
    std::array<std::int64_t, kBins> hist{};
    const double scale = double(kBins) / (hi - lo);
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            int bin = int((map(r, c) - lo) * scale);
            hist[std::size_t(std::clamp(bin, 0, kBins - 1))]++;
        }
    }

    const double bin_width = (hi - lo) / double(kBins);
    auto bin_center = [&](int b) { return lo + (double(b) + 0.5) * bin_width; };

    std::int64_t total = map.size();
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += double(hist[std::size_t(b)]) * bin_center(b);

    // maximize between-class variance; ties keep the lowest threshold
    double best_var = -1.0;
    int best_bin = 0;
    std::int64_t w0 = 0;
    double sum0 = 0.0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[std::size_t(b)];
        sum0 += double(hist[std::size_t(b)]) * bin_center(b);
        std::int64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        double mu0 = sum0 / double(w0);
        double mu1 = (sum_all - sum0) / double(w1);
        double var = double(w0) * double(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_bin = b;
        }
    }
    return bin_center(best_bin);
}

MaskGrid otsu_foreground(const GridD& map) {
    double thr = otsu_threshold(map);
    MaskGrid fg = make_mask(map.rows(), map.cols());
    if (std::isnan(thr)) return fg;  // constant map
    for (Eigen::Index r = 0; r < map.rows(); ++r)
        for (Eigen::Index c = 0; c < map.cols(); ++c)
            if (map(r, c) > thr) fg(r, c) = 1;
    return fg;
}

namespace {

/// Local maxima with plateau handling: an 8-connected equal-valued region is a
/// maximum iff no pixel bordering the region is strictly greater. Each plateau
/// contributes its lexicographically smallest (row, col) pixel, which the
/// row-major scan visits first.
std::vector<AnchorPoint> plateau_maxima(const GridD& map, const std::string& word) {
    std::vector<AnchorPoint> peaks;
    MaskGrid visited = make_mask(map.rows(), map.cols());
    std::vector<Pixel> region;
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            if (visited(r, c)) continue;
            const double v = map(r, c);
            region.clear();
            region.push_back({int(r), int(c)});
            visited(r, c) = 1;
            bool is_max = true;
            for (std::size_t i = 0; i < region.size(); ++i) {
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int rr = region[i].row + dr, cc = region[i].col + dc;
                        if (rr < 0 || cc < 0 || rr >= map.rows() || cc >= map.cols()) continue;
                        if (map(rr, cc) > v) is_max = false;
                        if (map(rr, cc) == v && !visited(rr, cc)) {
                            visited(rr, cc) = 1;
                            region.push_back({rr, cc});
                        }
                    }
                }
            }
            if (is_max) peaks.push_back({int(r), int(c), word, v});
        }
    }
    return peaks;
}

}  // namespace

std::vector<AnchorPoint> extract_anchors(const GridD& word_map, const MaskGrid& foreground,
                                         const std::string& word, int min_distance) {
    if (word_map.rows() != foreground.rows() || word_map.cols() != foreground.cols())
        throw ValidationError("extract_anchors: map / foreground shape mismatch");

    std::vector<AnchorPoint> candidates;
    for (auto& peak : plateau_maxima(word_map, word))
        if (foreground(peak.row, peak.col)) candidates.push_back(std::move(peak));

    std::stable_sort(candidates.begin(), candidates.end(), [](const AnchorPoint& a, const AnchorPoint& b) {
        if (a.value != b.value) return a.value > b.value;
        return std::pair(a.row, a.col) < std::pair(b.row, b.col);
    });

    // greedy suppression: drop peaks within min_distance of an accepted one
    std::vector<AnchorPoint> anchors;
    const int d2 = min_distance * min_distance;
    for (const auto& cand : candidates) {
        bool keep = true;
        for (const auto& kept : anchors) {
            int dr = cand.row - kept.row, dc = cand.col - kept.col;
            if (dr * dr + dc * dc < d2) {
                keep = false;
                break;
            }
        }
        if (keep) anchors.push_back(cand);
    }
    return anchors;
}

WordAttention analyze_word(const AttentionRecord& record, const std::string& word,
                           const AggregationConfig& cfg) {
    WordAttention wa;
    wa.word = word;
    wa.map = aggregate_word_map(record, word, cfg);
    wa.foreground = otsu_foreground(wa.map);
    wa.anchors = extract_anchors(wa.map, wa.foreground, word, cfg.peak_min_distance);
    return wa;
}

double segment_attention_score(const GridD& map, const MaskGrid& mask) {
    MaskGrid registered = (mask.rows() == map.rows() && mask.cols() == map.cols())
                              ? mask
                              : resample_mask_nn(mask, map.rows(), map.cols());
    double sum = 0.0;
    std::int64_t n = 0;
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.cols(); ++c) {
            if (!registered(r, c)) continue;
            sum += map(r, c);
            ++n;
        }
    }
    if (n == 0)
        throw ValidationError("segment_attention_score: mask empty after registration");
    return sum / double(n);
}

}  // namespace instancegen::attn
