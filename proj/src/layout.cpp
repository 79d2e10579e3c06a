#include "instancegen/layout.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>

namespace instancegen::layout {

using ordered_json = nlohmann::ordered_json;

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Detector: return "detector";
        case Provenance::PointPrompt: return "point_prompt";
        case Provenance::Copied: return "copied";
    }
    return "?";
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "detector") return Provenance::Detector;
    if (name == "point_prompt") return Provenance::PointPrompt;
    if (name == "copied") return Provenance::Copied;
    throw ValidationError("unknown provenance: " + name);
}

const SegmentRecord* SegmentSummary::find(int id) const {
    for (const auto& [sid, rec] : segments)
        if (sid == id) return &rec;
    return nullptr;
}

namespace {

void renumber(std::vector<InstanceMask>& masks) {
    for (std::size_t i = 0; i < masks.size(); ++i) masks[i].id = int(i) + 1;
}

/// Pixels of `m` within Chebyshev distance < margin of `other`.
MaskGrid margin_zone(const MaskGrid& other, int margin) {
    MaskGrid zone = other;
    for (int k = 1; k < margin; ++k) zone = dilate3x3(zone);
    return zone;
}

bool masks_intersect(const MaskGrid& a, const MaskGrid& b) {
    return ((a != 0) && (b != 0)).any();
}

std::int64_t overlap_area(const MaskGrid& a, const MaskGrid& b) {
    return ((a != 0) && (b != 0)).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction steps
// ---------------------------------------------------------------------------

std::pair<std::vector<InstanceMask>, std::vector<attn::AnchorPoint>> assign_anchors(
    const std::vector<attn::AnchorPoint>& anchors, std::vector<InstanceMask> detector_masks) {
    for (auto& m : detector_masks) m.anchors.clear();

    std::vector<attn::AnchorPoint> unresolved;
    for (const auto& anchor : anchors) {
        int best = -1;
        std::int64_t best_area = 0;
        for (std::size_t i = 0; i < detector_masks.size(); ++i) {
            const auto& m = detector_masks[i];
            if (anchor.row < 0 || anchor.col < 0 || anchor.row >= m.pixels.rows() ||
                anchor.col >= m.pixels.cols() || !m.pixels(anchor.row, anchor.col))
                continue;
            std::int64_t area = m.area();
            if (best < 0 || area < best_area) {
                best = int(i);
                best_area = area;
            }
        }
        if (best < 0)
            unresolved.push_back(anchor);
        else
            detector_masks[std::size_t(best)].anchors.push_back(anchor);
    }

    std::vector<InstanceMask> kept;
    for (auto& m : detector_masks)
        if (!m.anchors.empty()) kept.push_back(std::move(m));
    renumber(kept);
    return {std::move(kept), std::move(unresolved)};
}

std::vector<InstanceMask> filter_oversized(std::vector<InstanceMask> masks,
                                           std::int64_t image_area, double oversize_fraction) {
    std::vector<InstanceMask> kept;
    for (auto& m : masks)
        if (double(m.area()) / double(image_area) <= oversize_fraction)
            kept.push_back(std::move(m));
    renumber(kept);
    return kept;
}

std::vector<InstanceMask> resolve_detector_overlaps(std::vector<InstanceMask> masks) {
    std::vector<std::int64_t> pre_area;
    for (const auto& m : masks) pre_area.push_back(m.area());

    for (std::size_t i = 0; i < masks.size(); ++i) {
        for (std::size_t j = i + 1; j < masks.size(); ++j) {
            if (!masks_intersect(masks[i].pixels, masks[j].pixels)) continue;
            // overlap goes to the smaller pre-resolution mask; ties keep i
            bool j_wins = pre_area[j] < pre_area[i];
            auto& loser = j_wins ? masks[i] : masks[j];
            const auto& winner = j_wins ? masks[j] : masks[i];
            loser.pixels = (loser.pixels != 0 && winner.pixels == 0).cast<std::uint8_t>();
        }
    }
    return masks;
}

std::pair<std::vector<InstanceMask>, std::vector<attn::AnchorPoint>> point_prompt_masks(
    const ImageU8& image, const std::vector<attn::AnchorPoint>& unresolved,
    PointSegmenterBackend& segmenter) {
    std::vector<InstanceMask> candidates;
    std::vector<attn::AnchorPoint> still_unresolved;
    for (const auto& anchor : unresolved) {
        MaskGrid mask = segment_at_point(segmenter, image, {anchor.row, anchor.col});
        if (mask_area(mask) == 0) {
            still_unresolved.push_back(anchor);
            continue;
        }
        InstanceMask m;
        m.pixels = std::move(mask);
        m.anchors = {anchor};
        m.provenance = Provenance::PointPrompt;
        candidates.push_back(std::move(m));
    }
    renumber(candidates);
    return {std::move(candidates), std::move(still_unresolved)};
}

std::vector<InstanceMask> merge_point_masks(std::vector<InstanceMask> masks,
                                            double merge_overlap_fraction) {
    bool changed = true;
    int guard = 0;
    while (changed && ++guard < 1000) {
        changed = false;
        for (std::size_t i = 0; i < masks.size() && !changed; ++i) {
            for (std::size_t j = i + 1; j < masks.size() && !changed; ++j) {
                std::int64_t ov = overlap_area(masks[i].pixels, masks[j].pixels);
                if (ov == 0) continue;
                double ai = double(masks[i].area()), aj = double(masks[j].area());
                if (double(ov) >= merge_overlap_fraction * ai &&
                    double(ov) >= merge_overlap_fraction * aj) {
                    masks[i].pixels = (masks[i].pixels != 0 || masks[j].pixels != 0).cast<std::uint8_t>();
                    masks[i].anchors.insert(masks[i].anchors.end(), masks[j].anchors.begin(),
                                            masks[j].anchors.end());
                    masks.erase(masks.begin() + std::ptrdiff_t(j));
                } else {
                    // overlap to the smaller mask; ties keep i
                    bool j_wins = aj < ai;
                    auto& loser = j_wins ? masks[i] : masks[j];
                    const auto& winner = j_wins ? masks[j] : masks[i];
                    loser.pixels = (loser.pixels != 0 && winner.pixels == 0).cast<std::uint8_t>();
                }
                changed = true;
            }
        }
    }
    renumber(masks);
    return masks;
}

std::vector<InstanceMask> postprocess(std::vector<InstanceMask> masks, const LayoutParams& params) {
    auto drop_small = [&](std::vector<InstanceMask>& v) {
        std::vector<InstanceMask> kept;
        for (auto& m : v)
            if (m.area() >= params.min_mask_pixels) kept.push_back(std::move(m));
        v = std::move(kept);
    };
    drop_small(masks);

    // margin enforcement: the larger mask of a too-close pair loses its pixels
    // near the other; sizes compared at processing time
    for (int pass = 0; pass < 8; ++pass) {
        bool changed = false;
        for (std::size_t i = 0; i < masks.size(); ++i) {
            for (std::size_t j = i + 1; j < masks.size(); ++j) {
                if (chebyshev_distance(masks[i].pixels, masks[j].pixels) >= params.margin_pixels)
                    continue;
                bool erode_i = masks[i].area() > masks[j].area();
                auto& big = erode_i ? masks[i] : masks[j];
                const auto& small = erode_i ? masks[j] : masks[i];
                MaskGrid zone = margin_zone(small.pixels, params.margin_pixels);
                big.pixels = (big.pixels != 0 && zone == 0).cast<std::uint8_t>();
                changed = true;
            }
        }
        if (!changed) break;
    }

    drop_small(masks);
    renumber(masks);
    return masks;
}

// ---------------------------------------------------------------------------
// Whole-stage construction
// ---------------------------------------------------------------------------

InstanceLayout build_layout(const ImageU8& image, const AttentionRecord& record,
                            const ParsedPrompt& parsed, DetectorBackend& detector,
                            PointSegmenterBackend& segmenter, const attn::AggregationConfig& agg,
                            const LayoutParams& params) {
    InstanceLayout out;
    out.image_rows = image.height;
    out.image_cols = image.width;

    // anchors for every object word, mapped to image resolution
    std::vector<attn::AnchorPoint> anchors;
    for (const auto& obj : parsed.objects) {
        attn::WordAttention wa = attn::analyze_word(record, obj.word, agg);
        for (const auto& a : wa.anchors) {
            Pixel p = map_pixel({a.row, a.col}, record.attn_rows, record.attn_cols, image.height,
                                image.width);
            anchors.push_back({p.row, p.col, a.word, a.value});
        }
    }

    std::vector<InstanceMask> detector_masks;
    for (auto& det : detect_instances(detector, image)) {
        InstanceMask m;
        m.pixels = std::move(det.mask);
        m.provenance = Provenance::Detector;
        detector_masks.push_back(std::move(m));
    }
    renumber(detector_masks);

    detector_masks = filter_oversized(std::move(detector_masks),
                                      std::int64_t(image.height) * image.width,
                                      params.oversize_fraction);
    auto [assigned, unresolved] = assign_anchors(anchors, std::move(detector_masks));
    assigned = resolve_detector_overlaps(std::move(assigned));

    auto [point_masks, still_unresolved] = point_prompt_masks(image, unresolved, segmenter);
    point_masks = merge_point_masks(std::move(point_masks), params.merge_overlap_fraction);

    std::vector<InstanceMask> combined = std::move(assigned);
    for (auto& m : point_masks) combined.push_back(std::move(m));
    renumber(combined);
    // the merged set may re-introduce detector/point overlaps; resolve once more
    combined = resolve_detector_overlaps(std::move(combined));
    combined = postprocess(std::move(combined), params);

    // re-associate anchors with the final (mutated) masks
    for (auto& m : combined) m.anchors.clear();
    out.unassigned_anchors = still_unresolved;
    for (const auto& anchor : anchors) {
        bool placed = false;
        for (auto& m : combined) {
            if (m.pixels(anchor.row, anchor.col)) {
                m.anchors.push_back(anchor);
                placed = true;
                break;  // masks are disjoint
            }
        }
        if (!placed) {
            bool already = std::any_of(out.unassigned_anchors.begin(), out.unassigned_anchors.end(),
                                       [&](const attn::AnchorPoint& a) { return a == anchor; });
            if (!already) out.unassigned_anchors.push_back(anchor);
        }
    }

    out.masks = std::move(combined);
    return out;
}

InstanceLayout copy_instances(InstanceLayout layout, int deficit, std::uint64_t rng_seed,
                              const LayoutParams& params) {
    if (deficit < 1) throw ValidationError("copy_instances: deficit must be >= 1");
    if (layout.masks.empty()) throw ValidationError("copy_instances: no source masks");

    const Eigen::Index rows = layout.image_rows, cols = layout.image_cols;

    // background: complement of all masks, eroded twice with a 3x3 kernel
    MaskGrid occupied = make_mask(rows, cols);
    for (const auto& m : layout.masks)
        occupied = (occupied != 0 || m.pixels != 0).cast<std::uint8_t>();
    MaskGrid background = (occupied == 0).cast<std::uint8_t>();
    background = erode3x3(erode3x3(background));

    std::vector<Pixel> bg_pixels;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (background(r, c)) bg_pixels.push_back({int(r), int(c)});
    if (bg_pixels.empty()) throw ValidationError("copy_instances: insufficient background area");

    // copies sample only from original (non-copied) masks
    std::vector<int> original_ids;
    for (const auto& m : layout.masks)
        if (m.provenance != Provenance::Copied) original_ids.push_back(m.id);
    if (original_ids.empty()) throw ValidationError("copy_instances: no original masks to copy");

    Rng rng(mix64(rng_seed));
    for (int k = 0; k < deficit; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < params.copy_max_attempts && !placed; ++attempt) {
            int src_id = original_ids[rng.next_below(original_ids.size())];
            const InstanceMask* src = nullptr;
            for (const auto& m : layout.masks)
                if (m.id == src_id) src = &m;
            Pixel center = bg_pixels[rng.next_below(bg_pixels.size())];

            MaskGrid candidate = translate_mask_to(src->pixels, center);
            // clip against existing masks, then carve the margin from the copy
            MaskGrid blocked = make_mask(rows, cols);
            for (const auto& m : layout.masks)
                blocked = (blocked != 0 || m.pixels != 0).cast<std::uint8_t>();
            MaskGrid zone = blocked;
            for (int d = 1; d < params.margin_pixels; ++d) zone = dilate3x3(zone);
            candidate = (candidate != 0 && zone == 0).cast<std::uint8_t>();

            if (mask_area(candidate) < params.min_mask_pixels) continue;

            InstanceMask copy;
            copy.pixels = std::move(candidate);
            copy.provenance = Provenance::Copied;
            copy.source_id = src_id;
            layout.masks.push_back(std::move(copy));
            renumber(layout.masks);
            placed = true;
        }
        if (!placed)
            throw ValidationError("copy_instances: placement failed after " +
                                  std::to_string(params.copy_max_attempts) + " attempts");
    }
    return layout;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

SegmentSummary build_summary(const InstanceLayout& layout,
                             const std::vector<std::pair<std::string, GridD>>& word_maps,
                             const std::vector<std::pair<std::string, GridD>>& attribute_maps) {
    SegmentSummary summary;
    for (const auto& m : layout.masks) {
        SegmentRecord rec;

        auto [cr, cc] = mask_centroid(m.pixels);
        rec.distance_from_top = format_fixed(100.0 * cr / double(layout.image_rows), 1);
        rec.distance_from_left = format_fixed(100.0 * cc / double(layout.image_cols), 1);

        auto registered_mask = [&](const GridD& map) {
            MaskGrid reg = resample_mask_nn(m.pixels, map.rows(), map.cols());
            if (mask_area(reg) == 0) {
                // tiny mask vanished at attention resolution: fall back to the
                // attention cell under its centroid
                Pixel p = map_pixel({int(cr), int(cc)}, layout.image_rows, layout.image_cols,
                                    map.rows(), map.cols());
                log_debug("segment " + std::to_string(m.id) +
                          " is empty at attention resolution, scoring its centroid cell");
                reg(p.row, p.col) = 1;
            }
            return reg;
        };

        if (!word_maps.empty()) {
            MaskGrid reg = registered_mask(word_maps.front().second);
            rec.cluster_size = format_fixed(double(mask_area(reg)), 1);
            for (const auto& [word, map] : word_maps)
                rec.object_probabilities.emplace_back(
                    word, format_fixed(attn::segment_attention_score(map, registered_mask(map)), 2));
        } else {
            rec.cluster_size = format_fixed(0.0, 1);
        }
        for (const auto& [text, map] : attribute_maps)
            rec.attribute_probabilities.emplace_back(
                text, format_fixed(attn::segment_attention_score(map, registered_mask(map)), 3));

        summary.segments.emplace_back(m.id, std::move(rec));
    }
    return summary;
}

std::string SegmentSummary::to_json(int indent) const {
    ordered_json doc = ordered_json::object();
    for (const auto& [id, rec] : segments) {
        ordered_json entry;
        entry["cluster_size"] = rec.cluster_size;
        entry["distance_from_top"] = rec.distance_from_top;
        entry["distance_from_left"] = rec.distance_from_left;
        ordered_json objs = ordered_json::object();
        for (const auto& [word, score] : rec.object_probabilities) objs[word] = score;
        entry["object_probabilities"] = objs;
        ordered_json attrs = ordered_json::object();
        for (const auto& [text, score] : rec.attribute_probabilities) attrs[text] = score;
        entry["attribute_probabilities"] = attrs;
        doc[std::to_string(id)] = entry;
    }
    return doc.dump(indent);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string layout_to_json(const InstanceLayout& layout, int indent) {
    ordered_json doc;
    doc["image_size"] = {layout.image_rows, layout.image_cols};
    doc["masks"] = ordered_json::array();
    for (const auto& m : layout.masks) {
        ordered_json entry;
        entry["id"] = m.id;
        entry["provenance"] = provenance_name(m.provenance);
        if (m.provenance == Provenance::Copied) entry["source_id"] = m.source_id;
        entry["anchors"] = ordered_json::array();
        for (const auto& a : m.anchors)
            entry["anchors"].push_back(
                {{"row", a.row}, {"col", a.col}, {"word", a.word}, {"value", a.value}});
        entry["rle_rows"] = ordered_json::array();
        for (const auto& run : rle_encode(m.pixels))
            entry["rle_rows"].push_back({run.row, run.col, run.length});
        doc["masks"].push_back(std::move(entry));
    }
    doc["deficient"] = layout.deficient();
    doc["unassigned_anchors"] = ordered_json::array();
    for (const auto& a : layout.unassigned_anchors)
        doc["unassigned_anchors"].push_back(
            {{"row", a.row}, {"col", a.col}, {"word", a.word}, {"value", a.value}});
    return doc.dump(indent);
}

InstanceLayout layout_from_json(const std::string& json_text) {
    auto doc = nlohmann::json::parse(json_text);
    InstanceLayout layout;
    layout.image_rows = doc.at("image_size").at(0).get<int>();
    layout.image_cols = doc.at("image_size").at(1).get<int>();
    for (const auto& entry : doc.at("masks")) {
        InstanceMask m;
        m.id = entry.at("id").get<int>();
        m.provenance = provenance_from_name(entry.at("provenance").get<std::string>());
        m.source_id = entry.value("source_id", 0);
        for (const auto& a : entry.value("anchors", nlohmann::json::array()))
            m.anchors.push_back({a.at("row").get<int>(), a.at("col").get<int>(),
                                 a.at("word").get<std::string>(), a.at("value").get<double>()});
        std::vector<RleRun> runs;
        for (const auto& r : entry.at("rle_rows"))
            runs.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()});
        m.pixels = rle_decode(runs, layout.image_rows, layout.image_cols);
        layout.masks.push_back(std::move(m));
    }
    for (const auto& a : doc.value("unassigned_anchors", nlohmann::json::array()))
        layout.unassigned_anchors.push_back({a.at("row").get<int>(), a.at("col").get<int>(),
                                             a.at("word").get<std::string>(),
                                             a.at("value").get<double>()});
    return layout;
}

ImageU8 render_layout(const ImageU8& image, const InstanceLayout& layout) {
    static const std::array<std::array<std::uint8_t, 3>, 8> palette = {{
        {240, 80, 80}, {80, 220, 80}, {80, 120, 240}, {240, 220, 60},
        {220, 80, 220}, {60, 220, 220}, {250, 160, 60}, {160, 240, 120},
    }};
    ImageU8 out = image;
    for (const auto& m : layout.masks) {
        const auto& color = palette[std::size_t(m.id - 1) % palette.size()];
        overlay_mask(out, m.pixels, color[0], color[1], color[2], 0.45);
        for (const auto& a : m.anchors) draw_dot(out, a.row, a.col, 2, 0, 255, 0);
    }
    for (const auto& a : layout.unassigned_anchors) draw_dot(out, a.row, a.col, 2, 255, 0, 0);
    return out;
}

}  // namespace instancegen::layout
