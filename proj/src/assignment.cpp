#include "instancegen/assignment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace instancegen::assign {

using ordered_json = nlohmann::ordered_json;

const SegmentAssignment* AssignmentPlan::find(int id) const {
    for (const auto& [sid, a] : segments)
        if (sid == id) return &a;
    return nullptr;
}

std::string violation_kind_name(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::CountMismatch: return "count_mismatch";
        case ViolationKind::AttributeOnDeleted: return "attribute_on_deleted";
        case ViolationKind::UnknownObject: return "unknown_object";
        case ViolationKind::UnknownAttribute: return "unknown_attribute";
        case ViolationKind::AttributeCountMismatch: return "attribute_count_mismatch";
        case ViolationKind::MissingSegment: return "missing_segment";
        case ViolationKind::DuplicateSegment: return "duplicate_segment";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Instruction building
// ---------------------------------------------------------------------------

std::string build_assignment_instruction(const ParsedPrompt& parsed,
                                         const layout::SegmentSummary& summary,
                                         const std::vector<NegativeExample>& negatives) {
    std::string out = read_text_file(find_data_file("prompts/instance_assignment_instruction.txt"));
    out += "\n";
    out += read_text_file(find_data_file("prompts/instance_assignment_examples.txt"));
    out += "\nPARSED PROMPT:\n```json\n" + serialize_parsed(parsed) + "\n```\n";
    out += "\nSEGMENTS:\n```json\n" + summary.to_json() + "\n```\n";
    for (std::size_t i = 0; i < negatives.size(); ++i) {
        out += "\nPREVIOUS INVALID ATTEMPT " + std::to_string(i + 1) + ":\n";
        out += negatives[i].raw_output;
        out += "\nThis attempt was rejected because:\n" + negatives[i].violations;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

AssignmentPlan parse_assignment_output(const std::string& raw) {
    const std::string reasoning_marker = "** REASONING **";
    const std::string assignments_marker = "** ASSIGNMENTS **";
    auto rpos = raw.find(reasoning_marker);
    auto apos = raw.find(assignments_marker);
    if (rpos == std::string::npos || apos == std::string::npos)
        throw ValidationError("assignment output is missing the REASONING/ASSIGNMENTS markers");
    if (apos < rpos)
        throw ValidationError("assignment output sections are out of order");

    AssignmentPlan plan;
    plan.reasoning = raw.substr(rpos + reasoning_marker.size(), apos - rpos - reasoning_marker.size());
    while (!plan.reasoning.empty() && std::isspace(static_cast<unsigned char>(plan.reasoning.front())))
        plan.reasoning.erase(plan.reasoning.begin());
    while (!plan.reasoning.empty() && std::isspace(static_cast<unsigned char>(plan.reasoning.back())))
        plan.reasoning.pop_back();

    std::string tail = raw.substr(apos + assignments_marker.size());
    auto start = tail.find('{');
    auto end = tail.rfind('}');
    if (start == std::string::npos || end == std::string::npos || end < start)
        throw ValidationError("assignment output has no json block after the ASSIGNMENTS marker");
    std::string payload = tail.substr(start, end - start + 1);

    // duplicate top-level keys do not survive json parsing; catch them here so
    // they surface as a violation instead of silently dropping a segment
    std::vector<std::string> top_keys;
    ordered_json::parser_callback_t cb = [&](int depth, ordered_json::parse_event_t event,
                                             ordered_json& value) {
        if (depth == 1 && event == ordered_json::parse_event_t::key)
            top_keys.push_back(value.get<std::string>());
        return true;
    };

    ordered_json doc;
    try {
        doc = ordered_json::parse(payload, cb);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("assignment json is malformed: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("assignment json must be an object");

    std::map<std::string, int> key_count;
    for (const auto& k : top_keys) ++key_count[k];

    for (auto& [id_str, entry] : doc.items()) {
        int id = 0;
        try {
            id = std::stoi(id_str);
        } catch (...) {
            throw ValidationError("assignment key '" + id_str + "' is not a segment id");
        }
        SegmentAssignment sa;
        if (!entry.is_object() || !entry.contains("object") || !entry["object"].is_string())
            throw ValidationError("assignment for segment " + id_str + " is missing 'object'");
        sa.object = entry["object"].get<std::string>();
        for (const auto& a : entry.value("attributes", ordered_json::array()))
            sa.attributes.push_back(a.get<std::string>());
        if (key_count[id_str] > 1) plan.duplicate_ids.push_back(id);
        plan.segments.emplace_back(id, std::move(sa));
    }
    std::sort(plan.segments.begin(), plan.segments.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return plan;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::vector<AssignmentViolation> validate_assignment(const AssignmentPlan& plan,
                                                     const ParsedPrompt& parsed,
                                                     const layout::SegmentSummary& summary) {
    std::vector<AssignmentViolation> violations;

    // (d) segment coverage
    std::map<int, int> plan_ids;
    for (const auto& [id, sa] : plan.segments) {
        (void)sa;
        ++plan_ids[id];
    }
    for (int id : plan.duplicate_ids)
        violations.push_back({ViolationKind::DuplicateSegment,
                              "segment " + std::to_string(id) + " appears more than once"});
    for (const auto& [id, rec] : summary.segments) {
        (void)rec;
        if (!plan_ids.count(id))
            violations.push_back(
                {ViolationKind::MissingSegment, "segment " + std::to_string(id) + " has no assignment"});
    }
    for (const auto& [id, count] : plan_ids) {
        if (!summary.find(id))
            violations.push_back({ViolationKind::DuplicateSegment,
                                  "segment " + std::to_string(id) + " is not in the summary"});
        if (count > 1)
            violations.push_back({ViolationKind::DuplicateSegment,
                                  "segment " + std::to_string(id) + " assigned " +
                                      std::to_string(count) + " times"});
    }

    // (a) object counts
    std::map<std::string, int> word_counts;
    for (const auto& [id, sa] : plan.segments) {
        if (sa.deleted()) continue;
        if (!parsed.find(sa.object)) {
            violations.push_back({ViolationKind::UnknownObject,
                                  "segment " + std::to_string(id) + " assigned unknown object '" +
                                      sa.object + "'"});
            continue;
        }
        ++word_counts[sa.object];
    }
    for (const auto& obj : parsed.objects) {
        int got = word_counts.count(obj.word) ? word_counts[obj.word] : 0;
        if (got != obj.desired_quantity)
            violations.push_back({ViolationKind::CountMismatch,
                                  "object '" + obj.word + "' assigned to " + std::to_string(got) +
                                      " segments, desired " + std::to_string(obj.desired_quantity)});
    }

    // (c) attributes on deleted segments; (b) attribute carriers and quotas
    std::map<std::string, int> attr_counts;  // "<object>\x1f<attribute>" -> carriers
    for (const auto& [id, sa] : plan.segments) {
        for (const auto& attr : sa.attributes) {
            if (sa.deleted()) {
                violations.push_back({ViolationKind::AttributeOnDeleted,
                                      "attribute '" + attr + "' on deleted segment " +
                                          std::to_string(id)});
                continue;
            }
            // the attribute must be declared for this segment's object
            const ObjectSpec* obj = parsed.find(sa.object);
            bool declared_here = false, declared_elsewhere = false;
            if (obj)
                for (const auto& a : obj->attributes)
                    if (a.text == attr) declared_here = true;
            for (const auto& other : parsed.objects)
                for (const auto& a : other.attributes)
                    if (a.text == attr && other.word != sa.object) declared_elsewhere = true;
            if (declared_here) {
                ++attr_counts[sa.object + "\x1f" + attr];
            } else {
                violations.push_back(
                    {ViolationKind::UnknownAttribute,
                     declared_elsewhere
                         ? "attribute '" + attr + "' on segment " + std::to_string(id) +
                               " belongs to a different object than '" + sa.object + "'"
                         : "attribute '" + attr + "' on segment " + std::to_string(id) +
                               " is not in the parsed prompt"});
            }
        }
    }
    for (const auto& obj : parsed.objects) {
        for (const auto& attr : obj.attributes) {
            std::string key = obj.word + "\x1f" + attr.text;
            int got = attr_counts.count(key) ? attr_counts[key] : 0;
            if (got != attr.desired_amount)
                violations.push_back({ViolationKind::AttributeCountMismatch,
                                      "attribute '" + attr.text + "' of '" + obj.word +
                                          "' carried by " + std::to_string(got) +
                                          " segments, desired " +
                                          std::to_string(attr.desired_amount)});
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Retry loop
// ---------------------------------------------------------------------------

namespace {
std::string violations_text(const std::vector<AssignmentViolation>& violations) {
    std::string out;
    for (const auto& v : violations)
        out += "- " + violation_kind_name(v.kind) + ": " + v.detail + "\n";
    return out;
}
}  // namespace

AssignmentResult assign_instances(const ParsedPrompt& parsed,
                                  const layout::SegmentSummary& summary, ChatBackend& chat,
                                  int max_attempts) {
    if (max_attempts < 1) throw ValidationError("assign_instances: max_attempts must be >= 1");

    AssignmentResult result;
    std::vector<NegativeExample> negatives;
    std::ostringstream transcript;
    std::string all_failures;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        std::string instruction = build_assignment_instruction(parsed, summary, negatives);
        std::string reply = chat_complete(chat, instruction);
        ++result.calls;
        transcript << "=== attempt " << attempt << " instruction ===\n"
                   << instruction << "\n=== attempt " << attempt << " reply ===\n"
                   << reply << "\n";

        std::vector<AssignmentViolation> violations;
        AssignmentPlan plan;
        try {
            plan = parse_assignment_output(reply);
            violations = validate_assignment(plan, parsed, summary);
        } catch (const ValidationError& e) {
            violations.push_back({ViolationKind::MissingSegment, e.what()});
        }

        if (violations.empty()) {
            result.plan = std::move(plan);
            result.transcript = transcript.str();
            return result;
        }

        std::string vtext = violations_text(violations);
        transcript << "=== attempt " << attempt << " violations ===\n" << vtext;
        all_failures += "attempt " + std::to_string(attempt) + ":\n" + vtext;
        negatives.push_back({reply, vtext});
        log_warn("assignment attempt " + std::to_string(attempt) + " rejected:\n" + vtext);
    }
    throw ValidationError("assign_instances: no valid assignment after " +
                          std::to_string(max_attempts) + " attempts\n" + all_failures);
}

// ---------------------------------------------------------------------------
// Wire form
// ---------------------------------------------------------------------------

std::string plan_to_json(const AssignmentPlan& plan, int indent) {
    ordered_json doc = ordered_json::object();
    for (const auto& [id, sa] : plan.segments) {
        ordered_json entry;
        entry["object"] = sa.object;
        entry["attributes"] = sa.attributes;
        doc[std::to_string(id)] = entry;
    }
    return doc.dump(indent);
}

AssignmentPlan plan_from_json(const std::string& json_text) {
    auto doc = ordered_json::parse(json_text);
    AssignmentPlan plan;
    for (auto& [id_str, entry] : doc.items()) {
        SegmentAssignment sa;
        sa.object = entry.at("object").get<std::string>();
        for (const auto& a : entry.value("attributes", ordered_json::array()))
            sa.attributes.push_back(a.get<std::string>());
        plan.segments.emplace_back(std::stoi(id_str), std::move(sa));
    }
    std::sort(plan.segments.begin(), plan.segments.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return plan;
}

}  // namespace instancegen::assign
