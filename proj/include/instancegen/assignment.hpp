#pragma once

#include "instancegen/backends.hpp"
#include "instancegen/layout.hpp"
#include "instancegen/prompt_parser.hpp"

#include <string>
#include <vector>

namespace instancegen::assign {

/// Literal object value marking a segment for deletion.
inline constexpr const char* kDeleteInstruction = "delete";

struct SegmentAssignment {
    std::string object;  // object word or kDeleteInstruction
    std::vector<std::string> attributes;

    bool deleted() const { return object == kDeleteInstruction; }
    friend bool operator==(const SegmentAssignment&, const SegmentAssignment&) = default;
};

/// Per-segment instructions plus the model's reasoning. The reasoning is
/// persisted for audit and never parsed for decisions.
struct AssignmentPlan {
    std::vector<std::pair<int, SegmentAssignment>> segments;  // ordered by id
    std::string reasoning;
    std::vector<int> duplicate_ids;  // ids that appeared more than once in the raw json

    const SegmentAssignment* find(int id) const;
};

enum class ViolationKind {
    CountMismatch,
    AttributeOnDeleted,
    UnknownObject,
    UnknownAttribute,
    AttributeCountMismatch,
    MissingSegment,
    DuplicateSegment,
};

std::string violation_kind_name(ViolationKind kind);

struct AssignmentViolation {
    ViolationKind kind;
    std::string detail;  // names the offending id / word
};

struct NegativeExample {
    std::string raw_output;  // reasoning + assignments as the model produced them
    std::string violations;  // human-readable violation list
};

/// Instruction text: base instruction file (with the 5-step procedure),
/// curated in-context examples, the parsed prompt, the segment summary, and
/// any previous failed attempts as negative examples.
std::string build_assignment_instruction(const ParsedPrompt& parsed,
                                         const layout::SegmentSummary& summary,
                                         const std::vector<NegativeExample>& negatives);

/// Parse the "** REASONING ** / ** ASSIGNMENTS **" reply format. Throws
/// ValidationError on missing/misordered markers or unparseable JSON.
AssignmentPlan parse_assignment_output(const std::string& raw);

/// Empty result iff the plan exactly satisfies the parsed prompt over the
/// summary's segments: object counts match, attribute quotas match with
/// correct carriers, no attributes on deleted segments, ids cover the summary.
std::vector<AssignmentViolation> validate_assignment(const AssignmentPlan& plan,
                                                     const ParsedPrompt& parsed,
                                                     const layout::SegmentSummary& summary);

struct AssignmentResult {
    AssignmentPlan plan;
    int calls = 0;
    std::string transcript;  // full instruction/reply exchange for audit
};

/// Drive the assignment chat with validation and negative-example retries.
/// Every failed attempt is appended to the next instruction; after
/// `max_attempts` failures the error carries all violation lists.
AssignmentResult assign_instances(const ParsedPrompt& parsed,
                                  const layout::SegmentSummary& summary, ChatBackend& chat,
                                  int max_attempts = 5);

/// Wire form of the plan ({"1": {"object": ..., "attributes": [...]}, ...}).
std::string plan_to_json(const AssignmentPlan& plan, int indent = 2);
AssignmentPlan plan_from_json(const std::string& json_text);

}  // namespace instancegen::assign
