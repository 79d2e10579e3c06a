#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "instancegen/assignment.hpp"
#include "instancegen/synthetic.hpp"

using namespace instancegen;
using namespace instancegen::assign;

namespace {

ParsedPrompt forest_prompt() {
    ParsedPrompt p;
    p.prompt = "a porcupine, one squirrel and a raccoon in a forest, the squirrel is holding a nut";
    p.objects.push_back({"porcupine", 1, {}});
    p.objects.push_back({"squirrel", 1, {{"holding nut", 1, ""}}});
    p.objects.push_back({"raccoon", 1, {}});
    return p;
}

layout::SegmentSummary forest_summary() {
    layout::SegmentSummary s;
    layout::SegmentRecord r1;
    r1.cluster_size = "392.0";
    r1.distance_from_top = "34.3";
    r1.distance_from_left = "55.8";
    r1.object_probabilities = {{"porcupine", "0.11"}, {"squirrel", "0.14"}, {"raccoon", "0.75"}};
    r1.attribute_probabilities = {{"holding nut", "0.068"}};
    layout::SegmentRecord r2;
    r2.cluster_size = "225.0";
    r2.distance_from_top = "42.8";
    r2.distance_from_left = "40.7";
    r2.object_probabilities = {{"porcupine", "0.21"}, {"squirrel", "0.53"}, {"raccoon", "0.26"}};
    r2.attribute_probabilities = {{"holding nut", "0.128"}};
    layout::SegmentRecord r3;
    r3.cluster_size = "745.0";
    r3.distance_from_top = "34.3";
    r3.distance_from_left = "15.1";
    r3.object_probabilities = {{"porcupine", "0.71"}, {"squirrel", "0.14"}, {"raccoon", "0.15"}};
    r3.attribute_probabilities = {{"holding nut", "0.066"}};
    s.segments = {{1, r1}, {2, r2}, {3, r3}};
    return s;
}

const char* kForestReply = R"(** REASONING **
1. There are 3 total clusters in the layout dict, we are required to assign one
cluster as 'porcupine', one as 'squirrel' and one as 'raccoon', so no clusters
are deleted.
3. 'porcupine' goes to cluster "3" (0.71), 'raccoon' to cluster "1" (0.75),
leaving cluster "2" as 'squirrel'.
4. Cluster "2" carries 'holding nut' (0.128).

** ASSIGNMENTS **
{
  "1": {
    "object": "raccoon",
    "attributes": []
  },
  "2": {
    "object": "squirrel",
    "attributes": [
      "holding nut"
    ]
  },
  "3": {
    "object": "porcupine",
    "attributes": []
  }
}
)";

AssignmentPlan forest_plan() { return parse_assignment_output(kForestReply); }

}  // namespace

TEST_CASE("the forest reply parses into the expected plan") {
    AssignmentPlan plan = forest_plan();
    REQUIRE(plan.segments.size() == 3);
    CHECK(plan.find(1)->object == "raccoon");
    CHECK(plan.find(2)->object == "squirrel");
    REQUIRE(plan.find(2)->attributes.size() == 1);
    CHECK(plan.find(2)->attributes[0] == "holding nut");
    CHECK(plan.find(3)->object == "porcupine");
    CHECK(plan.reasoning.find("3 total clusters") != std::string::npos);
}

TEST_CASE("marker order and presence are enforced") {
    CHECK_THROWS_AS(parse_assignment_output("** ASSIGNMENTS **\n{}\n** REASONING **\nx"),
                    ValidationError);
    CHECK_THROWS_AS(parse_assignment_output("** REASONING **\nonly reasoning, no assignments"),
                    ValidationError);
    CHECK_THROWS_AS(parse_assignment_output("{\"1\": {\"object\": \"x\"}}"), ValidationError);
    CHECK_THROWS_AS(parse_assignment_output("** REASONING **\nr\n** ASSIGNMENTS **\nnot json"),
                    ValidationError);
}

TEST_CASE("the forest plan validates cleanly against prompt and summary") {
    auto violations = validate_assignment(forest_plan(), forest_prompt(), forest_summary());
    CHECK(violations.empty());
}

TEST_CASE("an attribute moved to the wrong object is an unknown-carrier violation") {
    AssignmentPlan plan = forest_plan();
    // move "holding nut" from the squirrel segment to the raccoon segment
    plan.segments[0].second.attributes = {"holding nut"};
    plan.segments[1].second.attributes = {};
    auto violations = validate_assignment(plan, forest_prompt(), forest_summary());
    REQUIRE(!violations.empty());
    bool has_unknown_attr = false, has_count = false;
    for (const auto& v : violations) {
        if (v.kind == ViolationKind::UnknownAttribute) has_unknown_attr = true;
        if (v.kind == ViolationKind::AttributeCountMismatch) has_count = true;
    }
    CHECK(has_unknown_attr);
    CHECK(has_count);  // the squirrel's quota is no longer met
}

TEST_CASE("assigning a word to too many segments is a count mismatch") {
    AssignmentPlan plan = forest_plan();
    plan.segments[0].second.object = "squirrel";  // two squirrels now, no raccoon
    auto violations = validate_assignment(plan, forest_prompt(), forest_summary());
    bool has_count = false;
    for (const auto& v : violations)
        if (v.kind == ViolationKind::CountMismatch) has_count = true;
    CHECK(has_count);
}

TEST_CASE("attributes on deleted segments are flagged") {
    AssignmentPlan plan = forest_plan();
    plan.segments[1].second.object = kDeleteInstruction;  // keep its attribute
    auto violations = validate_assignment(plan, forest_prompt(), forest_summary());
    bool has_deleted = false;
    for (const auto& v : violations)
        if (v.kind == ViolationKind::AttributeOnDeleted) has_deleted = true;
    CHECK(has_deleted);
}

TEST_CASE("unknown objects and incomplete segment coverage are flagged") {
    AssignmentPlan plan = forest_plan();
    plan.segments[0].second.object = "wombat";
    plan.segments.pop_back();  // segment 3 missing
    auto violations = validate_assignment(plan, forest_prompt(), forest_summary());
    bool unknown = false, missing = false;
    for (const auto& v : violations) {
        if (v.kind == ViolationKind::UnknownObject) unknown = true;
        if (v.kind == ViolationKind::MissingSegment) missing = true;
    }
    CHECK(unknown);
    CHECK(missing);
}

TEST_CASE("segments outside the summary are flagged") {
    AssignmentPlan plan = forest_plan();
    plan.segments.emplace_back(9, SegmentAssignment{"porcupine", {}});
    auto violations = validate_assignment(plan, forest_prompt(), forest_summary());
    bool dup = false;
    for (const auto& v : violations)
        if (v.kind == ViolationKind::DuplicateSegment) dup = true;
    CHECK(dup);
}

TEST_CASE("duplicate segment keys in the raw json are detected") {
    std::string raw = "** REASONING **\nr\n** ASSIGNMENTS **\n"
                      R"({"1": {"object": "raccoon", "attributes": []},
                          "1": {"object": "squirrel", "attributes": []},
                          "2": {"object": "squirrel", "attributes": ["holding nut"]},
                          "3": {"object": "porcupine", "attributes": []}})";
    AssignmentPlan plan = parse_assignment_output(raw);
    REQUIRE(!plan.duplicate_ids.empty());
    auto violations = validate_assignment(plan, forest_prompt(), forest_summary());
    bool dup = false;
    for (const auto& v : violations)
        if (v.kind == ViolationKind::DuplicateSegment) dup = true;
    CHECK(dup);
}

TEST_CASE("instruction embeds procedure text, inputs, and negative examples") {
    std::string base = build_assignment_instruction(forest_prompt(), forest_summary(), {});
    CHECK(base.find("Figure out how many objects need to be set") != std::string::npos);
    CHECK(base.find("PARSED PROMPT:") != std::string::npos);
    CHECK(base.find("SEGMENTS:") != std::string::npos);
    CHECK(base.find("\"porcupine\": \"0.71\"") != std::string::npos);
    CHECK(base.find("PREVIOUS INVALID ATTEMPT") == std::string::npos);

    NegativeExample neg{"** REASONING **\nbad call\n** ASSIGNMENTS **\n{}", "- count_mismatch: x\n"};
    std::string with_neg = build_assignment_instruction(forest_prompt(), forest_summary(), {neg});
    CHECK(with_neg.find("bad call") != std::string::npos);
    CHECK(with_neg.find("PREVIOUS INVALID ATTEMPT 1") != std::string::npos);
    CHECK(with_neg.size() > base.size());
}

TEST_CASE("assign_instances returns a valid first-try plan after one call") {
    synth::ScriptedChat chat({kForestReply});
    auto result = assign_instances(forest_prompt(), forest_summary(), chat, 5);
    CHECK(result.calls == 1);
    CHECK(validate_assignment(result.plan, forest_prompt(), forest_summary()).empty());
}

TEST_CASE("assign_instances recovers from a count-mismatch attempt") {
    std::string bad = "** REASONING **\noops\n** ASSIGNMENTS **\n"
                      R"({"1": {"object": "squirrel", "attributes": []},
                          "2": {"object": "squirrel", "attributes": ["holding nut"]},
                          "3": {"object": "porcupine", "attributes": []}})";
    synth::ScriptedChat chat({bad, kForestReply});
    auto result = assign_instances(forest_prompt(), forest_summary(), chat, 5);
    CHECK(result.calls == 2);
    CHECK(validate_assignment(result.plan, forest_prompt(), forest_summary()).empty());
    // the second instruction embeds the first failed output as a negative example
    REQUIRE(chat.received().size() == 2);
    CHECK(chat.received()[1].find("oops") != std::string::npos);
    CHECK(chat.received()[1].find("count_mismatch") != std::string::npos);
}

TEST_CASE("assign_instances gives up after max_attempts and reports all failures") {
    std::string bad = "** REASONING **\nnope\n** ASSIGNMENTS **\n"
                      R"({"1": {"object": "raccoon", "attributes": []}})";
    synth::ScriptedChat chat({bad, bad, bad});
    CHECK_THROWS_AS(assign_instances(forest_prompt(), forest_summary(), chat, 3), ValidationError);
    CHECK(chat.calls() == 3);
}

TEST_CASE("malformed json in a reply triggers a retry, not a crash") {
    std::string garbage = "** REASONING **\nr\n** ASSIGNMENTS **\n{broken";
    synth::ScriptedChat chat({garbage, kForestReply});
    auto result = assign_instances(forest_prompt(), forest_summary(), chat, 5);
    CHECK(result.calls == 2);
}

TEST_CASE("rule chat solves the forest assignment exactly like the reference") {
    synth::RuleChat chat;
    auto result = assign_instances(forest_prompt(), forest_summary(), chat, 5);
    CHECK(result.calls == 1);
    CHECK(result.plan.find(1)->object == "raccoon");
    CHECK(result.plan.find(2)->object == "squirrel");
    CHECK(result.plan.find(3)->object == "porcupine");
    REQUIRE(result.plan.find(2)->attributes.size() == 1);
    CHECK(result.plan.find(2)->attributes[0] == "holding nut");
}

TEST_CASE("rule chat deletes surplus segments and respects spatial constraints") {
    ParsedPrompt parsed;
    parsed.prompt = "two cats, the cat on the far right is ginger";
    parsed.objects.push_back({"cats", 2, {{"ginger", 1, "on the far right"}}});

    layout::SegmentSummary summary;
    for (int id = 1; id <= 3; ++id) {
        layout::SegmentRecord rec;
        rec.cluster_size = "100.0";
        rec.distance_from_top = "50.0";
        rec.distance_from_left = id == 1 ? "10.0" : id == 2 ? "50.0" : "90.0";
        rec.object_probabilities = {{"cats", id == 3 ? "0.30" : "0.60"}};
        rec.attribute_probabilities = {{"ginger", "0.100"}};
        summary.segments.emplace_back(id, rec);
    }

    synth::RuleChat chat;
    auto result = assign_instances(parsed, summary, chat, 5);
    CHECK(validate_assignment(result.plan, parsed, summary).empty());
    int deleted = 0;
    for (const auto& [id, sa] : result.plan.segments)
        if (sa.deleted()) ++deleted;
    CHECK(deleted == 1);
    // the rightmost cat segment carries the spatial attribute
    const auto* rightmost_owner = result.plan.find(3);
    if (rightmost_owner->object == "cats") {
        REQUIRE(rightmost_owner->attributes.size() == 1);
        CHECK(rightmost_owner->attributes[0] == "ginger");
    }
}

TEST_CASE("plan json round-trips") {
    AssignmentPlan plan = forest_plan();
    AssignmentPlan back = plan_from_json(plan_to_json(plan));
    REQUIRE(back.segments.size() == plan.segments.size());
    for (std::size_t i = 0; i < plan.segments.size(); ++i) {
        CHECK(back.segments[i].first == plan.segments[i].first);
        CHECK(back.segments[i].second == plan.segments[i].second);
    }
}
