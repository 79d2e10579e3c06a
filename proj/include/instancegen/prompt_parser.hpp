#pragma once

#include "instancegen/backends.hpp"

#include <string>
#include <variant>
#include <vector>

namespace instancegen {

/// One instance-level attribute of an object, with how many instances should
/// carry it. Spatial constraints are opaque text for the assignment model.
struct InstanceAttribute {
    std::string text;
    int desired_amount = 1;
    std::string spatial;  // empty when unconstrained
    friend bool operator==(const InstanceAttribute&, const InstanceAttribute&) = default;
};

struct ObjectSpec {
    std::string word;
    int desired_quantity = 1;
    std::vector<InstanceAttribute> attributes;
    friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// Structured breakdown of a generation prompt. Objects keep prompt order so
/// the wire form round-trips byte-identically.
struct ParsedPrompt {
    std::string prompt;
    std::vector<ObjectSpec> objects;

    const ObjectSpec* find(const std::string& word) const;
    friend bool operator==(const ParsedPrompt&, const ParsedPrompt&) = default;
};

struct SchemaViolation {
    std::string path;  // JSON pointer
    std::string message;
};

using ValidationResult = std::variant<ParsedPrompt, std::vector<SchemaViolation>>;

/// Validate raw JSON against the wire schema. Quantities are strings on the
/// wire ("desired_quantity": "2") and integers internally. A syntactically
/// invalid document throws ValidationError; schema problems come back as the
/// violation list.
ValidationResult validate_parsed(const std::string& raw_json);

/// Wire form (object key order preserved, quantities as strings).
std::string serialize_parsed(const ParsedPrompt& parsed, int indent = 2);

/// Sum of desired quantities over all objects.
int required_instance_count(const ParsedPrompt& parsed);

/// Ask the chat backend to break the prompt down; on a schema violation the
/// request is re-asked once with the violations appended, then it errors.
/// An empty object set is an error: a prompt with no countable objects cannot
/// drive the pipeline.
ParsedPrompt parse_prompt(const std::string& prompt, ChatBackend& chat);

/// The instruction text sent for `prompt` (data file + the prompt itself).
std::string build_parser_instruction(const std::string& prompt);

}  // namespace instancegen
