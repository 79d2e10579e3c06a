#include "instancegen/prompt_parser.hpp"

#include <json.hpp>

#include <algorithm>

namespace instancegen {

using ordered_json = nlohmann::ordered_json;

const ObjectSpec* ParsedPrompt::find(const std::string& word) const {
    for (const auto& o : objects)
        if (o.word == word) return &o;
    return nullptr;
}

int required_instance_count(const ParsedPrompt& parsed) {
    int n = 0;
    for (const auto& o : parsed.objects) n += o.desired_quantity;
    return n;
}

namespace {

/// Wire quantities are strings of positive integers ("1", "2", ...).
bool parse_wire_quantity(const ordered_json& v, int& out) {
    if (!v.is_string()) return false;
    const std::string& s = v.get_ref<const std::string&>();
    if (s.empty() || s.size() > 6) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    out = std::atoi(s.c_str());
    return out >= 1;
}

}  // namespace

ValidationResult validate_parsed(const std::string& raw_json) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(raw_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("parsed prompt is not valid json: ") + e.what());
    }

    std::vector<SchemaViolation> violations;
    ParsedPrompt parsed;

    if (!doc.is_object()) {
        violations.push_back({"", "top level must be an object"});
        return violations;
    }
    parsed.prompt = doc.value("prompt", "");

    if (!doc.contains("objects") || !doc["objects"].is_object()) {
        violations.push_back({"/objects", "missing or non-object 'objects' key"});
        return violations;
    }

    for (auto& [word, rec] : doc["objects"].items()) {
        std::string base = "/objects/" + word;
        ObjectSpec obj;
        obj.word = word;
        if (word.empty()) violations.push_back({base, "object word is empty"});
        if (!rec.is_object()) {
            violations.push_back({base, "object record must be an object"});
            continue;
        }
        if (!rec.contains("desired_quantity") ||
            !parse_wire_quantity(rec["desired_quantity"], obj.desired_quantity)) {
            violations.push_back(
                {base + "/desired_quantity", "desired_quantity must be a positive integer string"});
            continue;
        }
        if (rec.contains("instance_adjectives")) {
            if (!rec["instance_adjectives"].is_object()) {
                violations.push_back({base + "/instance_adjectives", "must be an object"});
                continue;
            }
            for (auto& [key, adj] : rec["instance_adjectives"].items()) {
                std::string apath = base + "/instance_adjectives/" + key;
                InstanceAttribute attr;
                if (!adj.is_object() || !adj.contains("adjective") || !adj["adjective"].is_string() ||
                    adj["adjective"].get<std::string>().empty()) {
                    violations.push_back({apath + "/adjective", "missing attribute text"});
                    continue;
                }
                attr.text = adj["adjective"].get<std::string>();
                if (!adj.contains("desired amount") ||
                    !parse_wire_quantity(adj["desired amount"], attr.desired_amount)) {
                    violations.push_back({apath + "/desired amount",
                                          "'desired amount' must be a positive integer string"});
                    continue;
                }
                if (attr.desired_amount > obj.desired_quantity)
                    violations.push_back(
                        {apath + "/desired amount",
                         "attribute amount " + std::to_string(attr.desired_amount) +
                             " exceeds object quantity " + std::to_string(obj.desired_quantity)});
                attr.spatial = adj.value("spatial", "");
                obj.attributes.push_back(std::move(attr));
            }
        }
        parsed.objects.push_back(std::move(obj));
    }

    if (!violations.empty()) return violations;
    return parsed;
}

std::string serialize_parsed(const ParsedPrompt& parsed, int indent) {
    ordered_json objects = ordered_json::object();
    for (const auto& obj : parsed.objects) {
        ordered_json adjectives = ordered_json::object();
        int k = 1;
        for (const auto& attr : obj.attributes) {
            ordered_json entry;
            entry["adjective"] = attr.text;
            entry["desired amount"] = std::to_string(attr.desired_amount);
            if (!attr.spatial.empty()) entry["spatial"] = attr.spatial;
            adjectives[std::to_string(k++)] = entry;
        }
        ordered_json rec;
        rec["desired_quantity"] = std::to_string(obj.desired_quantity);
        rec["instance_adjectives"] = adjectives;
        objects[obj.word] = rec;
    }
    ordered_json out;
    out["prompt"] = parsed.prompt;
    out["objects"] = objects;
    return out.dump(indent);
}

std::string build_parser_instruction(const std::string& prompt) {
    std::string instruction = read_text_file(find_data_file("prompts/prompt_parser_instruction.txt"));
    const std::string placeholder = "<<PROMPT>>";
    auto pos = instruction.find(placeholder);
    if (pos == std::string::npos)
        throw ValidationError("prompt_parser_instruction.txt is missing the <<PROMPT>> placeholder");
    instruction.replace(pos, placeholder.size(), prompt);
    return instruction;
}

namespace {

/// Pull the json payload out of a chat reply; tolerates fenced blocks and
/// leading chatter by locating the outermost braces.
std::string extract_json_payload(const std::string& reply) {
    auto start = reply.find('{');
    auto end = reply.rfind('}');
    if (start == std::string::npos || end == std::string::npos || end < start)
        throw ValidationError("chat reply contains no json object");
    return reply.substr(start, end - start + 1);
}

std::string violations_text(const std::vector<SchemaViolation>& violations) {
    std::string out;
    for (const auto& v : violations) out += "- " + v.path + ": " + v.message + "\n";
    return out;
}

}  // namespace

ParsedPrompt parse_prompt(const std::string& prompt, ChatBackend& chat) {
    if (prompt.empty()) throw ValidationError("parse_prompt: empty prompt");

    std::string instruction = build_parser_instruction(prompt);
    std::vector<ChatTurn> transcript;
    std::string last_violations;

    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string ask = instruction;
        if (attempt == 1)
            ask += "\n\nYour previous reply violated the schema:\n" + last_violations +
                   "Return a corrected json dictionary.";
        std::string reply = chat_complete(chat, ask, transcript);
        transcript.push_back({"user", ask});
        transcript.push_back({"assistant", reply});

        ValidationResult result = validate_parsed(extract_json_payload(reply));
        if (auto* parsed = std::get_if<ParsedPrompt>(&result)) {
            if (parsed->objects.empty())
                throw ValidationError("parse_prompt: prompt has no countable objects");
            if (parsed->prompt.empty()) parsed->prompt = prompt;
            return *parsed;
        }
        last_violations = violations_text(std::get<std::vector<SchemaViolation>>(result));
        log_warn("prompt parse attempt " + std::to_string(attempt + 1) +
                 " violated the schema:\n" + last_violations);
    }
    throw ValidationError("parse_prompt: chat reply failed schema validation after retry:\n" +
                          last_violations);
}

}  // namespace instancegen
