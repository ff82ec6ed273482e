#pragma once

// Validator for the JSON Schema keywords used by the shipped schemas:
// type, required, properties, items, $ref (local), minimum, maximum.

#include <string>
#include <vector>

#include "json.hpp"

namespace s3d::testing {

class SchemaChecker {
public:
    explicit SchemaChecker(nlohmann::json root) : root_(std::move(root)) {}

    std::vector<std::string> errors(const nlohmann::json& doc) const {
        std::vector<std::string> out;
        check(root_, doc, "$", out);
        return out;
    }

private:
    const nlohmann::json& resolve(const nlohmann::json& schema) const {
        if (!schema.contains("$ref")) return schema;
        const std::string ref = schema["$ref"];
        return root_.at(nlohmann::json::json_pointer(ref.substr(1)));
    }

    static bool type_matches(const std::string& t, const nlohmann::json& v) {
        if (t == "object") return v.is_object();
        if (t == "array") return v.is_array();
        if (t == "string") return v.is_string();
        if (t == "boolean") return v.is_boolean();
        if (t == "null") return v.is_null();
        if (t == "integer") return v.is_number_integer();
        if (t == "number") return v.is_number();
        return false;
    }

    void check(const nlohmann::json& raw, const nlohmann::json& v, const std::string& at,
               std::vector<std::string>& out) const {
        const auto& s = resolve(raw);
        if (s.contains("type")) {
            bool ok = false;
            if (s["type"].is_array()) {
                for (const auto& t : s["type"]) ok = ok || type_matches(t, v);
            } else {
                ok = type_matches(s["type"], v);
            }
            if (!ok) {
                out.push_back(at + ": wrong type");
                return;
            }
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (s.contains("minimum") && x < s["minimum"].get<double>()) out.push_back(at + ": below minimum");
            if (s.contains("maximum") && x > s["maximum"].get<double>()) out.push_back(at + ": above maximum");
        }
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto& k : s["required"])
                    if (!v.contains(k.get<std::string>())) out.push_back(at + ": missing " + k.get<std::string>());
            if (s.contains("properties"))
                for (const auto& [k, sub] : s["properties"].items())
                    if (v.contains(k)) check(sub, v[k], at + "." + k, out);
        }
        if (v.is_array() && s.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], at + "[" + std::to_string(i) + "]", out);
        }
    }

    nlohmann::json root_;
};

}  // namespace s3d::testing
