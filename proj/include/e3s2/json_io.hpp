#pragma once

// JSON and text serialization shared by the library and the CLI.

#include "e3s2/model.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace e3s2 {

using Json = nlohmann::ordered_json;

/// Shortest decimal that round-trips; "NaN", "Inf", "-Inf" for non-finite values.
std::string format_number(double v);

/// Number, or null when not finite.
Json json_number(double v);
double number_from_json(const Json& j);

Json spec_to_json(const ModelSpec& spec);
/// Throws SpecError on unknown keys or values.
ModelSpec spec_from_json(const Json& j);

/// All parameters relevant to `spec` (free ones plus dummies), by name.
Json params_to_json(const ModelSpec& spec, const ParameterVector& p);
/// Overwrites the entries named in `j`; dummies are matched by DummySpec::name().
void params_from_json(const ModelSpec& spec, const Json& j, ParameterVector& p);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace e3s2
