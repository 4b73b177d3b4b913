#pragma once

// Conversions between yaml-cpp nodes and JSON values. Plain scalars are
// typed (null, bool, integer, float, else string); quoted scalars always
// stay strings.

#include <string>

#include <yaml-cpp/yaml.h>

#include "oracular/common.hpp"

namespace oracular {

Json yaml_to_json(const YAML::Node& node);
YAML::Node json_to_yaml(const Json& j);

// Parses YAML text into JSON. Throws ParseError with the byte offset of the
// problem when the text is malformed.
Json parse_yaml(const std::string& text);

// Block-style YAML rendering used for prompts and demo files.
std::string dump_yaml(const Json& j);

}  // namespace oracular
