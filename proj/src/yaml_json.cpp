#include "oracular/yaml_json.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <limits>

namespace oracular {

namespace {

bool is_plain(const YAML::Node& node) { return node.Tag() == "?"; }

Json plain_scalar(const std::string& s) {
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno == 0 && end && *end == '\0' && end != s.c_str()) return v;
  }
  {
    char* end = nullptr;
    errno = 0;
    double d = std::strtod(s.c_str(), &end);
    bool numeric_start = std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '-' ||
                         s[0] == '+' || s[0] == '.';
    if (errno == 0 && end && *end == '\0' && end != s.c_str() && numeric_start) return d;
  }
  if (s == ".inf" || s == "+.inf") return std::numeric_limits<double>::infinity();
  if (s == "-.inf") return -std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace

Json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Undefined:
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar:
      if (is_plain(node)) return plain_scalar(node.Scalar());
      return node.Scalar();
    case YAML::NodeType::Sequence: {
      Json arr = Json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      Json obj = Json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
  }
  return nullptr;
}

YAML::Node json_to_yaml(const Json& j) {
  YAML::Node n;
  switch (j.type()) {
    case Json::value_t::null:
      return YAML::Node(YAML::NodeType::Null);
    case Json::value_t::boolean:
      n = j.get<bool>();
      return n;
    case Json::value_t::number_integer:
      n = j.get<long long>();
      return n;
    case Json::value_t::number_unsigned:
      n = j.get<unsigned long long>();
      return n;
    case Json::value_t::number_float:
      n = j.get<double>();
      return n;
    case Json::value_t::string:
      n = j.get<std::string>();
      return n;
    case Json::value_t::array: {
      YAML::Node seq(YAML::NodeType::Sequence);
      for (const auto& item : j) seq.push_back(json_to_yaml(item));
      return seq;
    }
    case Json::value_t::object: {
      YAML::Node map(YAML::NodeType::Map);
      for (auto it = j.begin(); it != j.end(); ++it) map[it.key()] = json_to_yaml(it.value());
      return map;
    }
    default:
      return YAML::Node(YAML::NodeType::Null);
  }
}

Json parse_yaml(const std::string& text) {
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    std::size_t offset = e.mark.pos >= 0 ? static_cast<std::size_t>(e.mark.pos) : 0;
    throw ParseError("YAML: " + e.msg, offset);
  }
}

namespace {

// Strings that a plain YAML scalar would read back as something else must be
// quoted to keep their type.
bool needs_quotes(const std::string& s) {
  if (s.empty()) return true;
  Json reread = plain_scalar(s);
  return !reread.is_string() || reread.get<std::string>() != s;
}

void emit(YAML::Emitter& out, const Json& j) {
  switch (j.type()) {
    case Json::value_t::null:
      out << YAML::Null;
      break;
    case Json::value_t::boolean:
      out << j.get<bool>();
      break;
    case Json::value_t::number_integer:
      out << j.get<long long>();
      break;
    case Json::value_t::number_unsigned:
      out << j.get<unsigned long long>();
      break;
    case Json::value_t::number_float:
      out << j.get<double>();
      break;
    case Json::value_t::string: {
      const auto& s = j.get_ref<const std::string&>();
      if (s.find('\n') != std::string::npos) {
        out << YAML::Literal << s;
      } else if (needs_quotes(s)) {
        out << YAML::DoubleQuoted << s;
      } else {
        out << s;
      }
      break;
    }
    case Json::value_t::array:
      out << YAML::BeginSeq;
      for (const auto& item : j) emit(out, item);
      out << YAML::EndSeq;
      break;
    case Json::value_t::object:
      out << YAML::BeginMap;
      for (auto it = j.begin(); it != j.end(); ++it) {
        out << YAML::Key << it.key() << YAML::Value;
        emit(out, it.value());
      }
      out << YAML::EndMap;
      break;
    default:
      out << YAML::Null;
  }
}

}  // namespace

std::string dump_yaml(const Json& j) {
  YAML::Emitter out;
  out.SetIndent(2);
  emit(out, j);
  return out.c_str();
}

}  // namespace oracular
