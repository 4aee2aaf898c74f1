#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace eegnn {

/// Reads optional fields from a JSON object, collecting every problem instead
/// of stopping at the first. Fields that are absent keep their defaults.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& doc, std::vector<std::string>& problems,
               std::string prefix = {});

  template <class T>
  bool read(std::string_view key, T& out) {
    const nlohmann::json* v = find(key);
    if (!v) return false;
    try {
      out = v->get<T>();
      return true;
    } catch (const nlohmann::json::exception&) {
      problem(key, "has the wrong type (" + std::string(v->type_name()) + ")");
      return false;
    }
  }

  /// Reads a string and converts it with `parse`, which throws on bad names.
  template <class E, class Parse>
  bool read_enum(std::string_view key, E& out, Parse parse) {
    std::string name;
    if (!read(key, name)) return false;
    try {
      out = parse(name);
      return true;
    } catch (const std::exception& e) {
      problem(key, e.what());
      return false;
    }
  }

  /// Nested object; nullptr when absent or not an object (the latter is reported).
  const nlohmann::json* object(std::string_view key);

  bool has(std::string_view key) const;
  /// Accepts a key without reading it.
  void allow(std::string_view key) { seen_.emplace_back(key); }
  void problem(std::string_view key, const std::string& message);
  std::string path(std::string_view key) const;

  /// Reports every key that was never read.
  void finish();

 private:
  const nlohmann::json* find(std::string_view key);

  const nlohmann::json& doc_;
  std::vector<std::string>& problems_;
  std::string prefix_;
  std::vector<std::string> seen_;
};

}  // namespace eegnn
