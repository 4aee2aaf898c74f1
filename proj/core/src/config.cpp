#include "eegnn/config.hpp"

#include <algorithm>

namespace eegnn {

ConfigReader::ConfigReader(const nlohmann::json& doc, std::vector<std::string>& problems,
                           std::string prefix)
    : doc_(doc), problems_(problems), prefix_(std::move(prefix)) {
  if (!doc_.is_object()) problems_.push_back((prefix_.empty() ? "config" : prefix_) + ": must be a JSON object");
}

std::string ConfigReader::path(std::string_view key) const {
  return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key);
}

void ConfigReader::problem(std::string_view key, const std::string& message) {
  problems_.push_back(path(key) + ": " + message);
}

bool ConfigReader::has(std::string_view key) const {
  return doc_.is_object() && doc_.contains(std::string(key));
}

const nlohmann::json* ConfigReader::find(std::string_view key) {
  seen_.emplace_back(key);
  if (!has(key)) return nullptr;
  return &doc_.at(std::string(key));
}

const nlohmann::json* ConfigReader::object(std::string_view key) {
  const nlohmann::json* v = find(key);
  if (v && !v->is_object()) {
    problem(key, "must be an object");
    return nullptr;
  }
  return v;
}

void ConfigReader::finish() {
  if (!doc_.is_object()) return;
  for (const auto& [key, _] : doc_.items())
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) problem(key, "unknown key");
}

}  // namespace eegnn
