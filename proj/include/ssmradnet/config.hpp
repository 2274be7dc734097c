#pragma once

#include <map>
#include <string>
#include <vector>

namespace ssmr {

// Flat key=value run configuration ("section.key = value", '#' comments).
// Every key has a registered default; unknown keys are errors.
class RunConfig {
 public:
  RunConfig();  // defaults only

  static RunConfig from_file(const std::string& path);

  // Applies "key=value" override strings (CLI --set).
  void apply_override(const std::string& kv);
  void apply_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // Effective configuration, sorted by key, suitable for config.echo.
  std::string echo() const;
  void write_echo(const std::string& path) const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ssmr
