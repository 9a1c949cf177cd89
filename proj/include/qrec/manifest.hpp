#pragma once

// key=value manifest written next to every command output. Output files are
// recorded as "file.<name>=<fnv1a64 hex>"; the effective config is embedded
// under a prefix so any output can be reproduced from its manifest.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qrec {

class Manifest {
 public:
  void set(std::string key, std::string value);
  void add_file(const std::string& name, std::string_view contents);
  // One "prefix.key=value" entry per line of a key=value config text.
  void set_config(const std::string& prefix, std::string_view config_text);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_text() const;
  // Hash of to_text(); equal manifests hash equal.
  std::string hash() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace qrec
