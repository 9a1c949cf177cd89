#include "qrec/manifest.hpp"

#include "qrec/config.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

void Manifest::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void Manifest::add_file(const std::string& name, std::string_view contents) {
  set("file." + name, text::hex64(text::fnv1a64(contents)));
}

void Manifest::set_config(const std::string& prefix, std::string_view config_text) {
  for (const auto& [k, v] : parse_key_values(config_text)) set(prefix + "." + k, v);
}

std::string Manifest::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string Manifest::hash() const { return text::hex64(text::fnv1a64(to_text())); }

void Manifest::write(const std::string& path) const { text::write_file(path, to_text()); }

}  // namespace qrec
