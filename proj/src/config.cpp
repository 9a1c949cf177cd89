#include "qrec/config.hpp"

#include <set>
#include <sstream>

#include "qrec/errors.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (std::string_view raw : text::split(text, '\n')) {
    ++line_no;
    auto hash = raw.find('#');
    std::string_view line = text::trim(raw.substr(0, hash));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key(text::trim(line.substr(0, eq)));
    std::string value(text::trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw ConfigError("duplicate key " + key);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

KeyValues parse_overrides(const std::vector<std::string>& overrides) {
  KeyValues out;
  for (const std::string& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    out.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  return out;
}

std::string to_string(QualityMeasure m) {
  switch (m) {
    case QualityMeasure::kDistribution:
      return "distribution";
    case QualityMeasure::kAvgDwell:
      return "avg_dwell";
    case QualityMeasure::kAvgLogDwell:
      return "avg_log_dwell";
  }
  return "distribution";
}

QualityMeasure parse_quality_measure(std::string_view s) {
  if (s == "distribution") return QualityMeasure::kDistribution;
  if (s == "avg_dwell") return QualityMeasure::kAvgDwell;
  if (s == "avg_log_dwell") return QualityMeasure::kAvgLogDwell;
  throw ConfigError("unknown quality_measure '" + std::string(s) + "'");
}

namespace {

int to_int(std::string_view key, std::string_view v) {
  try {
    return static_cast<int>(text::parse_int(v, key));
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

double to_double(std::string_view key, std::string_view v) {
  try {
    return text::parse_double(v, key);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(std::string(key) + " must be 0/1 or true/false");
}

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  if (key == "embed_dim") embed_dim = to_int(key, value);
  else if (key == "hidden_dim") hidden_dim = to_int(key, value);
  else if (key == "heads") heads = to_int(key, value);
  else if (key == "layers") layers = to_int(key, value);
  else if (key == "dropout") dropout = to_double(key, value);
  else if (key == "max_title") max_title = to_int(key, value);
  else if (key == "max_body") max_body = to_int(key, value);
  else if (key == "max_history") max_history = to_int(key, value);
  else if (key == "lr") lr = to_double(key, value);
  else if (key == "batch_size") batch_size = to_int(key, value);
  else if (key == "epochs") epochs = to_int(key, value);
  else if (key == "lambda") lambda = to_double(key, value);
  else if (key == "mu") mu = to_double(key, value);
  else if (key == "epsilon") epsilon = to_double(key, value);
  else if (key == "neg_k") neg_k = to_int(key, value);
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "precision") precision = std::string(value);
  else if (key == "attention_dim") attention_dim = to_int(key, value);
  else if (key == "feed_forward") feed_forward = to_bool(key, value);
  else if (key == "clip_norm") clip_norm = to_double(key, value);
  else if (key == "quality_attention") quality_attention = to_bool(key, value);
  else if (key == "reg_positive_only") reg_positive_only = to_bool(key, value);
  else if (key == "quality_measure") quality_measure = parse_quality_measure(value);
  else if (key == "min_clicks") min_clicks = to_int(key, value);
  else if (key == "dwell_cap") dwell_cap = to_double(key, value);
  else if (key == "train_fraction") train_fraction = to_double(key, value);
  else if (key == "valid_fraction") valid_fraction = to_double(key, value);
  else if (key == "quality_holdout") quality_holdout = to_double(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void ExperimentConfig::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) set(k, v);
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(embed_dim > 0 && hidden_dim > 0 && heads > 0, "dimensions must be positive");
  require(hidden_dim % heads == 0, "hidden_dim must be divisible by heads");
  require(layers == 1, "only a single transformer layer is supported (layers=1)");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(max_title > 0 && max_body > 0 && max_history > 0, "length limits must be positive");
  require(attention_dim >= 0, "attention_dim must be >= 0");
  require(effective_attention_dim() > 0, "attention_dim resolves to 0");
  require(lr > 0.0, "lr must be positive");
  require(batch_size > 0 && epochs > 0, "batch_size and epochs must be positive");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(precision == "double", "only precision=double is supported");
  require(lambda >= 0.0 && mu >= 0.0, "lambda and mu must be non-negative");
  require(epsilon > 0.0, "epsilon must be positive");
  require(neg_k >= 1, "neg_k must be >= 1");
  require(min_clicks >= 1 && dwell_cap > 0.0, "min_clicks must be >= 1 and dwell_cap positive");
  require(train_fraction > 0.0 && valid_fraction >= 0.0 && train_fraction + valid_fraction < 1.0,
          "train_fraction + valid_fraction must leave a non-empty test split");
  require(quality_holdout >= 0.0 && quality_holdout < 1.0, "quality_holdout must be in [0, 1)");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  out << "embed_dim=" << embed_dim << '\n'
      << "hidden_dim=" << hidden_dim << '\n'
      << "heads=" << heads << '\n'
      << "layers=" << layers << '\n'
      << "dropout=" << text::format_double(dropout) << '\n'
      << "max_title=" << max_title << '\n'
      << "max_body=" << max_body << '\n'
      << "max_history=" << max_history << '\n'
      << "lr=" << text::format_double(lr) << '\n'
      << "batch_size=" << batch_size << '\n'
      << "epochs=" << epochs << '\n'
      << "lambda=" << text::format_double(lambda) << '\n'
      << "mu=" << text::format_double(mu) << '\n'
      << "epsilon=" << text::format_double(epsilon) << '\n'
      << "neg_k=" << neg_k << '\n'
      << "seed=" << seed << '\n'
      << "precision=" << precision << '\n'
      << "attention_dim=" << attention_dim << '\n'
      << "feed_forward=" << (feed_forward ? 1 : 0) << '\n'
      << "clip_norm=" << text::format_double(clip_norm) << '\n'
      << "quality_attention=" << (quality_attention ? 1 : 0) << '\n'
      << "reg_positive_only=" << (reg_positive_only ? 1 : 0) << '\n'
      << "quality_measure=" << to_string(quality_measure) << '\n'
      << "min_clicks=" << min_clicks << '\n'
      << "dwell_cap=" << text::format_double(dwell_cap) << '\n'
      << "train_fraction=" << text::format_double(train_fraction) << '\n'
      << "valid_fraction=" << text::format_double(valid_fraction) << '\n'
      << "quality_holdout=" << text::format_double(quality_holdout) << '\n';
  return out.str();
}

std::string ExperimentConfig::hash() const { return text::hex64(text::fnv1a64(to_text())); }

ExperimentConfig ExperimentConfig::from_text(std::string_view text) {
  ExperimentConfig c;
  c.apply(parse_key_values(text));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::string contents;
  try {
    contents = text::read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path);
  }
  return from_text(contents);
}

}  // namespace qrec
