#include "qrec/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <unordered_set>
#include <variant>

#include "qrec/config.hpp"
#include "qrec/errors.hpp"
#include "qrec/manifest.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

namespace {

using Field = std::variant<int GenConfig::*, double GenConfig::*, std::uint64_t GenConfig::*>;

const std::vector<std::pair<std::string, Field>>& gen_fields() {
  static const std::vector<std::pair<std::string, Field>> fields{
      {"n_news", &GenConfig::n_news},
      {"n_users", &GenConfig::n_users},
      {"n_impressions", &GenConfig::n_impressions},
      {"vocab_size", &GenConfig::vocab_size},
      {"n_topics", &GenConfig::n_topics},
      {"clickbait_fraction", &GenConfig::clickbait_fraction},
      {"candidates_per_impression", &GenConfig::candidates_per_impression},
      {"seed", &GenConfig::seed},
      {"click_base", &GenConfig::click_base},
      {"click_match", &GenConfig::click_match},
      {"clickbait_boost", &GenConfig::clickbait_boost},
      {"dwell_base", &GenConfig::dwell_base},
      {"dwell_quality_slope", &GenConfig::dwell_quality_slope},
      {"dwell_match_slope", &GenConfig::dwell_match_slope},
      {"dwell_log_std", &GenConfig::dwell_log_std},
      {"dwell_cap", &GenConfig::dwell_cap},
      {"warmup_min", &GenConfig::warmup_min},
      {"warmup_max", &GenConfig::warmup_max},
      {"history_max", &GenConfig::history_max},
  };
  return fields;
}

constexpr int kMarkers = 50;
constexpr int kFiller = 200;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{seed, salt, std::uint64_t{0xd1b54a32d192ed03ULL}};
  return std::mt19937_64(seq);
}

std::string topic_word(int topic, int j) { return "w" + std::to_string(topic) + "_" + std::to_string(j); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string dwell_text(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", d);
  return buf;
}

}  // namespace

void GenConfig::set(std::string_view key, std::string_view value) {
  for (const auto& [name, field] : gen_fields()) {
    if (name != key) continue;
    try {
      std::visit(
          [&](auto member) {
            using T = std::remove_reference_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<T, double>) {
              this->*member = text::parse_double(value, key);
            } else if constexpr (std::is_same_v<T, int>) {
              this->*member = static_cast<int>(text::parse_int(value, key));
            } else {
              const auto v = text::parse_int(value, key);
              if (v < 0) throw DataError("seed must be non-negative");
              this->*member = static_cast<std::uint64_t>(v);
            }
          },
          field);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    return;
  }
  throw ConfigError("unknown generator key '" + std::string(key) + "'");
}

void GenConfig::validate() const {
  if (n_news <= 0 || n_users <= 0 || n_impressions <= 0 || n_topics <= 0) {
    throw ConfigError("generator counts must be positive");
  }
  if (!(clickbait_fraction >= 0.0 && clickbait_fraction <= 1.0)) throw ConfigError("clickbait_fraction must be in [0, 1]");
  if (candidates_per_impression < 2) throw ConfigError("candidates_per_impression must be at least 2");
  if (candidates_per_impression > n_news) throw ConfigError("candidates_per_impression exceeds n_news");
  if (vocab_size < 2 + kMarkers + kFiller + n_topics) {
    throw ConfigError("vocab_size too small: need at least " + std::to_string(2 + kMarkers + kFiller + n_topics));
  }
  if (!(dwell_log_std > 0.0) || !(dwell_cap > 0.0)) throw ConfigError("dwell_log_std and dwell_cap must be positive");
  if (warmup_min < 0 || warmup_max < warmup_min) throw ConfigError("need 0 <= warmup_min <= warmup_max");
  if (history_max <= 0) throw ConfigError("history_max must be positive");
}

std::string GenConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [name, field] : gen_fields()) {
    out << name << '=';
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<T, double>) {
            out << text::format_double(this->*member);
          } else {
            out << this->*member;
          }
        },
        field);
    out << '\n';
  }
  return out.str();
}

std::string GenConfig::hash() const { return text::hex64(text::fnv1a64(to_text())); }

GenConfig GenConfig::from_text(std::string_view body) {
  GenConfig c;
  for (const auto& [k, v] : parse_key_values(body)) c.set(k, v);
  c.validate();
  return c;
}

GenConfig GenConfig::from_file(const std::string& path) { return from_text(text::read_file(path)); }

bool is_marker_token(std::string_view token) {
  return token.size() > 2 && token.substr(0, 2) == "cb";
}

SynthCorpus generate_corpus(const GenConfig& config) {
  config.validate();
  auto rng = stream(config.seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthCorpus corpus;
  const int words_per_topic = (config.vocab_size - 2 - kMarkers - kFiller) / config.n_topics;
  for (int i = 0; i < kMarkers; ++i) corpus.vocab.push_back("cb" + std::to_string(i));
  for (int i = 0; i < kFiller; ++i) corpus.vocab.push_back("f" + std::to_string(i));
  for (int t = 0; t < config.n_topics; ++t) {
    for (int j = 0; j < words_per_topic; ++j) corpus.vocab.push_back(topic_word(t, j));
  }

  std::uniform_int_distribution<int> topic_dist(0, config.n_topics - 1);
  std::uniform_int_distribution<int> word_dist(0, words_per_topic - 1);
  std::uniform_int_distribution<int> marker_dist(0, kMarkers - 1);
  std::uniform_int_distribution<int> filler_dist(0, kFiller - 1);
  std::uniform_int_distribution<int> title_len(8, 14);
  std::uniform_int_distribution<int> short_body(15, 30);
  std::uniform_int_distribution<int> long_body(30, 60);

  auto topical = [&](int topic) {
    // Mostly the news item's own topic, occasionally any topic.
    const int t = unit(rng) < 0.9 ? topic : topic_dist(rng);
    return topic_word(t, word_dist(rng));
  };

  corpus.news.reserve(static_cast<std::size_t>(config.n_news));
  for (int i = 0; i < config.n_news; ++i) {
    SynthNews n;
    n.id = "N" + std::to_string(i + 1);
    n.topic = topic_dist(rng);
    n.clickbait = unit(rng) < config.clickbait_fraction;
    n.quality = n.clickbait ? 0.35 * unit(rng) : 0.2 + 0.8 * unit(rng);
    const int tl = title_len(rng);
    const double marker_rate = 0.5 * (1.0 - n.quality) + 0.15;
    for (int k = 0; k < tl; ++k) {
      if (n.clickbait && unit(rng) < marker_rate) {
        n.title.push_back("cb" + std::to_string(marker_dist(rng)));
      } else {
        n.title.push_back(topical(n.topic));
      }
    }
    const int bl = n.clickbait ? short_body(rng) : long_body(rng);
    const double informative = 0.3 + 0.6 * n.quality;
    for (int k = 0; k < bl; ++k) {
      if (unit(rng) < informative) {
        n.body.push_back(topical(n.topic));
      } else {
        n.body.push_back("f" + std::to_string(filler_dist(rng)));
      }
    }
    corpus.news.push_back(std::move(n));
  }
  return corpus;
}

SynthBehaviors generate_behaviors(const GenConfig& config, const SynthCorpus& corpus) {
  config.validate();
  auto rng = stream(config.seed, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n_news = corpus.news.size();
  const auto n_users = static_cast<std::size_t>(config.n_users);
  const auto n_topics = static_cast<std::size_t>(config.n_topics);
  std::uniform_int_distribution<std::size_t> news_dist(0, n_news - 1);
  std::uniform_int_distribution<std::size_t> user_dist(0, n_users - 1);
  std::uniform_int_distribution<std::size_t> topic_dist(0, n_topics - 1);

  SynthBehaviors out;
  out.user_interest.assign(n_users, std::vector<double>(n_topics, 0.1));
  for (auto& interest : out.user_interest) {
    const std::size_t first = topic_dist(rng);
    std::size_t second = topic_dist(rng);
    if (n_topics > 1) {
      while (second == first) second = topic_dist(rng);
    }
    interest[second] = 0.6;
    interest[first] = 1.0;
  }

  auto click_prob = [&](std::size_t user, std::size_t news) {
    const SynthNews& n = corpus.news[news];
    const double match = out.user_interest[user][static_cast<std::size_t>(n.topic)];
    return sigmoid(config.click_base + config.click_match * match + (n.clickbait ? config.clickbait_boost : 0.0));
  };
  auto dwell = [&](std::size_t user, std::size_t news) {
    const SynthNews& n = corpus.news[news];
    const double match = out.user_interest[user][static_cast<std::size_t>(n.topic)];
    const double z = config.dwell_base + config.dwell_quality_slope * n.quality + config.dwell_match_slope * match +
                     config.dwell_log_std * normal(rng);
    const double d = std::min(config.dwell_cap, std::exp(z));
    return std::round(d * 1000.0) / 1000.0;
  };

  std::vector<std::vector<std::size_t>> clicks(n_users);
  std::vector<std::unordered_set<std::size_t>> clicked(n_users);
  auto record_click = [&](std::size_t user, std::size_t news) {
    clicks[user].push_back(news);
    clicked[user].insert(news);
    out.dwell.push_back({"U" + std::to_string(user + 1), corpus.news[news].id, dwell(user, news)});
  };

  // Warm-up clicks before the impression window give most users a history.
  std::uniform_int_distribution<int> warmup(config.warmup_min, config.warmup_max);
  for (std::size_t u = 0; u < n_users; ++u) {
    const int target = std::min<int>(warmup(rng), static_cast<int>(n_news));
    int made = 0;
    for (int attempts = 0; made < target && attempts < 1000 * (target + 1); ++attempts) {
      const std::size_t c = news_dist(rng);
      if (clicked[u].count(c)) continue;
      if (unit(rng) < click_prob(u, c)) {
        record_click(u, c);
        ++made;
      }
    }
  }

  const auto slate = static_cast<std::size_t>(config.candidates_per_impression);
  const std::int64_t start_time = 1'700'000'000;
  std::vector<std::size_t> candidates;
  std::unordered_set<std::size_t> in_slate;
  std::vector<double> probs;
  for (int i = 0; i < config.n_impressions; ++i) {
    const std::size_t u = user_dist(rng);
    if (clicked[u].size() + slate > n_news) continue;  // user has exhausted the corpus
    SynthImpression imp;
    imp.id = "I" + std::to_string(i + 1);
    imp.user = "U" + std::to_string(u + 1);
    imp.timestamp = start_time + 60 * static_cast<std::int64_t>(i);
    const auto& h = clicks[u];
    const std::size_t hist_begin = h.size() > static_cast<std::size_t>(config.history_max)
                                       ? h.size() - static_cast<std::size_t>(config.history_max)
                                       : 0;
    imp.history.assign(h.begin() + static_cast<std::ptrdiff_t>(hist_begin), h.end());

    candidates.clear();
    in_slate.clear();
    while (candidates.size() < slate) {
      const std::size_t c = news_dist(rng);
      if (clicked[u].count(c) || !in_slate.insert(c).second) continue;
      candidates.push_back(c);
    }
    probs.clear();
    imp.labels.assign(slate, 0);
    bool any = false;
    for (std::size_t j = 0; j < slate; ++j) {
      probs.push_back(click_prob(u, candidates[j]));
      if (unit(rng) < probs.back()) {
        imp.labels[j] = 1;
        any = true;
      }
    }
    if (!any) {
      // Every impression records at least one click, drawn in proportion to
      // the click probabilities.
      std::discrete_distribution<std::size_t> forced(probs.begin(), probs.end());
      imp.labels[forced(rng)] = 1;
    }
    imp.candidates = candidates;
    for (std::size_t j = 0; j < slate; ++j) {
      if (imp.labels[j]) record_click(u, candidates[j]);
    }
    out.impressions.push_back(std::move(imp));
  }
  return out;
}

std::string news_tsv(const SynthCorpus& corpus) {
  std::ostringstream out;
  auto join = [&](const std::vector<std::string>& tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
  };
  for (const SynthNews& n : corpus.news) {
    out << n.id << '\t';
    join(n.title);
    out << '\t';
    join(n.body);
    out << '\n';
  }
  return out.str();
}

std::string truth_tsv(const SynthCorpus& corpus) {
  std::ostringstream out;
  for (const SynthNews& n : corpus.news) out << n.id << '\t' << text::format_double(n.quality) << '\t' << n.topic << '\n';
  return out.str();
}

std::string vocab_tsv(const SynthCorpus& corpus) {
  std::ostringstream out;
  out << "<pad>\t0\n<unk>\t1\n";
  for (std::size_t i = 0; i < corpus.vocab.size(); ++i) out << corpus.vocab[i] << '\t' << i + 2 << '\n';
  return out.str();
}

std::string behaviors_tsv(const SynthCorpus& corpus, const SynthBehaviors& behaviors) {
  std::ostringstream out;
  for (const SynthImpression& imp : behaviors.impressions) {
    out << imp.id << '\t' << imp.user << '\t' << imp.timestamp << '\t';
    for (std::size_t i = 0; i < imp.history.size(); ++i) out << (i ? " " : "") << corpus.news[imp.history[i]].id;
    out << '\t';
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      out << (i ? " " : "") << corpus.news[imp.candidates[i]].id << '-' << int{imp.labels[i]};
    }
    out << '\n';
  }
  return out.str();
}

std::string dwell_tsv(const SynthBehaviors& behaviors) {
  std::ostringstream out;
  for (const DwellRecord& r : behaviors.dwell) out << r.user_id << '\t' << r.news_id << '\t' << dwell_text(r.seconds) << '\n';
  return out.str();
}

std::string users_tsv(const SynthBehaviors& behaviors) {
  std::ostringstream out;
  for (std::size_t u = 0; u < behaviors.user_interest.size(); ++u) {
    out << 'U' << u + 1 << '\t';
    const auto& w = behaviors.user_interest[u];
    for (std::size_t t = 0; t < w.size(); ++t) out << (t ? "," : "") << text::format_double(w[t]);
    out << '\n';
  }
  return out.str();
}

std::string write_synthetic_dataset(const GenConfig& config, const std::string& dir) {
  config.validate();
  std::filesystem::create_directories(dir);
  const SynthCorpus corpus = generate_corpus(config);
  const SynthBehaviors behaviors = generate_behaviors(config, corpus);

  Manifest manifest;
  manifest.set("command", "gen-data");
  manifest.set("seed", std::to_string(config.seed));
  manifest.set("config_hash", config.hash());
  manifest.set("n_news", std::to_string(corpus.news.size()));
  manifest.set("n_users", std::to_string(config.n_users));
  manifest.set("n_impressions", std::to_string(behaviors.impressions.size()));
  manifest.set("n_dwell", std::to_string(behaviors.dwell.size()));
  manifest.set_config("gen", config.to_text());
  const std::vector<std::pair<std::string, std::string>> files{
      {"news.tsv", news_tsv(corpus)},
      {"behaviors.tsv", behaviors_tsv(corpus, behaviors)},
      {"dwell.tsv", dwell_tsv(behaviors)},
      {"truth.tsv", truth_tsv(corpus)},
      {"vocab.tsv", vocab_tsv(corpus)},
      {"users.tsv", users_tsv(behaviors)},
  };
  for (const auto& [name, body] : files) {
    text::write_file((std::filesystem::path(dir) / name).string(), body);
    manifest.add_file(name, body);
  }
  const std::string text = manifest.to_text();
  text::write_file((std::filesystem::path(dir) / "manifest.txt").string(), text);
  return text;
}

}  // namespace qrec
