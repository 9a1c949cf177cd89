#include "qrec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "qrec/encoder.hpp"
#include "qrec/errors.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

int Vocabulary::add(std::string_view token) {
  auto [it, inserted] = ids_.emplace(std::string(token), static_cast<int>(tokens_.size()));
  if (inserted) tokens_.emplace_back(token);
  return it->second;
}

std::string Vocabulary::to_tsv() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  return out.str();
}

Vocabulary Vocabulary::from_tsv(std::string_view text) {
  Vocabulary v;
  v.tokens_.clear();
  v.ids_.clear();
  std::vector<std::pair<int, std::string>> rows;
  for (std::string_view line : text::split(text, '\n')) {
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 2) throw DataError("vocab.tsv rows need token \\t id");
    rows.emplace_back(static_cast<int>(text::parse_int(f[1], "vocab id")), std::string(f[0]));
  }
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != static_cast<int>(i)) throw DataError("vocab ids must be dense and start at 0");
    v.add(rows[i].second);
  }
  if (v.size() < 2 || v.tokens_[kPadId] != "<pad>" || v.tokens_[kUnkId] != "<unk>") {
    throw DataError("vocab.tsv must start with <pad> and <unk>");
  }
  return v;
}

std::optional<std::size_t> NewsCorpus::find(std::string_view id) const {
  auto it = index.find(std::string(id));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::size_t NewsCorpus::at(std::string_view id) const {
  auto found = find(id);
  if (!found) throw DataError("unknown news id '" + std::string(id) + "'");
  return *found;
}

NewsCorpus parse_news(std::string_view news_tsv, std::optional<Vocabulary> vocab) {
  NewsCorpus corpus;
  const bool grow = !vocab.has_value();
  if (vocab) corpus.vocab = std::move(*vocab);
  auto to_ids = [&](std::string_view field) {
    std::vector<int> ids;
    for (std::string_view tok : text::split_whitespace(field)) {
      ids.push_back(grow ? corpus.vocab.add(tok) : corpus.vocab.id(tok));
    }
    return ids;
  };
  std::size_t line_no = 0;
  for (std::string_view line : text::split(news_tsv, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 3) throw DataError("news.tsv line " + std::to_string(line_no) + ": expected 3 fields");
    std::string id(text::trim(f[0]));
    if (corpus.index.count(id)) throw DataError("duplicate news id " + id);
    corpus.index.emplace(id, corpus.ids.size());
    corpus.ids.push_back(id);
    corpus.titles.push_back(to_ids(f[1]));
    corpus.bodies.push_back(to_ids(f[2]));
    if (corpus.titles.back().empty()) throw DataError("news " + id + " has an empty title");
  }
  return corpus;
}

std::vector<Impression> parse_behaviors(std::string_view behaviors_tsv, const NewsCorpus& corpus) {
  std::vector<Impression> out;
  std::size_t line_no = 0;
  for (std::string_view line : text::split(behaviors_tsv, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 5) throw DataError("behaviors.tsv line " + std::to_string(line_no) + ": expected 5 fields");
    Impression imp;
    imp.id = std::string(text::trim(f[0]));
    imp.user = std::string(text::trim(f[1]));
    imp.timestamp = text::parse_int(f[2], "timestamp");
    for (std::string_view h : text::split_whitespace(f[3])) imp.history.push_back(corpus.at(h));
    for (std::string_view c : text::split_whitespace(f[4])) {
      auto dash = c.rfind('-');
      if (dash == std::string_view::npos) throw DataError("candidate '" + std::string(c) + "' is not newsid-label");
      std::string_view label = c.substr(dash + 1);
      if (label != "0" && label != "1") throw DataError("candidate label must be 0 or 1");
      imp.candidates.push_back(corpus.at(c.substr(0, dash)));
      imp.labels.push_back(label == "1" ? 1 : 0);
    }
    if (imp.candidates.empty()) throw DataError("impression " + imp.id + " has no candidates");
    out.push_back(std::move(imp));
  }
  return out;
}

std::vector<DwellRecord> parse_dwell(std::string_view dwell_tsv) {
  std::vector<DwellRecord> out;
  std::size_t line_no = 0;
  for (std::string_view line : text::split(dwell_tsv, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 3) throw DataError("dwell.tsv line " + std::to_string(line_no) + ": expected 3 fields");
    DwellRecord r{std::string(text::trim(f[0])), std::string(text::trim(f[1])), text::parse_double(f[2], "dwell")};
    if (!(r.seconds >= 0.0)) throw DataError("dwell.tsv line " + std::to_string(line_no) + ": negative dwell");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::optional<TruthRecord>> parse_truth(std::string_view truth_tsv, const NewsCorpus& corpus) {
  std::vector<std::optional<TruthRecord>> out(corpus.size());
  for (std::string_view line : text::split(truth_tsv, '\n')) {
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 3) throw DataError("truth.tsv rows need news_id \\t g \\t topic");
    out[corpus.at(text::trim(f[0]))] =
        TruthRecord{text::parse_double(f[1], "g"), static_cast<int>(text::parse_int(f[2], "topic"))};
  }
  return out;
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw DataError("dataset directory " + dir + " does not exist");
  Dataset ds;
  std::optional<Vocabulary> vocab;
  if (fs::exists(root / "vocab.tsv")) vocab = Vocabulary::from_tsv(text::read_file((root / "vocab.tsv").string()));
  ds.corpus = parse_news(text::read_file((root / "news.tsv").string()), std::move(vocab));
  ds.impressions = parse_behaviors(text::read_file((root / "behaviors.tsv").string()), ds.corpus);
  ds.dwell = parse_dwell(text::read_file((root / "dwell.tsv").string()));
  if (fs::exists(root / "truth.tsv")) ds.truth = parse_truth(text::read_file((root / "truth.tsv").string()), ds.corpus);
  if (ds.corpus.size() == 0) throw DataError("news.tsv is empty");
  if (ds.impressions.empty()) throw DataError("behaviors.tsv is empty");
  return ds;
}

Split split_impressions(std::vector<Impression> impressions, double train_fraction, double valid_fraction) {
  if (!(train_fraction > 0.0) || valid_fraction < 0.0 || train_fraction + valid_fraction > 1.0) {
    throw ConfigError("invalid split fractions");
  }
  std::stable_sort(impressions.begin(), impressions.end(),
                   [](const Impression& a, const Impression& b) { return a.timestamp < b.timestamp; });
  const std::size_t n = impressions.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::floor(valid_fraction * static_cast<double>(n))));
  if (n_train == 0) throw DataError("training split is empty");
  if (n_train + n_valid >= n) throw DataError("test split is empty");
  Split s;
  auto begin = std::make_move_iterator(impressions.begin());
  s.train.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                      begin + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_valid), std::make_move_iterator(impressions.end()));
  return s;
}

std::vector<DwellRecord> dwell_for_impressions(const std::vector<DwellRecord>& dwell,
                                               const std::vector<Impression>& impressions,
                                               const std::vector<Impression>& all_impressions,
                                               const NewsCorpus& corpus) {
  auto clicks_of = [&](const std::vector<Impression>& imps) {
    std::set<std::pair<std::string, std::string>> clicks;
    for (const Impression& imp : imps) {
      for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
        if (imp.labels[i]) clicks.emplace(imp.user, corpus.ids[imp.candidates[i]]);
      }
    }
    return clicks;
  };
  const auto wanted = clicks_of(impressions);
  const auto any = clicks_of(all_impressions);
  std::vector<DwellRecord> out;
  for (const DwellRecord& r : dwell) {
    auto key = std::make_pair(r.user_id, r.news_id);
    if (wanted.count(key) || !any.count(key)) out.push_back(r);
  }
  return out;
}

}  // namespace qrec
