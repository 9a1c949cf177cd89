#include "qrec/model.hpp"

#include <algorithm>
#include <unordered_map>

#include "qrec/errors.hpp"

namespace qrec {

QualityHead::QualityHead(ParameterStore& store, std::size_t hidden_dim, std::size_t rep_dim, ad::Rng& rng)
    : dense1_(store, "quality.dense1", hidden_dim, rep_dim, rng), dense2_(store, "quality.dense2", rep_dim, 1, rng) {}

ad::Tensor QualityHead::forward(ad::Graph& g, const ad::Tensor& news) const {
  ad::Tensor out = dense2_.forward(g, ad::tanh(g, dense1_.forward(g, news)));
  return ad::reshape(g, out, {out.size()});
}

void QualityHead::set_output_bias(double value) {
  ad::Tensor b = dense2_.bias();
  b.mutable_values()[0] = value;
}

ModelConfig ModelConfig::from_experiment(const ExperimentConfig& config, std::size_t vocab_size, int bins) {
  config.validate();
  const auto att = static_cast<std::size_t>(config.effective_attention_dim());
  ModelConfig m;
  m.encoder.vocab_size = vocab_size;
  m.encoder.embed_dim = static_cast<std::size_t>(config.embed_dim);
  m.encoder.hidden_dim = static_cast<std::size_t>(config.hidden_dim);
  m.encoder.heads = static_cast<std::size_t>(config.heads);
  m.encoder.max_title_len = static_cast<std::size_t>(config.max_title);
  m.encoder.max_body_len = static_cast<std::size_t>(config.max_body);
  m.encoder.attention_dim = att;
  m.encoder.dropout = config.dropout;
  m.encoder.feed_forward = config.feed_forward;
  m.user.hidden_dim = m.encoder.hidden_dim;
  m.user.heads = m.encoder.heads;
  m.user.bins = static_cast<std::size_t>(bins);
  m.user.quality_rep_dim = att;
  m.user.attention_dim = att;
  m.user.max_history = static_cast<std::size_t>(config.max_history);
  m.user.dropout = config.dropout;
  m.user.feed_forward = config.feed_forward;
  m.quality_rep_dim = att;
  return m;
}

NewsFeatures NewsFeatures::build(const NewsCorpus& corpus, const QualityTable* table, std::size_t max_title,
                                 std::size_t max_body, std::size_t bins) {
  if (table && static_cast<std::size_t>(table->bins()) != bins) {
    throw StructuralError("quality table bin count differs from the model");
  }
  NewsFeatures f;
  f.bins = bins;
  const std::size_t n = corpus.size();
  f.titles.resize(n);
  f.title_body.resize(n);
  f.dwell.assign(n * bins, 1.0 / static_cast<double>(bins));
  f.has_dwell.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& title = corpus.titles[i];
    const auto& body = corpus.bodies[i];
    f.titles[i].assign(title.begin(), title.begin() + static_cast<std::ptrdiff_t>(std::min(max_title, title.size())));
    f.title_body[i] = f.titles[i];
    f.title_body[i].insert(f.title_body[i].end(), body.begin(),
                           body.begin() + static_cast<std::ptrdiff_t>(std::min(max_body, body.size())));
    if (f.titles[i].empty()) throw InputError("news " + corpus.ids[i] + " has an empty title");
    if (table) {
      if (const auto* e = table->find(corpus.ids[i])) {
        std::copy(e->distribution.t.begin(), e->distribution.t.end(), f.dwell.begin() + static_cast<std::ptrdiff_t>(i * bins));
        f.has_dwell[i] = 1;
      }
    }
  }
  return f;
}

std::span<const std::size_t> recent(std::span<const std::size_t> history, std::size_t max_history) {
  if (history.size() <= max_history) return history;
  return history.subspan(history.size() - max_history);
}

QualityRecModel::QualityRecModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  ad::Rng rng(seed);
  news_encoder_ = NewsEncoder(store_, config_.encoder, rng);
  dwell_rep_ = DwellRepLayer(store_, config_.user.bins, config_.user.quality_rep_dim, rng);
  user_encoder_ = UserEncoder(store_, config_.user, rng);
  joint_attention_ = JointAttention(store_, config_.user, rng);
  candidate_head_ = CandidateHead(store_, config_.encoder.hidden_dim, rng);
  quality_head_ = QualityHead(store_, config_.encoder.hidden_dim, config_.quality_rep_dim, rng);
}

void QualityRecModel::disable_quality_attention() {
  ad::Tensor v = store_.get(JointAttention::kQualityQueryName);
  std::fill(v.mutable_values().begin(), v.mutable_values().end(), 0.0);
  store_.freeze(JointAttention::kQualityQueryName);
}

namespace {

// Dense local numbering of the news referenced by a batch.
struct LocalNews {
  std::vector<std::size_t> ids;
  std::unordered_map<std::size_t, std::size_t> local;

  std::size_t operator()(std::size_t news) {
    auto [it, inserted] = local.emplace(news, ids.size());
    if (inserted) ids.push_back(news);
    return it->second;
  }
};

void check_news(std::size_t id, const NewsFeatures& news) {
  if (id >= news.size()) throw InputError("news index " + std::to_string(id) + " outside the corpus");
}

}  // namespace

namespace {

// Users from the encoded news matrix: history rows are gathered, contextualized
// per user and pooled by the joint attention.
JointAttention::Output build_users(ad::Graph& g, const QualityRecModel& model, const NewsFeatures& news,
                                   const ad::Tensor& encoded, const std::vector<std::size_t>& hist_local,
                                   const std::vector<std::size_t>& hist_global, const ad::Segments& seg, bool train,
                                   ad::Rng& rng) {
  const std::size_t users = seg.size() - 1;
  const std::size_t hidden = model.config().encoder.hidden_dim;
  if (hist_local.empty()) {
    return {ad::Tensor::constant({0}, {}), ad::Tensor::zeros({users, hidden})};
  }
  ad::Tensor clicks = ad::gather_rows(g, encoded, hist_local);
  ad::Tensor h = model.user_encoder().forward(g, clicks, seg, train, rng);
  std::vector<double> t;
  t.reserve(hist_global.size() * news.bins);
  for (std::size_t id : hist_global) {
    auto d = news.distribution(id);
    t.insert(t.end(), d.begin(), d.end());
  }
  ad::Tensor hd = model.dwell_rep().forward(g, ad::Tensor::constant({hist_global.size(), news.bins}, std::move(t)));
  return model.joint_attention().forward(g, h, hd, seg);
}

}  // namespace

BatchOutput QualityRecModel::score(ad::Graph& g, const NewsFeatures& news, std::span<const UserCandidates> batch,
                                   bool train, ad::Rng& rng) const {
  if (news.bins != config_.user.bins) throw StructuralError("news features use a different bin count");
  LocalNews local;
  std::vector<std::size_t> hist_local, hist_global, cand_local, owner;
  ad::Segments seg{0};
  BatchOutput out;
  out.offsets.push_back(0);
  for (std::size_t u = 0; u < batch.size(); ++u) {
    for (std::size_t id : recent(batch[u].history, config_.user.max_history)) {
      check_news(id, news);
      hist_local.push_back(local(id));
      hist_global.push_back(id);
    }
    seg.push_back(hist_local.size());
    for (std::size_t id : batch[u].candidates) {
      check_news(id, news);
      cand_local.push_back(local(id));
      owner.push_back(u);
    }
    out.offsets.push_back(cand_local.size());
  }
  if (local.ids.empty()) throw InputError("score: empty batch");

  TokenBatch titles;
  for (std::size_t id : local.ids) titles.add(news.titles[id], news.titles[id].size());
  ad::Tensor encoded = news_encoder_.encode(g, titles, train, rng);

  out.attention = build_users(g, *this, news, encoded, hist_local, hist_global, seg, train, rng);
  if (cand_local.empty()) {
    out.scores = ad::Tensor::constant({0}, {});
    return out;
  }
  ad::Tensor r = candidate_head_.forward(g, ad::gather_rows(g, encoded, cand_local));
  ad::Tensor u = ad::gather_rows(g, out.attention.users, owner);
  out.scores = ad::sum_lastdim(g, ad::mul(g, u, r));
  return out;
}

ad::Tensor QualityRecModel::predict_quality(ad::Graph& g, const NewsFeatures& news, std::span<const std::size_t> ids,
                                            bool train, ad::Rng& rng) const {
  if (ids.empty()) throw InputError("predict_quality: no news given");
  TokenBatch texts;
  for (std::size_t id : ids) {
    check_news(id, news);
    texts.add(news.title_body[id], news.title_body[id].size());
  }
  return quality_head_.forward(g, news_encoder_.encode(g, texts, train, rng));
}

std::vector<double> QualityRecModel::candidate_embeddings(const NewsFeatures& news, std::size_t chunk) const {
  const std::size_t hidden = config_.encoder.hidden_dim;
  std::vector<double> out;
  out.reserve(news.size() * hidden);
  ad::Rng rng(0);
  for (std::size_t begin = 0; begin < news.size(); begin += chunk) {
    const std::size_t end = std::min(news.size(), begin + chunk);
    ad::Graph g(false);
    TokenBatch titles;
    for (std::size_t id = begin; id < end; ++id) titles.add(news.titles[id], news.titles[id].size());
    ad::Tensor r = candidate_head_.forward(g, news_encoder_.encode(g, titles, false, rng));
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  return out;
}

std::vector<double> QualityRecModel::user_embeddings(const NewsFeatures& news,
                                                     std::span<const std::vector<std::size_t>> histories,
                                                     std::size_t chunk) const {
  const std::size_t hidden = config_.encoder.hidden_dim;
  std::vector<double> out;
  out.reserve(histories.size() * hidden);
  ad::Rng rng(0);
  for (std::size_t begin = 0; begin < histories.size(); begin += chunk) {
    const std::size_t end = std::min(histories.size(), begin + chunk);
    ad::Graph g(false);
    LocalNews local;
    std::vector<std::size_t> hist_local, hist_global;
    ad::Segments seg{0};
    for (std::size_t u = begin; u < end; ++u) {
      for (std::size_t id : recent(histories[u], config_.user.max_history)) {
        check_news(id, news);
        hist_local.push_back(local(id));
        hist_global.push_back(id);
      }
      seg.push_back(hist_local.size());
    }
    if (hist_local.empty()) {
      out.insert(out.end(), (end - begin) * hidden, 0.0);
      continue;
    }
    TokenBatch titles;
    for (std::size_t id : local.ids) titles.add(news.titles[id], news.titles[id].size());
    ad::Tensor encoded = news_encoder_.encode(g, titles, false, rng);
    auto att = build_users(g, *this, news, encoded, hist_local, hist_global, seg, false, rng);
    out.insert(out.end(), att.users.values().begin(), att.users.values().end());
  }
  return out;
}

std::vector<double> QualityRecModel::predict_quality_all(const NewsFeatures& news, std::size_t chunk) const {
  std::vector<double> out;
  out.reserve(news.size());
  ad::Rng rng(0);
  for (std::size_t begin = 0; begin < news.size(); begin += chunk) {
    const std::size_t end = std::min(news.size(), begin + chunk);
    std::vector<std::size_t> ids(end - begin);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = begin + i;
    ad::Graph g(false);
    ad::Tensor q = predict_quality(g, news, ids, false, rng);
    out.insert(out.end(), q.values().begin(), q.values().end());
  }
  return out;
}

}  // namespace qrec
