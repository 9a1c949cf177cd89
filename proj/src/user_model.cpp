#include "qrec/user_model.hpp"

#include <cmath>

#include "qrec/errors.hpp"

namespace qrec {

DwellRepLayer::DwellRepLayer(ParameterStore& store, std::size_t bins, std::size_t rep_dim, ad::Rng& rng)
    : dense_(store, "user.dwell_rep", bins, rep_dim, rng) {}

ad::Tensor DwellRepLayer::forward(ad::Graph& g, const ad::Tensor& t) const {
  if (t.cols() != dense_.in_dim()) {
    throw StructuralError("dwell distribution has " + std::to_string(t.cols()) + " bins, expected " +
                          std::to_string(dense_.in_dim()));
  }
  return ad::tanh(g, dense_.forward(g, t));
}

UserEncoder::UserEncoder(ParameterStore& store, const UserModelConfig& config, ad::Rng& rng)
    : attention_(store, "user.self_attn", config.hidden_dim, config.heads, rng), dropout_(config.dropout) {
  if (config.feed_forward) feed_forward_.emplace(store, "user.ff", config.hidden_dim, rng);
}

ad::Tensor UserEncoder::forward(ad::Graph& g, const ad::Tensor& clicks, const ad::Segments& seg, bool train,
                                ad::Rng& rng) const {
  ad::Tensor h = attention_.forward(g, clicks, seg);
  h = ad::dropout(g, h, dropout_, train, rng);
  if (feed_forward_) h = feed_forward_->forward(g, h);
  return h;
}

JointAttention::JointAttention(ParameterStore& store, const UserModelConfig& config, ad::Rng& rng)
    : content_(store, "user.joint.content", config.hidden_dim, config.attention_dim, rng),
      quality_(store, "user.joint.quality", config.quality_rep_dim, config.attention_dim, rng) {}

JointAttention::Output JointAttention::forward(ad::Graph& g, const ad::Tensor& h, const ad::Tensor& hd,
                                               const ad::Segments& seg) const {
  if (h.rows() != hd.rows()) throw StructuralError("joint attention: content and quality rows differ");
  ad::Tensor logits = ad::add(g, content_.logits(g, h), quality_.logits(g, hd));
  ad::Tensor weights = ad::segment_softmax(g, logits, seg);
  return {weights, ad::segment_weighted_sum(g, weights, h, seg)};
}

CandidateHead::CandidateHead(ParameterStore& store, std::size_t hidden_dim, ad::Rng& rng)
    : dense_(store, "candidate.dense", hidden_dim, hidden_dim, rng, /*bias=*/false) {}

ClickHistory make_click_history(ad::Tensor vectors, const std::vector<std::optional<std::vector<double>>>& dwell,
                                std::size_t bins) {
  if (dwell.size() != vectors.rows()) throw StructuralError("click history: one dwell slot per click required");
  ClickHistory h;
  h.vectors = std::move(vectors);
  for (const auto& d : dwell) {
    if (d) {
      if (d->size() != bins) throw StructuralError("click history: dwell distribution has wrong bin count");
      h.dwell.push_back(*d);
    } else {
      h.dwell.emplace_back(bins, 1.0 / static_cast<double>(bins));
    }
    h.mask.push_back(1);
  }
  return h;
}

ad::Tensor dwell_rep(ad::Graph& g, const DwellRepLayer& layer, std::span<const double> t) {
  ad::Tensor in = ad::Tensor::constant({1, t.size()}, std::vector<double>(t.begin(), t.end()));
  ad::Tensor out = layer.forward(g, in);
  return ad::reshape(g, out, {out.size()});
}

namespace {
std::vector<std::size_t> unmasked(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) kept.push_back(i);
  }
  return kept;
}
}  // namespace

ad::Tensor contextualize(ad::Graph& g, const UserEncoder& encoder, const ad::Tensor& clicks,
                         std::span<const std::uint8_t> mask, bool train, ad::Rng& rng) {
  if (mask.size() != clicks.rows()) throw StructuralError("contextualize: mask length differs from history");
  auto kept = unmasked(mask);
  if (kept.empty()) throw InputError("contextualize: empty click history (cold-start user)");
  ad::Tensor rows = ad::gather_rows(g, clicks, kept);
  ad::Tensor h = encoder.forward(g, rows, {0, kept.size()}, train, rng);
  return ad::scatter_rows(g, h, kept, mask.size());
}

JointAttentionResult joint_attention(ad::Graph& g, const JointAttention& attention, const ad::Tensor& h,
                                     const ad::Tensor& hd, std::span<const std::uint8_t> mask) {
  if (mask.size() != h.rows() || mask.size() != hd.rows()) {
    throw StructuralError("joint_attention: inputs are not aligned with the mask");
  }
  auto kept = unmasked(mask);
  if (kept.empty()) throw InputError("joint_attention: every slot is masked");
  auto out = attention.forward(g, ad::gather_rows(g, h, kept), ad::gather_rows(g, hd, kept), {0, kept.size()});
  JointAttentionResult result;
  result.weights.assign(mask.size(), 0.0);
  for (std::size_t i = 0; i < kept.size(); ++i) result.weights[kept[i]] = out.weights.values()[i];
  result.user = ad::reshape(g, out.users, {out.users.size()});
  return result;
}

ad::Tensor candidate_embed(ad::Graph& g, const NewsEncoder& encoder, const CandidateHead& head,
                           const NewsText& title, bool train, ad::Rng& rng) {
  TokenBatch batch;
  batch.add(title);
  ad::Tensor r = head.forward(g, encoder.encode(g, batch, train, rng));
  return ad::reshape(g, r, {r.size()});
}

double click_score(std::span<const double> user, std::span<const double> candidate) {
  if (user.size() != candidate.size()) throw StructuralError("click_score: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < user.size(); ++i) s += user[i] * candidate[i];
  return s;
}

double click_prob(double raw_score) {
  if (raw_score >= 0) return 1.0 / (1.0 + std::exp(-raw_score));
  const double e = std::exp(raw_score);
  return e / (1.0 + e);
}

}  // namespace qrec
