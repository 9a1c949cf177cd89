#include "qrec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "qrec/errors.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

LossWeights LossWeights::from_config(const ExperimentConfig& config) {
  LossWeights w{config.lambda, config.mu, config.epsilon, config.neg_k};
  w.validate();
  return w;
}

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(mu >= 0.0)) throw ConfigError("loss weights lambda and mu must be non-negative");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (neg_k < 1) throw ConfigError("neg_k must be at least 1");
}

double click_loss(std::span<const double> scores) {
  if (scores.empty()) throw InputError("click_loss: no scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  return -(scores[0] - mx - std::log(z));
}

double quality_loss(double q_hat, double q, double max_quality) {
  if (!(max_quality > 0.0)) throw ConfigError("maximum quality Q must be positive");
  return std::abs(q_hat - q) / max_quality;
}

double quality_regularizer(double click_prob, double q, double epsilon) { return click_prob / (epsilon + q); }

double unified_loss(double lc, double lq, double lr, const LossWeights& w) { return lc + w.lambda * lq + w.mu * lr; }

SampleSet make_samples(std::span<const Impression> impressions, int neg_k, std::span<const std::optional<double>> quality,
                       std::span<const std::optional<double>> labels, ad::Rng& rng) {
  if (neg_k < 1) throw ConfigError("neg_k must be at least 1");
  const auto k = static_cast<std::size_t>(neg_k);
  SampleSet out;
  std::vector<std::size_t> negatives, chosen;
  for (const Impression& imp : impressions) {
    if (imp.history.empty()) {
      ++out.skipped_cold_start;
      continue;
    }
    negatives.clear();
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (!imp.labels[i]) negatives.push_back(imp.candidates[i]);
    }
    std::sort(negatives.begin(), negatives.end());
    negatives.erase(std::unique(negatives.begin(), negatives.end()), negatives.end());
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (!imp.labels[i]) continue;
      const std::size_t pos = imp.candidates[i];
      chosen.clear();
      std::copy_if(negatives.begin(), negatives.end(), std::back_inserter(chosen),
                   [pos](std::size_t n) { return n != pos; });
      if (chosen.size() < k) {
        ++out.skipped_few_negatives;
        continue;
      }
      // Partial Fisher-Yates: the first k entries become the sample.
      for (std::size_t j = 0; j < k; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, chosen.size() - 1);
        std::swap(chosen[j], chosen[pick(rng)]);
      }
      TrainingSample s;
      s.history = imp.history;
      s.candidates.push_back(pos);
      s.candidates.insert(s.candidates.end(), chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(k));
      for (std::size_t c : s.candidates) s.qualities.push_back(c < quality.size() ? quality[c] : std::nullopt);
      s.quality_label = pos < labels.size() ? labels[pos] : std::nullopt;
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

ad::Tensor batch_click_loss(ad::Graph& g, const ad::Tensor& scores, std::size_t batch, std::size_t group) {
  if (scores.size() != batch * group || batch == 0) throw StructuralError("click loss: scores do not match the batch");
  ad::Tensor logp = ad::log_softmax_lastdim(g, ad::reshape(g, scores, {batch, group}));
  const std::vector<std::size_t> positive(batch, 0);
  return ad::scale(g, ad::sum(g, ad::pick_lastdim(g, logp, positive)), -1.0 / static_cast<double>(batch));
}

ad::Tensor batch_quality_loss(ad::Graph& g, const ad::Tensor& q_hat, std::span<const double> targets,
                              double max_quality, std::size_t batch) {
  if (!(max_quality > 0.0)) throw ConfigError("maximum quality Q must be positive");
  if (q_hat.size() != targets.size()) throw StructuralError("quality loss: predictions and targets differ");
  if (targets.empty()) return ad::Tensor::scalar(0.0);
  ad::Tensor target = ad::Tensor::constant({targets.size()}, std::vector<double>(targets.begin(), targets.end()));
  ad::Tensor err = ad::sum(g, ad::abs(g, ad::sub(g, q_hat, target)));
  return ad::scale(g, err, 1.0 / (static_cast<double>(batch) * max_quality));
}

ad::Tensor batch_regularizer(ad::Graph& g, const ad::Tensor& scores, std::span<const std::optional<double>> q,
                             std::size_t batch, std::size_t group, double epsilon, bool positive_only) {
  if (scores.size() != batch * group || q.size() != scores.size()) {
    throw StructuralError("regularizer: scores and qualities do not match the batch");
  }
  std::vector<std::size_t> rows;
  std::vector<double> coef;
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t end = positive_only ? 1 : group;
    std::size_t known = 0;
    for (std::size_t j = 0; j < end; ++j) known += q[s * group + j].has_value();
    for (std::size_t j = 0; j < end; ++j) {
      const auto& qj = q[s * group + j];
      if (!qj) continue;
      rows.push_back(s * group + j);
      coef.push_back(1.0 / (static_cast<double>(batch) * static_cast<double>(known) * (epsilon + *qj)));
    }
  }
  if (rows.empty()) return ad::Tensor::scalar(0.0);
  ad::Tensor picked = ad::gather_rows(g, ad::reshape(g, scores, {scores.size(), 1}), rows);
  ad::Tensor weights = ad::Tensor::constant({rows.size(), 1}, std::move(coef));
  return ad::sum(g, ad::mul(g, ad::sigmoid(g, picked), weights));
}

LossParts batch_loss(ad::Graph& g, const QualityRecModel& model, const NewsFeatures& news,
                     std::span<const TrainingSample> batch, const LossWeights& weights, double max_quality,
                     bool positive_only, bool train, ad::Rng& rng) {
  if (batch.empty()) throw InputError("batch_loss: empty batch");
  const std::size_t group = batch.front().candidates.size();
  std::vector<UserCandidates> users;
  std::vector<std::optional<double>> q;
  std::vector<std::size_t> labelled;
  std::vector<double> targets;
  for (const TrainingSample& s : batch) {
    if (s.candidates.size() != group || s.qualities.size() != group) {
      throw StructuralError("batch_loss: samples have different candidate counts");
    }
    users.push_back({s.history, s.candidates});
    q.insert(q.end(), s.qualities.begin(), s.qualities.end());
    if (s.quality_label) {
      labelled.push_back(s.candidates.front());
      targets.push_back(*s.quality_label);
    }
  }
  BatchOutput out = model.score(g, news, users, train, rng);
  LossParts parts;
  parts.click = batch_click_loss(g, out.scores, batch.size(), group);
  parts.total = parts.click;
  parts.quality = ad::Tensor::scalar(0.0);
  parts.regularizer = ad::Tensor::scalar(0.0);
  if (weights.lambda > 0.0 && !labelled.empty()) {
    ad::Tensor q_hat = model.predict_quality(g, news, labelled, train, rng);
    parts.quality = batch_quality_loss(g, q_hat, targets, max_quality, batch.size());
    parts.total = ad::add(g, parts.total, ad::scale(g, parts.quality, weights.lambda));
  }
  if (weights.mu > 0.0) {
    parts.regularizer = batch_regularizer(g, out.scores, q, batch.size(), group, weights.epsilon, positive_only);
    parts.total = ad::add(g, parts.total, ad::scale(g, parts.regularizer, weights.mu));
  }
  return parts;
}

bool in_quality_holdout(const std::string& news_id, double fraction) {
  if (fraction <= 0.0) return false;
  const std::uint64_t h = text::fnv1a64(news_id) % 1000000ULL;
  return static_cast<double>(h) < fraction * 1000000.0;
}

PreparedData prepare_data(const Dataset& ds, const ExperimentConfig& config) {
  config.validate();
  PreparedData p;
  p.split = split_impressions(ds.impressions, config.train_fraction, config.valid_fraction);
  const auto train_dwell = dwell_for_impressions(ds.dwell, p.split.train, ds.impressions, ds.corpus);
  p.table = build_quality_table(train_dwell, {config.min_clicks, config.dwell_cap});
  const auto bins = static_cast<std::size_t>(p.table.bins());
  p.vocab_size = ds.corpus.vocab.size();
  p.features = NewsFeatures::build(ds.corpus, &p.table, static_cast<std::size_t>(config.max_title),
                                   static_cast<std::size_t>(config.max_body), bins);

  std::map<std::string, std::vector<double>, std::less<>> dwell_by_news;
  if (config.quality_measure != QualityMeasure::kDistribution) {
    for (const auto& r : train_dwell) dwell_by_news[r.news_id].push_back(r.seconds);
  }
  const std::size_t n = ds.corpus.size();
  p.quality.assign(n, std::nullopt);
  p.labels.assign(n, std::nullopt);
  p.holdout.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = ds.corpus.ids[i];
    const auto q = p.table.quality(id);
    if (!q) continue;
    p.quality[i] = q;
    double label = *q;
    if (config.quality_measure == QualityMeasure::kAvgDwell) {
      label = quality_avg_dwell(dwell_by_news.at(id), config.dwell_cap);
    } else if (config.quality_measure == QualityMeasure::kAvgLogDwell) {
      label = quality_avg_log_dwell(dwell_by_news.at(id), config.dwell_cap);
    }
    p.max_quality = std::max(p.max_quality, label);
    if (in_quality_holdout(id, config.quality_holdout)) {
      p.holdout[i] = 1;
    } else {
      p.labels[i] = label;
    }
  }
  if (!(p.max_quality > 0.0)) throw DataError("maximum training quality is zero; L_q normalization undefined");
  return p;
}

std::unique_ptr<QualityRecModel> make_model(const PreparedData& data, const ExperimentConfig& config) {
  const auto mc = ModelConfig::from_experiment(config, data.vocab_size, data.table.bins());
  auto model = std::make_unique<QualityRecModel>(mc, config.seed);
  if (!config.quality_attention) model->disable_quality_attention();
  // Start q_hat at the mean label so L_q does not spend the first epoch
  // moving a single bias.
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& l : data.labels) {
    if (l) {
      sum += *l;
      ++n;
    }
  }
  if (n) model->quality_head().set_output_bias(sum / static_cast<double>(n));
  return model;
}

double low_quality_threshold(std::span<const Impression> impressions, std::span<const std::optional<double>> quality) {
  std::vector<std::uint8_t> seen(quality.size(), 0);
  std::vector<double> values;
  for (const Impression& imp : impressions) {
    for (std::size_t c : imp.candidates) {
      if (c < quality.size() && quality[c] && !seen[c]) {
        seen[c] = 1;
        values.push_back(*quality[c]);
      }
    }
  }
  if (values.empty()) throw DataError("no candidate news with known quality; LQ threshold undefined");
  return nearest_rank_percentile(std::move(values), 5.0);
}

MetricReport evaluate(const QualityRecModel& model, const NewsFeatures& news, std::span<const Impression> impressions,
                      std::span<const std::optional<double>> quality, double lq_threshold) {
  const std::size_t hidden = model.config().encoder.hidden_dim;
  const std::vector<double> r = model.candidate_embeddings(news);
  std::vector<std::vector<std::size_t>> histories;
  histories.reserve(impressions.size());
  for (const Impression& imp : impressions) histories.push_back(imp.history);
  const std::vector<double> u = model.user_embeddings(news, histories);

  MetricReport report;
  report.lq_threshold = lq_threshold;
  ImpressionResult result;
  for (std::size_t i = 0; i < impressions.size(); ++i) {
    const Impression& imp = impressions[i];
    result.scores.clear();
    result.qualities.clear();
    result.labels = imp.labels;
    const double* ui = u.data() + i * hidden;
    for (std::size_t c : imp.candidates) {
      if (c >= news.size()) throw InputError("candidate outside the corpus");
      result.scores.push_back(click_score({ui, hidden}, {r.data() + c * hidden, hidden}));
      result.qualities.push_back(c < quality.size() ? quality[c] : std::nullopt);
    }
    report.add(result);
  }
  return report;
}

double quality_pcc(std::span<const double> predicted, std::span<const double> reference,
                   std::span<const std::size_t> news) {
  std::vector<double> a, b;
  for (std::size_t i : news) {
    if (i >= predicted.size() || i >= reference.size()) throw InputError("quality_pcc: news index out of range");
    a.push_back(predicted[i]);
    b.push_back(reference[i]);
  }
  return pearson(a, b);
}

TrainResult train(const PreparedData& data, const ExperimentConfig& config, const TrainOptions& options) {
  const LossWeights weights = LossWeights::from_config(config);
  TrainResult result;
  result.model = make_model(data, config);
  QualityRecModel& model = *result.model;
  const std::vector<ad::Tensor> params = model.parameters().trainable();
  Adam adam(params, AdamOptions{config.lr});
  ad::Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::optional<double> valid_threshold;
  if (!data.split.validation.empty()) valid_threshold = low_quality_threshold(data.split.validation, data.quality);

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x5a3b1e}};
    ad::Rng epoch_rng(seq);
    SampleSet set = make_samples(data.split.train, weights.neg_k, data.quality, data.labels, epoch_rng);
    if (set.samples.empty()) throw DataError("no training samples (all impressions cold-start or too few negatives)");
    std::shuffle(set.samples.begin(), set.samples.end(), epoch_rng);

    EpochTrace t;
    t.epoch = epoch;
    for (std::size_t begin = 0; begin < set.samples.size(); begin += batch_size) {
      const std::size_t end = std::min(set.samples.size(), begin + batch_size);
      std::span<const TrainingSample> batch(set.samples.data() + begin, end - begin);
      ad::Graph g;
      LossParts parts = batch_loss(g, model, data.features, batch, weights, data.max_quality,
                                   config.reg_positive_only, true, dropout_rng);
      const double loss = parts.total.item();
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(t.batches));
      }
      g.backward(parts.total);
      const double norm = clip_grad_norm(params, config.clip_norm);
      if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm at epoch " + std::to_string(epoch));
      if (norm > config.clip_norm) {
        ++t.clipped;
        if (options.log && t.clipped <= 3) {
          *options.log << "clip: epoch " << epoch << " batch " << t.batches << " grad norm "
                       << text::format_double(norm) << '\n';
        }
      }
      adam.step();
      adam.zero_grad();
      const auto n = static_cast<double>(batch.size());
      t.loss += loss * n;
      t.click += parts.click.item() * n;
      t.quality += parts.quality.item() * n;
      t.regularizer += parts.regularizer.item() * n;
      t.samples += batch.size();
      ++t.batches;
    }
    const auto denom = static_cast<double>(t.samples);
    t.loss /= denom;
    t.click /= denom;
    t.quality /= denom;
    t.regularizer /= denom;
    if (valid_threshold) {
      t.validation = evaluate(model, data.features, data.split.validation, data.quality, *valid_threshold);
    }
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.log) {
      *options.log << "epoch " << epoch << ": loss=" << text::format_double(t.loss)
                   << " click=" << text::format_double(t.click) << " quality=" << text::format_double(t.quality)
                   << " reg=" << text::format_double(t.regularizer) << " samples=" << t.samples
                   << " clipped=" << t.clipped << " seconds=" << t.seconds << '\n';
    }
    if (options.on_epoch) options.on_epoch(t);
    result.trace.push_back(std::move(t));
  }
  return result;
}

std::string format_trace(const std::vector<EpochTrace>& trace) {
  std::ostringstream out;
  out << "epoch\tloss\tclick\tquality\tregularizer\tsamples\tbatches\tclipped\tvalid_auc\tvalid_qs5\n";
  for (const auto& t : trace) {
    out << t.epoch << '\t' << text::format_double(t.loss) << '\t' << text::format_double(t.click) << '\t'
        << text::format_double(t.quality) << '\t' << text::format_double(t.regularizer) << '\t' << t.samples << '\t'
        << t.batches << '\t' << t.clipped << '\t'
        << (t.validation ? text::format_double(t.validation->auc.mean()) : "-") << '\t'
        << (t.validation ? text::format_double(t.validation->qs5.mean()) : "-") << '\n';
  }
  return out.str();
}

}  // namespace qrec
