#include "tap/captioner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "tap/errors.hpp"

namespace tap {
namespace {

constexpr double kTimeScale = 64.0;
constexpr double kTextBase = 100.0;

std::string dec(const std::string& s) { return std::string(Captioner::kDecoderPrefix) + s; }
std::string tim(const std::string& s) { return std::string(Captioner::kTimePrefix) + s; }

std::string layer_name(int l, const char* part) { return dec("layer" + std::to_string(l) + "." + part); }

nd::Matrix text_encodings(int count, int dim) {
  nd::Matrix pe(count, dim);
  for (int p = 0; p < count; ++p) pe.row(p) = nd::sinusoid(static_cast<double>(p), dim, kTextBase);
  return pe;
}

std::vector<Caption> captions_of(std::span<const AnchoredCaption> events) {
  std::vector<Caption> out;
  for (const auto& e : events) out.push_back(e.caption);
  return out;
}

std::vector<TemporalAnchor> anchors_of(std::span<const AnchoredCaption> events) {
  std::vector<TemporalAnchor> out;
  for (const auto& e : events) out.push_back(e.anchor);
  return out;
}

std::span<const int> all_rows(std::vector<int>& buf, std::size_t n) {
  buf.resize(n);
  std::iota(buf.begin(), buf.end(), 0);
  return buf;
}

CaptionerConfig config_from_json(const nlohmann::json& cj) {
  CaptionerConfig c;
  c.model_dim = cj.at("model_dim").get<int>();
  c.num_layers = cj.at("num_layers").get<int>();
  c.feature_dim = cj.at("feature_dim").get<int>();
  c.max_caption_len = cj.at("max_caption_len").get<int>();
  c.validate();
  return c;
}

struct Restored {
  CaptionerConfig cfg;
  Vocab vocab;
};

Restored restore(const std::string& metadata) {
  try {
    const auto j = nlohmann::json::parse(metadata);
    if (j.value("kind", "") != "tap-captioner") throw SchemaError("checkpoint is not a captioner");
    return {config_from_json(j.at("config")), Vocab(j.at("vocab").get<std::vector<std::string>>())};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("captioner checkpoint metadata: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("captioner checkpoint metadata: ") + e.what());
  }
}

}  // namespace

void CaptionerConfig::validate() const {
  if (model_dim < 4 || model_dim % 4 != 0) throw std::invalid_argument("model_dim must be a multiple of 4");
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (max_caption_len < 1) throw std::invalid_argument("max_caption_len must be >= 1");
}

BuiltSequence build_sequence(int num_video, std::span<const Caption> captions) {
  if (num_video < 1) throw std::invalid_argument("build_sequence needs at least one video row");
  if (captions.empty()) throw std::invalid_argument("build_sequence needs at least one event");
  BuiltSequence s;
  s.num_video = num_video;
  for (std::size_t e = 0; e < captions.size(); ++e) {
    for (int t : captions[e]) {
      if (Vocab::is_reserved(t)) {
        throw std::invalid_argument("caption of event " + std::to_string(e) + " contains reserved token " +
                                    std::to_string(t));
      }
    }
    s.ids.push_back(Vocab::kSep);
    s.slots.push_back(num_video + static_cast<int>(s.ids.size()));
    s.ids.push_back(Vocab::kSlot);
    const int bos = num_video + static_cast<int>(s.ids.size());
    s.ids.push_back(Vocab::kBos);
    s.ids.insert(s.ids.end(), captions[e].begin(), captions[e].end());
    for (std::size_t k = 0; k <= captions[e].size(); ++k) {
      s.loss_rows.push_back(bos + static_cast<int>(k));
      s.targets.push_back(k < captions[e].size() ? captions[e][k] : Vocab::kEos);
      s.event_of_row.push_back(static_cast<int>(e));
    }
  }
  const int n = s.length();
  s.mask = nd::Mask::Zero(n, n);
  for (int r = 0; r < n; ++r) s.mask.row(r).head(r + 1).setOnes();
  for (int slot : s.slots) {
    s.mask.row(slot).setZero();
    s.mask.row(slot).head(num_video).setOnes();
  }
  return s;
}

Captioner::Captioner(const CaptionerConfig& cfg, Vocab vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)), store_(std::make_unique<nd::ParameterStore>()) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg_.model_dim;
  auto& s = *store_;
  s.add(dec("tokens"), nd::randn(vocab_.size(), d, 1.0, rng));
  nd::Linear::create(s, dec("video"), cfg_.feature_dim, d, rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    nd::LayerNorm::create(s, layer_name(l, "attn.ln"), d);
    nd::Attention::create(s, layer_name(l, "attn"), d, rng);
    nd::FeedForward::create(s, layer_name(l, "ffn"), d, 2 * d, rng);
  }
  nd::LayerNorm::create(s, dec("final.ln"), d);
  nd::Linear::create(s, dec("out"), d, vocab_.size(), rng);
  nd::Linear::create(s, tim("mlp.down"), d, d / 2, rng);
  nd::Linear::create(s, tim("mlp.up"), d / 2, d, rng);
  nd::Linear head = nd::Linear::create(s, tim("head"), d, 2, rng);
  head.weight->value.setZero();
  bind();
}

Captioner::Captioner(const nd::Checkpoint& ckpt)
    : Captioner(restore(ckpt.metadata).cfg, restore(ckpt.metadata).vocab, 0) {
  ckpt.load_into(*store_);
}

void Captioner::bind() {
  auto& s = *store_;
  tokens_ = &s.get(dec("tokens"));
  video_ = nd::Linear::bind(s, dec("video"));
  attn_norm_.clear();
  attn_.clear();
  ffn_.clear();
  for (int l = 0; l < cfg_.num_layers; ++l) {
    attn_norm_.push_back(nd::LayerNorm::bind(s, layer_name(l, "attn.ln")));
    attn_.push_back(nd::Attention::bind(s, layer_name(l, "attn")));
    ffn_.push_back(nd::FeedForward::bind(s, layer_name(l, "ffn")));
  }
  final_norm_ = nd::LayerNorm::bind(s, dec("final.ln"));
  out_ = nd::Linear::bind(s, dec("out"));
  time_down_ = nd::Linear::bind(s, tim("mlp.down"));
  time_up_ = nd::Linear::bind(s, tim("mlp.up"));
  time_head_ = nd::Linear::bind(s, tim("head"));
}

nd::Tensor Captioner::embed_anchors(nd::Tape& tape, const nd::Tensor& anchors) const {
  if (anchors.cols() != 2) throw std::invalid_argument("anchors must be n x 2, got " + nd::shape_str(anchors.value()));
  const nd::Tensor enc = nd::sinusoid(anchors, cfg_.model_dim / 2, kTimeScale, kTimeScale);
  return nd::add(enc, time_up_(tape, nd::relu(time_down_(tape, enc))));
}

nd::RowVector Captioner::embed_anchor(const TemporalAnchor& a) const {
  nd::Tape tape;
  tape.set_grad_enabled(false);
  const std::array<TemporalAnchor, 1> one{a};
  return embed_anchors(tape, anchor_rows(tape, one)).value().row(0);
}

nd::Tensor Captioner::regress(nd::Tape& tape, const nd::Tensor& hidden) const {
  const nd::Tensor h = time_up_(tape, nd::relu(time_down_(tape, hidden)));
  return nd::sigmoid(time_head_(tape, h));
}

TemporalAnchor Captioner::regress_anchor(const nd::RowVector& hidden) const {
  if (hidden.size() != cfg_.model_dim) {
    throw std::invalid_argument("regress_anchor expects a " + std::to_string(cfg_.model_dim) + "-wide hidden state");
  }
  nd::Tape tape;
  tape.set_grad_enabled(false);
  const nd::Matrix out = regress(tape, tape.constant(hidden)).value();
  return {out(0, 0), out(0, 1)};
}

nd::Tensor Captioner::forward(nd::Tape& tape, const nd::Matrix& features, const BuiltSequence& seq,
                              const nd::Tensor& anchors) const {
  if (features.cols() != cfg_.feature_dim) {
    throw std::invalid_argument("captioner expects feature_dim " + std::to_string(cfg_.feature_dim) +
                                ", got features " + nd::shape_str(features));
  }
  if (features.rows() != seq.num_video) throw std::invalid_argument("sequence was built for a different video");
  if (anchors.rows() != static_cast<Eigen::Index>(seq.slots.size())) {
    throw std::invalid_argument("need one anchor per slot: " + std::to_string(seq.slots.size()) + " slots, anchors " +
                                nd::shape_str(anchors.value()));
  }
  const int d = cfg_.model_dim;
  nd::Matrix frames(seq.num_video, 2);
  for (int f = 0; f < seq.num_video; ++f) frames.row(f) << frame_time(f, seq.num_video), 1.0 / seq.num_video;
  const nd::Tensor video = nd::add(video_(tape, tape.constant(features)), embed_anchors(tape, tape.constant(frames)));
  const nd::Tensor words = nd::embed_lookup(tape.param(*tokens_), seq.ids);
  const nd::Tensor slots = embed_anchors(tape, anchors);

  std::vector<nd::Tensor> parts{video};
  Eigen::Index next = 0;
  for (std::size_t k = 0; k < seq.slots.size(); ++k) {
    const Eigen::Index at = seq.slots[k] - seq.num_video;
    if (at > next) parts.push_back(nd::slice_rows(words, next, at - next));
    parts.push_back(nd::slice_rows(slots, static_cast<Eigen::Index>(k), 1));
    next = at + 1;
  }
  const auto text_len = static_cast<Eigen::Index>(seq.ids.size());
  if (text_len > next) parts.push_back(nd::slice_rows(words, next, text_len - next));
  nd::Tensor x = nd::concat_rows(parts);
  nd::Matrix pe = nd::Matrix::Zero(seq.length(), d);
  pe.bottomRows(text_len) = text_encodings(static_cast<int>(text_len), d);
  x = nd::add(x, tape.constant(std::move(pe)));

  for (int l = 0; l < cfg_.num_layers; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const nd::Tensor h = attn_norm_[i](tape, x);
    x = nd::add(x, nd::sub(attn_[i](tape, h, h, seq.mask), h));
    x = ffn_[i](tape, x);
  }
  return final_norm_(tape, x);
}

nd::Tensor Captioner::logits(nd::Tape& tape, const nd::Tensor& hidden) const { return out_(tape, hidden); }

nd::Checkpoint Captioner::to_checkpoint() const {
  nlohmann::json meta{{"kind", "tap-captioner"},
                      {"config",
                       {{"model_dim", cfg_.model_dim},
                        {"num_layers", cfg_.num_layers},
                        {"feature_dim", cfg_.feature_dim},
                        {"max_caption_len", cfg_.max_caption_len}}},
                      {"vocab", vocab_.tokens()}};
  return nd::Checkpoint::from_store(*store_, meta.dump());
}

std::vector<nd::Parameter*> Captioner::time_params() { return store_->with_prefix(kTimePrefix); }
std::vector<nd::Parameter*> Captioner::decoder_params() { return store_->with_prefix(kDecoderPrefix); }

nd::Tensor anchor_rows(nd::Tape& tape, std::span<const TemporalAnchor> anchors) {
  nd::Matrix m(static_cast<Eigen::Index>(anchors.size()), 2);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = anchors[i].center();
    m(static_cast<Eigen::Index>(i), 1) = anchors[i].duration();
  }
  return tape.constant(std::move(m));
}

namespace {

nd::Tensor ce_from(nd::Tape& tape, const Captioner& model, const nd::Tensor& hidden, const BuiltSequence& seq) {
  const nd::Tensor logits = model.logits(tape, nd::gather_rows(hidden, seq.loss_rows));
  std::vector<int> rows;
  return nd::cross_entropy(logits, all_rows(rows, seq.loss_rows.size()), seq.targets);
}

}  // namespace

nd::Tensor caption_ce_loss(nd::Tape& tape, const Captioner& model, const nd::Matrix& features,
                           std::span<const AnchoredCaption> events) {
  const auto captions = captions_of(events);
  const BuiltSequence seq = build_sequence(static_cast<int>(features.rows()), captions);
  const auto anchors = anchors_of(events);
  return ce_from(tape, model, model.forward(tape, features, seq, anchor_rows(tape, anchors)), seq);
}

double caption_ce_loss(const Captioner& model, const nd::Matrix& features, std::span<const AnchoredCaption> events) {
  nd::Tape tape;
  tape.set_grad_enabled(false);
  return caption_ce_loss(tape, model, features, events).item();
}

std::vector<double> caption_ce_terms(const Captioner& model, const nd::Matrix& features,
                                     std::span<const AnchoredCaption> events) {
  nd::Tape tape;
  tape.set_grad_enabled(false);
  const auto captions = captions_of(events);
  const BuiltSequence seq = build_sequence(static_cast<int>(features.rows()), captions);
  const auto anchors = anchors_of(events);
  const nd::Tensor hidden = model.forward(tape, features, seq, anchor_rows(tape, anchors));
  const nd::Matrix logits = model.logits(tape, nd::gather_rows(hidden, seq.loss_rows)).value();
  std::vector<double> sum(events.size(), 0.0);
  std::vector<int> count(events.size(), 0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    const auto e = static_cast<std::size_t>(seq.event_of_row[static_cast<std::size_t>(r)]);
    sum[e] += lse - logits(r, seq.targets[static_cast<std::size_t>(r)]);
    ++count[e];
  }
  for (std::size_t e = 0; e < sum.size(); ++e) sum[e] /= count[e];
  return sum;
}

double denoise_loss(std::span<const TemporalAnchor> regressed, std::span<const TemporalAnchor> truths,
                    const LossWeights& w) {
  if (regressed.size() != truths.size()) {
    throw std::invalid_argument("denoise_loss: " + std::to_string(regressed.size()) + " regressed anchors for " +
                                std::to_string(truths.size()) + " events");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) total += pair_cost(regressed[i], truths[i], w);
  return total;
}

nd::Tensor denoise_loss(const nd::Tensor& regressed, std::span<const TemporalAnchor> truths, const LossWeights& w) {
  const auto preds = anchors_from_rows(regressed.value());
  const double value = denoise_loss(preds, truths, w);
  nd::Matrix grad(regressed.rows(), 2);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    grad.row(static_cast<Eigen::Index>(i)) = pair_cost_grad(preds[i], truths[i], w).transpose();
  }
  return nd::custom_scalar(regressed, value, std::move(grad));
}

std::vector<TemporalAnchor> denoised_anchors(const Captioner& model, const nd::Matrix& features,
                                             std::span<const AnchoredCaption> events) {
  nd::Tape tape;
  tape.set_grad_enabled(false);
  const auto captions = captions_of(events);
  const BuiltSequence seq = build_sequence(static_cast<int>(features.rows()), captions);
  const auto anchors = anchors_of(events);
  const nd::Tensor hidden = model.forward(tape, features, seq, anchor_rows(tape, anchors));
  return anchors_from_rows(model.regress(tape, nd::gather_rows(hidden, seq.slots)).value());
}

namespace {

/// Log-softmax of the next-token logits after `history` plus the partial event.
nd::RowVector next_logprobs(const Captioner& model, const nd::Matrix& features, std::span<const AnchoredCaption> history,
                            const TemporalAnchor& anchor, const Caption& partial) {
  std::vector<Caption> captions = captions_of(history);
  captions.push_back(partial);
  std::vector<TemporalAnchor> anchors = anchors_of(history);
  anchors.push_back(anchor);
  const BuiltSequence seq = build_sequence(static_cast<int>(features.rows()), captions);
  nd::Tape tape;
  tape.set_grad_enabled(false);
  const nd::Tensor hidden = model.forward(tape, features, seq, anchor_rows(tape, anchors));
  const nd::RowVector z = model.logits(tape, nd::slice_rows(hidden, seq.length() - 1, 1)).value();
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

}  // namespace

Generation generate_caption(const Captioner& model, const nd::Matrix& features, const TemporalAnchor& anchor,
                            std::span<const AnchoredCaption> history, const GenerateOptions& opts) {
  const int max_len = opts.max_len < 0 ? model.config().max_caption_len : opts.max_len;
  if (opts.temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (opts.temperature > 0.0 && opts.rng == nullptr) throw std::invalid_argument("sampling needs an rng");
  Generation g;
  while (true) {
    const nd::RowVector lp = next_logprobs(model, features, history, anchor, g.tokens);
    // Words and EOS only; the other reserved ids never follow a caption position.
    int pick = -1;
    if (opts.temperature == 0.0) {
      for (int t = 0; t < lp.size(); ++t) {
        if (Vocab::is_reserved(t) && t != Vocab::kEos) continue;
        if (pick < 0 || lp(t) > lp(pick)) pick = t;
      }
    } else {
      std::vector<double> w(static_cast<std::size_t>(lp.size()), 0.0);
      for (int t = 0; t < lp.size(); ++t) {
        if (!Vocab::is_reserved(t) || t == Vocab::kEos) w[static_cast<std::size_t>(t)] = std::exp(lp(t) / opts.temperature);
      }
      pick = std::discrete_distribution<int>(w.begin(), w.end())(*opts.rng);
    }
    g.logprobs.push_back(lp(pick));
    if (pick == Vocab::kEos) break;
    if (static_cast<int>(g.tokens.size()) == max_len) {
      g.logprobs.pop_back();
      g.truncated = true;
      break;
    }
    g.tokens.push_back(pick);
  }
  return g;
}

double caption_logprob(const Captioner& model, const nd::Matrix& features, const TemporalAnchor& anchor,
                       std::span<const AnchoredCaption> history, const Caption& caption) {
  std::vector<AnchoredCaption> events(history.begin(), history.end());
  events.push_back({anchor, caption});
  nd::Tape tape;
  tape.set_grad_enabled(false);
  const auto captions = captions_of(events);
  const BuiltSequence seq = build_sequence(static_cast<int>(features.rows()), captions);
  const auto anchors = anchors_of(events);
  const nd::Tensor hidden = model.forward(tape, features, seq, anchor_rows(tape, anchors));
  const nd::Matrix logits = model.logits(tape, nd::gather_rows(hidden, seq.loss_rows)).value();
  const int last = static_cast<int>(events.size()) - 1;
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (seq.event_of_row[static_cast<std::size_t>(r)] != last) continue;
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += logits(r, seq.targets[static_cast<std::size_t>(r)]) - lse;
  }
  return total;
}

void StageBConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(opt.lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(localizer_lr_scale >= 0.0)) throw std::invalid_argument("localizer_lr_scale must be >= 0");
  if (!(event_dropout >= 0.0 && event_dropout < 1.0)) throw std::invalid_argument("event_dropout must be in [0, 1)");
  if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
  if (!(denoise_lr_scale >= 0.0)) throw std::invalid_argument("denoise_lr_scale must be >= 0");
}

StageBExample stage_b_example(std::span<const TemporalAnchor> predicted, const VideoSample& video,
                              const LossWeights& w, bool terminal_event, std::span<const int> keep) {
  const auto truths = video.anchors();
  const std::vector<int> all = anchor_loss(predicted, truths, w).assignment.prediction_for_truth();
  StageBExample ex;
  for (int e : keep) {
    if (e < 0 || e >= static_cast<int>(truths.size())) throw std::out_of_range("kept event out of range");
    if (!ex.events.empty() && e <= ex.events.back()) throw std::invalid_argument("kept events must ascend");
    ex.events.push_back(e);
    ex.matched.push_back(all[static_cast<std::size_t>(e)]);
  }
  if (ex.events.empty()) throw std::invalid_argument("no events kept");
  if (!terminal_event || ex.events.back() != static_cast<int>(truths.size()) - 1) return ex;
  std::vector<bool> used(predicted.size(), false);
  for (int p : all) used[static_cast<std::size_t>(p)] = true;
  const double last_start = span_from_anchor(predicted[static_cast<std::size_t>(all.back())]).start();
  double best = 2.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double s = span_from_anchor(predicted[i]).start();
    if (!used[i] && s > last_start && s < best) {
      best = s;
      ex.terminal = static_cast<int>(i);
    }
  }
  return ex;
}

StageBLosses stage_b_losses(nd::Tape& tape, const Localizer& loc, const Captioner& cap, const VideoSample& video,
                            const StageBConfig& cfg, std::span<const int> keep) {
  if (video.events.empty()) throw std::invalid_argument("video " + video.id + " has no events");
  std::vector<int> every;
  if (keep.empty()) {
    every.resize(video.events.size());
    std::iota(every.begin(), every.end(), 0);
    keep = every;
  }
  const nd::Tensor out = loc.forward(tape, video.features);
  const auto predicted = anchors_from_rows(out.value());
  const StageBExample ex = stage_b_example(predicted, video, cfg.weights, cfg.terminal_event, keep);

  std::vector<Caption> captions;
  std::vector<TemporalAnchor> truths;
  for (int e : ex.events) {
    captions.push_back(video.events[static_cast<std::size_t>(e)].caption);
    truths.push_back(anchor_from_span(video.events[static_cast<std::size_t>(e)].span));
  }
  nd::Tensor anchors = nd::gather_rows(out, ex.matched);
  if (ex.terminal >= 0) {
    captions.emplace_back();
    nd::Matrix row = out.value().row(ex.terminal);
    anchors = nd::concat_rows({anchors, tape.constant(std::move(row))});
  }
  const BuiltSequence seq = build_sequence(static_cast<int>(video.features.rows()), captions);
  const nd::Tensor hidden = cap.forward(tape, video.features, seq, anchors);

  StageBLosses losses;
  losses.caption = ce_from(tape, cap, hidden, seq);
  const std::vector<int> event_slots(seq.slots.begin(), seq.slots.begin() + static_cast<long>(truths.size()));
  losses.denoise = denoise_loss(cap.regress(tape, nd::gather_rows(hidden, event_slots)), truths, cfg.weights);
  return losses;
}

StageBTrace train_stage_b(const Dataset& data, Localizer& loc, Captioner& cap, const StageBConfig& cfg) {
  cfg.validate();
  check_trainable(data, loc.config());
  if (cap.vocab().tokens() != data.vocab.tokens()) throw std::invalid_argument("captioner vocab differs from dataset");

  // Separate moment state per pass, as the two passes see different gradients.
  nd::AdamW loc_caption(loc.params().all(), cfg.opt);
  nd::AdamW cap_caption(cap.params().all(), cfg.opt);
  nd::AdamW loc_denoise(loc.params().all(), cfg.opt);
  nd::AdamW time_denoise(cap.time_params(), cfg.opt);

  std::mt19937_64 rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);
  std::uniform_real_distribution<double> drop(0.0, 1.0);
  std::vector<std::size_t> order(data.videos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batches = static_cast<long>((order.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                         static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = batches * cfg.epochs;
  long step = 0;

  StageBTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double ce_sum = 0.0;
    double den_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(e - b);
      std::vector<std::unique_ptr<nd::Tape>> tapes;
      std::vector<StageBLosses> losses;
      for (std::size_t k = b; k < e; ++k) {
        const VideoSample& v = data.videos[order[k]];
        std::vector<int> keep;
        if (epoch >= cfg.warmup_epochs)
          for (int i = 0; i < static_cast<int>(v.events.size()); ++i)
            if (drop(rng) >= cfg.event_dropout) keep.push_back(i);
        if (keep.empty()) keep.push_back(std::uniform_int_distribution<int>(0, static_cast<int>(v.events.size()) - 1)(rng));
        tapes.push_back(std::make_unique<nd::Tape>());
        losses.push_back(stage_b_losses(*tapes.back(), loc, cap, v, cfg, keep));
        ce_sum += losses.back().caption.item();
        den_sum += losses.back().denoise.item();
      }
      const double lr = nd::cosine_lr(cfg.opt.lr, step++, total_steps);

      loc.params().zero_grad();
      cap.params().zero_grad();
      for (std::size_t k = 0; k < tapes.size(); ++k) tapes[k]->backward(nd::scale(losses[k].caption, inv));
      loc_caption.step(lr * cfg.localizer_lr_scale);
      cap_caption.step(lr);

      loc.params().zero_grad();
      cap.params().zero_grad();
      for (std::size_t k = 0; k < tapes.size(); ++k) tapes[k]->backward(nd::scale(losses[k].denoise, inv));
      loc_denoise.step(lr * cfg.denoise_lr_scale * cfg.localizer_lr_scale);
      time_denoise.step(lr * cfg.denoise_lr_scale);
    }
    trace.caption_loss.push_back(ce_sum / static_cast<double>(order.size()));
    trace.denoise_loss.push_back(den_sum / static_cast<double>(order.size()));
  }
  return trace;
}

}  // namespace tap
