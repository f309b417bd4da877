#include "tap/localizer.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "tap/errors.hpp"

namespace tap {
namespace {

constexpr double kTimeScale = 64.0;

std::string layer_name(int l, const char* part) {
  return std::string(Localizer::kPrefix) + "layer" + std::to_string(l) + "." + part;
}

nlohmann::json config_json(const LocalizerConfig& c) {
  return {{"num_queries", c.num_queries},
          {"num_layers", c.num_layers},
          {"model_dim", c.model_dim},
          {"feature_dim", c.feature_dim},
          {"positional_encoding", c.positional_encoding}};
}

LocalizerConfig config_from_metadata(const std::string& metadata) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(metadata);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("localizer checkpoint metadata: ") + e.what());
  }
  if (j.value("kind", "") != "tap-localizer") throw SchemaError("checkpoint is not a localizer");
  LocalizerConfig c;
  try {
    const auto& cj = j.at("config");
    c.num_queries = cj.at("num_queries").get<int>();
    c.num_layers = cj.at("num_layers").get<int>();
    c.model_dim = cj.at("model_dim").get<int>();
    c.feature_dim = cj.at("feature_dim").get<int>();
    c.positional_encoding = cj.at("positional_encoding").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("localizer checkpoint metadata: ") + e.what());
  }
  c.validate();
  return c;
}

nd::Matrix frame_encodings(int frames, int dim) {
  nd::Matrix pe(frames, dim);
  for (int f = 0; f < frames; ++f) pe.row(f) = time_encoding(frame_time(f, frames), dim);
  return pe;
}

}  // namespace

void LocalizerConfig::validate() const {
  if (num_queries < 1) throw std::invalid_argument("num_queries must be >= 1");
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (model_dim < 2 || model_dim % 2 != 0) throw std::invalid_argument("model_dim must be even and >= 2");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
}

nd::RowVector time_encoding(double t, int dim) { return nd::sinusoid(t * kTimeScale, dim, kTimeScale); }

Localizer::Localizer(const LocalizerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(std::make_unique<nd::ParameterStore>()) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg_.model_dim;
  auto& s = *store_;
  s.add(std::string(kPrefix) + "queries", nd::randn(cfg_.num_queries, d, 1.0, rng));
  nd::Linear::create(s, std::string(kPrefix) + "input", cfg_.feature_dim, d, rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    nd::Attention::create(s, layer_name(l, "attn"), d, rng);
    nd::FeedForward::create(s, layer_name(l, "ffn"), d, 2 * d, rng);
  }
  nd::LayerNorm::create(s, std::string(kPrefix) + "head.ln", d);
  nd::Linear::create(s, std::string(kPrefix) + "head.hidden", d, d, rng);
  nd::Linear out = nd::Linear::create(s, std::string(kPrefix) + "head.out", d, 2, rng);
  out.weight->value.setZero();
  bind();
}

Localizer::Localizer(const nd::Checkpoint& ckpt) : Localizer(config_from_metadata(ckpt.metadata), 0) {
  ckpt.load_into(*store_);
}

void Localizer::bind() {
  auto& s = *store_;
  input_ = nd::Linear::bind(s, std::string(kPrefix) + "input");
  attn_.clear();
  ffn_.clear();
  for (int l = 0; l < cfg_.num_layers; ++l) {
    attn_.push_back(nd::Attention::bind(s, layer_name(l, "attn")));
    ffn_.push_back(nd::FeedForward::bind(s, layer_name(l, "ffn")));
  }
  out_norm_ = nd::LayerNorm::bind(s, std::string(kPrefix) + "head.ln");
  head_hidden_ = nd::Linear::bind(s, std::string(kPrefix) + "head.hidden");
  head_out_ = nd::Linear::bind(s, std::string(kPrefix) + "head.out");
}

nd::Tensor Localizer::forward(nd::Tape& tape, const nd::Matrix& features) const {
  if (features.rows() < 1) throw std::invalid_argument("localizer needs at least one frame");
  if (features.cols() != cfg_.feature_dim) {
    throw std::invalid_argument("localizer expects feature_dim " + std::to_string(cfg_.feature_dim) +
                                ", got features " + nd::shape_str(features));
  }
  nd::Tensor kv = input_(tape, tape.constant(features));
  if (cfg_.positional_encoding) {
    kv = nd::add(kv, tape.constant(frame_encodings(static_cast<int>(features.rows()), cfg_.model_dim)));
  }
  nd::Tensor q = tape.param(store_->get(std::string(kPrefix) + "queries"));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    q = nd::cross_attention(tape, q, kv, attn_[static_cast<std::size_t>(l)]);
    q = ffn_[static_cast<std::size_t>(l)](tape, q);
  }
  nd::Tensor h = nd::relu(head_hidden_(tape, out_norm_(tape, q)));
  return nd::sigmoid(head_out_(tape, h));
}

std::vector<TemporalAnchor> anchors_from_rows(const nd::Matrix& rows) {
  std::vector<TemporalAnchor> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.emplace_back(rows(i, 0), rows(i, 1));
  return out;
}

std::vector<TemporalAnchor> Localizer::localize(const nd::Matrix& features) const {
  nd::Tape tape;
  tape.set_grad_enabled(false);
  return anchors_from_rows(forward(tape, features).value());
}

nd::Checkpoint Localizer::to_checkpoint() const {
  nlohmann::json meta{{"kind", "tap-localizer"}, {"config", config_json(cfg_)}};
  return nd::Checkpoint::from_store(*store_, meta.dump());
}

nd::Tensor anchor_loss_node(const nd::Tensor& out, std::span<const TemporalAnchor> truths, const LossWeights& w,
                            Assignment* assignment) {
  const std::vector<TemporalAnchor> preds = anchors_from_rows(out.value());
  AnchorLoss loss = anchor_loss(preds, truths, w);
  nd::Matrix grad = anchor_loss_grad(preds, truths, w, loss.assignment);
  if (assignment != nullptr) *assignment = loss.assignment;
  return nd::custom_scalar(out, loss.value, std::move(grad));
}

void LocalizerTrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (lr_step < 1) throw std::invalid_argument("lr_step must be >= 1");
  if (!(opt.lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
}

void check_trainable(const Dataset& data, const LocalizerConfig& cfg) {
  if (data.videos.empty()) throw std::invalid_argument("dataset has no videos");
  for (const auto& v : data.videos) {
    const auto n = static_cast<int>(v.events.size());
    if (n < 1) throw std::invalid_argument("video " + v.id + " has no events");
    if (n >= cfg.num_queries) {
      throw std::invalid_argument("video " + v.id + " has " + std::to_string(n) + " events, needs fewer than " +
                                  std::to_string(cfg.num_queries) + " queries");
    }
  }
}

double mean_anchor_loss(const Localizer& model, const Dataset& data, const LossWeights& w) {
  if (data.videos.empty()) throw std::invalid_argument("dataset has no videos");
  double total = 0.0;
  for (const auto& v : data.videos) {
    const auto truths = v.anchors();
    total += anchor_loss(model.localize(v.features), truths, w).value;
  }
  return total / static_cast<double>(data.videos.size());
}

LocalizerTrace fit_localizer(Localizer& model, const Dataset& data, const LocalizerTrainConfig& train) {
  train.validate();
  check_trainable(data, model.config());
  LocalizerTrace trace;
  trace.initial_loss = mean_anchor_loss(model, data, train.weights);

  std::vector<nd::Parameter*> group = model.params().all();
  nd::AdamW opt(group, train.opt);
  std::mt19937_64 rng(train.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(data.videos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = nd::step_lr(train.opt.lr, epoch, train.lr_step, train.lr_gamma);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(train.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(train.batch_size));
      opt.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const VideoSample& v = data.videos[order[k]];
        const auto truths = v.anchors();
        nd::Tape tape;
        nd::Tensor loss = anchor_loss_node(model.forward(tape, v.features), truths, train.weights);
        total += loss.item();
        tape.backward(nd::scale(loss, 1.0 / static_cast<double>(e - b)));
      }
      const bool any = std::any_of(group.begin(), group.end(), [](const nd::Parameter* p) {
        return !p->grad.isZero(0.0);
      });
      // A zero gradient would still decay weights; skip so a zero loss leaves them alone.
      if (any) opt.step(lr);
    }
    trace.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return trace;
}

TrainedLocalizer train_localizer(const Dataset& data, const LocalizerConfig& cfg, const LocalizerTrainConfig& train) {
  check_trainable(data, cfg);
  if (data.feature_dim != cfg.feature_dim) {
    throw std::invalid_argument("dataset feature_dim " + std::to_string(data.feature_dim) +
                                " does not match localizer feature_dim " + std::to_string(cfg.feature_dim));
  }
  TrainedLocalizer out{Localizer(cfg, train.seed), {}};
  out.trace = fit_localizer(out.model, data, train);
  return out;
}

}  // namespace tap
