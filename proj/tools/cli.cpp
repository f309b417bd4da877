#include "tap/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tap/captioner.hpp"
#include "tap/ecs.hpp"
#include "tap/errors.hpp"
#include "tap/evalkit.hpp"
#include "tap/io.hpp"
#include "tap/localizer.hpp"
#include "tap/synthetic.hpp"

namespace tap {
namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Turns `--config file` (or `--config=file`) after the subcommand into `--key=value`
/// arguments placed right after the subcommand, so explicit flags later on win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.size() < 2) return args;
  std::string path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw FileError("cannot read config " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw SchemaError("config " + path + " is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) throw SchemaError("config " + path + " must be a JSON object");
  std::vector<std::string> injected;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config") throw UsageError("config files cannot nest --config");
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_number() || value.is_boolean()) {
      text = value.dump();
    } else {
      throw SchemaError("config key " + key + " must be a string, number or boolean");
    }
    injected.push_back("--" + key + "=" + text);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw FileError(what + " not found: " + path);
}

CLI::Option* seed_option(CLI::App* app, std::uint64_t& seed) {
  return app->add_option("--seed", seed, "random seed (falls back to TAP_SEED)")->envname("TAP_SEED");
}

void add_config(CLI::App* app) {
  app->add_option("--config", "JSON object of option names to values; explicit flags win");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal-anchor dense captioning on synthetic planted-event videos", "tap"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // gen
  GenConfig gen;
  std::string gen_out;
  auto* g = app.add_subcommand("gen", "write a synthetic dataset");
  add_config(g);
  g->add_option("--out", gen_out, "dataset JSON path")->required();
  g->add_option("--num-videos", gen.num_videos);
  g->add_option("--num-frames", gen.num_frames);
  g->add_option("--feature-dim", gen.feature_dim);
  g->add_option("--num-classes", gen.num_event_classes);
  g->add_option("--min-events", gen.min_events);
  g->add_option("--max-events", gen.max_events);
  g->add_option("--min-event-frames", gen.min_event_frames);
  g->add_option("--max-event-frames", gen.max_event_frames);
  g->add_option("--noise", gen.noise);
  g->add_option("--max-overlap", gen.max_overlap);
  seed_option(g, gen.seed);

  // train-localizer
  LocalizerConfig lc;
  LocalizerTrainConfig lt;
  std::string tl_data, tl_out, tl_trace;
  auto* tl = app.add_subcommand("train-localizer", "stage A: fit the event localizer");
  add_config(tl);
  tl->add_option("--data", tl_data, "dataset JSON")->required();
  tl->add_option("--out", tl_out, "localizer checkpoint path")->required();
  tl->add_option("--trace", tl_trace, "JSON loss trace path");
  tl->add_option("--num-queries", lc.num_queries);
  tl->add_option("--num-layers", lc.num_layers);
  tl->add_option("--model-dim", lc.model_dim);
  tl->add_option("--positional-encoding", lc.positional_encoding);
  tl->add_option("--epochs", lt.epochs);
  tl->add_option("--batch-size", lt.batch_size);
  tl->add_option("--lr", lt.opt.lr);
  tl->add_option("--weight-decay", lt.opt.weight_decay);
  tl->add_option("--lr-step", lt.lr_step);
  tl->add_option("--lr-gamma", lt.lr_gamma);
  tl->add_option("--lambda-seg", lt.weights.lambda_seg);
  tl->add_option("--lambda-span", lt.weights.lambda_span);
  seed_option(tl, lt.seed);

  // train-captioner
  CaptionerConfig cc;
  StageBConfig sb;
  std::string tc_data, tc_loc, tc_out, tc_loc_out, tc_trace;
  auto* tc = app.add_subcommand("train-captioner", "stage B: fit the captioner and fine-tune the localizer");
  add_config(tc);
  tc->add_option("--data", tc_data, "dataset JSON")->required();
  tc->add_option("--localizer", tc_loc, "stage-A localizer checkpoint")->required();
  tc->add_option("--out", tc_out, "captioner checkpoint path")->required();
  tc->add_option("--localizer-out", tc_loc_out, "fine-tuned localizer path (default: <out>.localizer)");
  tc->add_option("--trace", tc_trace, "JSON loss trace path");
  tc->add_option("--model-dim", cc.model_dim);
  tc->add_option("--num-layers", cc.num_layers);
  tc->add_option("--max-caption-len", cc.max_caption_len);
  tc->add_option("--epochs", sb.epochs);
  tc->add_option("--warmup-epochs", sb.warmup_epochs);
  tc->add_option("--batch-size", sb.batch_size);
  tc->add_option("--lr", sb.opt.lr);
  tc->add_option("--weight-decay", sb.opt.weight_decay);
  tc->add_option("--localizer-lr-scale", sb.localizer_lr_scale);
  tc->add_option("--denoise-lr-scale", sb.denoise_lr_scale);
  tc->add_option("--event-dropout", sb.event_dropout);
  tc->add_option("--terminal-event", sb.terminal_event);
  tc->add_option("--lambda-seg", sb.weights.lambda_seg);
  tc->add_option("--lambda-span", sb.weights.lambda_span);
  seed_option(tc, sb.seed);

  // infer
  EcsConfig ec;
  std::string in_data, in_loc, in_cap, in_out, in_decode = "ecs";
  int first_k = 0;
  std::uint64_t in_seed = 0;
  auto* inf = app.add_subcommand("infer", "decode events for every video of a dataset");
  add_config(inf);
  inf->add_option("--data", in_data, "dataset JSON")->required();
  inf->add_option("--localizer", in_loc, "localizer checkpoint")->required();
  inf->add_option("--captioner", in_cap, "captioner checkpoint")->required();
  inf->add_option("--out", in_out, "predictions JSON path")->required();
  inf->add_option("--decode", in_decode)->check(CLI::IsMember({"ecs", "random", "first-k"}));
  inf->add_option("--alpha", ec.alpha);
  inf->add_option("--cluster-iou", ec.cluster_iou_threshold);
  inf->add_option("--batch-threshold", ec.batch_threshold);
  inf->add_option("--max-events", ec.max_events, "0 means one per anchor");
  inf->add_option("--k", first_k, "anchors used by first-k (0 = all)");
  seed_option(inf, in_seed);

  // eval
  std::string ev_data, ev_pred, ev_out, ev_table;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "score predictions against a dataset");
  add_config(ev);
  ev->add_option("--data", ev_data, "dataset JSON")->required();
  ev->add_option("--predictions", ev_pred, "predictions JSON")->required();
  ev->add_option("--out", ev_out, "report JSON path")->required();
  ev->add_option("--table", ev_table, "aligned text table path");
  seed_option(ev, ev_seed);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args));
    std::vector<const char*> raw;
    for (const auto& a : args) raw.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      throw UsageError(e.what());
    }

    if (g->parsed()) {
      gen.validate();
      const Dataset d = generate_dataset(gen);
      save_dataset(gen_out, d);
      out << "wrote " << d.videos.size() << " videos to " << gen_out << '\n';
    } else if (tl->parsed()) {
      require_file(tl_data, "dataset");
      const Dataset d = load_dataset(tl_data);
      lc.feature_dim = d.feature_dim;
      const TrainedLocalizer r = train_localizer(d, lc, lt);
      nd::save_checkpoint(tl_out, r.model.to_checkpoint());
      if (!tl_trace.empty()) write_json(tl_trace, localizer_trace_to_json(r.trace));
      out << "localizer loss " << r.trace.initial_loss << " -> "
          << (r.trace.epoch_loss.empty() ? r.trace.initial_loss : r.trace.epoch_loss.back()) << ", wrote " << tl_out
          << '\n';
    } else if (tc->parsed()) {
      require_file(tc_data, "dataset");
      require_file(tc_loc, "stage-A localizer checkpoint");
      const Dataset d = load_dataset(tc_data);
      Localizer loc(nd::load_checkpoint(tc_loc));
      cc.feature_dim = d.feature_dim;
      Captioner cap(cc, d.vocab, sb.seed);
      const StageBTrace t = train_stage_b(d, loc, cap, sb);
      if (tc_loc_out.empty()) tc_loc_out = tc_out + ".localizer";
      nd::save_checkpoint(tc_out, cap.to_checkpoint());
      nd::save_checkpoint(tc_loc_out, loc.to_checkpoint());
      if (!tc_trace.empty()) write_json(tc_trace, stage_b_trace_to_json(t));
      out << "caption loss " << (t.caption_loss.empty() ? 0.0 : t.caption_loss.back()) << ", wrote " << tc_out
          << " and " << tc_loc_out << '\n';
    } else if (inf->parsed()) {
      require_file(in_data, "dataset");
      require_file(in_loc, "localizer checkpoint");
      require_file(in_cap, "captioner checkpoint");
      const Dataset d = load_dataset(in_data);
      const Localizer loc(nd::load_checkpoint(in_loc));
      const Captioner cap(nd::load_checkpoint(in_cap));
      if (cap.vocab().tokens() != d.vocab.tokens()) throw SchemaError("captioner vocab differs from the dataset's");
      ec.validate();
      const ReferenceScorer scorer(d.vocab, d.feature_dim);
      std::vector<VideoPrediction> preds;
      for (std::size_t i = 0; i < d.videos.size(); ++i) {
        const VideoSample& v = d.videos[i];
        const auto anchors = loc.localize(v.features);
        DecodeResult r;
        if (in_decode == "ecs") {
          r = ecs_decode(v.features, anchors, cap, scorer, ec);
        } else if (in_decode == "random") {
          r = random_decode(v.features, anchors, cap, scorer, ec, derived_seed(in_seed, i));
        } else {
          r = first_k_decode(v.features, anchors, cap, scorer, ec, first_k);
        }
        preds.push_back({v.id, std::move(r.events)});
      }
      write_json(in_out, predictions_to_json(preds, d.vocab, in_decode));
      out << "decoded " << preds.size() << " videos with " << in_decode << ", wrote " << in_out << '\n';
    } else if (ev->parsed()) {
      require_file(ev_data, "dataset");
      require_file(ev_pred, "predictions");
      const Dataset d = load_dataset(ev_data);
      const auto preds = predictions_from_json(read_json(ev_pred, "tap-predictions"), d.vocab);
      const EvalReport r = evaluate(d, preds);
      write_json(ev_out, report_to_json(r));
      const std::string table = report_table(r);
      if (!ev_table.empty()) write_text(ev_table, table);
      out << table;
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "tap: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FileError& e) {
    err << "tap: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const SchemaError& e) {
    err << "tap: schema: " << e.what() << '\n';
    return kExitSchema;
  } catch (const std::exception& e) {
    err << "tap: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace tap
