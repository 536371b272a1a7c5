#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "simhand/embed.hpp"
#include "simhand/ingest.hpp"
#include "simhand/io.hpp"
#include "simhand/metrics.hpp"
#include "simhand/mine.hpp"
#include "simhand/pipeline.hpp"
#include "simhand/synth.hpp"
#include "simhand/train.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct GlobalOpts {
  int threads = 0;          // 0 = hardware default
  std::uint64_t seed = 1;
  bool seed_given = false;  // CLI seed overrides config seeds
};

std::pair<std::string, std::int64_t> parse_query(const std::string& q) {
  const std::size_t colon = q.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == q.size())
    throw std::runtime_error("query must look like VIDEO:FRAME, got \"" + q + "\"");
  return {q.substr(0, colon), std::stoll(q.substr(colon + 1))};
}

Eigen::MatrixXd flatten_all(const simhand::RecordSet& set) {
  Eigen::MatrixXd m(set.size(), simhand::kFlatDim);
  for (std::size_t i = 0; i < set.size(); ++i)
    m.row(i) = simhand::flatten(set.records[i]).transpose();
  return m;
}

void cmd_synth(const GlobalOpts& g, int videos, int frames, double coherence,
               int image_size, double noise, const std::string& out_dir) {
  simhand::CorpusConfig cfg;
  cfg.n_videos = videos;
  cfg.frames_per_video = frames;
  cfg.coherence = coherence;
  cfg.image_size = image_size;
  cfg.keypoint_noise = noise;
  cfg.seed = g.seed;
  const simhand::SynthCorpus corpus = simhand::generate_corpus(cfg, g.threads);
  fs::create_directories(out_dir);
  simhand::serialize_records_file(corpus.records, fs::path(out_dir) / "records.jsonl");
  simhand::save_images(corpus.images, fs::path(out_dir) / "images.simg");
  simhand::save_poses_mm(corpus.poses, corpus.records, fs::path(out_dir) / "poses_mm.jsonl");
  std::cout << json{{"records", corpus.records.size()},
                    {"videos", corpus.records.video_count()},
                    {"out_dir", out_dir}}
                   .dump()
            << "\n";
}

void cmd_ingest(const GlobalOpts& g, const std::string& records_path,
                const std::string& out_path, const std::string& images_path,
                const std::string& images_out, double min_score, bool strict,
                bool no_balance) {
  simhand::ParseReport report;
  simhand::ParseOptions options{.strict = strict, .min_score = min_score};
  const simhand::RecordSet set =
      simhand::parse_records_file(records_path, options, &report);
  for (const auto& issue : report.issues)
    std::cerr << records_path << ":" << issue.line_number << ": " << issue.message << "\n";

  json summary{{"total_lines", report.total_lines},
               {"accepted", report.accepted},
               {"dropped_low_score", report.dropped_low_score},
               {"issues", report.issues.size()}};

  if (no_balance) {
    simhand::serialize_records_file(set, out_path);
    summary["rows_out"] = set.size();
  } else {
    const simhand::BalanceResult balanced = simhand::balance_hands(set, g.seed);
    if (balanced.empty_side)
      std::cerr << "warning: one hand side is empty; balanced output has no rows\n";
    simhand::serialize_records_file(balanced.set, out_path);
    std::size_t mirrored = 0;
    for (bool m : balanced.mirrored) mirrored += m ? 1 : 0;
    summary["rows_out"] = balanced.set.size();
    summary["mirrored"] = mirrored;
    if (!images_path.empty()) {
      if (images_out.empty())
        throw std::runtime_error("--images requires --images-out");
      const std::vector<simhand::SynthImage> images = simhand::load_images(images_path);
      if (images.size() != set.size())
        throw std::runtime_error("image archive row count does not match records");
      std::vector<simhand::SynthImage> out(balanced.set.size());
      for (std::size_t i = 0; i < balanced.set.size(); ++i) {
        const simhand::SynthImage& src = images[balanced.source_rows[i]];
        out[i] = balanced.mirrored[i] ? simhand::flip_horizontal(src) : src;
      }
      simhand::save_images(out, images_out);
    }
  }
  std::cout << summary.dump() << "\n";
}

void cmd_fit_pca(const GlobalOpts& g, const std::string& records_path,
                 const std::string& out_path, int dim, bool no_center,
                 std::size_t subsample) {
  const simhand::RecordSet set =
      simhand::parse_records_file(records_path, {.strict = true});
  simhand::PcaFitOptions options;
  options.center = !no_center;
  options.subsample = subsample;
  options.seed = g.seed;
  simhand::PcaFitReport report;
  const simhand::PcaModel model =
      simhand::fit_pca(flatten_all(set), dim, options, &report, g.threads);
  simhand::save_model(model, out_path);
  std::cout << json{{"rows", set.size()},
                    {"dim", model.dim},
                    {"data_rank", report.data_rank},
                    {"rank_deficient", report.rank_deficient}}
                   .dump()
            << "\n";
}

void cmd_embed(const GlobalOpts& g, const std::string& records_path,
               const std::string& model_path, const std::string& out_path) {
  const simhand::RecordSet set =
      simhand::parse_records_file(records_path, {.strict = true});
  const simhand::PcaModel model = simhand::load_model(model_path);
  const simhand::EmbeddingStore store = simhand::embed_records(set, model, g.threads);
  simhand::save_cache(store, out_path);
  std::cout << json{{"rows", store.count()}, {"dim", store.dim}}.dump() << "\n";
}

void cmd_mine(const GlobalOpts& g, const std::string& cache_path,
              const std::string& out_path, std::size_t k, const std::string& query) {
  const simhand::MiningIndex index =
      simhand::build_index(simhand::load_cache(cache_path));

  std::vector<std::size_t> queries;
  if (!query.empty()) {
    const auto [video, frame] = parse_query(query);
    const std::size_t row = index.find_row(video, frame);
    if (row == simhand::MiningIndex::npos)
      throw std::runtime_error("query row not found: " + query);
    queries.push_back(row);
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
  std::size_t lines = 0;
  auto emit = [&](std::size_t q, const simhand::Neighbor& nb) {
    const auto& meta = index.store().meta;
    json j{{"query_video_id", meta[q].video_id},
           {"query_frame_id", meta[q].frame_id},
           {"pos_video_id", meta[nb.row].video_id},
           {"pos_frame_id", meta[nb.row].frame_id},
           {"distance", nb.distance}};
    out << j.dump() << "\n";
    ++lines;
  };

  if (queries.empty() && k == 1) {
    const simhand::PairTable table = simhand::mine_all(index, g.threads);
    simhand::save_pairs(table, index, out);
    lines = table.entries.size();
  } else if (queries.empty()) {
    for (std::size_t q = 0; q < index.count(); ++q)
      for (const auto& nb : simhand::topk(index, q, k).entries) emit(q, nb);
  } else {
    for (std::size_t q : queries)
      for (const auto& nb : simhand::topk(index, q, k).entries) emit(q, nb);
  }
  if (!out) throw std::runtime_error("write failed: " + out_path);
  out.close();
  std::cout << json{{"pairs", lines}, {"out", out_path}}.dump() << "\n";
}

void cmd_topk(const std::string& cache_path, const std::string& query, std::size_t k) {
  const simhand::MiningIndex index =
      simhand::build_index(simhand::load_cache(cache_path));
  const auto [video, frame] = parse_query(query);
  const std::size_t row = index.find_row(video, frame);
  if (row == simhand::MiningIndex::npos)
    throw std::runtime_error("query row not found: " + query);
  const simhand::TopkResult result = simhand::topk(index, row, k);
  for (const auto& nb : result.entries) {
    const auto& meta = index.store().meta[nb.row];
    std::printf("%s\t%" PRId64 "\t%.17g\n", meta.video_id.c_str(), meta.frame_id,
                nb.distance);
  }
  if (result.truncated)
    std::cerr << "note: only " << result.entries.size()
              << " cross-video candidates exist\n";
}

void cmd_train(const GlobalOpts& g, const std::string& config_path,
               const std::vector<std::string>& overrides) {
  simhand::TrainConfig config = config_path.empty()
                                    ? simhand::TrainConfig{}
                                    : simhand::load_train_config(config_path);
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("override must look like key=value: " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (key == "records") config.records = value;
    else if (key == "images") config.images = value;
    else if (key == "pairs") config.pairs = value;
    else if (key == "pca_model") config.pca_model = value;
    else if (key == "model_out") config.model_out = value;
    else if (key == "log") config.log = value;
    else if (key == "dim") config.dim = std::stoi(value);
    else if (key == "batch_pairs") config.batch_pairs = std::stoi(value);
    else if (key == "steps") config.steps = std::stoi(value);
    else if (key == "topk_positives") config.topk_positives = std::stoi(value);
    else if (key == "seed") config.seed = std::stoull(value);
    else if (key == "learning_rate") config.learning_rate = std::stod(value);
    else if (key == "momentum") config.momentum = std::stod(value);
    else if (key == "tau") config.tau = std::stod(value);
    else if (key == "use_weights")
      config.use_weights = (value == "on" || value == "true" || value == "1");
    else if (key == "loss_denominator")
      config.denominator = value == "literal" ? simhand::DenominatorMode::kLiteral
                                              : simhand::DenominatorMode::kSimclr;
    else if (key == "weight_space")
      config.weight_space =
          value == "raw" ? simhand::WeightSpace::kRaw : simhand::WeightSpace::kPca;
    else
      throw std::runtime_error("unknown override key: " + key);
  }
  if (g.seed_given) config.seed = g.seed;

  const simhand::TrainResult result = simhand::train_from_files(config, g.threads);
  const simhand::StepMetrics& last = result.log.back();
  std::cout << json{{"steps", result.log.size()},
                    {"final_loss", last.loss},
                    {"final_margin", simhand::final_margin(result.log)}}
                   .dump()
            << "\n";
}

void cmd_eval(const std::string& pred_path, const std::string& gt_path,
              bool root_relative) {
  simhand::PoseSet pred = simhand::load_poses_mm(pred_path);
  simhand::PoseSet gt = simhand::load_poses_mm(gt_path);
  if (root_relative) {
    pred = simhand::root_relative(pred);
    gt = simhand::root_relative(gt);
  }
  std::cout << json{{"count", pred.size()},
                    {"mpjpe_mm", simhand::mpjpe(pred, gt)},
                    {"pck_auc", simhand::pck_auc(pred, gt)},
                    {"root_relative", root_relative}}
                   .dump()
            << "\n";
}

void cmd_all(const GlobalOpts& g, const std::string& config_path,
             const std::string& out_dir) {
  simhand::PipelineConfig config = config_path.empty()
                                       ? simhand::PipelineConfig{}
                                       : simhand::load_pipeline_config(config_path);
  if (!out_dir.empty()) config.out_dir = out_dir;
  if (g.seed_given) {
    config.seed = g.seed;
    config.train.seed = g.seed;
  }
  const simhand::PipelineReport report = simhand::run_pipeline(config, g.threads);
  std::cout << json{{"mining_ratio", report.quality.ratio},
                    {"final_loss", report.final_loss},
                    {"final_margin", report.final_margin},
                    {"out_dir", config.out_dir}}
                   .dump()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simhand: mine similar hand pairs across videos and pre-train a "
               "contrastive encoder on them"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--threads", g.threads, "Worker thread cap (0 = hardware)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Root seed for all randomness");

  // synth
  int videos = 50, frames = 200, image_size = 64;
  double coherence = 0.8, noise = 0.0;
  std::string out_dir = "synth_out";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic hand corpus");
  synth->add_option("--videos", videos, "Number of videos")->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames, "Frames per video")->check(CLI::PositiveNumber);
  synth->add_option("--coherence", coherence, "Temporal coherence in [0,1]");
  synth->add_option("--image-size", image_size, "Square image size in pixels");
  synth->add_option("--keypoint-noise", noise, "Seeded jitter sigma on stored keypoints");
  synth->add_option("--out-dir", out_dir, "Output directory");

  // ingest
  std::string in_records, out_records, in_images, out_images;
  double min_score = 0.0;
  bool strict = false, no_balance = false;
  auto* ingest = app.add_subcommand("ingest", "Validate records and balance hand sides");
  ingest->add_option("--records", in_records, "Input record file")->required();
  ingest->add_option("--out", out_records, "Output record file")->required();
  ingest->add_option("--images", in_images, "Row-aligned image archive to co-transform");
  ingest->add_option("--images-out", out_images, "Output image archive");
  ingest->add_option("--min-score", min_score, "Drop records below this detection score");
  ingest->add_flag("--strict", strict, "Any malformed line aborts the parse");
  ingest->add_flag("--no-balance", no_balance, "Validate and rewrite without balancing");

  // fit-pca
  std::string pca_records, pca_out;
  int pca_dim = 14;
  bool no_center = false;
  std::size_t subsample = 0;
  auto* fitpca = app.add_subcommand("fit-pca", "Fit the pose embedding model");
  fitpca->add_option("--records", pca_records, "Input record file")->required();
  fitpca->add_option("--out", pca_out, "Output model file")->required();
  fitpca->add_option("--dim", pca_dim, "Embedding width D");
  fitpca->add_flag("--no-center", no_center, "Project without subtracting the mean");
  fitpca->add_option("--subsample", subsample, "Fit on a seeded subsample of this many rows");

  // embed
  std::string embed_records_path, embed_model, embed_out;
  auto* embed = app.add_subcommand("embed", "Project records into the embedding cache");
  embed->add_option("--records", embed_records_path, "Input record file")->required();
  embed->add_option("--model", embed_model, "Embedding model file")->required();
  embed->add_option("--out", embed_out, "Output cache file")->required();

  // mine
  std::string mine_cache, mine_out, mine_query;
  std::size_t mine_k = 1;
  auto* mine = app.add_subcommand("mine", "Find cross-video nearest neighbors");
  mine->add_option("--embeddings", mine_cache, "Embedding cache")->required();
  mine->add_option("--out", mine_out, "Output pair file")->required();
  mine->add_option("--topk", mine_k, "Neighbors per query")->check(CLI::PositiveNumber);
  mine->add_option("--query", mine_query, "Restrict to one VIDEO:FRAME query");

  // topk
  std::string topk_cache, topk_query;
  std::size_t topk_k = 5;
  auto* topkc = app.add_subcommand("topk", "Print the k nearest cross-video rows");
  topkc->add_option("--embeddings", topk_cache, "Embedding cache")->required();
  topkc->add_option("--query", topk_query, "VIDEO:FRAME query")->required();
  topkc->add_option("--k", topk_k, "Rows to print")->check(CLI::PositiveNumber);

  // train
  std::string train_config;
  std::vector<std::string> train_set;
  auto* train = app.add_subcommand("train", "Run the contrastive training loop");
  train->add_option("--config", train_config, "Train config file");
  train->add_option("--set", train_set,
                    "Override a config key, e.g. --set steps=100 --set use_weights=off");

  // eval
  std::string eval_pred, eval_gt;
  bool root_rel = false;
  auto* eval = app.add_subcommand("eval", "Compare predicted and reference 3D poses");
  eval->add_option("--pred", eval_pred, "Predicted poses (mm)")->required();
  eval->add_option("--gt", eval_gt, "Reference poses (mm)")->required();
  eval->add_flag("--root-relative", root_rel, "Subtract the wrist joint first");

  // all
  std::string all_config, all_out;
  auto* all = app.add_subcommand("all", "Run the full pipeline");
  all->add_option("--config", all_config, "Pipeline config file");
  all->add_option("--out-dir", all_out, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (synth->parsed())
      cmd_synth(g, videos, frames, coherence, image_size, noise, out_dir);
    else if (ingest->parsed())
      cmd_ingest(g, in_records, out_records, in_images, out_images, min_score, strict,
                 no_balance);
    else if (fitpca->parsed())
      cmd_fit_pca(g, pca_records, pca_out, pca_dim, no_center, subsample);
    else if (embed->parsed())
      cmd_embed(g, embed_records_path, embed_model, embed_out);
    else if (mine->parsed())
      cmd_mine(g, mine_cache, mine_out, mine_k, mine_query);
    else if (topkc->parsed())
      cmd_topk(topk_cache, topk_query, topk_k);
    else if (train->parsed())
      cmd_train(g, train_config, train_set);
    else if (eval->parsed())
      cmd_eval(eval_pred, eval_gt, root_rel);
    else if (all->parsed())
      cmd_all(g, all_config, all_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
