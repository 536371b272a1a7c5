#include "simhand/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "simhand/io.hpp"

namespace simhand {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw std::runtime_error("unknown key \"" + key + "\" in " + where);
  }
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": invalid config: " + e.what());
  }
  reject_unknown_keys(j, {"out_dir", "seed", "synth", "ingest", "fit_pca", "train"},
                      "pipeline config");
  PipelineConfig c;
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    reject_unknown_keys(
        s, {"videos", "frames", "coherence", "image_size", "keypoint_noise"}, "synth");
    if (s.contains("videos")) c.synth.n_videos = s.at("videos").get<int>();
    if (s.contains("frames")) c.synth.frames_per_video = s.at("frames").get<int>();
    if (s.contains("coherence")) c.synth.coherence = s.at("coherence").get<double>();
    if (s.contains("image_size")) c.synth.image_size = s.at("image_size").get<int>();
    if (s.contains("keypoint_noise"))
      c.synth.keypoint_noise = s.at("keypoint_noise").get<double>();
  }
  if (j.contains("ingest")) {
    const json& s = j.at("ingest");
    reject_unknown_keys(s, {"min_score"}, "ingest");
    if (s.contains("min_score")) c.min_score = s.at("min_score").get<double>();
  }
  if (j.contains("fit_pca")) {
    const json& s = j.at("fit_pca");
    reject_unknown_keys(s, {"dim", "center", "subsample"}, "fit_pca");
    if (s.contains("dim")) c.pca_dim = s.at("dim").get<int>();
    if (s.contains("center")) c.pca_center = s.at("center").get<bool>();
    if (s.contains("subsample")) c.pca_subsample = s.at("subsample").get<std::size_t>();
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown_keys(t,
                        {"batch_pairs", "steps", "learning_rate", "momentum", "tau",
                         "use_weights", "loss_denominator", "weight_space",
                         "topk_positives", "augment", "encoder"},
                        "train");
    // Paths and seed are pipeline-owned; the section parser handles the rest.
    c.train = parse_train_config(t.dump());
  }
  c.train.dim = c.pca_dim;
  c.train.seed = c.seed;
  return c;
}

void save_pipeline_config(const PipelineConfig& c, const std::filesystem::path& path) {
  json j{{"out_dir", c.out_dir},
         {"seed", c.seed},
         {"synth", json{{"videos", c.synth.n_videos},
                        {"frames", c.synth.frames_per_video},
                        {"coherence", c.synth.coherence},
                        {"image_size", c.synth.image_size},
                        {"keypoint_noise", c.synth.keypoint_noise}}},
         {"ingest", json{{"min_score", c.min_score}}},
         {"fit_pca", json{{"dim", c.pca_dim},
                          {"center", c.pca_center},
                          {"subsample", c.pca_subsample}}},
         {"train", json{{"batch_pairs", c.train.batch_pairs},
                        {"steps", c.train.steps},
                        {"learning_rate", c.train.learning_rate},
                        {"momentum", c.train.momentum},
                        {"tau", c.train.tau},
                        {"use_weights", c.train.use_weights},
                        {"loss_denominator", c.train.denominator == DenominatorMode::kSimclr
                                                 ? "simclr"
                                                 : "literal"},
                        {"weight_space",
                         c.train.weight_space == WeightSpace::kPca ? "pca" : "raw"},
                        {"topk_positives", c.train.topk_positives},
                        {"encoder", json{{"hidden", c.train.hidden},
                                         {"feature_dim", c.train.feature_dim},
                                         {"projection_dim", c.train.projection_dim}}}}}};
  write_text_file(path, j.dump(2) + "\n");
}

PipelineReport run_pipeline(const PipelineConfig& config, int threads) {
  namespace fs = std::filesystem;
  const fs::path dir = config.out_dir;
  fs::create_directories(dir);

  // Stage 1: synthetic corpus.
  CorpusConfig synth_cfg = config.synth;
  synth_cfg.seed = derive_seed(config.seed, 0x0001);
  const SynthCorpus corpus = generate_corpus(synth_cfg, threads);
  serialize_records_file(corpus.records, dir / "records.jsonl");
  save_images(corpus.images, dir / "images.simg");
  save_poses_mm(corpus.poses, corpus.records, dir / "poses_mm.jsonl");

  // Stage 2: validate + balance hands; mirror the image rows the same way.
  ParseReport parse_report;
  const RecordSet parsed =
      parse_records_file(dir / "records.jsonl",
                         {.strict = true, .min_score = config.min_score}, &parse_report);
  const BalanceResult balanced = balance_hands(parsed, derive_seed(config.seed, 0x0002));
  serialize_records_file(balanced.set, dir / "balanced_records.jsonl");
  std::vector<SynthImage> balanced_images(balanced.set.size());
  for (std::size_t i = 0; i < balanced.set.size(); ++i) {
    const SynthImage& src = corpus.images[balanced.source_rows[i]];
    balanced_images[i] = balanced.mirrored[i] ? flip_horizontal(src) : src;
  }
  save_images(balanced_images, dir / "balanced_images.simg");

  // Stage 3: pose embedding model.
  Eigen::MatrixXd flat(balanced.set.size(), kFlatDim);
  for (std::size_t i = 0; i < balanced.set.size(); ++i)
    flat.row(i) = flatten(balanced.set.records[i]).transpose();
  PcaFitOptions fit_opts;
  fit_opts.center = config.pca_center;
  fit_opts.subsample = config.pca_subsample;
  fit_opts.seed = derive_seed(config.seed, 0x0003);
  const PcaModel pca = fit_pca(flat, config.pca_dim, fit_opts, nullptr, threads);
  save_model(pca, dir / "pca.json");

  // Stage 4: embeddings.
  EmbeddingStore store = embed_records(balanced.set, pca, threads);
  save_cache(store, dir / "embeddings.simh");

  // Stage 5: cross-video positives.
  MiningIndex index = build_index(std::move(store));
  const PairTable pairs = mine_all(index, threads);
  save_pairs_file(pairs, index, dir / "pairs.jsonl");
  const MiningQuality quality =
      mining_quality(index, pairs, derive_seed(config.seed, 0x0005));

  // Stage 6: contrastive training.
  TrainConfig train_cfg = config.train;
  train_cfg.dim = config.pca_dim;
  train_cfg.seed = config.seed;
  // Artifact names are stored relative to the config's own directory, so the
  // output directory stays relocatable and byte-comparable across runs.
  train_cfg.records = "balanced_records.jsonl";
  train_cfg.images = "balanced_images.simg";
  train_cfg.pairs = "pairs.jsonl";
  train_cfg.pca_model = "pca.json";
  train_cfg.model_out = "encoder.bin";
  train_cfg.log = "train_log.jsonl";
  save_train_config(train_cfg, dir / "train_config.json");

  TrainInputs inputs;
  inputs.records = &balanced.set;
  inputs.images = &balanced_images;
  inputs.pca = &pca;
  if (train_cfg.topk_positives > 1)
    inputs.pairs = mine_rank(index, static_cast<std::size_t>(train_cfg.topk_positives),
                             threads);
  else
    inputs.pairs = pairs;
  const TrainResult trained = train_loop(train_cfg, inputs, threads);
  save_encoder(trained.model, dir / "encoder.bin");
  save_metrics_log(trained.log, dir / "train_log.jsonl");

  PipelineReport report;
  report.quality = quality;
  report.final_loss = trained.log.back().loss;
  report.final_margin = final_margin(trained.log);
  report.steps = static_cast<int>(trained.log.size());

  json rj{{"mining_quality",
           json{{"mined_mean_distance", quality.mined_mean_distance},
                {"random_mean_distance", quality.random_mean_distance},
                {"ratio", quality.ratio},
                {"pair_count", quality.pair_count}}},
          {"final_loss", report.final_loss},
          {"final_margin", report.final_margin},
          {"steps", report.steps}};
  write_text_file(dir / "report.json", rj.dump(2) + "\n");
  return report;
}

}  // namespace simhand
