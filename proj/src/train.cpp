#include "simhand/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "simhand/io.hpp"
#include "simhand/parallel.hpp"

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

DenominatorMode denominator_from_string(const std::string& s) {
  if (s == "simclr") return DenominatorMode::kSimclr;
  if (s == "literal") return DenominatorMode::kLiteral;
  throw std::runtime_error("loss_denominator must be \"simclr\" or \"literal\"");
}

std::string to_string(DenominatorMode mode) {
  return mode == DenominatorMode::kSimclr ? "simclr" : "literal";
}

WeightSpace weight_space_from_string(const std::string& s) {
  if (s == "pca") return WeightSpace::kPca;
  if (s == "raw") return WeightSpace::kRaw;
  throw std::runtime_error("weight_space must be \"pca\" or \"raw\"");
}

std::string to_string(WeightSpace space) {
  return space == WeightSpace::kPca ? "pca" : "raw";
}

AugmentRanges augment_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"rotation_max", "scale_min", "scale_max", "translate_max",
                       "gain_min", "gain_max", "offset_max"},
                      "augment");
  AugmentRanges r;
  if (j.contains("rotation_max")) r.rotation_max = j.at("rotation_max").get<double>();
  if (j.contains("scale_min")) r.scale_min = j.at("scale_min").get<double>();
  if (j.contains("scale_max")) r.scale_max = j.at("scale_max").get<double>();
  if (j.contains("translate_max")) r.translate_max = j.at("translate_max").get<double>();
  if (j.contains("gain_min")) r.gain_min = j.at("gain_min").get<double>();
  if (j.contains("gain_max")) r.gain_max = j.at("gain_max").get<double>();
  if (j.contains("offset_max")) r.offset_max = j.at("offset_max").get<double>();
  return r;
}

json augment_to_json(const AugmentRanges& r) {
  return json{{"rotation_max", r.rotation_max}, {"scale_min", r.scale_min},
              {"scale_max", r.scale_max},       {"translate_max", r.translate_max},
              {"gain_min", r.gain_min},         {"gain_max", r.gain_max},
              {"offset_max", r.offset_max}};
}

void validate_config(const TrainConfig& c) {
  if (c.batch_pairs < 2) throw std::runtime_error("batch_pairs must be >= 2");
  if (c.steps < 1) throw std::runtime_error("steps must be >= 1");
  if (c.learning_rate < 0.0) throw std::runtime_error("learning_rate must be >= 0");
  if (c.momentum < 0.0 || c.momentum >= 1.0)
    throw std::runtime_error("momentum must be in [0,1)");
  if (c.tau <= 0.0) throw std::runtime_error("tau must be positive");
  if (c.topk_positives < 1) throw std::runtime_error("topk_positives must be >= 1");
  if (c.projection_dim < 2 || c.projection_dim % 2 != 0)
    throw std::runtime_error("projection_dim must be even and >= 2");
  if (c.dim < 1) throw std::runtime_error("dim must be >= 1");
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("invalid train config: ") + e.what());
  }
  reject_unknown_keys(j,
                      {"records", "images", "pairs", "pca_model", "model_out", "log",
                       "dim", "batch_pairs", "steps", "learning_rate", "momentum",
                       "tau", "seed", "use_weights", "loss_denominator", "weight_space",
                       "topk_positives", "augment", "encoder"},
                      "train config");
  TrainConfig c;
  auto get_str = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  get_str("records", c.records);
  get_str("images", c.images);
  get_str("pairs", c.pairs);
  get_str("pca_model", c.pca_model);
  get_str("model_out", c.model_out);
  get_str("log", c.log);
  if (j.contains("dim")) c.dim = j.at("dim").get<int>();
  if (j.contains("batch_pairs")) c.batch_pairs = j.at("batch_pairs").get<int>();
  if (j.contains("steps")) c.steps = j.at("steps").get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("tau")) c.tau = j.at("tau").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("use_weights")) c.use_weights = j.at("use_weights").get<bool>();
  if (j.contains("loss_denominator"))
    c.denominator = denominator_from_string(j.at("loss_denominator").get<std::string>());
  if (j.contains("weight_space"))
    c.weight_space = weight_space_from_string(j.at("weight_space").get<std::string>());
  if (j.contains("topk_positives")) c.topk_positives = j.at("topk_positives").get<int>();
  if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    reject_unknown_keys(e, {"hidden", "feature_dim", "projection_dim"}, "encoder config");
    if (e.contains("hidden")) c.hidden = e.at("hidden").get<std::vector<int>>();
    if (e.contains("feature_dim")) c.feature_dim = e.at("feature_dim").get<int>();
    if (e.contains("projection_dim")) c.projection_dim = e.at("projection_dim").get<int>();
  }
  validate_config(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig c;
  try {
    c = parse_train_config(read_text_file(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  // Relative artifact paths resolve against the config's directory, so a
  // pipeline output directory keeps working wherever it is moved.
  const std::filesystem::path base = path.parent_path();
  for (std::string* field :
       {&c.records, &c.images, &c.pairs, &c.pca_model, &c.model_out, &c.log}) {
    if (!field->empty() && std::filesystem::path(*field).is_relative())
      *field = (base / *field).string();
  }
  return c;
}

void save_train_config(const TrainConfig& c, const std::filesystem::path& path) {
  json j{{"records", c.records},
         {"images", c.images},
         {"pairs", c.pairs},
         {"pca_model", c.pca_model},
         {"model_out", c.model_out},
         {"log", c.log},
         {"dim", c.dim},
         {"batch_pairs", c.batch_pairs},
         {"steps", c.steps},
         {"learning_rate", c.learning_rate},
         {"momentum", c.momentum},
         {"tau", c.tau},
         {"seed", c.seed},
         {"use_weights", c.use_weights},
         {"loss_denominator", to_string(c.denominator)},
         {"weight_space", to_string(c.weight_space)},
         {"topk_positives", c.topk_positives},
         {"augment", augment_to_json(c.augment)},
         {"encoder", json{{"hidden", c.hidden},
                          {"feature_dim", c.feature_dim},
                          {"projection_dim", c.projection_dim}}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TrainBatch build_batch(const RecordSet& records, const std::vector<SynthImage>& images,
                       const PairTable& pairs, const std::vector<std::size_t>& anchors,
                       const AugmentRanges& ranges, Rng& rng, int threads) {
  if (records.size() != images.size())
    throw std::invalid_argument("records and images must be row-aligned");
  if (pairs.entries.size() != records.size())
    throw std::invalid_argument("pair table does not cover the records");
  const std::size_t n = anchors.size();
  if (n < 2) throw std::invalid_argument("need at least 2 pairs per batch");
  const int size = images.empty() ? 0 : images.front().size;
  const Eigen::Index input_dim = static_cast<Eigen::Index>(size) * size;

  // Source row and view parameters for all 2N slots, sampled serially in
  // slot-pair order so the batch is a pure function of the rng state.
  std::vector<std::size_t> source(2 * n);
  TrainBatch batch;
  batch.params.resize(2 * n);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t a = anchors[b];
    if (a >= records.size()) throw std::invalid_argument("anchor row out of range");
    source[b] = a;
    source[b + n] = pairs.entries[a].row;
    batch.params[b] = sample_augment(rng, ranges);
    batch.params[b + n] = sample_augment(rng, ranges);
  }

  batch.images.resize(static_cast<Eigen::Index>(2 * n), input_dim);
  batch.keypoints.resize(static_cast<Eigen::Index>(2 * n), kFlatDim);
  // Each slot writes only its own rows, so the warp can fan out.
  parallel_chunks(2 * n, 1, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t s = lo; s < hi; ++s) {
      const std::size_t row = source[s];
      const AugmentedSample view =
          apply_augment(images[row], records.records[row].keypoints, batch.params[s]);
      for (Eigen::Index p = 0; p < input_dim; ++p)
        batch.images(static_cast<Eigen::Index>(s), p) = view.image.pixels[p];
      const FlatVector flat = flatten(view.keypoints);
      for (int d = 0; d < kFlatDim; ++d)
        batch.keypoints(static_cast<Eigen::Index>(s), d) = flat[d];
    }
  });
  return batch;
}

PairWeights batch_weights(const TrainBatch& batch, const LossOptions& options) {
  const Eigen::Index rows = batch.keypoints.rows();
  if (!options.use_weights) return unit_weights(static_cast<int>(rows / 2));
  if (options.weight_space == WeightSpace::kRaw) return adaptive_weights(batch.keypoints);
  if (options.pca == nullptr)
    throw std::invalid_argument("weight_space pca requires an embedding model");
  Eigen::MatrixXd projected(rows, options.pca->dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    FlatVector v;
    for (int d = 0; d < kFlatDim; ++d) v[d] = batch.keypoints(i, d);
    projected.row(i) = project(*options.pca, v).transpose();
  }
  return adaptive_weights(projected);
}

LossReport batch_loss(const EncoderModel& model, const TrainBatch& batch,
                      const LossOptions& options, Gradients* grads) {
  const ForwardTape tape = encoder_forward(model, batch.images);
  const Eigen::MatrixXd aligned = inverse_align(tape.output(), batch.params);
  const PairWeights weights = batch_weights(batch, options);
  LossReport report = weighted_ntxent(aligned, weights, options.tau, options.denominator);
  if (grads != nullptr) {
    const Eigen::MatrixXd grad_z = inverse_align_backward(report.grad, batch.params);
    *grads = encoder_backward(model, tape, grad_z);
  }
  return report;
}

LossReport train_step(EncoderModel& model, const TrainBatch& batch,
                      SgdMomentum& optimizer, const LossOptions& options) {
  Gradients grads;
  LossReport report = batch_loss(model, batch, options, &grads);
  optimizer.step(model, grads);
  return report;
}

void save_metrics_log(const std::vector<StepMetrics>& log,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const StepMetrics& m : log) {
    json j{{"step", m.step},
           {"loss", m.loss},
           {"mean_pos_sim", m.mean_pos_sim},
           {"mean_neg_sim", m.mean_neg_sim}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<StepMetrics> load_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<StepMetrics> log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    StepMetrics m;
    m.step = j.at("step").get<int>();
    m.loss = j.at("loss").get<double>();
    m.mean_pos_sim = j.at("mean_pos_sim").get<double>();
    m.mean_neg_sim = j.at("mean_neg_sim").get<double>();
    log.push_back(m);
  }
  return log;
}

double final_margin(const std::vector<StepMetrics>& log, int window) {
  if (log.empty()) throw std::invalid_argument("empty metrics log");
  const std::size_t take = std::min<std::size_t>(log.size(), std::max(window, 1));
  double acc = 0.0;
  for (std::size_t i = log.size() - take; i < log.size(); ++i)
    acc += log[i].mean_pos_sim - log[i].mean_neg_sim;
  return acc / static_cast<double>(take);
}

TrainResult train_loop(const TrainConfig& config, const TrainInputs& inputs,
                       int threads) {
  validate_config(config);
  if (inputs.records == nullptr || inputs.images == nullptr || inputs.pca == nullptr)
    throw std::invalid_argument("training inputs incomplete");
  const RecordSet& records = *inputs.records;
  const std::vector<SynthImage>& images = *inputs.images;
  if (records.size() != images.size())
    throw std::runtime_error("records and images must be row-aligned");
  if (inputs.pairs.entries.size() != records.size())
    throw std::runtime_error("pair table does not cover the records");
  if (records.size() < static_cast<std::size_t>(config.batch_pairs))
    throw std::runtime_error("corpus smaller than one batch");
  if (inputs.pca->dim != config.dim)
    throw std::runtime_error("embedding model width does not match configured dim");

  const int image_size = images.front().size;
  EncoderConfig enc;
  enc.input_dim = image_size * image_size;
  enc.hidden = config.hidden;
  enc.feature_dim = config.feature_dim;
  enc.projection_dim = config.projection_dim;

  TrainResult result;
  result.model = EncoderModel::random(enc, derive_seed(config.seed, 0x0de1));
  SgdMomentum optimizer(config.learning_rate, config.momentum);

  LossOptions options;
  options.use_weights = config.use_weights;
  options.weight_space = config.weight_space;
  options.denominator = config.denominator;
  options.tau = config.tau;
  options.pca = inputs.pca;

  const std::size_t n_rows = records.size();
  const std::size_t n = static_cast<std::size_t>(config.batch_pairs);
  std::vector<std::size_t> perm(n_rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t cursor = n_rows;  // force a shuffle before the first batch
  std::uint64_t epoch = 0;

  result.log.reserve(config.steps);
  for (int step = 0; step < config.steps; ++step) {
    if (cursor + n > n_rows) {
      Rng shuffle_rng(derive_seed(config.seed, 0xe90c, epoch++));
      std::shuffle(perm.begin(), perm.end(), shuffle_rng);
      cursor = 0;
    }
    const std::vector<std::size_t> anchors(perm.begin() + cursor,
                                           perm.begin() + cursor + n);
    cursor += n;

    Rng batch_rng(derive_seed(config.seed, 0xb42c, static_cast<std::uint64_t>(step)));
    const TrainBatch batch = build_batch(records, images, inputs.pairs, anchors,
                                         config.augment, batch_rng, threads);
    const LossReport report = train_step(result.model, batch, optimizer, options);
    result.log.push_back(
        {step, report.loss, report.mean_pos_sim, report.mean_neg_sim});
  }
  return result;
}

TrainResult train_from_files(const TrainConfig& config, int threads) {
  validate_config(config);
  if (config.records.empty() || config.images.empty() || config.pca_model.empty())
    throw std::runtime_error("train config must name records, images, and pca_model");
  if (config.topk_positives == 1 && config.pairs.empty())
    throw std::runtime_error("train config must name a pairs file (or set topk_positives > 1)");

  RecordSet records = parse_records_file(config.records, {.strict = true});
  std::vector<SynthImage> images = load_images(config.images);
  PcaModel pca = load_model(config.pca_model);

  // Row-aligned embeddings give both the pair-file resolver and the ranked
  // re-mining path a home.
  MiningIndex index = build_index(embed_records(records, pca, threads));
  TrainInputs inputs;
  inputs.records = &records;
  inputs.images = &images;
  inputs.pca = &pca;
  if (config.topk_positives > 1) {
    inputs.pairs = mine_rank(index, static_cast<std::size_t>(config.topk_positives), threads);
  } else {
    inputs.pairs = load_pairs_file(config.pairs, index);
  }

  TrainResult result = train_loop(config, inputs, threads);
  if (!config.model_out.empty()) save_encoder(result.model, config.model_out);
  if (!config.log.empty()) save_metrics_log(result.log, config.log);
  return result;
}

}  // namespace simhand
