#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "simhand/embed.hpp"
#include "simhand/ingest.hpp"
#include "simhand/loss.hpp"
#include "simhand/metrics.hpp"
#include "simhand/mine.hpp"
#include "simhand/synth.hpp"

namespace py = pybind11;
using namespace simhand;

namespace {

std::array<Keypoint, kNumKeypoints> keypoints_from_array(
    const py::array_t<double>& arr) {
  if (arr.ndim() != 2 || arr.shape(0) != kNumKeypoints || arr.shape(1) != 2)
    throw std::invalid_argument("keypoints must be a (21, 2) array");
  std::array<Keypoint, kNumKeypoints> kps;
  auto a = arr.unchecked<2>();
  for (int k = 0; k < kNumKeypoints; ++k) kps[k] = {a(k, 0), a(k, 1)};
  return kps;
}

EmbeddingStore store_from_arrays(const py::array_t<float>& vectors,
                                 const std::vector<std::string>& video_ids,
                                 const std::vector<std::int64_t>& frame_ids) {
  if (vectors.ndim() != 2) throw std::invalid_argument("vectors must be 2-D");
  const std::size_t n = static_cast<std::size_t>(vectors.shape(0));
  if (video_ids.size() != n || frame_ids.size() != n)
    throw std::invalid_argument("metadata length must match row count");
  EmbeddingStore store;
  store.dim = static_cast<int>(vectors.shape(1));
  store.data.resize(n * static_cast<std::size_t>(store.dim));
  auto v = vectors.unchecked<2>();
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < store.dim; ++d)
      store.data[i * static_cast<std::size_t>(store.dim) + d] =
          v(static_cast<py::ssize_t>(i), d);
    store.meta.push_back({video_ids[i], frame_ids[i]});
  }
  return store;
}

PoseSet pose_set_from_array(const py::array_t<double>& poses) {
  if (poses.ndim() != 3 || poses.shape(1) != kNumKeypoints || poses.shape(2) != 3)
    throw std::invalid_argument("poses must be a (count, 21, 3) array");
  PoseSet set;
  auto p = poses.unchecked<3>();
  for (py::ssize_t i = 0; i < poses.shape(0); ++i) {
    Pose3 pose;
    for (int k = 0; k < kNumKeypoints; ++k)
      pose[k] = {p(i, k, 0), p(i, k, 1), p(i, k, 2)};
    set.poses.push_back(pose);
    set.video_ids.push_back("v");
    set.frame_ids.push_back(i);
  }
  return set;
}

}  // namespace

PYBIND11_MODULE(_simhand, m) {
  m.doc() = "Cross-video hand-pair mining and weighted contrastive training";

  m.def(
      "generate_corpus",
      [](int videos, int frames, double coherence, int image_size, std::uint64_t seed) {
        CorpusConfig cfg;
        cfg.n_videos = videos;
        cfg.frames_per_video = frames;
        cfg.coherence = coherence;
        cfg.image_size = image_size;
        cfg.seed = seed;
        const SynthCorpus corpus = generate_corpus(cfg);
        const std::size_t n = corpus.records.size();
        py::array_t<double> keypoints({n, static_cast<std::size_t>(kNumKeypoints),
                                       static_cast<std::size_t>(2)});
        py::array_t<float> images({n, static_cast<std::size_t>(image_size),
                                   static_cast<std::size_t>(image_size)});
        std::vector<std::string> video_ids(n);
        std::vector<std::int64_t> frame_ids(n);
        auto kp = keypoints.mutable_unchecked<3>();
        auto im = images.mutable_unchecked<3>();
        for (std::size_t i = 0; i < n; ++i) {
          const KeypointRecord& rec = corpus.records.records[i];
          for (int k = 0; k < kNumKeypoints; ++k) {
            kp(static_cast<py::ssize_t>(i), k, 0) = rec.keypoints[k].x;
            kp(static_cast<py::ssize_t>(i), k, 1) = rec.keypoints[k].y;
          }
          for (int r = 0; r < image_size; ++r)
            for (int c = 0; c < image_size; ++c)
              im(static_cast<py::ssize_t>(i), r, c) = corpus.images[i].at(r, c);
          video_ids[i] = rec.video_id;
          frame_ids[i] = rec.frame_id;
        }
        return py::make_tuple(keypoints, images, video_ids, frame_ids);
      },
      py::arg("videos") = 8, py::arg("frames") = 30, py::arg("coherence") = 0.8,
      py::arg("image_size") = 32, py::arg("seed") = 1,
      "Synthesize a corpus; returns (keypoints, images, video_ids, frame_ids)");

  m.def(
      "mirror_keypoints",
      [](const py::array_t<double>& keypoints) {
        const auto kps = keypoints_from_array(keypoints);
        py::array_t<double> out({static_cast<std::size_t>(kNumKeypoints),
                                 static_cast<std::size_t>(2)});
        auto o = out.mutable_unchecked<2>();
        for (int k = 0; k < kNumKeypoints; ++k) {
          o(k, 0) = 1.0 - kps[k].x;
          o(k, 1) = kps[k].y;
        }
        return out;
      },
      py::arg("keypoints"), "Horizontal mirror x -> 1 - x of a (21, 2) array");

  py::class_<PcaModel>(m, "PcaModel")
      .def_readonly("dim", &PcaModel::dim)
      .def_readonly("centered", &PcaModel::centered)
      .def_readonly("mean", &PcaModel::mean)
      .def_readonly("projection", &PcaModel::projection)
      .def_readonly("explained_variance", &PcaModel::explained_variance)
      .def(
          "project",
          [](const PcaModel& model, const Eigen::VectorXd& v) {
            if (v.size() != kFlatDim)
              throw std::invalid_argument("expected a 42-vector");
            FlatVector fv = v;
            return project(model, fv);
          },
          py::arg("vector"));

  m.def(
      "fit_pca",
      [](const Eigen::MatrixXd& vectors, int dim, bool center) {
        PcaFitOptions options;
        options.center = center;
        return fit_pca(vectors, dim, options);
      },
      py::arg("vectors"), py::arg("dim") = 14, py::arg("center") = true,
      "Fit the pose embedding model on (n, 42) rows");

  m.def(
      "mine_positives",
      [](const py::array_t<float>& vectors, const std::vector<std::string>& video_ids,
         const std::vector<std::int64_t>& frame_ids) {
        const MiningIndex index =
            build_index(store_from_arrays(vectors, video_ids, frame_ids));
        const PairTable table = mine_all(index);
        std::vector<std::size_t> rows(table.entries.size());
        std::vector<double> distances(table.entries.size());
        for (std::size_t i = 0; i < table.entries.size(); ++i) {
          rows[i] = table.entries[i].row;
          distances[i] = table.entries[i].distance;
        }
        return py::make_tuple(rows, distances);
      },
      py::arg("vectors"), py::arg("video_ids"), py::arg("frame_ids"),
      "Exact cross-video nearest neighbor per row; returns (rows, distances)");

  m.def(
      "topk",
      [](const py::array_t<float>& vectors, const std::vector<std::string>& video_ids,
         const std::vector<std::int64_t>& frame_ids, std::size_t query, std::size_t k) {
        const MiningIndex index =
            build_index(store_from_arrays(vectors, video_ids, frame_ids));
        const TopkResult result = topk(index, query, k);
        std::vector<std::size_t> rows(result.entries.size());
        std::vector<double> distances(result.entries.size());
        for (std::size_t i = 0; i < result.entries.size(); ++i) {
          rows[i] = result.entries[i].row;
          distances[i] = result.entries[i].distance;
        }
        return py::make_tuple(rows, distances);
      },
      py::arg("vectors"), py::arg("video_ids"), py::arg("frame_ids"), py::arg("query"),
      py::arg("k"), "k nearest cross-video rows for one query");

  m.def(
      "adaptive_weights",
      [](const Eigen::MatrixXd& embeddings) {
        const PairWeights w = adaptive_weights(embeddings);
        return py::make_tuple(w.positive, w.negative);
      },
      py::arg("embeddings"),
      "Distance-adaptive pair weights for a 2N-row batch; returns (w_pos, w_neg)");

  m.def(
      "weighted_ntxent",
      [](const Eigen::MatrixXd& z, const Eigen::VectorXd& w_pos,
         const Eigen::MatrixXd& w_neg, double tau, const std::string& denominator) {
        PairWeights w;
        w.positive = w_pos;
        w.negative = w_neg;
        const DenominatorMode mode =
            denominator == "literal" ? DenominatorMode::kLiteral : DenominatorMode::kSimclr;
        const LossReport report = weighted_ntxent(z, w, tau, mode);
        return py::make_tuple(report.loss, report.per_anchor, report.grad,
                              report.mean_pos_sim, report.mean_neg_sim);
      },
      py::arg("z"), py::arg("w_pos"), py::arg("w_neg"), py::arg("tau") = 0.5,
      py::arg("denominator") = "simclr",
      "Weighted contrastive loss; returns (loss, per_anchor, grad, pos_sim, neg_sim)");

  m.def(
      "mpjpe",
      [](const py::array_t<double>& pred, const py::array_t<double>& gt) {
        return mpjpe(pose_set_from_array(pred), pose_set_from_array(gt));
      },
      py::arg("pred"), py::arg("gt"),
      "Mean per-joint position error (mm) over (count, 21, 3) arrays");

  m.def(
      "pck_auc",
      [](const py::array_t<double>& pred, const py::array_t<double>& gt, double lo,
         double hi, int steps) {
        PckAucOptions options;
        options.threshold_min_mm = lo;
        options.threshold_max_mm = hi;
        options.steps = steps;
        return pck_auc(pose_set_from_array(pred), pose_set_from_array(gt), options);
      },
      py::arg("pred"), py::arg("gt"), py::arg("lo") = 20.0, py::arg("hi") = 50.0,
      py::arg("steps") = 31, "Normalized area under the PCK curve");
}
