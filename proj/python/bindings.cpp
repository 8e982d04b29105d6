// Python bindings: corpus generation, the UV normalization chain, ranking,
// RRF, metrics, protocol evaluation, embedding files and the benchmark.

#include "agvp/pipeline.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace agvp;
using nn::Mat;

namespace {

// UV textures cross the boundary as (rows*cols) x 3 matrices, masks as rows x cols.
na::UvTexture to_texture(const Mat& m, int rows, int cols) {
  if (m.cols() != 3 || m.rows() != static_cast<Eigen::Index>(rows) * cols)
    throw ShapeError("texture must be (rows*cols) x 3");
  std::vector<double> v(m.data(), m.data() + m.size());
  return na::UvTexture(rows, cols, std::move(v));
}

na::UvMask to_mask(const Mat& m) {
  std::vector<double> v(m.data(), m.data() + m.size());
  return na::UvMask(static_cast<int>(m.rows()), static_cast<int>(m.cols()), std::move(v));
}

Mat from_texture(const na::UvTexture& t) {
  return Eigen::Map<const Mat>(t.values().data(), static_cast<Eigen::Index>(t.texels()), 3);
}

Mat from_mask(const na::UvMask& m) { return Eigen::Map<const Mat>(m.values().data(), m.rows(), m.cols()); }

fusion::RankedList to_list(const std::string& query, const std::vector<std::string>& ids) {
  fusion::RankedList l{query, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) l.entries.push_back({ids[i], -double(i)});
  return l;
}

std::vector<std::pair<std::string, double>> from_list(const fusion::RankedList& l) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : l.entries) out.emplace_back(e.gallery_id, e.score);
  return out;
}

eval::EmbeddingTable table(std::vector<std::string> ids, Mat rows) {
  eval::EmbeddingTable t{std::move(ids), std::move(rows)};
  t.validate();
  return t;
}

eval::ProtocolSpec protocol(const std::string& direction, std::optional<int> altitude, bool distractors) {
  return {eval::direction_from_string(direction), altitude, distractors, eval::ClothingMode::All};
}

}  // namespace

PYBIND11_MODULE(_agvp, m) {
  m.doc() = "Aerial-ground video person re-identification toolkit";

  py::register_exception<Error>(m, "AgvpError", PyExc_RuntimeError);
  // Registered later, so consulted first; anything else falls through to AgvpError.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const ShapeError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    }
  });

  // ---- corpus ----
  m.def("default_gen_config", [] { return datagen::gen_config_to_json(pipeline::default_run_config().gen); },
        "Benchmark corpus configuration as a JSON string.");
  m.def(
      "generate_corpus",
      [](const std::string& config_json, const fs::path& out) {
        const auto manifest = datagen::generate_corpus(datagen::gen_config_from_json(config_json), out);
        return manifest.tracklets.size();
      },
      py::arg("config_json"), py::arg("out_dir"), "Writes a synthetic corpus; returns the tracklet count.");
  m.def(
      "load_manifest",
      [](const fs::path& path) {
        std::vector<py::dict> out;
        for (const auto& t : datagen::load_manifest(path).tracklets) {
          py::dict d;
          d["tracklet_id"] = t.tracklet_id.str();
          d["person_id"] = t.person_id.str();
          d["camera_id"] = t.camera_id.str();
          d["platform"] = std::string(to_string(t.platform));
          d["altitude"] = meters(t.altitude);
          d["session"] = t.session.str();
          d["clothing_id"] = t.clothing_id.str();
          d["frames"] = t.frames;
          out.push_back(std::move(d));
        }
        return out;
      },
      py::arg("path"));

  // ---- UV chain ----
  m.def(
      "normalize_uv",
      [](const Mat& tex, const Mat& mask) {
        const auto r = na::normalize_uv(to_texture(tex, int(mask.rows()), int(mask.cols())), to_mask(mask));
        return from_texture(r.texture);
      },
      py::arg("texture"), py::arg("mask"));
  m.def(
      "histogram_match",
      [](const Mat& tex, const Mat& mask, const Mat& ref, const Mat& ref_mask) {
        const auto r = na::histogram_match(to_texture(tex, int(mask.rows()), int(mask.cols())), to_mask(mask),
                                           to_texture(ref, int(ref_mask.rows()), int(ref_mask.cols())),
                                           to_mask(ref_mask));
        return from_texture(r.texture);
      },
      py::arg("texture"), py::arg("mask"), py::arg("reference"), py::arg("reference_mask"));
  m.def(
      "gamma_correct",
      [](const Mat& tex, double g) {
        return from_texture(na::gamma_correct(to_texture(tex, int(tex.rows()), 1), g));
      },
      py::arg("texture"), py::arg("gamma"));
  m.def(
      "normalize_and_aggregate",
      [](const std::vector<Mat>& textures, const std::vector<Mat>& masks, bool gamma) {
        if (textures.size() != masks.size()) throw ShapeError("texture and mask counts differ");
        std::vector<na::UvTexture> t;
        std::vector<na::UvMask> v;
        for (std::size_t i = 0; i < textures.size(); ++i) {
          v.push_back(to_mask(masks[i]));
          t.push_back(to_texture(textures[i], v.back().rows(), v.back().cols()));
        }
        na::ChainOptions opt;
        opt.gamma = gamma;
        const auto r = na::normalize_and_aggregate(t, v, opt);
        return py::make_tuple(from_texture(r.aggregated.texture), from_mask(r.aggregated.valid));
      },
      py::arg("textures"), py::arg("masks"), py::arg("gamma") = true,
      "Per-frame normalize, histogram match and gamma, then visibility-weighted blending. "
      "Returns (texture, valid).");

  // ---- ranking, fusion, metrics ----
  m.def("distances", [](const Mat& q, const Mat& g) { return eval::distances(q, g); }, py::arg("queries"),
        py::arg("gallery"), "Cosine distances, queries x gallery.");
  m.def(
      "rank",
      [](const Mat& dist, const std::vector<std::string>& qids, const std::vector<std::string>& gids) {
        std::vector<std::vector<std::pair<std::string, double>>> out;
        for (const auto& l : eval::rank(dist, qids, gids)) out.push_back(from_list(l));
        return out;
      },
      py::arg("distances"), py::arg("query_ids"), py::arg("gallery_ids"));
  m.def(
      "rrf",
      [](const std::vector<std::vector<std::string>>& orders) {
        std::vector<fusion::RankedList> lists;
        for (const auto& o : orders) lists.push_back(to_list("q", o));
        return from_list(fusion::rrf(lists));
      },
      py::arg("orders"), "Reciprocal rank fusion (k = 60) of best-first id orders for one query.");
  m.def(
      "cmc",
      [](const std::vector<std::vector<bool>>& rel, int k) { return eval::cmc(rel, k); }, py::arg("relevance"),
      py::arg("k"));
  m.def(
      "mean_ap", [](const std::vector<std::vector<bool>>& rel) { return eval::map_metric(rel); },
      py::arg("relevance"));

  // ---- protocol evaluation and files ----
  m.def(
      "evaluate",
      [](const fs::path& manifest, const std::vector<std::string>& ids, const Mat& rows, const std::string& direction,
         std::optional<int> altitude, bool distractors) {
        const auto tracklets = datagen::load_manifest(manifest).tracklets;
        const auto report =
            eval::evaluate(protocol(direction, altitude, distractors), tracklets, table(ids, rows));
        return eval::report_to_json(report).dump();
      },
      py::arg("manifest"), py::arg("ids"), py::arg("embeddings"), py::arg("direction") = "a2g",
      py::arg("altitude") = py::none(), py::arg("distractors") = true, "Metrics report as a JSON string.");
  m.def(
      "write_embeddings",
      [](const fs::path& path, const std::vector<std::string>& ids, const Mat& rows) {
        eval::write_embeddings(path, table(ids, rows));
      },
      py::arg("path"), py::arg("ids"), py::arg("embeddings"));
  m.def(
      "read_embeddings",
      [](const fs::path& path) {
        auto t = eval::read_embeddings(path);
        return py::make_tuple(t.ids, t.rows);
      },
      py::arg("path"));

  // ---- benchmark ----
  m.def("default_run_config", [] { return pipeline::run_config_to_json(pipeline::default_run_config()).dump(); });
  m.def(
      "run_benchmark",
      [](const std::string& config_json, const fs::path& out) {
        const auto rc = pipeline::run_config_from_json(nlohmann::json::parse(config_json));
        pipeline::BenchmarkResult res;
        {
          py::gil_scoped_release release;
          res = pipeline::run_benchmark(rc, out);
        }
        return eval::ablation_to_json(res.ablation).dump();
      },
      py::arg("config_json"), py::arg("out_dir"), "Full synthetic run; returns the ablation table as JSON.");
}
