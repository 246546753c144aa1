#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chrono/dataset.hpp"
#include "chrono/losses.hpp"
#include "chrono/nets.hpp"
#include "chrono/run_config.hpp"
#include "chrono/synthesis.hpp"
#include "chrono/trainer.hpp"
#include "chrono/upsampler.hpp"

namespace py = pybind11;
using namespace chrono;

namespace {

// Images cross the boundary as float32 HWC arrays in [-1, 1].
ImageGrid grid_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) {
    throw py::value_error("expected an image array of shape [h, w, 3]");
  }
  const int h = static_cast<int>(arr.shape(0));
  const int w = static_cast<int>(arr.shape(1));
  ImageGrid img(h, w, 3);
  auto view = arr.unchecked<3>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = view(y, x, c);
    }
  }
  return img;
}

py::array_t<float> array_from_grid(const ImageGrid& img) {
  py::array_t<float> arr({img.height, img.width, img.channels});
  auto view = arr.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) view(y, x, c) = img.at(c, y, x);
    }
  }
  return arr;
}

nlohmann::json json_from_py(const py::object& obj) {
  auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object py_from_json(const nlohmann::json& j) {
  auto loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

UpsampleConfig upsample_config(double beta, double eps_w, double eps_ridge,
                               const std::string& solver, double cg_tol, int cg_max_iters) {
  UpsampleConfig cfg;
  cfg.beta = beta;
  cfg.eps_w = eps_w;
  cfg.eps_ridge = eps_ridge;
  if (solver == "dense") {
    cfg.solver = UpsampleConfig::Solver::Dense;
  } else if (solver != "cg") {
    throw py::value_error("solver must be 'cg' or 'dense'");
  }
  cfg.cg_tol = cg_tol;
  cfg.cg_max_iters = cg_max_iters;
  return cfg;
}

py::dict report_to_dict(const losses::LossReport& report) {
  py::dict out;
  out["name"] = report.name;
  out["value"] = report.value;
  py::dict terms;
  for (const auto& [k, v] : report.term_breakdown) terms[py::str(k)] = v;
  out["term_breakdown"] = terms;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Time-lapse synthesis toolkit: conditional GAN training, inference and guided "
            "color upsampling.";

  py::register_exception<Error>(m, "ChronoError");

  // -- dataset ----------------------------------------------------------------
  m.def("normalize_timestamp",
        [](const std::string& wall_clock, int utc_offset_minutes) {
          return normalize_timestamp(wall_clock, utc_offset_minutes).value;
        },
        py::arg("wall_clock_utc"), py::arg("utc_offset_minutes") = 0,
        "Local time-of-day fraction in [0,1) from an ISO-8601 UTC timestamp.");

  m.def("generate_synthetic_corpus",
        [](const std::string& out_dir, int sequences, int frames, int size, uint64_t seed,
           const std::string& domain, double amplitude_lo, double amplitude_hi, double phase_lo,
           double phase_hi) {
          SyntheticConfig cfg;
          cfg.num_sequences = sequences;
          cfg.frames_per_seq = frames;
          cfg.size = size;
          cfg.domain = domain == "unlabeled" ? DomainTag::Unlabeled : DomainTag::Labeled;
          cfg.amplitude_lo = amplitude_lo;
          cfg.amplitude_hi = amplitude_hi;
          cfg.phase_lo = phase_lo;
          cfg.phase_hi = phase_hi;
          Rng rng(seed);
          auto index = generate_synthetic_corpus(out_dir, cfg, rng);
          py::dict out;
          out["sequences"] = index.stats.num_sequences;
          out["frames"] = index.stats.num_frames;
          out["manifest"] = out_dir + "/manifest.json";
          return out;
        },
        py::arg("out_dir"), py::arg("sequences") = 8, py::arg("frames") = 24,
        py::arg("size") = 32, py::arg("seed") = 7, py::arg("domain") = "labeled",
        py::arg("amplitude_lo") = 0.15, py::arg("amplitude_hi") = 0.35,
        py::arg("phase_lo") = 0.22, py::arg("phase_hi") = 0.28);

  m.def("load_manifest_stats",
        [](const std::string& path, const std::string& domain, bool validate_images) {
          auto index = load_manifest(
              path, domain == "unlabeled" ? DomainTag::Unlabeled : DomainTag::Labeled,
              validate_images);
          py::dict out;
          out["sequences"] = index.stats.num_sequences;
          out["frames"] = index.stats.num_frames;
          out["dropped_frames"] = index.stats.dropped_frames;
          out["dropped_sequences"] = index.stats.dropped_sequences;
          return out;
        },
        py::arg("path"), py::arg("domain") = "labeled", py::arg("validate_images") = true);

  // -- nets -------------------------------------------------------------------
  m.def("encode_time",
        [](double t, const std::string& mode) {
          auto enc = nets::encode_time(TimeOfDay::wrapped(t),
                                       mode == "raw" ? nets::TimeEncodingMode::Raw
                                                     : nets::TimeEncodingMode::Cyclic);
          return enc;
        },
        py::arg("t"), py::arg("mode") = "cyclic");

  // -- losses -----------------------------------------------------------------
  m.def("adv_real_term", &losses::adv_real_term, py::arg("scores"));
  m.def("adv_fake_term", &losses::adv_fake_term, py::arg("scores"),
        py::arg("literal_form") = false);
  m.def("loss_uncond",
        [](const std::vector<double>& real, const std::vector<double>& fake,
           const std::string& domain, bool literal) {
          return report_to_dict(losses::loss_uncond(domain == "unlabeled"
                                                        ? losses::DatasetDomain::Unlabeled
                                                        : losses::DatasetDomain::Labeled,
                                                    real, fake, literal));
        },
        py::arg("real_scores"), py::arg("fake_scores"), py::arg("domain") = "labeled",
        py::arg("literal_form") = false);
  m.def("loss_cond",
        [](double real, double negative, double fake, bool literal) {
          return report_to_dict(losses::loss_cond(real, negative, fake, literal));
        },
        py::arg("real_set_score"), py::arg("negative_set_score"), py::arg("fake_set_score"),
        py::arg("literal_form") = false);
  m.def("loss_rec",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
          return losses::loss_rec(grid_from_array(a), grid_from_array(b));
        },
        py::arg("translated"), py::arg("original"));

  // -- upsampler ----------------------------------------------------------------
  m.def("neighbor_weight",
        [](const std::array<double, 3>& a, const std::array<double, 3>& b, double eps_w) {
          return neighbor_weight(a, b, eps_w);
        },
        py::arg("color_p"), py::arg("color_q"), py::arg("eps_w") = 0.01);

  m.def("solve_transform",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input_low,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& output_low,
           double beta, double eps_w, double eps_ridge, const std::string& solver, double cg_tol,
           int cg_max_iters) {
          auto cfg = upsample_config(beta, eps_w, eps_ridge, solver, cg_tol, cg_max_iters);
          auto field = solve_transform(grid_from_array(input_low), grid_from_array(output_low), cfg);
          py::array_t<double> scale({field.height, field.width, field.channels});
          py::array_t<double> offset({field.height, field.width, field.channels});
          auto sv = scale.mutable_unchecked<3>();
          auto ov = offset.mutable_unchecked<3>();
          for (int y = 0; y < field.height; ++y) {
            for (int x = 0; x < field.width; ++x) {
              for (int c = 0; c < field.channels; ++c) {
                sv(y, x, c) = field.scale[field.plane_index(c, y, x)];
                ov(y, x, c) = field.offset[field.plane_index(c, y, x)];
              }
            }
          }
          return py::make_tuple(scale, offset);
        },
        py::arg("input_low"), py::arg("output_low"), py::arg("beta") = 1.0,
        py::arg("eps_w") = 0.01, py::arg("eps_ridge") = 1e-4, py::arg("solver") = "cg",
        py::arg("cg_tol") = 1e-6, py::arg("cg_max_iters") = 2000);

  m.def("guided_upsample",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input_full,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& output_low,
           double beta, double eps_w, double eps_ridge, const std::string& solver, double cg_tol,
           int cg_max_iters) {
          auto cfg = upsample_config(beta, eps_w, eps_ridge, solver, cg_tol, cg_max_iters);
          return array_from_grid(
              guided_upsample(grid_from_array(input_full), grid_from_array(output_low), cfg));
        },
        py::arg("input_full"), py::arg("output_low"), py::arg("beta") = 1.0,
        py::arg("eps_w") = 0.01, py::arg("eps_ridge") = 1e-4, py::arg("solver") = "cg",
        py::arg("cg_tol") = 1e-6, py::arg("cg_max_iters") = 2000);

  // -- training / inference ------------------------------------------------------
  m.def("train",
        [](const py::dict& config, const std::string& labeled_manifest,
           const std::string& unlabeled_manifest, const std::string& out_dir, bool resume) {
          auto cfg = trainer::TrainConfig::from_json(json_from_py(config));
          auto labeled = load_manifest(labeled_manifest, DomainTag::Labeled);
          std::optional<DatasetIndex> unlabeled;
          if (!unlabeled_manifest.empty()) {
            unlabeled = load_manifest(unlabeled_manifest, DomainTag::Unlabeled);
          }
          auto result =
              trainer::train(cfg, labeled, unlabeled ? &*unlabeled : nullptr, out_dir, resume);
          return result.checkpoint_path;
        },
        py::arg("config"), py::arg("labeled_manifest"), py::arg("unlabeled_manifest") = "",
        py::arg("out_dir") = "runs/default", py::arg("resume") = false);

  m.def("inspect_checkpoint",
        [](const std::string& path) { return py_from_json(trainer::inspect_checkpoint(path)); },
        py::arg("path"));

  m.def("synthesize",
        [](const std::string& image, const std::string& checkpoint, const std::string& out_dir,
           int frames, double t_start, double t_end, const std::vector<double>& timestamps,
           uint64_t seed, bool upsample, double beta, bool force, bool contact_sheet) {
          synthesis::SynthesisRequest req;
          req.image_path = image;
          req.checkpoint_path = checkpoint;
          req.frame_count = frames;
          req.t_start = t_start;
          req.t_end = t_end;
          req.timestamps = timestamps;
          req.latent_seed = seed;
          req.upsample = upsample;
          req.upsample_config.beta = beta;
          auto seq = synthesis::synthesize(req);
          return synthesis::write_sequence(seq, out_dir, force, contact_sheet);
        },
        py::arg("image"), py::arg("checkpoint"), py::arg("out_dir"), py::arg("frames") = 24,
        py::arg("t_start") = 0.0, py::arg("t_end") = 1.0,
        py::arg("timestamps") = std::vector<double>{}, py::arg("seed") = 0,
        py::arg("upsample") = true, py::arg("beta") = 1.0, py::arg("force") = false,
        py::arg("contact_sheet") = false);

  m.def("make_schedule", &synthesis::make_schedule, py::arg("t_start"), py::arg("t_end"),
        py::arg("count"));

  m.attr("__version__") = "0.1.0";
}
