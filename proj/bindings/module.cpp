#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hdrfield/metrics.hpp"
#include "hdrfield/plotting.hpp"
#include "hdrfield/presets.hpp"
#include "hdrfield/trainer.hpp"

namespace py = pybind11;
using namespace hdrfield;

namespace {

py::array_t<double> image_to_numpy(const Image& img) {
  py::array_t<double> out({img.height, img.width, img.channels});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

Image numpy_to_image(const py::array_t<double, py::array::c_style |
                                                   py::array::forcecast>& arr) {
  if (arr.ndim() != 3) throw std::invalid_argument("expected HxWxC array");
  Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)),
            static_cast<int>(arr.shape(2)));
  std::copy(arr.data(), arr.data() + arr.size(), img.data.begin());
  return img;
}

TrainConfig config_from_kwargs(std::int64_t steps, int batch_rays,
                               int samples_per_ray, double lr,
                               std::uint64_t seed, const std::string& crf,
                               const std::string& enhancer, int hidden_width,
                               int hidden_layers, std::int64_t t_warm,
                               double p_gen, double beta_gen) {
  TrainConfig config;
  config.steps = steps;
  config.batch_rays = batch_rays;
  config.samples_per_ray = samples_per_ray;
  config.lr = lr;
  config.seed = seed;
  config.crf_kind = crf_kind_from_string(crf);
  config.enhancer = enhancer;
  config.field_config.static_hidden_width = hidden_width;
  config.field_config.dynamic_hidden_width = hidden_width;
  config.field_config.static_hidden_layers = hidden_layers;
  config.field_config.dynamic_hidden_layers = hidden_layers;
  config.t_warm_override = t_warm;
  config.weights.p_gen = p_gen;
  config.weights.beta_gen = beta_gen;
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "HDR dynamic radiance field reconstruction core";

  py::class_<CameraModel>(m, "CameraModel")
      .def(py::init<>())
      .def_readwrite("focal", &CameraModel::focal)
      .def_readwrite("width", &CameraModel::width)
      .def_readwrite("height", &CameraModel::height)
      .def_readwrite("principal", &CameraModel::principal)
      .def_readwrite("rotation", &CameraModel::rotation)
      .def_readwrite("translation", &CameraModel::translation)
      .def_static("look_at", &CameraModel::look_at, py::arg("eye"),
                  py::arg("target"), py::arg("up"), py::arg("focal"),
                  py::arg("principal"), py::arg("width"), py::arg("height"))
      .def("center", &CameraModel::center)
      .def("validate", &CameraModel::validate);

  m.def("project", &project, py::arg("camera"), py::arg("point"));
  m.def(
      "generate_ray",
      [](const CameraModel& cam, const Vec2& pixel, double z_near,
         double z_far) {
        const Ray r = generate_ray(cam, pixel, z_near, z_far);
        return py::make_tuple(r.origin, r.direction);
      },
      py::arg("camera"), py::arg("pixel"), py::arg("z_near"), py::arg("z_far"));
  m.def(
      "sample_along_ray",
      [](const Vec3& origin, const Vec3& direction, double z_near,
         double z_far, int count, bool stratified, std::uint64_t seed) {
        Ray ray{origin, direction, z_near, z_far};
        const auto samples = sample_along_ray(ray, count, stratified, seed);
        Eigen::VectorXd z(count);
        Eigen::MatrixXd x(count, 3);
        for (int k = 0; k < count; ++k) {
          z(k) = samples[k].first;
          x.row(k) = samples[k].second;
        }
        return py::make_tuple(z, x);
      },
      py::arg("origin"), py::arg("direction"), py::arg("z_near"),
      py::arg("z_far"), py::arg("count"), py::arg("stratified") = false,
      py::arg("seed") = 0);

  m.def(
      "encode",
      [](const Eigen::VectorXd& v, int freqs, bool identity) {
        return encode(v, freqs, identity);
      },
      py::arg("value"), py::arg("num_frequencies"),
      py::arg("include_identity") = true);

  m.def(
      "mulaw",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> arr,
         double mu) {
        py::array_t<double> out(std::vector<py::ssize_t>(
            arr.shape(), arr.shape() + arr.ndim()));
        const double* src = arr.data();
        double* dst = out.mutable_data();
        for (py::ssize_t i = 0; i < arr.size(); ++i) dst[i] = mulaw(src[i], mu);
        return out;
      },
      py::arg("radiance"), py::arg("mu") = 500.0);

  py::class_<CrfParams>(m, "CrfParams")
      .def_static("piecewise_identity", &CrfParams::piecewise_identity)
      .def_static("piecewise_gamma", &CrfParams::piecewise_gamma)
      .def_static("fixed", &CrfParams::fixed)
      .def_static("none", &CrfParams::none)
      .def_readwrite("leak_alpha", &CrfParams::leak_alpha)
      .def("control_points",
           [](const CrfParams& crf) { return crf_control_points(crf); })
      .def("smoothness_loss",
           [](const CrfParams& crf) { return crf_smoothness_loss(crf); });
  m.def("apply_crf", &apply_crf, py::arg("crf"), py::arg("channel"),
        py::arg("x"), py::arg("training") = true);
  m.def("crf_recovery_error", &crf_recovery_error, py::arg("crf"),
        py::arg("gt_gamma"));

  m.def(
      "composite",
      [](const Eigen::VectorXd& sigma, const Eigen::VectorXd& z, double z_far,
         const Eigen::MatrixXd& values_rows) {
        // values come in as K x 3 rows per sample.
        const CompositeResult r = composite(
            sigma.array(), z.array(), z_far, values_rows.transpose());
        return py::make_tuple(Vec3(r.color),
                              Eigen::VectorXd(r.weights.weight.matrix()),
                              r.weights.t_background);
      },
      py::arg("densities"), py::arg("z"), py::arg("z_far"), py::arg("values"));

  m.def("psnr",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
           py::array_t<double, py::array::c_style | py::array::forcecast> b) {
          return psnr(numpy_to_image(a), numpy_to_image(b));
        });
  m.def("ssim",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
           py::array_t<double, py::array::c_style | py::array::forcecast> b) {
          return ssim(numpy_to_image(a), numpy_to_image(b));
        });

  m.def("preset_scene_json",
        [](const std::string& name) { return scene_to_json(preset_scene(name)); });

  m.def(
      "generate_dataset",
      [](const std::string& scene_json, int stride, int offset) {
        const SceneSpec spec = scene_from_json(scene_json);
        const DatasetBundle bundle = generate_dataset(spec, stride, offset);
        py::dict out;
        py::list ldr, hdr, depth, mask, times, tags;
        for (std::size_t f = 0; f < bundle.frames.size(); ++f) {
          ldr.append(image_to_numpy(bundle.ldr[f]));
          hdr.append(image_to_numpy(bundle.hdr[f]));
          depth.append(image_to_numpy(bundle.depth[f]));
          mask.append(image_to_numpy(bundle.dynamic_mask[f]));
          times.append(bundle.frames[f].time);
          tags.append(to_string(bundle.frames[f].exposure_tag));
        }
        out["ldr"] = ldr;
        out["hdr"] = hdr;
        out["depth"] = depth;
        out["dynamic_mask"] = mask;
        out["time"] = times;
        out["exposure_tag"] = tags;
        return out;
      },
      py::arg("scene_json"), py::arg("stride") = 1, py::arg("offset") = 0);

  m.def(
      "train",
      [](const std::string& scene_json, const std::string& out_dir,
         std::int64_t steps, int batch_rays, int samples_per_ray, double lr,
         std::uint64_t seed, const std::string& crf,
         const std::string& enhancer, int hidden_width, int hidden_layers,
         std::int64_t t_warm, double p_gen, double beta_gen) {
        const SceneSpec spec = scene_from_json(scene_json);
        const DatasetBundle bundle = generate_dataset(spec);
        const TrainConfig config = config_from_kwargs(
            steps, batch_rays, samples_per_ray, lr, seed, crf, enhancer,
            hidden_width, hidden_layers, t_warm, p_gen, beta_gen);
        const Checkpoint ckpt = run(config, bundle, out_dir);
        py::dict out;
        out["step"] = ckpt.step;
        out["checkpoint"] = out_dir + "/checkpoint_final.bin";
        out["crf_rmse_vs_gt"] = crf_recovery_error(ckpt.crf, spec.crf_gamma);
        return out;
      },
      py::arg("scene_json"), py::arg("out_dir"), py::arg("steps") = 500,
      py::arg("batch_rays") = 64, py::arg("samples_per_ray") = 16,
      py::arg("lr") = 5e-3, py::arg("seed") = 1,
      py::arg("crf") = "piecewise", py::arg("enhancer") = "",
      py::arg("hidden_width") = 32, py::arg("hidden_layers") = 3,
      py::arg("t_warm") = -1, py::arg("p_gen") = 0.1,
      py::arg("beta_gen") = 0.05);

  m.def(
      "render",
      [](const std::string& checkpoint_path, const std::string& scene_json,
         double time, const std::string& mode, const std::string& tag,
         int samples, const Vec3& camera_offset) {
        const SceneSpec spec = scene_from_json(scene_json);
        const DatasetBundle bundle = generate_dataset(spec);
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        RenderRequest req;
        req.camera = spec.camera_at_time(time, camera_offset);
        req.time = time;
        req.mode = render_mode_from_string(mode);
        req.ldr_tag = exposure_tag_from_string(tag);
        req.samples_per_ray = samples;
        return image_to_numpy(render_output(ckpt, bundle, req));
      },
      py::arg("checkpoint"), py::arg("scene_json"), py::arg("time"),
      py::arg("mode") = "hdr", py::arg("tag") = "mid", py::arg("samples") = 32,
      py::arg("camera_offset") = Vec3(Vec3::Zero()));

  m.def(
      "oracle_render",
      [](const std::string& scene_json, int frame) {
        const SceneSpec spec = scene_from_json(scene_json);
        const OracleRender r = oracle_render(spec, frame);
        return py::make_tuple(image_to_numpy(r.hdr), image_to_numpy(r.depth),
                              image_to_numpy(r.dynamic_mask));
      },
      py::arg("scene_json"), py::arg("frame"));
}
