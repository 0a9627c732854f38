#include "hdrfield/synth_scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

namespace hdrfield {

namespace {

using nlohmann::json;

constexpr double kTraceMin = 1e-9;

// Closest positive intersection with a sphere; returns false on miss.
bool intersect_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center,
                      double radius, double* t_out) {
  const Vec3 oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= kTraceMin) t = -b + sq;
  if (t <= kTraceMin) return false;
  *t_out = t;
  return true;
}

bool intersect_plane(const Vec3& origin, const Vec3& dir, const PlanePrim& p,
                     double* t_out) {
  const double denom = dir(p.axis);
  if (std::abs(denom) < 1e-12) return false;
  const double t = (p.offset - origin(p.axis)) / denom;
  if (t <= kTraceMin) return false;
  if (p.half_extent.has_value()) {
    const int a0 = (p.axis + 1) % 3;
    const int a1 = (p.axis + 2) % 3;
    const Vec3 hit = origin + t * dir;
    if (std::abs(hit(a0) - p.extent_center(0)) > p.half_extent->x() ||
        std::abs(hit(a1) - p.extent_center(1)) > p.half_extent->y()) {
      return false;
    }
  }
  *t_out = t;
  return true;
}

json vec_to_json(const Vec3& v) { return json::array({v(0), v(1), v(2)}); }
json vec2_to_json(const Vec2& v) { return json::array({v(0), v(1)}); }
Vec3 vec_from_json(const json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }
Vec2 vec2_from_json(const json& j) { return Vec2(j.at(0), j.at(1)); }

}  // namespace

double ExposureSchedule::scale(ExposureTag tag) const {
  switch (tag) {
    case ExposureTag::kLow: return scale_low;
    case ExposureTag::kMid: return scale_mid;
    case ExposureTag::kHigh: return scale_high;
  }
  return scale_mid;
}

CameraModel SceneSpec::camera_at_time(double time01,
                                      const Vec3& eye_offset) const {
  const Vec3 eye = eye_from + time01 * (eye_to - eye_from) + eye_offset;
  return CameraModel::look_at(eye, look_target, up, focal, principal, width,
                              height);
}

CameraModel SceneSpec::camera(int frame) const {
  return camera_at_time(frame_time(frame));
}

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0 || num_frames < 2) {
    throw std::invalid_argument("scene: bad image size or frame count");
  }
  if (schedule.cycle.empty()) {
    throw std::invalid_argument("scene: empty exposure cycle");
  }
  // HDR span across primitives (>= 2 decades).
  double lo = background_radiance.maxCoeff();
  double hi = lo;
  auto fold = [&](const Vec3& r) {
    lo = std::min(lo, r.maxCoeff());
    hi = std::max(hi, r.maxCoeff());
  };
  for (const auto& s : spheres) fold(s.radiance);
  for (const auto& p : planes) fold(p.radiance);
  fold(dynamic_sphere.radiance);
  if (hi / std::max(lo, 1e-12) < 100.0) {
    throw std::invalid_argument("scene: radiance span below two decades");
  }
  // Every primitive must be unsaturated in at least one exposure.
  double min_scale = schedule.scale(schedule.cycle[0]);
  for (const auto tag : schedule.cycle) {
    min_scale = std::min(min_scale, schedule.scale(tag));
  }
  auto check_sat = [&](const Vec3& r, const char* what) {
    if (min_scale * r.maxCoeff() >= 1.0) {
      throw std::invalid_argument(
          std::string("scene: primitive saturated in every exposure: ") + what);
    }
  };
  for (const auto& s : spheres) check_sat(s.radiance, "sphere");
  for (const auto& p : planes) check_sat(p.radiance, "plane");
  check_sat(dynamic_sphere.radiance, "dynamic sphere");
  check_sat(background_radiance, "background");
  // Dynamic sphere inside the frustum over all frames.
  for (int f = 0; f < num_frames; ++f) {
    const CameraModel cam = camera(f);
    const Vec3 c = dynamic_center(f);
    Vec2 px;
    try {
      px = project(cam, c);
    } catch (const std::domain_error&) {
      throw std::invalid_argument("scene: dynamic sphere behind camera");
    }
    const double dist = (c - cam.center()).norm();
    const double pix_radius = focal * dynamic_sphere.radius / dist;
    if (px.x() - pix_radius < 0.0 || px.x() + pix_radius > width ||
        px.y() - pix_radius < 0.0 || px.y() + pix_radius > height) {
      throw std::invalid_argument("scene: dynamic sphere leaves the frustum");
    }
  }
}

TraceHit trace_scene(const SceneSpec& spec, const Vec3& origin, const Vec3& dir,
                     double frame_pos) {
  TraceHit best;
  best.distance = std::numeric_limits<double>::infinity();
  int id = 0;
  for (const auto& s : spec.spheres) {
    double t;
    if (intersect_sphere(origin, dir, s.center, s.radius, &t) &&
        t < best.distance) {
      best = TraceHit{true, t, s.radiance, id, false};
    }
    ++id;
  }
  for (const auto& p : spec.planes) {
    double t;
    if (intersect_plane(origin, dir, p, &t) && t < best.distance) {
      best = TraceHit{true, t, p.radiance, id, false};
    }
    ++id;
  }
  {
    double t;
    if (intersect_sphere(origin, dir, spec.dynamic_center(frame_pos),
                         spec.dynamic_sphere.radius, &t) &&
        t < best.distance) {
      best = TraceHit{true, t, spec.dynamic_sphere.radiance, id, true};
    }
  }
  return best;
}

OracleRender oracle_render_camera(const SceneSpec& spec,
                                  const CameraModel& camera, double frame_pos) {
  OracleRender out;
  out.hdr = Image(camera.width, camera.height, 3);
  out.depth = Image(camera.width, camera.height, 1, spec.z_far);
  out.dynamic_mask = Image(camera.width, camera.height, 1);
  const Vec3 origin = camera.center();
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = generate_ray(camera, Vec2(x + 0.5, y + 0.5), spec.z_near,
                                   spec.z_far);
      const TraceHit hit = trace_scene(spec, origin, ray.direction, frame_pos);
      if (hit.hit) {
        out.hdr.set_rgb(x, y, hit.radiance);
        out.depth.at(x, y, 0) = hit.distance;
        out.dynamic_mask.at(x, y, 0) = hit.dynamic ? 1.0 : 0.0;
      } else {
        out.hdr.set_rgb(x, y, spec.background_radiance);
      }
    }
  }
  return out;
}

OracleRender oracle_render(const SceneSpec& spec, int frame) {
  if (frame < 0 || frame >= spec.num_frames) {
    throw std::invalid_argument("oracle_render: frame out of range");
  }
  return oracle_render_camera(spec, spec.camera(frame), frame);
}

OracleFlow oracle_flow(const SceneSpec& spec, int frame_i, int frame_j) {
  if (frame_i < 0 || frame_i >= spec.num_frames || frame_j < 0 ||
      frame_j >= spec.num_frames) {
    throw std::invalid_argument("oracle_flow: frame out of range");
  }
  const CameraModel cam_i = spec.camera(frame_i);
  const CameraModel cam_j = spec.camera(frame_j);
  OracleFlow out;
  out.flow = Image(spec.width, spec.height, 2);
  out.validity = Image(spec.width, spec.height, 1);
  const Vec3 origin_i = cam_i.center();
  const Vec3 origin_j = cam_j.center();
  const double dt = static_cast<double>(frame_j - frame_i);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Vec2 p_i(x + 0.5, y + 0.5);
      const Ray ray = generate_ray(cam_i, p_i, spec.z_near, spec.z_far);
      const TraceHit hit = trace_scene(spec, origin_i, ray.direction, frame_i);
      if (!hit.hit) continue;  // no 3D point: invalid
      Vec3 point = origin_i + hit.distance * ray.direction;
      if (hit.dynamic) point += dt * spec.dynamic_velocity;
      Vec2 p_j;
      try {
        p_j = project(cam_j, point);
      } catch (const std::domain_error&) {
        continue;
      }
      out.flow.at(x, y, 0) = p_j.x() - p_i.x();
      out.flow.at(x, y, 1) = p_j.y() - p_i.y();
      if (p_j.x() < 0.0 || p_j.x() > spec.width || p_j.y() < 0.0 ||
          p_j.y() > spec.height) {
        continue;  // leaves the frame: unusable correspondence
      }
      // Occlusion check: re-trace from camera j toward the advected point.
      const Vec3 dir_j = (point - origin_j).normalized();
      const TraceHit hit_j = trace_scene(spec, origin_j, dir_j, frame_j);
      const double expected = (point - origin_j).norm();
      if (hit_j.hit && hit_j.prim_id == hit.prim_id &&
          std::abs(hit_j.distance - expected) <= 1e-6 * (1.0 + expected)) {
        out.validity.at(x, y, 0) = 1.0;
      }
    }
  }
  return out;
}

Image oracle_ldr(const SceneSpec& spec, const CameraModel& camera,
                 double frame_pos, double exposure_scale) {
  const OracleRender r = oracle_render_camera(spec, camera, frame_pos);
  Image ldr(camera.width, camera.height, 3);
  const double inv_gamma = 1.0 / spec.crf_gamma;
  for (std::size_t i = 0; i < ldr.data.size(); ++i) {
    ldr.data[i] =
        std::pow(std::clamp(exposure_scale * r.hdr.data[i], 0.0, 1.0), inv_gamma);
  }
  return ldr;
}

SceneContext DatasetBundle::context() const {
  SceneContext ctx;
  ctx.frames = frames;
  ctx.z_near = spec.z_near;
  ctx.z_far = spec.z_far;
  return ctx;
}

DatasetBundle generate_dataset(const SceneSpec& spec, int stride, int offset,
                               const FlowCorruption* corruption) {
  spec.validate();
  if (stride < 1 || offset < 0 || offset >= spec.num_frames) {
    throw std::invalid_argument("generate_dataset: bad stride/offset");
  }
  DatasetBundle bundle;
  bundle.spec = spec;
  bundle.stride = stride;
  bundle.offset = offset;
  const int count = (spec.num_frames - offset + stride - 1) / stride;
  if (count < 2) {
    throw std::invalid_argument("generate_dataset: fewer than two frames");
  }
  std::mt19937_64 rng(corruption != nullptr ? corruption->seed : 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double inv_gamma = 1.0 / spec.crf_gamma;
  for (int b = 0; b < count; ++b) {
    const int orig = offset + stride * b;
    FrameMeta meta;
    meta.frame_index = b;
    meta.camera = spec.camera(orig);
    meta.exposure_tag = spec.schedule.tag(orig);
    meta.exposure_scale = spec.schedule.scale(meta.exposure_tag);
    meta.time = spec.frame_time(orig);
    bundle.frames.push_back(meta);

    OracleRender r = oracle_render(spec, orig);
    Image ldr(spec.width, spec.height, 3);
    for (std::size_t i = 0; i < ldr.data.size(); ++i) {
      ldr.data[i] = std::pow(
          std::clamp(meta.exposure_scale * r.hdr.data[i], 0.0, 1.0), inv_gamma);
    }
    bundle.ldr.push_back(std::move(ldr));
    bundle.hdr.push_back(std::move(r.hdr));
    bundle.depth_gt.push_back(r.depth);
    bundle.dynamic_mask.push_back(std::move(r.dynamic_mask));

    Image depth_obs = r.depth;
    if (corruption != nullptr &&
        (corruption->depth_scale > 0.0 || corruption->depth_shift > 0.0)) {
      const double a = std::exp((2.0 * unit(rng) - 1.0) * corruption->depth_scale);
      const double b_shift = (2.0 * unit(rng) - 1.0) * corruption->depth_shift;
      for (double& v : depth_obs.data) v = a * v + b_shift;
    }
    bundle.depth.push_back(std::move(depth_obs));
  }

  for (int b = 0; b < count; ++b) {
    const int orig = offset + stride * b;
    auto make_flow = [&](int b_to) -> std::pair<Image, Image> {
      if (b_to < 0 || b_to >= count) {
        return {Image(spec.width, spec.height, 2), Image(spec.width, spec.height, 1)};
      }
      OracleFlow f = oracle_flow(spec, orig, offset + stride * b_to);
      if (corruption != nullptr &&
          (corruption->sigma_px > 0.0 || corruption->dropout > 0.0)) {
        for (int y = 0; y < spec.height; ++y) {
          for (int x = 0; x < spec.width; ++x) {
            if (f.validity.at(x, y, 0) == 0.0) continue;
            f.flow.at(x, y, 0) += corruption->sigma_px * gauss(rng);
            f.flow.at(x, y, 1) += corruption->sigma_px * gauss(rng);
            if (unit(rng) < corruption->dropout) f.validity.at(x, y, 0) = 0.0;
          }
        }
      }
      return {std::move(f.flow), std::move(f.validity)};
    };
    auto [ff, ffv] = make_flow(b + 1);
    bundle.flow_forward.push_back(std::move(ff));
    bundle.flow_forward_valid.push_back(std::move(ffv));
    auto [fb, fbv] = make_flow(b - 1);
    bundle.flow_backward.push_back(std::move(fb));
    bundle.flow_backward_valid.push_back(std::move(fbv));
  }
  return bundle;
}

// ---- JSON -------------------------------------------------------------------

std::string scene_to_json(const SceneSpec& s) {
  json j;
  j["name"] = s.name;
  j["width"] = s.width;
  j["height"] = s.height;
  j["frames"] = s.num_frames;
  j["camera"] = {{"focal", s.focal},
                 {"principal", vec2_to_json(s.principal)},
                 {"z_near", s.z_near},
                 {"z_far", s.z_far},
                 {"eye_from", vec_to_json(s.eye_from)},
                 {"eye_to", vec_to_json(s.eye_to)},
                 {"target", vec_to_json(s.look_target)},
                 {"up", vec_to_json(s.up)}};
  json cycle = json::array();
  for (auto tag : s.schedule.cycle) cycle.push_back(to_string(tag));
  j["exposure"] = {{"cycle", cycle},
                   {"scales",
                    {{"low", s.schedule.scale_low},
                     {"mid", s.schedule.scale_mid},
                     {"high", s.schedule.scale_high}}}};
  j["crf_gamma"] = s.crf_gamma;
  json prims = json::array();
  for (const auto& sp : s.spheres) {
    prims.push_back({{"type", "sphere"},
                     {"center", vec_to_json(sp.center)},
                     {"radius", sp.radius},
                     {"radiance", vec_to_json(sp.radiance)}});
  }
  for (const auto& p : s.planes) {
    json jp = {{"type", "plane"},
               {"axis", p.axis},
               {"offset", p.offset},
               {"radiance", vec_to_json(p.radiance)}};
    if (p.half_extent.has_value()) {
      jp["half_extent"] = vec2_to_json(*p.half_extent);
      jp["extent_center"] = vec2_to_json(p.extent_center);
    }
    prims.push_back(jp);
  }
  j["static_primitives"] = prims;
  j["dynamic"] = {{"type", "sphere"},
                  {"center", vec_to_json(s.dynamic_sphere.center)},
                  {"radius", s.dynamic_sphere.radius},
                  {"radiance", vec_to_json(s.dynamic_sphere.radiance)},
                  {"velocity", vec_to_json(s.dynamic_velocity)}};
  j["background_radiance"] = vec_to_json(s.background_radiance);
  return j.dump(2);
}

SceneSpec scene_from_json(const std::string& text) {
  const json j = json::parse(text);
  SceneSpec s;
  s.name = j.value("name", "scene");
  s.width = j.at("width");
  s.height = j.at("height");
  s.num_frames = j.at("frames");
  const json& cam = j.at("camera");
  s.focal = cam.at("focal");
  s.principal = vec2_from_json(cam.at("principal"));
  s.z_near = cam.at("z_near");
  s.z_far = cam.at("z_far");
  s.eye_from = vec_from_json(cam.at("eye_from"));
  s.eye_to = vec_from_json(cam.at("eye_to"));
  s.look_target = vec_from_json(cam.at("target"));
  s.up = vec_from_json(cam.at("up"));
  const json& exp = j.at("exposure");
  s.schedule.cycle.clear();
  for (const auto& t : exp.at("cycle")) {
    s.schedule.cycle.push_back(exposure_tag_from_string(t));
  }
  s.schedule.scale_low = exp.at("scales").at("low");
  s.schedule.scale_mid = exp.at("scales").at("mid");
  s.schedule.scale_high = exp.at("scales").at("high");
  s.crf_gamma = j.at("crf_gamma");
  for (const auto& p : j.at("static_primitives")) {
    if (p.at("type") == "sphere") {
      SpherePrim sp;
      sp.center = vec_from_json(p.at("center"));
      sp.radius = p.at("radius");
      sp.radiance = vec_from_json(p.at("radiance"));
      s.spheres.push_back(sp);
    } else if (p.at("type") == "plane") {
      PlanePrim pl;
      pl.axis = p.at("axis");
      pl.offset = p.at("offset");
      pl.radiance = vec_from_json(p.at("radiance"));
      if (p.contains("half_extent")) {
        pl.half_extent = vec2_from_json(p.at("half_extent"));
        pl.extent_center = vec2_from_json(p.value("extent_center", json::array({0.0, 0.0})));
      }
      s.planes.push_back(pl);
    } else {
      throw std::invalid_argument("scene: unknown primitive type");
    }
  }
  const json& dyn = j.at("dynamic");
  s.dynamic_sphere.center = vec_from_json(dyn.at("center"));
  s.dynamic_sphere.radius = dyn.at("radius");
  s.dynamic_sphere.radiance = vec_from_json(dyn.at("radiance"));
  s.dynamic_velocity = vec_from_json(dyn.at("velocity"));
  s.background_radiance = vec_from_json(j.at("background_radiance"));
  return s;
}

void save_scene(const std::string& path, const SceneSpec& spec) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write scene: " + path);
  os << scene_to_json(spec) << "\n";
}

SceneSpec load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read scene: " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return scene_from_json(text);
}

void write_dataset(const std::string& directory, const DatasetBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  json manifest;
  manifest["scene"] = json::parse(scene_to_json(bundle.spec));
  manifest["stride"] = bundle.stride;
  manifest["offset"] = bundle.offset;
  json frames = json::array();
  for (std::size_t b = 0; b < bundle.frames.size(); ++b) {
    const FrameMeta& m = bundle.frames[b];
    char buf[64];
    std::snprintf(buf, sizeof(buf), "frame_%04d", static_cast<int>(b));
    const std::string stem = buf;
    write_ppm(directory + "/" + stem + "_ldr.ppm", bundle.ldr[b]);
    write_pfm(directory + "/" + stem + "_hdr.pfm", bundle.hdr[b]);
    write_pfm(directory + "/" + stem + "_depth.pfm", bundle.depth[b]);
    // PFM carries 1 or 3 channels; pack (u, v, validity).
    Image flow3(bundle.spec.width, bundle.spec.height, 3);
    for (int y = 0; y < flow3.height; ++y) {
      for (int x = 0; x < flow3.width; ++x) {
        flow3.at(x, y, 0) = bundle.flow_forward[b].at(x, y, 0);
        flow3.at(x, y, 1) = bundle.flow_forward[b].at(x, y, 1);
        flow3.at(x, y, 2) = bundle.flow_forward_valid[b].at(x, y, 0);
      }
    }
    write_pfm(directory + "/" + stem + "_flow_fwd.pfm", flow3);
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot.push_back(m.camera.rotation(r, c));
    frames.push_back({{"index", m.frame_index},
                      {"time", m.time},
                      {"exposure_tag", to_string(m.exposure_tag)},
                      {"exposure_scale", m.exposure_scale},
                      {"ldr", stem + "_ldr.ppm"},
                      {"hdr", stem + "_hdr.pfm"},
                      {"depth", stem + "_depth.pfm"},
                      {"flow_fwd", stem + "_flow_fwd.pfm"},
                      {"camera",
                       {{"focal", m.camera.focal},
                        {"principal", vec2_to_json(m.camera.principal)},
                        {"width", m.camera.width},
                        {"height", m.camera.height},
                        {"rotation", rot},
                        {"translation", vec_to_json(m.camera.translation)}}}});
  }
  manifest["frames"] = frames;
  std::ofstream os(directory + "/manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest");
  os << manifest.dump(2) << "\n";
}

}  // namespace hdrfield
