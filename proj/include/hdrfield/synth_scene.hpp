#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hdrfield/image.hpp"
#include "hdrfield/losses.hpp"

namespace hdrfield {

struct SpherePrim {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Vec3 radiance = Vec3::Ones();  // emissive HDR, linear
};

// Axis-aligned emissive plane; infinite extent unless half_extent is set.
struct PlanePrim {
  int axis = 2;  // normal axis: 0=x, 1=y, 2=z
  double offset = 0.0;
  Vec3 radiance = Vec3::Ones();
  std::optional<Vec2> half_extent;  // in the two remaining axes
  Vec2 extent_center = Vec2::Zero();
};

struct ExposureSchedule {
  std::vector<ExposureTag> cycle = {ExposureTag::kMid, ExposureTag::kLow,
                                    ExposureTag::kHigh};
  double scale_low = 0.25;
  double scale_mid = 1.0;
  double scale_high = 4.0;

  double scale(ExposureTag tag) const;
  ExposureTag tag(int frame) const {
    return cycle[static_cast<std::size_t>(frame) % cycle.size()];
  }
};

// Analytic ground-truth scene: emissive hard surfaces, one linearly
// translating sphere, a linear camera path with look-at orientation, a known
// gamma CRF and a cyclic exposure schedule.
struct SceneSpec {
  std::string name = "scene";
  int width = 64, height = 64;
  int num_frames = 30;
  double focal = 60.0;
  Vec2 principal = Vec2(32.0, 32.0);
  double z_near = 3.0, z_far = 10.0;
  Vec3 eye_from = Vec3(-0.5, 0.0, -3.0);
  Vec3 eye_to = Vec3(0.5, 0.0, -3.0);
  Vec3 look_target = Vec3(0.0, 0.0, 3.5);
  Vec3 up = Vec3(0.0, 1.0, 0.0);
  ExposureSchedule schedule;
  double crf_gamma = 2.2;
  std::vector<SpherePrim> spheres;
  std::vector<PlanePrim> planes;
  SpherePrim dynamic_sphere;
  Vec3 dynamic_velocity = Vec3::Zero();  // world units per original frame
  Vec3 background_radiance = Vec3(0.05, 0.05, 0.05);

  double frame_time(double frame_pos) const {
    return num_frames > 1 ? frame_pos / (num_frames - 1.0) : 0.0;
  }
  double frame_pos(double time01) const { return time01 * (num_frames - 1.0); }
  CameraModel camera_at_time(double time01,
                             const Vec3& eye_offset = Vec3::Zero()) const;
  CameraModel camera(int frame) const;
  Vec3 dynamic_center(double frame_pos) const {
    return dynamic_sphere.center + frame_pos * dynamic_velocity;
  }

  // Checks the HDR span (>= 2 decades), that every primitive is unsaturated
  // in at least one exposure of the cycle, and that the dynamic sphere stays
  // inside the frustum over all frames. Throws std::invalid_argument.
  void validate() const;
};

std::string scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const std::string& json_text);
void save_scene(const std::string& path, const SceneSpec& spec);
SceneSpec load_scene(const std::string& path);

struct TraceHit {
  bool hit = false;
  double distance = 0.0;
  Vec3 radiance = Vec3::Zero();
  int prim_id = -1;  // spheres, then planes, then the dynamic sphere
  bool dynamic = false;
};

// Closest-hit trace at a continuous frame position (the dynamic sphere is
// advected by frame_pos * velocity).
TraceHit trace_scene(const SceneSpec& spec, const Vec3& origin, const Vec3& dir,
                     double frame_pos);

struct OracleRender {
  Image hdr;           // 3ch linear radiance
  Image depth;         // 1ch hit distance (z_far on miss)
  Image dynamic_mask;  // 1ch, 1 where the dynamic sphere is the closest hit
};

OracleRender oracle_render(const SceneSpec& spec, int frame);
OracleRender oracle_render_camera(const SceneSpec& spec,
                                  const CameraModel& camera, double frame_pos);

struct OracleFlow {
  Image flow;      // 2ch pixel displacement i -> j
  Image validity;  // 1ch, 0 where the advected point is occluded at j
};

// Pixel correspondences between frames i and j by re-projecting (advected)
// hit points into camera j, with an occlusion re-trace check.
OracleFlow oracle_flow(const SceneSpec& spec, int frame_i, int frame_j);

struct FlowCorruption {
  double sigma_px = 0.0;     // Gaussian pixel noise on observed flow
  double dropout = 0.0;      // probability a valid flow sample is masked out
  double depth_scale = 0.0;  // per-frame scale jitter: a = exp(U(-s, s))
  double depth_shift = 0.0;  // per-frame shift jitter: b = U(-t, t)
  std::uint64_t seed = 0;
};

struct DatasetBundle {
  SceneSpec spec;
  int stride = 1;
  int offset = 0;
  std::vector<FrameMeta> frames;  // frame_index consecutive; time from the
                                  // original sequence
  std::vector<Image> ldr;         // clamp01(g_gt(scale_i * E))
  std::vector<Image> hdr;
  std::vector<Image> depth;          // observed depth (possibly corrupted)
  std::vector<Image> depth_gt;       // uncorrupted
  std::vector<Image> dynamic_mask;
  std::vector<Image> flow_forward;   // 2ch, to the next bundle frame
  std::vector<Image> flow_backward;
  std::vector<Image> flow_forward_valid;
  std::vector<Image> flow_backward_valid;

  SceneContext context() const;
  int original_index(int bundle_frame) const {
    return offset + stride * bundle_frame;
  }
};

// Renders the alternating-exposure sequence. stride/offset select a subset
// (e.g. stride 2, offset 0 trains on even frames); flows connect adjacent
// bundle frames.
DatasetBundle generate_dataset(const SceneSpec& spec, int stride = 1,
                               int offset = 0,
                               const FlowCorruption* corruption = nullptr);

// Ground-truth LDR at an arbitrary camera/time for held-out evaluation.
Image oracle_ldr(const SceneSpec& spec, const CameraModel& camera,
                 double frame_pos, double exposure_scale);

// Writes LDR frames (PPM), HDR/depth/flow (PFM) and manifest.json.
void write_dataset(const std::string& directory, const DatasetBundle& bundle);

}  // namespace hdrfield
