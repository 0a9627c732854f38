#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hdrfield/metrics.hpp"
#include "hdrfield/plotting.hpp"
#include "hdrfield/presets.hpp"
#include "hdrfield/trainer.hpp"

namespace fs = std::filesystem;
using namespace hdrfield;

namespace {

SceneSpec load_scene_arg(const std::string& scene) {
  if (fs::exists(scene)) return load_scene(scene);
  return preset_scene(scene);
}

struct DatasetArgs {
  std::string scene;
  int stride = 1;
  int offset = 0;
  double flow_sigma = 0.0;
  double flow_dropout = 0.0;
  double depth_scale = 0.0;
  double depth_shift = 0.0;
  std::uint64_t corrupt_seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--scene", scene,
                    "scene JSON file or preset name (blinker, flare, mini)")
        ->required();
    cmd->add_option("--stride", stride, "train on every Nth frame");
    cmd->add_option("--offset", offset, "first frame of the stride subset");
    cmd->add_option("--corrupt-flow-sigma", flow_sigma,
                    "Gaussian pixel noise on supervision flow");
    cmd->add_option("--corrupt-flow-dropout", flow_dropout,
                    "probability of masking a valid flow sample");
    cmd->add_option("--corrupt-depth-scale", depth_scale,
                    "per-frame depth scale jitter (log-uniform half-width)");
    cmd->add_option("--corrupt-depth-shift", depth_shift,
                    "per-frame depth shift jitter (uniform half-width)");
    cmd->add_option("--corrupt-seed", corrupt_seed, "corruption RNG seed");
  }

  DatasetBundle build() const {
    const SceneSpec spec = load_scene_arg(scene);
    FlowCorruption corruption;
    corruption.sigma_px = flow_sigma;
    corruption.dropout = flow_dropout;
    corruption.depth_scale = depth_scale;
    corruption.depth_shift = depth_shift;
    corruption.seed = corrupt_seed;
    const bool corrupted = flow_sigma > 0 || flow_dropout > 0 ||
                           depth_scale > 0 || depth_shift > 0;
    return generate_dataset(spec, stride, offset,
                            corrupted ? &corruption : nullptr);
  }
};

Vec3 parse_vec3(const std::string& text) {
  Vec3 v = Vec3::Zero();
  std::stringstream ss(text);
  char comma;
  ss >> v(0) >> comma >> v(1) >> comma >> v(2);
  return v;
}

int cmd_gen_scene(const std::string& preset, const std::string& spec_out,
                  const DatasetArgs& data, const std::string& out_dir) {
  SceneSpec spec =
      preset.empty() ? load_scene_arg(data.scene) : preset_scene(preset);
  spec.validate();
  if (!spec_out.empty()) {
    save_scene(spec_out, spec);
    std::cout << "wrote scene spec to " << spec_out << "\n";
  }
  if (!out_dir.empty()) {
    DatasetArgs args = data;
    if (args.scene.empty()) args.scene = preset;
    const DatasetBundle bundle = args.build();
    write_dataset(out_dir, bundle);
    std::cout << "wrote " << bundle.frames.size() << " frames to " << out_dir
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HDR dynamic radiance field reconstruction from "
               "alternating-exposure video"};
  app.require_subcommand(1);

  // ---- gen-scene ----------------------------------------------------------
  auto* gen = app.add_subcommand(
      "gen-scene", "emit a scene spec JSON and/or render its dataset");
  std::string gen_preset, gen_spec_out, gen_out;
  DatasetArgs gen_data;
  gen->add_option("--preset", gen_preset, "preset name (blinker, flare, mini)");
  gen->add_option("--spec-out", gen_spec_out, "write the scene JSON here");
  gen->add_option("--out", gen_out, "render frames + manifest into this dir");
  gen_data.attach(gen);
  gen->get_option("--scene")->required(false);

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand("train", "optimize a model on a scene");
  DatasetArgs train_data;
  train_data.attach(train);
  TrainConfig config;
  std::string out_dir, crf_kind = "piecewise", enhancer, resume, wb_share =
      "per-frame";
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--steps", config.steps, "training steps");
  train->add_option("--seed", config.seed, "RNG seed");
  train->add_option("--batch-rays", config.batch_rays, "rays per step");
  train->add_option("--samples", config.samples_per_ray, "samples per ray");
  train->add_option("--lr", config.lr, "Adam learning rate");
  train->add_option("--lr-half-life", config.lr_half_life,
                    "exponential decay half-life in steps (default steps/3)");
  train->add_option("--crf-lr-scale", config.crf_lr_scale,
                    "learning-rate multiplier for the CRF parameters");
  train->add_option("--beta-data", config.weights.beta_data, "flow+depth weight");
  train->add_option("--beta-depth", config.weights.beta_depth,
                    "depth weight inside the data term");
  train->add_option("--beta-reg", config.weights.beta_reg,
                    "scene-flow regularization weight");
  train->add_option("--beta-smooth", config.weights.beta_smooth,
                    "CRF smoothness weight");
  train->add_option("--beta-gen", config.weights.beta_gen,
                    "generative prior weight");
  train->add_option("--beta-wb", config.weights.beta_wb_anchor,
                    "white-balance metadata anchor weight");
  train->add_option("--t-warm", config.t_warm_override,
                    "generative warm-up steps (default 0.4 * steps)");
  train->add_option("--p-gen", config.weights.p_gen,
                    "generative sampling probability");
  train->add_option("--enhancer", enhancer, "id | oracle | blur");
  train->add_option("--crf", crf_kind, "piecewise | fixed | mlp | none");
  train->add_option("--crf-gamma", config.fixed_gamma,
                    "gamma of the fixed CRF variant");
  train->add_option("--leak-alpha", config.leak_alpha,
                    "leaky thresholding coefficient");
  train->add_option("--wb-share", wb_share, "per-frame | per-tag");
  train->add_option("--hidden-width", config.field_config.static_hidden_width,
                    "MLP width (applied to both branches)");
  train->add_option("--hidden-layers", config.field_config.static_hidden_layers,
                    "MLP depth (applied to both branches)");
  train->add_option("--checkpoint-every", config.checkpoint_every,
                    "steps between checkpoints");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_flag("--squared-photometric", config.weights.squared_photometric,
                  "use the squared-error photometric variant");
  train->add_flag("--occ-weighted-photo",
                  config.weights.occlusion_weighted_photo,
                  "down-weight warped photometric loss by occlusion confidence");

  // ---- render -------------------------------------------------------------
  auto* render = app.add_subcommand("render", "render a trained checkpoint");
  DatasetArgs render_data;
  render_data.attach(render);
  std::string ckpt_path, mode = "hdr", tag = "mid", render_out = "render.pfm";
  std::string cam_offset = "0,0,0";
  double render_time = -1.0;
  int render_frame = -1;
  int render_samples = 48;
  render->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  render->add_option("--mode", mode, "hdr | ldr | mulaw | depth | flow");
  render->add_option("--tag", tag, "exposure tag for LDR renders");
  render->add_option("--time", render_time, "normalized time in [0,1]");
  render->add_option("--frame", render_frame, "render at this bundle frame");
  render->add_option("--camera-offset", cam_offset, "eye offset dx,dy,dz");
  render->add_option("--samples", render_samples, "samples per ray");
  render->add_option("--out", render_out, "output image (.pfm or .ppm)");

  // ---- eval ---------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "held-out metrics for a checkpoint");
  DatasetArgs eval_data;
  eval_data.attach(eval);
  std::string eval_ckpt, eval_out = "eval", eval_offset = "0.15,0.1,0";
  std::string eval_frames = "all";
  int eval_samples = 48;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--out", eval_out, "report directory");
  eval->add_option("--camera-offset", eval_offset, "held-out eye offset");
  eval->add_option("--frames", eval_frames, "all | even | odd");
  eval->add_option("--samples", eval_samples, "samples per ray");

  // ---- plot ---------------------------------------------------------------
  auto* plot = app.add_subcommand("plot", "figures from logs and checkpoints");
  std::string plot_log, plot_ckpt, plot_pred, plot_gt, plot_out = "plots";
  double plot_gamma = 0.0;
  plot->add_option("--log", plot_log, "losses.log to plot");
  plot->add_option("--checkpoint", plot_ckpt, "checkpoint for the CRF plot");
  plot->add_option("--gamma", plot_gamma, "reference gamma for the CRF plot");
  plot->add_option("--hdr-pred", plot_pred, "reconstructed HDR (.pfm)");
  plot->add_option("--hdr-gt", plot_gt, "ground-truth HDR (.pfm)");
  plot->add_option("--out", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_scene(gen_preset, gen_spec_out, gen_data, gen_out);
    }

    if (train->parsed()) {
      config.crf_kind = crf_kind_from_string(crf_kind);
      config.enhancer = enhancer;
      config.wb_sharing =
          wb_share == "per-tag" ? WbSharing::kPerTag : WbSharing::kPerFrame;
      config.field_config.dynamic_hidden_width =
          config.field_config.static_hidden_width;
      config.field_config.dynamic_hidden_layers =
          config.field_config.static_hidden_layers;
      const DatasetBundle bundle = train_data.build();
      const Checkpoint ckpt = run(config, bundle, out_dir, resume);
      std::ofstream crf_txt(out_dir + "/crf.txt");
      write_crf_text(crf_txt, ckpt.crf, ckpt.wb);
      std::cout << "finished at step " << ckpt.step << "; checkpoint at "
                << out_dir << "/checkpoint_final.bin\n";
      return 0;
    }

    if (render->parsed()) {
      const DatasetBundle bundle = render_data.build();
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      RenderRequest req;
      if (render_frame >= 0) {
        req.time = bundle.frames.at(render_frame).time;
        req.ldr_tag = bundle.frames.at(render_frame).exposure_tag;
      }
      if (render_time >= 0.0) req.time = render_time;
      if (!tag.empty()) req.ldr_tag = exposure_tag_from_string(tag);
      req.mode = render_mode_from_string(mode);
      req.samples_per_ray = render_samples;
      req.camera = bundle.spec.camera_at_time(req.time, parse_vec3(cam_offset));
      const Image img = render_output(ckpt, bundle, req);
      if (render_out.size() > 4 &&
          render_out.substr(render_out.size() - 4) == ".ppm") {
        write_ppm(render_out, img);
      } else {
        write_pfm(render_out, img);
      }
      std::cout << "wrote " << render_out << "\n";
      return 0;
    }

    if (eval->parsed()) {
      const DatasetBundle bundle = eval_data.build();
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      std::vector<int> frames;
      for (int f = 0; f < static_cast<int>(bundle.frames.size()); ++f) {
        if (eval_frames == "even" && f % 2 != 0) continue;
        if (eval_frames == "odd" && f % 2 != 1) continue;
        frames.push_back(f);
      }
      EvalReport report = evaluate_checkpoint(
          ckpt, bundle, parse_vec3(eval_offset), frames, eval_samples);

      // HDR accuracy at the reference view, masked to pixels the mid
      // exposure leaves unsaturated.
      const OracleRender oracle = oracle_render(bundle.spec, 0);
      RenderRequest req;
      req.camera = bundle.frames[0].camera;
      req.time = bundle.frames[0].time;
      req.mode = RenderMode::kHdr;
      req.samples_per_ray = eval_samples;
      const Image hdr = render_output(ckpt, bundle, req);
      Image mask(bundle.spec.width, bundle.spec.height, 1);
      for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
          mask.at(x, y, 0) =
              oracle.hdr.rgb(x, y).maxCoeff() * bundle.spec.schedule.scale_mid <
                      1.0
                  ? 1.0
                  : 0.0;
      report.hdr_rel_error = hdr_relative_error(hdr, oracle.hdr, mask);

      // Flow end-point error on the dynamic mask of a middle frame.
      const int mid = static_cast<int>(bundle.frames.size()) / 2;
      req.camera = bundle.frames[mid].camera;
      req.time = bundle.frames[mid].time;
      req.mode = RenderMode::kFlow;
      const Image pred_flow = render_output(ckpt, bundle, req);
      report.flow_epe_px = flow_epe(pred_flow, bundle.flow_forward[mid],
                                    bundle.dynamic_mask[mid]);

      fs::create_directories(eval_out);
      std::ofstream json(eval_out + "/report.json");
      json << report.to_json() << "\n";
      std::ofstream crf_txt(eval_out + "/crf.txt");
      write_crf_text(crf_txt, ckpt.crf, ckpt.wb);
      std::cout << report.to_table();
      const bool sane = std::isfinite(report.mean_psnr_full) &&
                        report.mean_ssim_full >= -1.0 &&
                        report.mean_ssim_full <= 1.0;
      if (!sane) {
        std::cerr << "eval: invariant failure in metrics\n";
        return 2;
      }
      return 0;
    }

    if (plot->parsed()) {
      fs::create_directories(plot_out);
      bool did = false;
      if (!plot_log.empty()) {
        plot_loss_log(plot_log, plot_out + "/losses.svg");
        did = true;
      }
      if (!plot_ckpt.empty()) {
        const Checkpoint ckpt = load_checkpoint(plot_ckpt);
        plot_crf(ckpt.crf, plot_gamma, plot_out + "/crf.svg");
        did = true;
      }
      if (!plot_pred.empty() && !plot_gt.empty()) {
        plot_hdr_histogram(read_pfm(plot_pred), read_pfm(plot_gt),
                           plot_out + "/hdr_histogram.svg");
        did = true;
      }
      if (!did) {
        std::cerr << "plot: nothing to do (pass --log, --checkpoint or "
                     "--hdr-pred/--hdr-gt)\n";
        return 2;
      }
      std::cout << "wrote figures to " << plot_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
