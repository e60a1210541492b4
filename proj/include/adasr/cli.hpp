#pragma once

#include <CLI11.hpp>
#include <iostream>

#include "adasr/trainer.hpp"
#include "adasr/visualize.hpp"

namespace adasr {

// Subcommand surface: train | animate | evaluate | degrade | visualize-features.
// Exit codes: 0 success, 1 usage error, 2 runtime error. The env var
// ADASR_DETERMINISTIC=1 forces deterministic (single-threaded) execution.
inline int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"one-shot talking-head generation with adaptive super-resolution training"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model on a clip dataset");
  std::string train_config, train_data, train_out = "runs/default", train_resume;
  bool train_det = false;
  train->add_option("--config", train_config, "config json")->required();
  train->add_option("--data", train_data, "dataset root (overrides config.data_root)");
  train->add_option("--out-dir", train_out, "checkpoints and metrics log directory");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_flag("--deterministic", train_det, "force single-threaded deterministic mode");

  // animate
  auto* animate_cmd = app.add_subcommand("animate", "drive a source portrait with a video");
  AnimationJob job;
  std::string mode = "auto";
  bool same_identity = false;
  animate_cmd->add_option("--ckpt", job.checkpoint, "trained checkpoint")->required();
  animate_cmd->add_option("--source", job.source_image, "source portrait image")->required();
  animate_cmd->add_option("--driving", job.driving_video, "driving clip")->required();
  animate_cmd->add_option("--out", job.output, "output clip path")->required();
  animate_cmd->add_option("--mode", mode, "absolute | relative | auto (default auto)")
      ->check(CLI::IsMember({"absolute", "relative", "auto"}));
  animate_cmd->add_flag("--same-identity", same_identity,
                        "declare source identity == driving identity (auto mode -> absolute)");
  animate_cmd->add_option("--anchor-frame", job.anchor_frame,
                          "driving frame anchoring relative motion");
  animate_cmd->add_option("--fps", job.fps, "output frame rate (default: driving clip rate)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "quantitative self-reenactment evaluation");
  std::string eval_ckpt, eval_data, eval_out = "report.json";
  eval_cmd->add_option("--ckpt", eval_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "dataset root")->required();
  eval_cmd->add_option("--out", eval_out, "report json path");

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "run the degradation pipeline on an image");
  std::string deg_in, deg_out, deg_config;
  std::uint64_t deg_seed = 0;
  degrade_cmd->add_option("--in", deg_in, "input image (ppm)")->required();
  degrade_cmd->add_option("--out", deg_out, "output image (ppm)")->required();
  degrade_cmd->add_option("--seed", deg_seed, "degradation seed");
  degrade_cmd->add_option("--config", deg_config, "config json with degradation settings");

  // visualize-features
  auto* viz_cmd = app.add_subcommand("visualize-features",
                                     "dump generator input feature maps before/after deformation");
  std::string viz_ckpt, viz_src, viz_drv, viz_out = "feature_viz";
  viz_cmd->add_option("--ckpt", viz_ckpt, "trained checkpoint")->required();
  viz_cmd->add_option("--source", viz_src, "source image")->required();
  viz_cmd->add_option("--driving", viz_drv, "driving image/clip")->required();
  viz_cmd->add_option("--out-dir", viz_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  apply_determinism_settings(deterministic_env());

  try {
    if (*train) {
      Config cfg = Config::load(train_config);
      if (!train_data.empty()) cfg.data_root = train_data;
      if (train_det) cfg.training.deterministic = true;
      run_training<float>(cfg, train_out, train_resume, &std::cout);
      std::cout << "checkpoints written to " << train_out << std::endl;
    } else if (*animate_cmd) {
      if (mode == "auto")
        job.mode = same_identity ? TransferMode::kAbsolute : TransferMode::kRelative;
      else
        job.mode = mode == "absolute" ? TransferMode::kAbsolute : TransferMode::kRelative;
      FrameSequence out = animate(job);
      std::cout << "wrote " << out.frames.size() << " frames to " << job.output << std::endl;
    } else if (*eval_cmd) {
      Checkpoint<float> ckpt = load_checkpoint<float>(eval_ckpt);
      auto model = std::make_shared<const AdaSRModel<float>>(model_from_checkpoint(ckpt));
      DatasetIndex data = DatasetIndex::scan(eval_data);
      EvalOracles oracles;
      oracles.fid_features = pyramid_embedding_oracle();
      oracles.embedding = pyramid_embedding_oracle();
      oracles.landmarks = model_landmark_oracle<float>(model);
      EvalReport report =
          evaluate(checkpoint_generator<float>(model), data, model->cfg.resolution, oracles);
      std::ofstream out(eval_out);
      if (!out) throw IoError("cannot write report '" + eval_out + "'");
      out << report.to_json().dump(2) << "\n";
      std::cout << report.to_json().dump(2) << std::endl;
    } else if (*degrade_cmd) {
      Config cfg;
      if (!deg_config.empty()) cfg = Config::load(deg_config);
      Tensor<float> img = read_ppm_file<float>(deg_in);
      Frame out = degrade(Frame::checked(std::move(img)), cfg.degradation, deg_seed);
      write_ppm_file(deg_out, out.pixels);
      std::cout << "wrote " << deg_out << std::endl;
    } else if (*viz_cmd) {
      auto files = visualize_features(viz_ckpt, viz_src, viz_drv, viz_out);
      for (const auto& f : files) std::cout << f << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}

}  // namespace adasr
