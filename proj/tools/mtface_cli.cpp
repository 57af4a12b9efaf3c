// mtface command line: train, infer, eval, synth, inspect.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mtface/checkpoint.hpp"
#include "mtface/config.hpp"
#include "mtface/error.hpp"
#include "mtface/pipeline.hpp"
#include "mtface/synth.hpp"

namespace fs = std::filesystem;
using namespace mtface;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitIntegrity = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::Configuration:
    case ErrorKind::StageOrder:
      return kExitUsage;
    case ErrorKind::Integrity:
    case ErrorKind::BadMagic:
    case ErrorKind::BadVersion:
    case ErrorKind::CrcMismatch:
    case ErrorKind::Truncated:
      return kExitIntegrity;
    default:
      return kExitData;
  }
}

struct Loaded {
  std::unique_ptr<Model> model;
  StageState state;
};

Loaded load_model(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  Loaded out;
  out.model = std::make_unique<Model>(config_from_checkpoint(ckpt));
  load_parameters(*out.model, ckpt);
  out.state = stage_state_from_checkpoint(ckpt);
  return out;
}

void print_stage(const StageReport& r) {
  const EpochRecord& last = r.epochs.back();
  std::printf("stage %d: %zu epochs, %zu steps", r.stage, r.epochs.size(), r.step_losses.size());
  for (const auto& [task, v] : last.losses) std::printf(", %s %.6f", task.c_str(), v);
  if (r.stage > 1)
    std::printf(", s = (%.4f, %.4f, %.4f)", r.final_uncertainty.s[0], r.final_uncertainty.s[1],
                r.final_uncertainty.s[2]);
  std::printf("\n");
}

int cmd_train(const std::string& config_path, const std::string& stage_arg, const std::string& out_path) {
  const KeyValueConfig kv = KeyValueConfig::load(config_path);
  std::vector<int> stages;
  if (stage_arg == "all") {
    stages = {1, 2, 3};
  } else {
    require(stage_arg == "1" || stage_arg == "2" || stage_arg == "3", ErrorKind::InvalidInput,
            "--stage must be 1, 2, 3 or all");
    stages = {std::stoi(stage_arg)};
  }
  if (const auto s = kv.get("stage"); s && stage_arg != "all")
    require(*s == stage_arg, ErrorKind::Configuration, "config stage " + *s + " disagrees with --stage " + stage_arg);

  Loaded m;
  if (kv.has("init_weights")) {
    m = load_model(kv.path("init_weights"));
  } else {
    m.model = std::make_unique<Model>(model_config_from(kv));
    m.model->init(static_cast<uint64_t>(kv.integer("model_seed", kv.integer("seed", 0))));
  }
  const ManifestPaths mp = manifests_from(kv);
  const bool need_lm = std::find(stages.begin(), stages.end(), 1) != stages.end();
  const bool need_heads = stages.back() > 1;
  require(!need_lm || !mp.landmark.empty(), ErrorKind::Configuration, "stage 1 needs manifest.landmark");
  require(!need_heads || (!mp.au.empty() && !mp.gaze.empty() && !mp.emotion.empty()), ErrorKind::Configuration,
          "stages 2 and 3 need manifest.au, manifest.gaze and manifest.emotion");
  const TrainData data = TrainData::load(need_lm ? mp.landmark : "", need_heads ? mp.au : "",
                                         need_heads ? mp.gaze : "", need_heads ? mp.emotion : "",
                                         m.model->config().landmark.input_size);

  const std::string report_path = out_path + ".report.jsonl";
  std::ofstream report(report_path, std::ios::binary);
  require(report.good(), ErrorKind::Io, "cannot write " + report_path);
  for (int stage : stages) {
    const auto t0 = std::chrono::steady_clock::now();
    const StageReport r = run_stage(*m.model, m.state, data, train_config_from(kv, stage));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report << r.to_json_lines();
    report.flush();
    print_stage(r);
    std::fprintf(stderr, "stage %d took %.1f s\n", stage, secs);
    // a checkpoint after every stage, so a later failure keeps earlier work
    save_checkpoint(make_checkpoint(*m.model, m.state), out_path);
  }
  std::printf("wrote %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_infer(const std::string& weights, const std::string& input, const std::string& detections,
              const std::string& format, bool overlay, const std::string& out_dir) {
  require(format == "csv" || format == "json", ErrorKind::InvalidInput, "--format must be csv or json");
  Loaded m = load_model(weights);
  std::optional<DetectionSidecar> sidecar;
  InferenceOptions opts;
  if (!detections.empty()) {
    sidecar = DetectionSidecar::load(detections);
    opts.detector = Detector::Sidecar;
    opts.sidecar = &*sidecar;
  }
  const auto frames = list_frames(input);
  require(!frames.empty(), ErrorKind::Data, "no image frames (.ppm/.pgm) under " + input);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(fs::is_directory(out_dir), ErrorKind::Io, "cannot create " + out_dir);
  if (overlay) fs::create_directories(fs::path(out_dir) / "overlay", ec);

  std::vector<FrameResult> all;
  double total_ms = 0.0;
  for (size_t f = 0; f < frames.size(); ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = process_frame(*m.model, frames[f], static_cast<int>(f), opts);
    total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (overlay) {
      const bool any = std::any_of(results.begin(), results.end(), [](const FrameResult& r) { return r.success; });
      if (any) {
        const Image img = read_image(frames[f]);
        const auto path = fs::path(out_dir) / "overlay" / (fs::path(frames[f]).stem().string() + ".ppm");
        write_ppm(render_overlay(img, results, m.model->config()), path.string());
      }
    }
    for (auto& r : results) all.push_back(std::move(r));
  }
  const bool csv = format == "csv";
  const auto out = fs::path(out_dir) / (csv ? "results.csv" : "results.json");
  write_results(all, m.model->config(), out.string(), csv ? OutputFormat::Csv : OutputFormat::Json);
  const auto failed = std::count_if(all.begin(), all.end(), [](const FrameResult& r) { return !r.success; });
  std::fprintf(stderr, "%zu frames, %zu faces, %zd failed, %.2f ms/frame\n", frames.size(), all.size(), failed,
               total_ms / static_cast<double>(frames.size()));
  std::printf("wrote %s\n", out.string().c_str());
  return kExitOk;
}

int cmd_eval(const std::string& weights, const std::string& task, const std::string& manifest, bool bin) {
  Loaded m = load_model(weights);
  Model& model = *m.model;
  const int size = model.config().landmark.input_size;
  require(!bin || task == "emotion", ErrorKind::InvalidInput, "--bin-by-pose needs the emotion task (pose column)");
  if (task == "landmark") {
    std::vector<Tensor> faces;
    std::vector<LandmarkSet> targets;
    for (auto& s : load_landmark_manifest(manifest)) {
      faces.push_back(load_face(s.path, size));
      require(static_cast<int>(s.landmarks.size()) == model.config().landmark.num_landmarks, ErrorKind::Data,
              s.path + ": landmark count does not match the model");
      targets.push_back(std::move(s.landmarks));
    }
    std::printf("landmark nme %.6f (n=%zu)\n", evaluate_nme(model, faces, targets), faces.size());
  } else if (task == "au") {
    std::vector<Tensor> faces;
    std::vector<std::vector<int>> labels;
    for (auto& s : load_au_manifest(manifest)) {
      faces.push_back(load_face(s.path, size));
      require(static_cast<int>(s.labels.size()) == model.config().au.num_aus, ErrorKind::Data,
              s.path + ": AU count does not match the model");
      labels.push_back(std::move(s.labels));
    }
    std::printf("au macro_f1 %.6f (n=%zu)\n", evaluate_au_f1(model, faces, labels), faces.size());
  } else if (task == "gaze") {
    std::vector<Tensor> faces;
    std::vector<GazeAngles> labels;
    for (auto& s : load_gaze_manifest(manifest)) {
      faces.push_back(load_face(s.path, size));
      labels.push_back(s.gaze);
    }
    std::printf("gaze angular_error_deg %.6f (n=%zu)\n", evaluate_gaze_error(model, faces, labels), faces.size());
  } else if (task == "emotion") {
    std::vector<Tensor> faces;
    std::vector<int> labels;
    std::vector<std::optional<double>> poses;
    for (auto& s : load_emotion_manifest(manifest)) {
      faces.push_back(load_face(s.path, size));
      require(s.label < model.config().emotion.num_classes, ErrorKind::Data, s.path + ": emotion id out of range");
      labels.push_back(s.label);
      poses.push_back(s.pose_yaw_deg);
    }
    std::printf("emotion accuracy %.6f (n=%zu)\n", evaluate_accuracy(model, faces, labels), faces.size());
    if (bin) {
      const auto binned = bin_by_orientation(poses, [&](std::span<const size_t> idx) {
        std::vector<Tensor> f;
        std::vector<int> l;
        for (size_t i : idx) {
          f.push_back(faces[i]);
          l.push_back(labels[i]);
        }
        return evaluate_accuracy(model, f, l);
      });
      for (size_t b = 0; b < 3; ++b) {
        const char* name = to_string(static_cast<OrientationBin>(b));
        if (binned.value[b])
          std::printf("  %s accuracy %.6f (n=%zu)\n", name, *binned.value[b], binned.count[b]);
        else
          std::printf("  %s empty\n", name);
      }
    }
  } else {
    fail(ErrorKind::InvalidInput, "--task must be landmark, au, gaze or emotion");
  }
  return kExitOk;
}

int cmd_synth(const std::string& out_dir, int n, int seed, const std::string& tasks, int size) {
  SynthSpec spec;
  spec.n = n;
  require(seed >= 0, ErrorKind::InvalidInput, "--seed must be non-negative");
  spec.seed = static_cast<uint64_t>(seed);
  spec.image_size = size;
  spec.tasks.clear();
  std::stringstream ss(tasks);
  std::string t;
  while (std::getline(ss, t, ','))
    if (!t.empty()) spec.tasks.insert(t);
  require(!spec.tasks.empty(), ErrorKind::InvalidInput, "--tasks is empty");
  const SynthManifests m = generate_synthetic_dataset(spec, out_dir);
  for (const auto* p : {&m.landmark, &m.au, &m.gaze, &m.emotion})
    if (!p->empty()) std::printf("wrote %s\n", p->c_str());
  return kExitOk;
}

int cmd_inspect(const std::string& weights) {
  const Checkpoint ckpt = load_checkpoint(weights);
  if (ckpt.find("config.landmark")) {
    const ModelConfig c = config_from_checkpoint(ckpt);
    const auto& l = c.landmark;
    std::printf("landmark: num_landmarks=%d num_stacks=%d input_size=%d heatmap_size=%d channels=%d\n",
                l.num_landmarks, l.num_stacks, l.input_size, l.heatmap_size, l.channels);
    std::printf("backbone: features=%d blocks=%d\n", c.backbone.features, c.backbone.blocks);
    std::printf("au: num_aus=%d dim=%d threshold=%g ids=", c.au.num_aus, c.au.dim, c.au.presence_threshold);
    for (size_t i = 0; i < c.au.ids.size(); ++i) std::printf("%s%d", i ? "," : "", c.au.ids[i]);
    std::printf("\nemotion: num_classes=%d smoothing=%g\n", c.emotion.num_classes, c.emotion.smoothing);
    std::printf("eyes: left=%d right=%d\n", c.left_eye, c.right_eye);
    const StageState s = stage_state_from_checkpoint(ckpt);
    std::printf("stages completed:");
    bool any = false;
    for (int k = 1; k <= 3; ++k)
      if (s.completed(k)) {
        std::printf(" %d", k);
        any = true;
      }
    std::printf("%s\n", any ? "" : " none");
  }
  const ParameterCount pc = count_parameters(ckpt);
  for (const auto& [module, n] : pc.per_module) std::printf("params %s %lld\n", module.c_str(), static_cast<long long>(n));
  std::printf("params total %lld\n", static_cast<long long>(pc.total));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask face analysis: landmarks, action units, gaze and emotion"};
  app.require_subcommand(1);

  std::string config, stage, out;
  auto* train = app.add_subcommand("train", "Run training stages");
  train->add_option("--config", config, "key = value training config")->required();
  train->add_option("--stage", stage, "1, 2, 3 or all")->required()->check(CLI::IsMember({"1", "2", "3", "all"}));
  train->add_option("--out", out, "output checkpoint")->required();

  std::string weights, input, detections, format = "csv", out_dir;
  bool overlay = false;
  auto* infer = app.add_subcommand("infer", "Run the full pipeline on images");
  infer->add_option("--weights", weights)->required();
  infer->add_option("--input", input, "image file or directory of frames")->required();
  infer->add_option("--detections", detections, "JSON sidecar of face boxes");
  infer->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  infer->add_flag("--overlay", overlay, "write annotated P6 images");
  infer->add_option("--out-dir", out_dir)->required();

  std::string task, manifest;
  bool bin = false;
  auto* eval = app.add_subcommand("eval", "Evaluate one task on a manifest");
  eval->add_option("--weights", weights)->required();
  eval->add_option("--task", task)->required()->check(CLI::IsMember({"landmark", "au", "gaze", "emotion"}));
  eval->add_option("--manifest", manifest)->required();
  eval->add_flag("--bin-by-pose", bin, "report per head-pose bin");

  int n = 0, seed = 0, size = 64;
  std::string tasks = "au,gaze,emotion,landmark";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--out-dir", out_dir)->required();
  synth->add_option("--n", n)->required();
  synth->add_option("--seed", seed)->required();
  synth->add_option("--tasks", tasks);
  synth->add_option("--size", size, "image side in pixels");

  auto* inspect = app.add_subcommand("inspect", "Print config echo and parameter counts");
  inspect->add_option("--weights", weights)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(config, stage, out);
    if (*infer) return cmd_infer(weights, input, detections, format, overlay, out_dir);
    if (*eval) return cmd_eval(weights, task, manifest, bin);
    if (*synth) return cmd_synth(out_dir, n, seed, tasks, size);
    if (*inspect) return cmd_inspect(weights);
  } catch (const TrainingAbort& e) {
    std::fprintf(stderr, "error: training aborted (%s): %s\n", e.task().c_str(), e.what());
    return kExitData;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
