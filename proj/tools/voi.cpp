#include <CLI11.hpp>

#include <algorithm>
#include <iostream>

#include "voi/experiment.hpp"
#include "voi/pipeline.hpp"

using namespace voi;
namespace fs = std::filesystem;

namespace {

// keys understood by run_config; simulate and pipeline expose them as flags
const std::vector<std::string> kRunKeys = {
    "scene", "frames", "samples", "events", "poses", "truth", "registration", "out", "camera_width", "camera_height",
    "camera_focal", "fps", "seed", "workers", "azimuth_min", "azimuth_max", "azimuth_step", "eye_heights", "roll",
    "distance", "aim_jitter", "marker_step", "max_points", "thumbnail_side", "gan_epochs", "gan_images", "gan_width",
    "gan_blocks", "gan_norm", "stem_width", "stem_stride", "blocks_per_stage", "epochs", "batch_size", "learning_rate", "augment",
    "oversample", "coverage_window_ms"};

const std::vector<std::string> kSimKeys = {
    "scene", "out", "seed", "workers", "camera_width", "camera_height", "camera_focal", "azimuth_min", "azimuth_max",
    "azimuth_step", "eye_heights", "roll", "distance", "aim_jitter", "marker_step", "max_points", "thumbnail_side"};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

struct KeyOptions {
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::vector<std::string>& keys) {
    for (const auto& k : keys) app->add_option(flag_name(k), values[k]);
  }
  KeyValues given() const {
    KeyValues kv;
    for (const auto& [k, v] : values)
      if (!v.empty()) kv[k] = v;
    return kv;
  }
};

void need(const std::string& value, const std::string& flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

CameraIntrinsics camera(int w, int h, double f) {
  auto k = CameraIntrinsics::centered(w, h, f);
  validate(k);
  return k;
}

Vec3 parse_vec3(const std::string& s) {
  const auto v = parse_real_list("vector", s);
  if (v.size() != 3) throw Error("expected three numbers, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

void must_exist(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(what + " '" + p.string() + "' does not exist");
}

ClassCatalog catalog_from_scene(const std::string& scene_path) {
  must_exist(scene_path, "scene");
  return parse_scene(read_file(scene_path)).catalog();
}

/// Catalog from the class names appearing in ground truth and predictions when no scene is given.
ClassCatalog catalog_from_files(const std::vector<std::string>& texts) {
  std::set<std::string> vois;
  for (const auto& t : texts) {
    const auto csv = parse_csv(t);
    const std::string col = csv.has_column("class") ? "class" : "class_name";
    const auto c = csv.column(col);
    for (const auto& row : csv.rows) {
      const auto& n = row[c];
      if (n != ClassCatalog::kObjectDefault && n != ClassCatalog::kEnvironment && n != eval::kUnannotated)
        vois.insert(n);
    }
  }
  return ClassCatalog::from_voi_names({vois.begin(), vois.end()});
}

/// Predictions may be annotation output or a file in the ground-truth layout.
std::map<long long, int> read_labels(const std::string& text, const ClassCatalog& cat) {
  return parse_csv(text).has_column("class_name") ? eval::parse_annotations(text, cat) : eval::parse_truth(text, cat);
}

/// Rewrites argv so that keys from --config become flags, unless the flag is already present.
std::vector<std::string> apply_config(const std::vector<std::string>& args, CLI::App& app) {
  std::string config;
  std::size_t sub_at = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (sub_at == args.size() && !args[i].empty() && args[i][0] != '-') sub_at = i;
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || sub_at == args.size()) return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[sub_at]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  must_exist(config, "config file");
  std::vector<std::string> out = args;
  for (auto [key, value] : parse_key_values(read_file(config))) {
    const auto flag = flag_name(key);
    if (!sub->get_option_no_throw(flag)) throw CLI::ValidationError("--config", "unknown key '" + key + "'");
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) {
      out.push_back(flag);
      out.push_back(value);
    }
  }
  return out;
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixation-to-VOI annotation from simulated training data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  std::function<void()> run;
  std::string config_file;
  auto command = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", config_file, "key = value file; flags override it");
    return s;
  };

  // scene-check
  std::string scene_path;
  {
    auto* s = command("scene-check", "Validate a scene file and print its class catalog");
    s->add_option("--scene", scene_path)->required();
    s->callback([&] {
      run = [&] {
        must_exist(scene_path, "scene");
        const Scene scene = parse_scene(read_file(scene_path));
        const auto cat = scene.catalog();
        std::cout << "scene " << scene_path << " ok\nvois " << scene.voi_count() << "\nprimitives "
                  << scene.primitive_count() << "\n";
        for (std::size_t i = 0; i < cat.size(); ++i) std::cout << "class " << i << " " << cat.names[i] << "\n";
        const auto [lo, hi] = object_bounds(scene);
        std::cout << "object bounds " << fmt_real(lo.x) << " " << fmt_real(lo.y) << " " << fmt_real(lo.z) << " .. "
                  << fmt_real(hi.x) << " " << fmt_real(hi.y) << " " << fmt_real(hi.z) << "\n";
      };
    });
  }

  // simulate
  KeyOptions sim_opts;
  {
    auto* s = command("simulate", "Render a labeled thumbnail dataset from the scene geometry");
    sim_opts.add(s, kSimKeys);
    s->callback([&] {
      run = [&] {
        auto kv = sim_opts.given();
        need(kv["scene"], "--scene");
        need(kv["out"], "--out");
        const auto c = run_config(kv);
        must_exist(c.scene, "scene");
        const Scene scene = parse_scene(read_file(c.scene));
        const auto m = simulate(scene, c, c.out, provenance_line(c.seed, {{"scene", file_digest(c.scene)}}));
        std::vector<std::size_t> per(std::size_t(m.classes), 0);
        for (const auto& r : m.rows) ++per[std::size_t(r.class_index)];
        std::cout << "rows " << m.rows.size() << "\n";
        for (std::size_t i = 0; i < per.size(); ++i) std::cout << m.class_names[i] << " " << per[i] << "\n";
        for (int c2 : m.underrepresented) std::cerr << "warning: no samples for class " << m.class_names[std::size_t(c2)] << "\n";
      };
    });
  }

  // gan-train
  std::string gan_source, gan_target, gan_frames, gan_samples, gan_events, gan_out;
  double gan_fps = 24;
  std::uint64_t gan_seed = 0;
  std::size_t gan_images = 200;
  gan::CycleGanConfig gan_model;
  gan::GanTrainConfig gan_train;
  int gan_workers = 1;
  std::string gan_norm = "on";
  {
    auto* s = command("gan-train", "Train the cycle-consistent translator from simulation to recorded appearance");
    s->add_option("--source", gan_source, "simulation manifest")->required();
    s->add_option("--target", gan_target, "target-domain manifest");
    s->add_option("--frames", gan_frames, "recorded frames directory (target crops at fixations)");
    s->add_option("--samples", gan_samples);
    s->add_option("--events", gan_events);
    s->add_option("--fps", gan_fps);
    s->add_option("--out", gan_out)->required();
    s->add_option("--seed", gan_seed);
    s->add_option("--images", gan_images, "images per domain");
    s->add_option("--epochs", gan_train.epochs);
    s->add_option("--image-side", gan_model.image_side);
    s->add_option("--width", gan_model.width);
    s->add_option("--blocks", gan_model.residual_blocks);
    s->add_option("--norm", gan_norm, "instance norm in the generators")->check(CLI::IsMember({"on", "off"}));
    s->add_option("--lambda-cyc", gan_train.lambda_cyc);
    s->add_option("--pool-size", gan_train.pool_size);
    s->add_option("--workers", gan_workers);
    s->callback([&] {
      run = [&] {
        if (gan_target.empty() == gan_frames.empty()) throw CLI::ValidationError("give either --target or --frames");
        must_exist(gan_source, "source manifest");
        const auto src_m = sim::read_manifest(gan_source);
        const auto src = manifest_images(src_m, sim::even_subset(src_m.rows.size(), gan_images), gan_workers);
        std::vector<Image> tgt;
        std::map<std::string, std::string> digests{{"source", file_digest(gan_source)}};
        if (!gan_target.empty()) {
          must_exist(gan_target, "target manifest");
          const auto m = sim::read_manifest(gan_target);
          tgt = manifest_images(m, sim::even_subset(m.rows.size(), gan_images), gan_workers);
          digests["target"] = file_digest(gan_target);
        } else {
          need(gan_samples, "--samples");
          need(gan_events, "--events");
          must_exist(gan_frames, "frames directory");
          const auto ex = gaze::parse_gaze_export(read_file(gan_samples), read_file(gan_events));
          tgt = target_crops(gan_frames, ex.samples, ex.events, gan_fps, gan_model.image_side, gan_images);
          digests["frames"] = dir_digest(gan_frames);
        }
        gan_model.generator_norm = gan_norm == "on";
        validate(gan_model);
        const auto prov = provenance_line(gan_seed, digests);
        auto res = gan::train_cyclegan(src, tgt, gan_model, gan_train, gan_seed, [](const gan::GanEpochLog& e) {
          log_line("epoch " + std::to_string(e.epoch) + " " + gan::gan_log_line(e));
        });
        fs::create_directories(gan_out);
        std::string text = prov + "\n" + gan::gan_log_header() + "\n";
        for (const auto& e : res.log) text += gan::gan_log_line(e) + "\n";
        write_file(fs::path(gan_out) / "gan_log.csv", text);
        gan::save_cyclegan(fs::path(gan_out) / "cyclegan.ckpt", res.model, {{"seed", std::to_string(gan_seed)}});
        std::cout << "mean cycle error " << fmt_fixed(gan::mean_cycle_error(res.model, src), 4) << "\n";
      };
    });
  }

  // gan-apply
  std::string apply_model, apply_manifest, apply_out, apply_dir = "src2tgt";
  int apply_workers = 1;
  {
    auto* s = command("gan-apply", "Translate every image of a manifest with a trained translator");
    s->add_option("--model", apply_model)->required();
    s->add_option("--manifest", apply_manifest)->required();
    s->add_option("--out", apply_out)->required();
    s->add_option("--direction", apply_dir)->check(CLI::IsMember({"src2tgt", "tgt2src"}));
    s->add_option("--workers", apply_workers);
    s->callback([&] {
      run = [&] {
        must_exist(apply_model, "model");
        must_exist(apply_manifest, "manifest");
        auto model = gan::load_cyclegan(apply_model);
        const auto m = sim::read_manifest(apply_manifest);
        const auto prov = provenance_line(m.seed, {{"model", file_digest(apply_model)}, {"manifest", file_digest(apply_manifest)}});
        if (apply_dir == "tgt2src") {
          // same layout, reverse generator
          std::swap(model.G, model.F);
        }
        const auto out = translate_manifest(model, m, apply_out, prov, apply_workers);
        std::cout << "translated " << out.rows.size() << " images\n";
      };
    });
  }

  // train
  std::vector<std::string> train_manifests;
  std::string train_out;
  std::uint64_t train_seed = 0;
  clf::ClassifierConfig train_model;
  clf::TrainConfig train_cfg;
  std::string train_augment = "on", train_oversample = "on";
  {
    auto* s = command("train", "Train the VOI classifier on one or more manifests");
    s->add_option("--manifest", train_manifests)->required();
    s->add_option("--out", train_out)->required();
    s->add_option("--seed", train_seed);
    s->add_option("--epochs", train_cfg.epochs);
    s->add_option("--batch-size", train_cfg.batch_size);
    s->add_option("--learning-rate", train_cfg.adam.lr);
    s->add_option("--augment", train_augment)->check(CLI::IsMember({"on", "off"}));
    s->add_option("--oversample", train_oversample)->check(CLI::IsMember({"on", "off"}));
    s->add_option("--input-side", train_model.input_side);
    s->add_option("--stem-width", train_model.stem_width);
    s->add_option("--stem-stride", train_model.stem_stride);
    s->add_option("--blocks-per-stage", train_model.blocks_per_stage);
    s->callback([&] {
      run = [&] {
        train_cfg.augment = train_augment == "on";
        train_cfg.oversample = train_oversample == "on";
        std::vector<sim::DatasetManifest> ms;
        std::map<std::string, std::string> digests;
        for (std::size_t i = 0; i < train_manifests.size(); ++i) {
          must_exist(train_manifests[i], "manifest");
          ms.push_back(sim::read_manifest(train_manifests[i]));
          digests["manifest" + std::to_string(i)] = file_digest(train_manifests[i]);
        }
        auto model = clf::train(ms, train_model, train_cfg, train_seed, [](const clf::EpochLog& e) {
          log_line("epoch " + std::to_string(e.epoch) + " loss " + fmt_fixed(e.loss, 4) + " train " +
                   fmt_fixed(e.train_acc, 4) + " val " + fmt_fixed(e.val_acc, 4));
        });
        fs::create_directories(train_out);
        write_file(fs::path(train_out) / "training_log.csv",
                   clf::training_log_text(model, train_cfg, provenance_line(train_seed, digests)));
        clf::save_classifier(fs::path(train_out) / "classifier.ckpt", model);
        std::cout << "train rows " << model.train_rows << " validation rows " << model.val_rows << "\n";
      };
    });
  }

  // ingest
  std::string in_frames, in_samples, in_events, in_out;
  double in_fps = 24;
  int in_side = 64;
  {
    auto* s = command("ingest", "Cut per-frame fixation thumbnails from a gaze replay");
    s->add_option("--frames", in_frames)->required();
    s->add_option("--samples", in_samples)->required();
    s->add_option("--events", in_events)->required();
    s->add_option("--fps", in_fps);
    s->add_option("--side", in_side);
    s->add_option("--out", in_out)->required();
    s->callback([&] {
      run = [&] {
        must_exist(in_frames, "frames directory");
        const auto ex = gaze::parse_gaze_export(read_file(in_samples), read_file(in_events));
        const gaze::FrameIndex idx{in_fps, gaze::count_frames(in_frames)};
        if (idx.frame_count == 0) throw Error("no frames found in '" + in_frames + "'");
        fs::create_directories(in_out);
        std::string csv = provenance_line(0, {{"frames", dir_digest(in_frames)}, {"samples", file_digest(in_samples)},
                                              {"events", file_digest(in_events)}}) +
                          "\nfixation_id,frame_index,path,dx,dy\n";
        std::size_t n = 0, skipped = 0;
        for (const auto& g : gaze::fixation_thumbnails(in_frames, ex.samples, ex.events, idx, in_side)) {
          skipped += g.skipped;
          for (const auto& t : g.thumbnails) {
            const std::string name = "fix" + std::to_string(t.fixation_id) + "_" + gaze::frame_filename(t.frame_index);
            write_png(fs::path(in_out) / name, t.image);
            csv += std::to_string(t.fixation_id) + "," + std::to_string(t.frame_index) + "," + name + "," +
                   std::to_string(t.dx) + "," + std::to_string(t.dy) + "\n";
            ++n;
          }
        }
        write_file(fs::path(in_out) / "thumbnails.csv", csv);
        const Image first = read_png(fs::path(in_frames) / gaze::frame_filename(0));
        std::cout << "fixations " << ex.events.size() << "\nthumbnails " << n << "\nskipped " << skipped << "\n"
                  << retention_line(in_side, first.width, first.height) << "\n";
      };
    });
  }

  // annotate-cnn
  std::string cnn_model, cnn_scene, cnn_frames, cnn_samples, cnn_events, cnn_out;
  double cnn_fps = 24;
  {
    auto* s = command("annotate-cnn", "Annotate fixations with the classifier and popular vote");
    s->add_option("--model", cnn_model)->required();
    s->add_option("--scene", cnn_scene)->required();
    s->add_option("--frames", cnn_frames)->required();
    s->add_option("--samples", cnn_samples)->required();
    s->add_option("--events", cnn_events)->required();
    s->add_option("--fps", cnn_fps);
    s->add_option("--out", cnn_out)->required();
    s->callback([&] {
      run = [&] {
        must_exist(cnn_model, "model");
        must_exist(cnn_frames, "frames directory");
        const auto cat = catalog_from_scene(cnn_scene);
        auto model = clf::load_classifier(cnn_model);
        const auto ex = gaze::parse_gaze_export(read_file(cnn_samples), read_file(cnn_events));
        const auto r = annotate_cnn(model, cat, cnn_frames, ex.samples, ex.events, cnn_fps);
        const auto prov = provenance_line(model.seed, {{"model", file_digest(cnn_model)}, {"frames", dir_digest(cnn_frames)},
                                                       {"samples", file_digest(cnn_samples)}, {"events", file_digest(cnn_events)}});
        write_file(cnn_out, eval::annotations_text(r.annotations, cat, prov));
        std::cout << "fixations " << r.annotations.size() << "\nthumbnails " << r.thumbnails << "\nskipped "
                  << r.skipped << "\n";
      };
    });
  }

  // annotate-geo
  std::string geo_scene, geo_samples, geo_events, geo_poses, geo_reg, geo_out;
  int cam_w = 320, cam_h = 240, geo_workers = 1;
  double cam_f = 277, geo_window = 100;
  auto camera_flags = [&](CLI::App* s) {
    s->add_option("--camera-width", cam_w);
    s->add_option("--camera-height", cam_h);
    s->add_option("--camera-focal", cam_f);
  };
  auto geo_config = [&] {
    geo::GeoConfig g;
    g.intrinsics = camera(cam_w, cam_h, cam_f);
    g.coverage_window_ms = geo_window;
    g.workers = geo_workers;
    if (!geo_reg.empty()) {
      must_exist(geo_reg, "registration");
      g.registration = geo::parse_registration(read_file(geo_reg));
    }
    return g;
  };
  {
    auto* s = command("annotate-geo", "Annotate fixations by casting gaze rays into the scene geometry");
    s->add_option("--scene", geo_scene)->required();
    s->add_option("--samples", geo_samples)->required();
    s->add_option("--events", geo_events)->required();
    s->add_option("--poses", geo_poses)->required();
    s->add_option("--registration", geo_reg);
    s->add_option("--coverage-window-ms", geo_window);
    s->add_option("--workers", geo_workers);
    s->add_option("--out", geo_out)->required();
    camera_flags(s);
    s->callback([&] {
      run = [&] {
        must_exist(geo_scene, "scene");
        const Scene scene = parse_scene(read_file(geo_scene));
        const auto ex = gaze::parse_gaze_export(read_file(geo_samples), read_file(geo_events));
        const auto r = annotate_geo(scene, ex.samples, ex.events, geo::parse_poses(read_file(geo_poses)), geo_config());
        std::map<std::string, std::string> d{{"scene", file_digest(geo_scene)}, {"samples", file_digest(geo_samples)},
                                             {"events", file_digest(geo_events)}, {"poses", file_digest(geo_poses)}};
        if (!geo_reg.empty()) d["registration"] = file_digest(geo_reg);
        write_file(geo_out, eval::annotations_text(r.annotations, scene.catalog(), provenance_line(0, d)));
        std::cout << "fixations " << r.annotations.size() << "\npose coverage " << fmt_fixed(r.pose_coverage, 4)
                  << "\nuncovered points " << r.uncovered_points << "\nout-of-frame points " << r.out_of_frame_points
                  << "\n";
      };
    });
  }

  // qa
  std::vector<std::string> qa_dirs;
  std::string qa_target, qa_out;
  double qa_threshold = 1.5, qa_diameter = 0;
  {
    auto* s = command("qa", "Tracking-quality check on revisits of a known target");
    s->add_option("--participant", qa_dirs, "NAME=DIR holding gaze_samples.csv, fixations.csv, poses.csv")->required();
    s->add_option("--target-center", qa_target, "x y z")->required();
    s->add_option("--target-diameter", qa_diameter);
    s->add_option("--threshold", qa_threshold);
    s->add_option("--registration", geo_reg);
    s->add_option("--coverage-window-ms", geo_window);
    s->add_option("--out", qa_out);
    camera_flags(s);
    s->callback([&] {
      run = [&] {
        const auto g = geo_config();
        std::vector<eval::QaResult> results;
        std::map<std::string, std::string> digests;
        for (const auto& spec : qa_dirs) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--participant", "expected NAME=DIR, got '" + spec + "'");
          const std::string name = spec.substr(0, eq);
          const auto files = sim::experiment_files(spec.substr(eq + 1));
          for (const auto& p : {files.samples, files.events, files.poses}) must_exist(p, "participant file");
          geo::QaInput in;
          in.samples = gaze::parse_samples(read_file(files.samples));
          in.revisits = geo::revisit_events(read_file(files.events));
          in.poses = geo::parse_poses(read_file(files.poses));
          in.target_center = parse_vec3(qa_target);
          in.target_diameter_m = qa_diameter;
          results.push_back(geo::qa_target_check(name, in, g, qa_threshold));
          digests[name] = file_digest(files.samples);
        }
        const auto csv = eval::qa_csv(results, provenance_line(0, digests));
        if (!qa_out.empty()) write_file(qa_out, csv);
        std::cout << csv.substr(csv.find('\n') + 1);
        const auto ex = eval::exclusions(results);
        std::cout << "passed " << results.size() - ex.size() << " of " << results.size() << "\n";
        for (const auto& e : ex) std::cout << "exclude " << e << "\n";
      };
    });
  }

  // evaluate
  std::string ev_truth, ev_pred, ev_scene, ev_out;
  {
    auto* s = command("evaluate", "Weighted precision, recall and F1 against ground truth");
    s->add_option("--truth", ev_truth)->required();
    s->add_option("--pred", ev_pred)->required();
    s->add_option("--scene", ev_scene, "class catalog source; otherwise taken from the files");
    s->add_option("--out", ev_out);
    s->callback([&] {
      run = [&] {
        must_exist(ev_truth, "truth");
        must_exist(ev_pred, "predictions");
        const auto t = read_file(ev_truth), p = read_file(ev_pred);
        const auto cat = ev_scene.empty() ? catalog_from_files({t, p}) : catalog_from_scene(ev_scene);
        const auto e = evaluate(eval::parse_truth(t, cat), read_labels(p, cat), cat);
        if (!ev_out.empty())
          write_file(ev_out, eval::metrics_csv(e.report, cat.names,
                                               provenance_line(0, {{"truth", file_digest(ev_truth)}, {"pred", file_digest(ev_pred)}})));
        std::cout << eval::metrics_text(e.report, cat.names);
        if (e.unannotated) std::cout << "unannotated " << e.unannotated << "\n";
      };
    });
  }

  // compare
  std::vector<std::string> cmp_reports;
  std::string cmp_out;
  {
    auto* s = command("compare", "Side-by-side table of metrics reports");
    s->add_option("--report", cmp_reports, "METHOD:SETTING=metrics.csv")->required();
    s->add_option("--out", cmp_out);
    s->callback([&] {
      run = [&] {
        std::vector<eval::NamedReport> named;
        std::map<std::string, std::string> digests;
        for (const auto& spec : cmp_reports) {
          const auto eq = spec.find('='), colon = spec.find(':');
          if (eq == std::string::npos || colon == std::string::npos || colon > eq)
            throw CLI::ValidationError("--report", "expected METHOD:SETTING=FILE, got '" + spec + "'");
          const std::string path = spec.substr(eq + 1);
          must_exist(path, "metrics file");
          named.push_back({spec.substr(0, colon), spec.substr(colon + 1, eq - colon - 1),
                           eval::parse_metrics_csv(read_file(path))});
          digests[named.back().method + ":" + named.back().setting] = file_digest(path);
        }
        const auto c = eval::compare_reports(named, provenance_line(0, digests));
        if (!cmp_out.empty()) write_file(cmp_out, c.csv);
        std::cout << c.text;
      };
    });
  }

  // pipeline
  KeyOptions run_opts;
  {
    auto* s = command("pipeline", "Simulate, translate, train, annotate and evaluate with stage caching");
    run_opts.add(s, kRunKeys);
    s->callback([&] {
      run = [&] {
        const auto summary = run_pipeline(run_config(run_opts.given()), log_line);
        std::cout << summary.text;
      };
    });
  }

  // demo-data
  std::string demo_scene, demo_out, demo_app = "sim", demo_target;
  sim::ExperimentConfig demo;
  {
    auto* s = command("demo-data", "Write a synthetic recorded experiment (frames, gaze export, poses, truth)");
    s->add_option("--scene", demo_scene)->required();
    s->add_option("--out", demo_out)->required();
    s->add_option("--seed", demo.seed);
    s->add_option("--fixations", demo.fixations);
    s->add_option("--gaze-offset-deg", demo.gaze_offset_deg);
    s->add_option("--appearance", demo_app)->check(CLI::IsMember({"sim", "shifted"}));
    s->add_option("--revisit-target", demo.revisit_target);
    s->add_option("--revisit-every", demo.revisit_every);
    s->add_option("--fps", demo.fps);
    s->add_option("--workers", demo.workers);
    camera_flags(s);
    s->callback([&] {
      run = [&] {
        must_exist(demo_scene, "scene");
        demo.appearance = sim::parse_appearance(demo_app);
        demo.intrinsics = camera(cam_w, cam_h, cam_f);
        const Scene scene = parse_scene(read_file(demo_scene));
        const auto ex = sim::simulate_experiment(scene, demo);
        sim::write_experiment(scene, ex, demo_out, provenance_line(demo.seed, {{"scene", file_digest(demo_scene)}}));
        std::cout << "fixations " << ex.fixations.size() << "\nframes " << ex.frame_count << "\nsamples "
                  << ex.samples.size() << "\n";
      };
    });
  }

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = apply_config(args, app);
    std::reverse(args.begin() + 1, args.end());
    std::vector<std::string> rest(args.begin() + 1, args.end());
    app.parse(rest);
    if (run) run();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
