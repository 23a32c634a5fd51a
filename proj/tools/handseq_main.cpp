#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "handseq/io.hpp"
#include "handseq/metrics.hpp"
#include "handseq/parallel.hpp"
#include "handseq/refiner.hpp"

namespace fs = std::filesystem;
using namespace handseq;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitDivergence = 4;

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";
  std::string model_right_path;
  std::string model_left_path;
};

RunConfig load_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = read_config_file(g.config_path);
  if (!g.model_right_path.empty()) cfg.model_right_path = g.model_right_path;
  if (!g.model_left_path.empty()) cfg.model_left_path = g.model_left_path;
  return cfg;
}

// Model resolution order: explicit flags, config paths, built-in mini hand.
std::pair<HandModel, HandModel> load_models(const RunConfig& cfg) {
  HandModel right = cfg.model_right_path.empty() ? generate_mini_hand(0)
                                                 : read_model_file(cfg.model_right_path);
  HandModel left = cfg.model_left_path.empty() ? mirror_model(right)
                                               : read_model_file(cfg.model_left_path);
  return {std::move(right), std::move(left)};
}

std::string out_path(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

struct FrameArrays {
  PointSeq joints_r, joints_l;
  PointSeq vertices_r, vertices_l;
  std::vector<char> labeled;
};

// Explicit arrays win; anything absent is produced by the forward pass and
// composed into the right-hand frame.
FrameArrays realize_sequence(const HandParamsSequence& seq, const HandModel& model_r,
                             const HandModel& model_l, int threads) {
  FrameArrays arr;
  const int frames = seq.frame_count();
  arr.joints_r.resize(static_cast<size_t>(frames));
  arr.joints_l.resize(static_cast<size_t>(frames));
  arr.vertices_r.resize(static_cast<size_t>(frames));
  arr.vertices_l.resize(static_cast<size_t>(frames));
  arr.labeled.resize(static_cast<size_t>(frames));
  parallel_for(frames, threads, [&](int t) {
    const SequenceFrame& f = seq.frames[static_cast<size_t>(t)];
    const size_t ts = static_cast<size_t>(t);
    arr.labeled[ts] = f.labeled ? 1 : 0;
    const bool need_forward = !f.gt_joints_r || !f.gt_joints_l || !f.gt_vertices_r ||
                              !f.gt_vertices_l;
    MeshFrame right, left;
    if (need_forward) {
      auto composed =
          compose_two_hands(forward(model_r, {f.theta_r, f.beta_r, Vec3::Zero()}),
                            forward(model_l, {f.theta_l, f.beta_l, Vec3::Zero()}),
                            f.translation_c);
      right = std::move(composed.first);
      left = std::move(composed.second);
    }
    arr.joints_r[ts] = f.gt_joints_r ? *f.gt_joints_r : right.joints;
    arr.joints_l[ts] = f.gt_joints_l ? *f.gt_joints_l : left.joints;
    arr.vertices_r[ts] = f.gt_vertices_r ? *f.gt_vertices_r : right.vertices;
    arr.vertices_l[ts] = f.gt_vertices_l ? *f.gt_vertices_l : left.vertices;
  });
  return arr;
}

PointSeq select(const PointSeq& seq, const std::vector<int>& idx) {
  PointSeq out;
  out.reserve(idx.size());
  for (const int i : idx) out.push_back(seq[static_cast<size_t>(i)]);
  return out;
}

std::optional<Scalar> average(const std::optional<Scalar>& a, const std::optional<Scalar>& b) {
  if (!a || !b) return std::nullopt;
  return 0.5 * (*a + *b);
}

MetricsReport build_metrics_report(const FrameArrays& pred, const FrameArrays& gt,
                                   const HandModel& model_r, const HandModel& model_l,
                                   const RunConfig& cfg, Scalar fps, int threads) {
  const int frames = static_cast<int>(pred.joints_r.size());
  MetricsReport report;

  std::vector<int> labeled_idx;
  for (int t = 0; t < frames; ++t) {
    if (gt.labeled[static_cast<size_t>(t)]) labeled_idx.push_back(t);
  }

  if (!labeled_idx.empty()) {
    const PointSeq pr = select(pred.joints_r, labeled_idx);
    const PointSeq pl = select(pred.joints_l, labeled_idx);
    const PointSeq gr = select(gt.joints_r, labeled_idx);
    const PointSeq gl = select(gt.joints_l, labeled_idx);

    report.mpjpe_mm = 0.5 * (mpjpe(pr, gr, cfg.root_index) + mpjpe(pl, gl, cfg.root_index));
    report.pa_mpjpe_mm = 0.5 * (pa_mpjpe(pr, gr) + pa_mpjpe(pl, gl));

    const auto [curve_r, auc_r] = pck_auc(pr, gr, cfg.root_index, cfg.pck_max_mm, cfg.pck_steps);
    const auto [curve_l, auc_l] = pck_auc(pl, gl, cfg.root_index, cfg.pck_max_mm, cfg.pck_steps);
    report.auc = 0.5 * (auc_r + auc_l);
    report.pck_curve.resize(curve_r.size());
    for (size_t i = 0; i < curve_r.size(); ++i) {
      report.pck_curve[i] = {curve_r[i].threshold_mm,
                             0.5 * (curve_r[i].fraction + curve_l[i].fraction)};
    }

    Points pred_roots_r(static_cast<int>(labeled_idx.size()), 3);
    Points pred_roots_l(static_cast<int>(labeled_idx.size()), 3);
    Points gt_roots_r(static_cast<int>(labeled_idx.size()), 3);
    Points gt_roots_l(static_cast<int>(labeled_idx.size()), 3);
    for (size_t k = 0; k < labeled_idx.size(); ++k) {
      pred_roots_r.row(static_cast<int>(k)) = pr[k].row(cfg.root_index);
      pred_roots_l.row(static_cast<int>(k)) = pl[k].row(cfg.root_index);
      gt_roots_r.row(static_cast<int>(k)) = gr[k].row(cfg.root_index);
      gt_roots_l.row(static_cast<int>(k)) = gl[k].row(cfg.root_index);
    }
    report.mpvpe_mm =
        0.5 * (mpvpe(select(pred.vertices_r, labeled_idx), select(gt.vertices_r, labeled_idx),
                     pred_roots_r, gt_roots_r) +
               mpvpe(select(pred.vertices_l, labeled_idx), select(gt.vertices_l, labeled_idx),
                     pred_roots_l, gt_roots_l));

    for (size_t k = 0; k < labeled_idx.size(); ++k) {
      const int t = labeled_idx[k];
      const Scalar right_mm = mpjpe({pr[k]}, {gr[k]}, cfg.root_index);
      const Scalar left_mm = mpjpe({pl[k]}, {gl[k]}, cfg.root_index);
      report.per_frame_mpjpe_right_mm.push_back({t, right_mm});
      report.per_frame_mpjpe_left_mm.push_back({t, left_mm});
      report.per_frame_mpjpe_mm.push_back({t, 0.5 * (right_mm + left_mm)});
      report.per_frame_pa_mpjpe_mm.push_back(
          {t, 0.5 * (pa_mpjpe({pr[k]}, {gr[k]}) + pa_mpjpe({pl[k]}, {gl[k]}))});
      Points proots_r = pred_roots_r.row(static_cast<int>(k));
      Points proots_l = pred_roots_l.row(static_cast<int>(k));
      Points groots_r = gt_roots_r.row(static_cast<int>(k));
      Points groots_l = gt_roots_l.row(static_cast<int>(k));
      report.per_frame_mpvpe_mm.push_back(
          {t, 0.5 * (mpvpe({pred.vertices_r[static_cast<size_t>(t)]},
                           {gt.vertices_r[static_cast<size_t>(t)]}, proots_r, groots_r) +
                     mpvpe({pred.vertices_l[static_cast<size_t>(t)]},
                           {gt.vertices_l[static_cast<size_t>(t)]}, proots_l, groots_l))});
    }
  }

  // Acceleration uses windows whose three frames are all labeled.
  {
    std::vector<Scalar> values;
    for (int t = 1; t + 1 < frames; ++t) {
      if (!gt.labeled[static_cast<size_t>(t - 1)] || !gt.labeled[static_cast<size_t>(t)] ||
          !gt.labeled[static_cast<size_t>(t + 1)]) {
        continue;
      }
      const PointSeq pw_r{pred.joints_r[static_cast<size_t>(t - 1)],
                          pred.joints_r[static_cast<size_t>(t)],
                          pred.joints_r[static_cast<size_t>(t + 1)]};
      const PointSeq gw_r{gt.joints_r[static_cast<size_t>(t - 1)],
                          gt.joints_r[static_cast<size_t>(t)],
                          gt.joints_r[static_cast<size_t>(t + 1)]};
      const PointSeq pw_l{pred.joints_l[static_cast<size_t>(t - 1)],
                          pred.joints_l[static_cast<size_t>(t)],
                          pred.joints_l[static_cast<size_t>(t + 1)]};
      const PointSeq gw_l{gt.joints_l[static_cast<size_t>(t - 1)],
                          gt.joints_l[static_cast<size_t>(t)],
                          gt.joints_l[static_cast<size_t>(t + 1)]};
      const Scalar v = 0.5 * (accel_error(pw_r, gw_r, fps) + accel_error(pw_l, gw_l, fps));
      values.push_back(v);
      report.per_frame_accel_mm_s2.push_back({t, v});
    }
    if (!values.empty()) {
      Scalar sum = 0.0;
      for (const Scalar v : values) sum += v;
      report.accel_err_mm_s2 = sum / static_cast<Scalar>(values.size());
    }
  }

  // Penetration is evaluated on the prediction over every frame.
  {
    std::vector<Scalar> depths(static_cast<size_t>(frames), 0.0);
    parallel_for(frames, threads, [&](int t) {
      const TriMesh mr = build_mesh(pred.vertices_r[static_cast<size_t>(t)], model_r.faces);
      const TriMesh ml = build_mesh(pred.vertices_l[static_cast<size_t>(t)], model_l.faces);
      depths[static_cast<size_t>(t)] = penetration_report(mr, ml).max_depth;
    });
    Scalar sum = 0.0;
    for (int t = 0; t < frames; ++t) {
      const Scalar mm = depths[static_cast<size_t>(t)] * kMetersToMillimeters;
      report.per_frame_mmpd_mm.push_back({t, mm});
      sum += mm;
    }
    report.mmpd_mm = sum / static_cast<Scalar>(frames);
  }
  return report;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& pred_path,
                 const std::string& gt_path) {
  const RunConfig cfg = load_config(g);
  const auto [model_r, model_l] = load_models(cfg);
  const HandParamsSequence pred_seq = read_sequence_file(pred_path);
  const HandParamsSequence gt_seq = read_sequence_file(gt_path);
  if (pred_seq.frame_count() != gt_seq.frame_count()) {
    throw ContractError("evaluate: '" + pred_path + "' has " +
                        std::to_string(pred_seq.frame_count()) + " frames but '" +
                        gt_path + "' has " + std::to_string(gt_seq.frame_count()));
  }

  const FrameArrays pred = realize_sequence(pred_seq, model_r, model_l, g.threads);
  const FrameArrays gt = realize_sequence(gt_seq, model_r, model_l, g.threads);
  const MetricsReport report =
      build_metrics_report(pred, gt, model_r, model_l, cfg, gt_seq.fps, g.threads);

  write_metrics_table(out_path(g, "metrics.csv"), report);
  write_metrics_per_frame_csv(out_path(g, "metrics_per_frame.csv"), report,
                              pred_seq.frame_count());
  write_pck_csv(out_path(g, "pck_curve.csv"), report.pck_curve);

  std::printf("mpjpe_mm %s\n",
              report.mpjpe_mm ? format_number(*report.mpjpe_mm).c_str() : "n/a");
  std::printf("mmpd_mm %s\n", format_number(report.mmpd_mm).c_str());
  return 0;
}

int cmd_collide(const GlobalOptions& g, const std::string& seq_path, bool export_obj) {
  const RunConfig cfg = load_config(g);
  const auto [model_r, model_l] = load_models(cfg);
  const HandParamsSequence seq = read_sequence_file(seq_path);

  std::vector<CollisionReport> reports(static_cast<size_t>(seq.frame_count()));
  std::vector<Points> verts_r(reports.size()), verts_l(reports.size());
  parallel_for(seq.frame_count(), g.threads, [&](int t) {
    const SequenceFrame& f = seq.frames[static_cast<size_t>(t)];
    auto [right, left] =
        compose_two_hands(forward(model_r, {f.theta_r, f.beta_r, Vec3::Zero()}),
                          forward(model_l, {f.theta_l, f.beta_l, Vec3::Zero()}),
                          f.translation_c);
    const TriMesh mr = build_mesh(right.vertices, model_r.faces);
    const TriMesh ml = build_mesh(left.vertices, model_l.faces);
    reports[static_cast<size_t>(t)] = penetration_report(mr, ml);
    verts_r[static_cast<size_t>(t)] = right.vertices;
    verts_l[static_cast<size_t>(t)] = left.vertices;
  });

  write_collision_csv(out_path(g, "collision.csv"), reports);
  if (export_obj) {
    for (int t = 0; t < seq.frame_count(); ++t) {
      char name[64];
      std::snprintf(name, sizeof(name), "frame_%04d_right.obj", t);
      write_obj(out_path(g, name), verts_r[static_cast<size_t>(t)], model_r.faces);
      std::snprintf(name, sizeof(name), "frame_%04d_left.obj", t);
      write_obj(out_path(g, name), verts_l[static_cast<size_t>(t)], model_l.faces);
    }
  }

  Scalar mmpd_mm = 0.0;
  for (const CollisionReport& r : reports) mmpd_mm += r.max_depth * kMetersToMillimeters;
  mmpd_mm /= static_cast<Scalar>(reports.size());
  std::printf("mmpd_mm %s\n", format_number(mmpd_mm).c_str());
  return 0;
}

int cmd_refine(const GlobalOptions& g, const std::string& seq_path) {
  const RunConfig cfg = load_config(g);
  const auto [model_r, model_l] = load_models(cfg);
  const HandParamsSequence init = read_sequence_file(seq_path);
  const RefineConfig rc = make_refine_config(cfg, g.threads);

  try {
    auto [refined, trace] = refine_sequence(model_r, model_l, init, rc);
    write_sequence_file(out_path(g, "refined.seq"), refined);
    write_trace_csv(out_path(g, "trace.csv"), trace);
    const Scalar mmpd1 = sequence_mmpd_mm(model_r, model_l, refined, g.threads);
    std::printf("loss_initial %s\n", format_number(trace.initial_total).c_str());
    if (!trace.records.empty()) {
      std::printf("loss_final %s\n", format_number(trace.records.back().total).c_str());
    }
    std::printf("mmpd_initial_mm %s\n", format_number(trace.initial_mmpd_mm).c_str());
    std::printf("mmpd_final_mm %s\n", format_number(mmpd1).c_str());
    return 0;
  } catch (const RefineDivergedError& e) {
    write_trace_csv(out_path(g, "trace.csv"), e.trace);
    std::fprintf(stderr, "error: %s (trace written)\n", e.what());
    return kExitDivergence;
  }
}

int cmd_synth(const GlobalOptions& g, const std::string& scenario_name, int frames,
              Scalar noise) {
  const RunConfig cfg = load_config(g);
  const auto [model_r, model_l] = load_models(cfg);
  const Scenario scenario = parse_scenario(scenario_name);
  const HandParamsSequence seq =
      synthesize_sequence(model_r, model_l, scenario, frames, g.seed, noise);
  write_sequence_file(out_path(g, "sequence.seq"), seq);
  // Ship the models alongside so downstream commands can reference files.
  write_model_file(out_path(g, "model_right.txt"), model_r);
  write_model_file(out_path(g, "model_left.txt"), model_l);
  std::printf("frames %d\n", seq.frame_count());
  return 0;
}

int cmd_encode(const GlobalOptions& g, const std::string& features_path,
               const std::string& weights_path, int c3, int heads) {
  const FeatureFile features = read_feature_file(features_path);
  const int c1 = static_cast<int>(features.right.cols());
  const int c2 = static_cast<int>(features.global_2.cols());

  EncoderWeights weights;
  if (!weights_path.empty()) {
    weights = read_encoder_weights(weights_path);
  } else {
    weights = make_encoder_weights({c1, c2, c3}, {c1, c2}, heads, g.seed);
    write_encoder_weights(out_path(g, "encoder_weights.txt"), weights);
  }

  const EncoderResult result = encoder_forward(features.right, features.left,
                                               features.global_1, features.global_2, weights);
  write_encoded_features(out_path(g, "encoded.txt"), result.right, result.left);

  for (size_t b = 0; b < result.maps.size(); ++b) {
    const AttentionMaps& maps = result.maps[b];
    for (size_t h = 0; h < maps.mhsa.size(); ++h) {
      char name[64];
      std::snprintf(name, sizeof(name), "attention_block%zu_mhsa_head%zu.csv", b, h);
      write_matrix_csv(out_path(g, name), maps.mhsa[h]);
      std::snprintf(name, sizeof(name), "attention_block%zu_mhca_r_head%zu.csv", b, h);
      write_matrix_csv(out_path(g, name), maps.mhca_r[h]);
      std::snprintf(name, sizeof(name), "attention_block%zu_mhca_l_head%zu.csv", b, h);
      write_matrix_csv(out_path(g, name), maps.mhca_l[h]);
    }
  }
  std::printf("encoded %ldx%ld\n", static_cast<long>(result.right.rows()),
              static_cast<long>(result.right.cols()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-hand sequence geometry toolkit"};
  app.require_subcommand(1);
  app.fallthrough(true);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Run configuration file");
  app.add_option("--seed", g.seed, "Seed for generators");
  app.add_option("--threads", g.threads, "Worker threads for per-frame work")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_option("--model-right", g.model_right_path, "Right hand model file");
  app.add_option("--model-left", g.model_left_path, "Left hand model file");

  std::string pred_path, gt_path, seq_path, scenario, features_path, weights_path;
  bool export_obj = false;
  int frames = 10;
  Scalar noise = 0.02;
  int c3 = 8;
  int heads = 4;

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a prediction against ground truth");
  evaluate->add_option("--pred", pred_path, "Predicted sequence file")->required();
  evaluate->add_option("--gt", gt_path, "Ground-truth sequence file")->required();

  CLI::App* collide = app.add_subcommand("collide", "Per-frame interpenetration report");
  collide->add_option("--seq", seq_path, "Sequence file")->required();
  collide->add_flag("--export-obj", export_obj, "Write per-frame OBJ mesh pairs");

  CLI::App* refine = app.add_subcommand("refine", "Optimize a sequence against the objective");
  refine->add_option("--seq", seq_path, "Sequence file")->required();

  CLI::App* synth = app.add_subcommand("synth", "Generate a deterministic test sequence");
  synth->add_option("scenario", scenario, "disjoint | colliding | jittery")->required();
  synth->add_option("frames", frames, "Number of frames")->check(CLI::Range(3, 100000));
  synth->add_option("seed", g.seed, "Generator seed (same as --seed)");
  synth->add_option("--noise", noise, "Jitter scale for the jittery scenario");

  CLI::App* encode = app.add_subcommand("encode", "Run the temporal encoder forward pass");
  encode->add_option("--features", features_path, "Feature file")->required();
  encode->add_option("--weights", weights_path, "Encoder weights file (default: seeded init)");
  encode->add_option("--c3", c3, "Output channel width when seeding weights");
  encode->add_option("--heads", heads, "Attention heads when seeding weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (evaluate->parsed()) return cmd_evaluate(g, pred_path, gt_path);
    if (collide->parsed()) return cmd_collide(g, seq_path, export_obj);
    if (refine->parsed()) return cmd_refine(g, seq_path);
    if (synth->parsed()) return cmd_synth(g, scenario, frames, noise);
    if (encode->parsed()) return cmd_encode(g, features_path, weights_path, c3, heads);
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  }
  return kExitUsage;
}
