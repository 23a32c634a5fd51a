#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "handseq/errors.hpp"
#include "handseq/io.hpp"
#include "handseq/refiner.hpp"
#include "handseq/rng.hpp"

using namespace handseq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("handseq_io_" + std::to_string(Rng(reinterpret_cast<std::uintptr_t>(this)).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("model file round-trip") {
  TempDir dir;
  const HandModel model = generate_mini_hand(0);
  const std::string path = dir.file("model.txt");
  write_model_file(path, model);

  const HandModel loaded = read_model_file(path);
  CHECK(loaded.side == model.side);
  CHECK(loaded.template_vertices == model.template_vertices);
  CHECK(loaded.faces == model.faces);
  CHECK(loaded.shape_basis == model.shape_basis);
  CHECK(loaded.pose_basis.cols() == model.pose_basis.cols());
  CHECK(loaded.skin_weights == model.skin_weights);
  CHECK(loaded.joint_regressor == model.joint_regressor);
  CHECK(loaded.kinematic_parents == model.kinematic_parents);

  const std::string rewritten = dir.file("model2.txt");
  write_model_file(rewritten, loaded);
  CHECK(slurp(path) == slurp(rewritten));
}

TEST_CASE("model file with a pose pca block survives the round trip") {
  TempDir dir;
  HandModel model = generate_mini_hand(1);
  Rng rng(5);
  model.pose_pca = MatX(3, 3 * (model.node_count() - 1));
  for (int r = 0; r < model.pose_pca.rows(); ++r)
    for (int c = 0; c < model.pose_pca.cols(); ++c) model.pose_pca(r, c) = rng.normal();
  const std::string path = dir.file("pca.txt");
  write_model_file(path, model);
  const HandModel loaded = read_model_file(path);
  CHECK(loaded.pose_pca == model.pose_pca);
  CHECK(loaded.theta_size() == 3);
}

TEST_CASE("model file error reporting") {
  TempDir dir;
  const HandModel model = generate_mini_hand(0);

  SUBCASE("skin weight row violating the sum invariant names the row") {
    HandModel broken = model;
    broken.skin_weights(7, 0) = 0.5;
    const std::string path = dir.file("broken.txt");
    // The writer does not validate; the loader must.
    CHECK_NOTHROW(write_model_file(path, broken));
    try {
      read_model_file(path);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("skin_weights row 7") != std::string::npos);
    }
  }

  SUBCASE("truncated file is a parse error naming the field") {
    const std::string path = dir.file("model.txt");
    write_model_file(path, model);
    std::string content = slurp(path);
    content.resize(content.size() / 2);
    const std::string cut = dir.file("cut.txt");
    spit(cut, content);
    CHECK_THROWS_AS(read_model_file(cut), ParseError);
  }

  SUBCASE("missing field is a parse error") {
    spit(dir.file("empty.txt"), "V: 4\n");
    CHECK_THROWS_AS(read_model_file(dir.file("empty.txt")), ParseError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_model_file(dir.file("nope.txt")), ParseError);
  }

  SUBCASE("bad numeric token") {
    const std::string path = dir.file("model.txt");
    write_model_file(path, model);
    std::string content = slurp(path);
    const size_t pos = content.find("template_vertices:");
    content.insert(content.find(' ', pos) + 1, "fish ");
    // One extra token also breaks the count; both paths are parse errors.
    spit(dir.file("bad.txt"), content);
    CHECK_THROWS_AS(read_model_file(dir.file("bad.txt")), ParseError);
  }
}

TEST_CASE("sequence file round-trip") {
  TempDir dir;
  const HandModel right = generate_mini_hand(0);
  const HandModel left = mirror_model(right);
  HandParamsSequence seq = synthesize_sequence(right, left, Scenario::kColliding, 6, 9);

  SUBCASE("parameters only") {
    const std::string path = dir.file("seq.txt");
    write_sequence_file(path, seq);
    const HandParamsSequence loaded = read_sequence_file(path);
    CHECK(loaded.fps == seq.fps);
    REQUIRE(loaded.frames.size() == seq.frames.size());
    for (size_t t = 0; t < seq.frames.size(); ++t) {
      CHECK(loaded.frames[t].theta_r == seq.frames[t].theta_r);
      CHECK(loaded.frames[t].beta_l == seq.frames[t].beta_l);
      CHECK(loaded.frames[t].translation_c == seq.frames[t].translation_c);
      CHECK(loaded.frames[t].labeled == seq.frames[t].labeled);
      CHECK(!loaded.frames[t].gt_joints_r.has_value());
    }
    const std::string again = dir.file("seq2.txt");
    write_sequence_file(again, loaded);
    CHECK(slurp(path) == slurp(again));
  }

  SUBCASE("with ground-truth arrays") {
    for (SequenceFrame& f : seq.frames) {
      const MeshFrame mr = forward(right, {f.theta_r, f.beta_r, Vec3::Zero()});
      const MeshFrame ml = forward(left, {f.theta_l, f.beta_l, Vec3::Zero()});
      f.gt_joints_r = mr.joints;
      f.gt_joints_l = ml.joints;
      f.gt_vertices_r = mr.vertices;
      f.gt_vertices_l = ml.vertices;
    }
    const std::string path = dir.file("gt.txt");
    write_sequence_file(path, seq);
    const HandParamsSequence loaded = read_sequence_file(path);
    for (size_t t = 0; t < seq.frames.size(); ++t) {
      REQUIRE(loaded.frames[t].gt_joints_r.has_value());
      CHECK(*loaded.frames[t].gt_joints_r == *seq.frames[t].gt_joints_r);
      CHECK(*loaded.frames[t].gt_vertices_l == *seq.frames[t].gt_vertices_l);
    }
    const std::string again = dir.file("gt2.txt");
    write_sequence_file(again, loaded);
    CHECK(slurp(path) == slurp(again));
  }

  SUBCASE("frame marker mismatch is a parse error") {
    const std::string path = dir.file("seq.txt");
    write_sequence_file(path, seq);
    std::string content = slurp(path);
    content.replace(content.find("frame: 1"), 8, "frame: 7");
    spit(dir.file("bad.txt"), content);
    CHECK_THROWS_AS(read_sequence_file(dir.file("bad.txt")), ParseError);
  }
}

TEST_CASE("config file") {
  TempDir dir;

  SUBCASE("defaults match the published constants") {
    const RunConfig cfg;
    CHECK(cfg.weights.lambda_j == 100.0);
    CHECK(cfg.weights.lambda_i == 10.0);
    CHECK(cfg.weights.lambda_m == 1.0);
    CHECK(cfg.weights.lambda_r == 0.1);
    CHECK(cfg.weights.lambda_consist == 1.0);
    CHECK(cfg.weights.lambda_beta == 0.1);
    CHECK(cfg.weights.alpha == 0.02);
    CHECK(cfg.default_sequence_length == 10);
    CHECK(cfg.full_hand_vertices == 778);
    CHECK(cfg.full_hand_joints == 21);
  }

  SUBCASE("write-read-write is byte stable and lossless") {
    RunConfig cfg;
    cfg.weights.lambda_i = 12.5;
    cfg.max_iters = 77;
    cfg.model_right_path = "some/model.txt";
    const std::string path = dir.file("cfg.txt");
    write_config_file(path, cfg);
    const RunConfig loaded = read_config_file(path);
    CHECK(loaded.weights.lambda_i == 12.5);
    CHECK(loaded.max_iters == 77);
    CHECK(loaded.model_right_path == "some/model.txt");
    const std::string again = dir.file("cfg2.txt");
    write_config_file(again, loaded);
    CHECK(slurp(path) == slurp(again));
  }

  SUBCASE("partial configs inherit defaults") {
    spit(dir.file("partial.txt"), "lambda_i: 3.5\n");
    const RunConfig cfg = read_config_file(dir.file("partial.txt"));
    CHECK(cfg.weights.lambda_i == 3.5);
    CHECK(cfg.weights.lambda_j == 100.0);
  }

  SUBCASE("invalid values are rejected") {
    spit(dir.file("bad.txt"), "max_iters: 0\n");
    CHECK_THROWS_AS(read_config_file(dir.file("bad.txt")), ParseError);
  }
}

TEST_CASE("obj round-trip feeds build_mesh") {
  TempDir dir;
  const HandModel model = generate_mini_hand(2);
  const std::string path = dir.file("hand.obj");
  write_obj(path, model.template_vertices, model.faces);

  Points v;
  Faces f;
  read_obj(path, v, f);
  CHECK(v == model.template_vertices);
  CHECK(f == model.faces);
  CHECK_NOTHROW(build_mesh(v, f));

  const std::string again = dir.file("hand2.obj");
  write_obj(again, v, f);
  CHECK(slurp(path) == slurp(again));
}

TEST_CASE("feature and encoder weight files") {
  TempDir dir;
  Rng rng(8);
  FeatureFile features;
  features.right = MatX::Zero(5, 8);
  features.left = MatX::Zero(5, 8);
  features.global_1 = MatX::Zero(5, 8);
  features.global_2 = MatX::Zero(5, 4);
  for (int t = 0; t < 5; ++t) {
    for (int c = 0; c < 8; ++c) {
      features.right(t, c) = rng.normal();
      features.left(t, c) = rng.normal();
      features.global_1(t, c) = rng.normal();
    }
    for (int c = 0; c < 4; ++c) features.global_2(t, c) = rng.normal();
  }

  const std::string fpath = dir.file("features.txt");
  write_feature_file(fpath, features);
  const FeatureFile loaded = read_feature_file(fpath);
  CHECK(loaded.right == features.right);
  CHECK(loaded.global_2 == features.global_2);
  const std::string fpath2 = dir.file("features2.txt");
  write_feature_file(fpath2, loaded);
  CHECK(slurp(fpath) == slurp(fpath2));

  const EncoderWeights weights = make_encoder_weights({8, 4, 2}, {8, 4}, 2, 123);
  const std::string wpath = dir.file("weights.txt");
  write_encoder_weights(wpath, weights);
  const EncoderWeights wloaded = read_encoder_weights(wpath);
  CHECK(wloaded.blocks[0].mhsa.wq == weights.blocks[0].mhsa.wq);
  CHECK(wloaded.blocks[1].ff.w2 == weights.blocks[1].ff.w2);
  CHECK(wloaded.positional_encoding == weights.positional_encoding);
  const std::string wpath2 = dir.file("weights2.txt");
  write_encoder_weights(wpath2, wloaded);
  CHECK(slurp(wpath) == slurp(wpath2));

  // Same fixed weights, same input, same output.
  const EncoderResult a = encoder_forward(features.right, features.left, features.global_1,
                                          features.global_2, weights);
  const EncoderResult b = encoder_forward(loaded.right, loaded.left, loaded.global_1,
                                          loaded.global_2, wloaded);
  CHECK(a.right == b.right);
}

TEST_CASE("csv writers") {
  TempDir dir;

  SUBCASE("metrics table marks missing values") {
    MetricsReport report;
    report.mmpd_mm = 1.25;
    write_metrics_table(dir.file("m.csv"), report);
    const std::string content = slurp(dir.file("m.csv"));
    CHECK(content.find("metric,value,unit\n") == 0);
    CHECK(content.find("mpjpe,n/a,mm") != std::string::npos);
    CHECK(content.find("mmpd,1.25,mm") != std::string::npos);
  }

  SUBCASE("trace csv has one row per record") {
    RefineTrace trace;
    trace.records.push_back({1, 2.0, 0.1, 0.2, 0.3, 0.0, 0.4, 5.0, 1.5});
    trace.records.push_back({2, 1.5, 0.1, 0.1, 0.3, 0.0, 0.4, 2.0, 1.0});
    write_trace_csv(dir.file("t.csv"), trace);
    const std::string content = slurp(dir.file("t.csv"));
    CHECK(content.find("iteration,total") == 0);
    int lines = 0;
    for (const char c : content) lines += c == '\n';
    CHECK(lines == 3);
  }
}
