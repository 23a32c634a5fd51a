#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

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
           ("handseq_cli_" + std::to_string(Rng(reinterpret_cast<std::uintptr_t>(this)).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HANDSEQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("synth command") {
  TempDir dir;

  SUBCASE("writes a parseable sequence plus the models used") {
    REQUIRE(run_cli("synth disjoint 10 0 --out " + dir.file("a")) == 0);
    const HandParamsSequence seq = read_sequence_file(dir.file("a/sequence.seq"));
    CHECK(seq.frame_count() == 10);
    const HandModel right = read_model_file(dir.file("a/model_right.txt"));
    CHECK(right.vertex_count() == 66);
    const HandModel left = read_model_file(dir.file("a/model_left.txt"));
    CHECK(left.side == HandSide::kLeft);
  }

  SUBCASE("identical arguments produce identical files") {
    REQUIRE(run_cli("synth jittery 8 5 --out " + dir.file("x")) == 0);
    REQUIRE(run_cli("synth jittery 8 5 --out " + dir.file("y")) == 0);
    CHECK(slurp(dir.file("x/sequence.seq")) == slurp(dir.file("y/sequence.seq")));
  }

  SUBCASE("unknown scenario is a usage-class failure") {
    CHECK(run_cli("synth sideways 10 0 --out " + dir.file("z")) == 3);
  }

  SUBCASE("bad frame count is rejected by the parser") {
    CHECK(run_cli("synth disjoint 1 0 --out " + dir.file("z")) == 2);
  }

  SUBCASE("missing subcommand is a usage error") {
    CHECK(run_cli("") == 2);
  }
}

TEST_CASE("collide command") {
  TempDir dir;
  REQUIRE(run_cli("synth colliding 10 0 --out " + dir.file("s")) == 0);

  SUBCASE("colliding sequence reports nonzero depths on the expected frames") {
    REQUIRE(run_cli("collide --seq " + dir.file("s/sequence.seq") + " --out " + dir.file("c")) ==
            0);
    const std::string csv = slurp(dir.file("c/collision.csv"));
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "frame,penetrating_count,max_depth_mm,penetrating_vertex_ids");
    int nonzero = 0;
    while (std::getline(lines, line)) {
      const size_t c1 = line.find(',');
      const size_t c2 = line.find(',', c1 + 1);
      const size_t c3 = line.find(',', c2 + 1);
      const double depth = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
      if (depth > 0) ++nonzero;
    }
    CHECK(nonzero >= 1);
  }

  SUBCASE("disjoint sequence reports all zeros") {
    REQUIRE(run_cli("synth disjoint 6 0 --out " + dir.file("d")) == 0);
    REQUIRE(run_cli("collide --seq " + dir.file("d/sequence.seq") + " --out " + dir.file("dc")) ==
            0);
    const std::string csv = slurp(dir.file("dc/collision.csv"));
    CHECK(csv.find(",0,0,") != std::string::npos);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      CHECK(line.find(",0,0,") != std::string::npos);
    }
  }

  SUBCASE("obj export round-trips through the mesh builder") {
    REQUIRE(run_cli("collide --seq " + dir.file("s/sequence.seq") + " --export-obj --out " +
                    dir.file("o")) == 0);
    Points v;
    Faces f;
    read_obj(dir.file("o/frame_0004_right.obj"), v, f);
    CHECK(v.rows() == 66);
    CHECK_NOTHROW(build_mesh(v, f));
    read_obj(dir.file("o/frame_0004_left.obj"), v, f);
    CHECK_NOTHROW(build_mesh(v, f));
  }

  SUBCASE("missing sequence file exits with the input-error code") {
    CHECK(run_cli("collide --seq " + dir.file("absent.seq")) == 3);
  }
}

TEST_CASE("refine command") {
  TempDir dir;
  REQUIRE(run_cli("synth colliding 10 0 --out " + dir.file("s")) == 0);

  SUBCASE("removes collisions and writes trace plus refined sequence") {
    REQUIRE(run_cli("refine --seq " + dir.file("s/sequence.seq") + " --out " + dir.file("r")) ==
            0);
    const HandParamsSequence refined = read_sequence_file(dir.file("r/refined.seq"));
    const HandModel right = read_model_file(dir.file("s/model_right.txt"));
    const HandModel left = read_model_file(dir.file("s/model_left.txt"));
    CHECK(sequence_mmpd_mm(right, left, refined) < 0.1);
    const std::string trace = slurp(dir.file("r/trace.csv"));
    CHECK(trace.find("iteration,total") == 0);
  }

  SUBCASE("invalid config is rejected at input-validation time") {
    std::ofstream cfg(dir.file("bad.cfg"));
    cfg << "max_iters: 0\n";
    cfg.close();
    CHECK(run_cli("refine --seq " + dir.file("s/sequence.seq") + " --config " +
                  dir.file("bad.cfg")) == 3);
  }

  SUBCASE("identical reruns write identical outputs") {
    std::ofstream cfg(dir.file("short.cfg"));
    cfg << "max_iters: 25\n";
    cfg.close();
    REQUIRE(run_cli("refine --seq " + dir.file("s/sequence.seq") + " --config " +
                    dir.file("short.cfg") + " --out " + dir.file("r1")) == 0);
    REQUIRE(run_cli("refine --seq " + dir.file("s/sequence.seq") + " --config " +
                    dir.file("short.cfg") + " --out " + dir.file("r2")) == 0);
    CHECK(slurp(dir.file("r1/refined.seq")) == slurp(dir.file("r2/refined.seq")));
    CHECK(slurp(dir.file("r1/trace.csv")) == slurp(dir.file("r2/trace.csv")));
  }
}

TEST_CASE("evaluate command") {
  TempDir dir;
  REQUIRE(run_cli("synth jittery 6 3 --out " + dir.file("p")) == 0);

  SUBCASE("self-comparison is exact") {
    REQUIRE(run_cli("evaluate --pred " + dir.file("p/sequence.seq") + " --gt " +
                    dir.file("p/sequence.seq") + " --out " + dir.file("e")) == 0);
    const std::string table = slurp(dir.file("e/metrics.csv"));
    CHECK(table.find("mpjpe,0,mm") != std::string::npos);
    CHECK(table.find("mpvpe,0,mm") != std::string::npos);
    CHECK(table.find("pck_auc,1,ratio") != std::string::npos);
    CHECK(table.find("accel_err,0,mm/s^2") != std::string::npos);

    const std::string curve = slurp(dir.file("e/pck_curve.csv"));
    CHECK(curve.find("threshold_mm,fraction") == 0);
    CHECK(curve.find("50,1") != std::string::npos);
  }

  SUBCASE("unlabeled ground truth yields n/a joint metrics but a real MMPD") {
    HandParamsSequence gt = read_sequence_file(dir.file("p/sequence.seq"));
    for (SequenceFrame& f : gt.frames) f.labeled = false;
    write_sequence_file(dir.file("unlabeled.seq"), gt);
    REQUIRE(run_cli("evaluate --pred " + dir.file("p/sequence.seq") + " --gt " +
                    dir.file("unlabeled.seq") + " --out " + dir.file("u")) == 0);
    const std::string table = slurp(dir.file("u/metrics.csv"));
    CHECK(table.find("mpjpe,n/a,mm") != std::string::npos);
    CHECK(table.find("pa_mpjpe,n/a,mm") != std::string::npos);
    CHECK(table.find("accel_err,n/a,mm/s^2") != std::string::npos);
    CHECK(table.find("mmpd,0,mm") != std::string::npos);
  }

  SUBCASE("frame count mismatch is an input error") {
    REQUIRE(run_cli("synth jittery 8 3 --out " + dir.file("q")) == 0);
    CHECK(run_cli("evaluate --pred " + dir.file("p/sequence.seq") + " --gt " +
                  dir.file("q/sequence.seq") + " --out " + dir.file("e2")) == 3);
  }
}

TEST_CASE("evaluate golden fixture") {
  TempDir dir;
  const std::string data = std::string(HANDSEQ_TEST_DATA_DIR) + "/golden";
  REQUIRE(run_cli("evaluate --pred " + data + "/pred.seq --gt " + data + "/gt.seq --out " +
                  dir.file("g")) == 0);
  CHECK(slurp(dir.file("g/metrics.csv")) == slurp(data + "/metrics.csv"));
  CHECK(slurp(dir.file("g/metrics_per_frame.csv")) == slurp(data + "/metrics_per_frame.csv"));
  CHECK(slurp(dir.file("g/pck_curve.csv")) == slurp(data + "/pck_curve.csv"));
}

TEST_CASE("encode command") {
  TempDir dir;
  // Build a toy feature file through the library, then run the CLI on it.
  Rng rng(17);
  FeatureFile features;
  features.right = MatX(10, 32);
  features.left = MatX(10, 32);
  features.global_1 = MatX(10, 32);
  features.global_2 = MatX(10, 16);
  for (int t = 0; t < 10; ++t) {
    for (int c = 0; c < 32; ++c) {
      features.right(t, c) = rng.normal();
      features.left(t, c) = rng.normal();
      features.global_1(t, c) = rng.normal();
    }
    for (int c = 0; c < 16; ++c) features.global_2(t, c) = rng.normal();
  }
  write_feature_file(dir.file("features.txt"), features);

  SUBCASE("seeded weights produce outputs, maps, and the weight file") {
    REQUIRE(run_cli("encode --features " + dir.file("features.txt") + " --seed 4 --out " +
                    dir.file("e")) == 0);
    const TextDoc out = read_text_doc(dir.file("e/encoded.txt"));
    CHECK(out.get_int("T") == 10);
    CHECK(out.get_int("C") == 8);

    const std::string attn = slurp(dir.file("e/attention_block0_mhsa_head0.csv"));
    std::istringstream lines(attn);
    std::string line;
    std::getline(lines, line);  // header
    int rows = 0;
    while (std::getline(lines, line)) {
      ++rows;
      double sum = 0.0;
      std::stringstream cells(line);
      std::string cell;
      while (std::getline(cells, cell, ',')) sum += std::stod(cell);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(rows == 20);

    CHECK_NOTHROW(read_encoder_weights(dir.file("e/encoder_weights.txt")));
  }

  SUBCASE("same seed twice gives identical csv outputs") {
    REQUIRE(run_cli("encode --features " + dir.file("features.txt") + " --seed 9 --out " +
                    dir.file("a")) == 0);
    REQUIRE(run_cli("encode --features " + dir.file("features.txt") + " --seed 9 --out " +
                    dir.file("b")) == 0);
    CHECK(slurp(dir.file("a/encoded.txt")) == slurp(dir.file("b/encoded.txt")));
    CHECK(slurp(dir.file("a/attention_block1_mhca_r_head2.csv")) ==
          slurp(dir.file("b/attention_block1_mhca_r_head2.csv")));
  }

  SUBCASE("explicit weight files drive the forward pass") {
    const EncoderWeights weights = make_encoder_weights({32, 16, 8}, {32, 16}, 4, 55);
    write_encoder_weights(dir.file("w.txt"), weights);
    REQUIRE(run_cli("encode --features " + dir.file("features.txt") + " --weights " +
                    dir.file("w.txt") + " --out " + dir.file("we")) == 0);
    const EncoderResult expect = encoder_forward(features.right, features.left,
                                                 features.global_1, features.global_2, weights);
    const TextDoc out = read_text_doc(dir.file("we/encoded.txt"));
    const VecX flat = out.get_array("right", 80);
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < 8; ++c) CHECK(flat[t * 8 + c] == expect.right(t, c));
  }

  SUBCASE("dimension mismatch between weights and features is an input error") {
    const EncoderWeights weights = make_encoder_weights({16, 8, 4}, {16, 8}, 4, 55);
    write_encoder_weights(dir.file("small.txt"), weights);
    CHECK(run_cli("encode --features " + dir.file("features.txt") + " --weights " +
                  dir.file("small.txt") + " --out " + dir.file("x")) == 3);
  }
}
