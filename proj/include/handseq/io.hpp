#pragma once

#include <string>
#include <vector>

#include "handseq/collision.hpp"
#include "handseq/hand_model.hpp"
#include "handseq/metrics.hpp"
#include "handseq/refiner.hpp"
#include "handseq/sequence.hpp"
#include "handseq/temporal_encoder.hpp"
#include "handseq/types.hpp"

namespace handseq {

// ---------------------------------------------------------------------------
// Key -> numeric-array text documents. One field per `key:` line; values are
// whitespace-separated and may continue over following lines. '#' starts a
// comment. Writers emit doubles with 17 significant digits so that
// write -> read -> write reproduces files byte for byte.
// ---------------------------------------------------------------------------

struct DocField {
  std::string key;
  std::vector<std::string> tokens;
};

struct TextDoc {
  std::vector<DocField> fields;

  const DocField* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }
  // All getters throw ParseError naming the field on a miss or a bad value.
  long get_int(const std::string& key) const;
  Scalar get_scalar(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  VecX get_array(const std::string& key, int expected_size) const;
};

TextDoc read_text_doc(const std::string& path);

std::string format_number(Scalar value);
std::string format_int(long value);

// ---------------------------------------------------------------------------
// Model, sequence, feature, encoder-weight, and config files.
// ---------------------------------------------------------------------------

HandModel read_model_file(const std::string& path);
void write_model_file(const std::string& path, const HandModel& model);

HandParamsSequence read_sequence_file(const std::string& path);
void write_sequence_file(const std::string& path, const HandParamsSequence& seq);

struct FeatureFile {
  MatX right;     // T x C1
  MatX left;      // T x C1
  MatX global_1;  // T x C1
  MatX global_2;  // T x C2
};

FeatureFile read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const FeatureFile& features);

// Encoder outputs: the two refined hand sequences.
void write_encoded_features(const std::string& path, const MatX& right, const MatX& left);

EncoderWeights read_encoder_weights(const std::string& path);
void write_encoder_weights(const std::string& path, const EncoderWeights& weights);

// Run configuration; defaults are the published constants.
struct RunConfig {
  LossWeights weights;
  Scalar anchor_weight = 1.0;
  int max_iters = 500;
  Scalar step_size = 0.01;
  Scalar moment_decay_1 = 0.9;
  Scalar moment_decay_2 = 0.999;
  Scalar tol = 1e-8;
  int mask_refresh_every = 1;
  bool freeze_translation = false;
  int root_index = 0;
  Scalar pck_max_mm = 50.0;
  int pck_steps = 51;
  int default_sequence_length = 10;
  int full_hand_vertices = kFullHandVertexCount;
  int full_hand_joints = kFullHandJointCount;
  std::string model_right_path;
  std::string model_left_path;
};

RunConfig read_config_file(const std::string& path);
void write_config_file(const std::string& path, const RunConfig& config);
RefineConfig make_refine_config(const RunConfig& config, int threads);

// ---------------------------------------------------------------------------
// OBJ meshes and CSV reports.
// ---------------------------------------------------------------------------

void write_obj(const std::string& path, const Points& vertices, const Faces& faces);
void read_obj(const std::string& path, Points& vertices, Faces& faces);

void write_metrics_table(const std::string& path, const MetricsReport& report);
void write_metrics_per_frame_csv(const std::string& path, const MetricsReport& report,
                                 int frame_count);
void write_pck_csv(const std::string& path, const std::vector<PckPoint>& curve);
void write_collision_csv(const std::string& path, const std::vector<CollisionReport>& reports);
void write_trace_csv(const std::string& path, const RefineTrace& trace);
void write_matrix_csv(const std::string& path, const MatX& matrix);

}  // namespace handseq
