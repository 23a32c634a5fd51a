#include "handseq/io.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "handseq/errors.hpp"

namespace handseq {

namespace {

using RowMajorX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ParseError("failed while writing '" + path + "'");
}

bool is_key_line(const std::string& line, std::string& key, std::string& rest) {
  size_t i = 0;
  while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) ||
                             line[i] == '_' || line[i] == '.')) {
    ++i;
  }
  if (i == 0 || i >= line.size() || line[i] != ':') return false;
  key = line.substr(0, i);
  rest = line.substr(i + 1);
  return true;
}

void append_tokens(std::vector<std::string>& tokens, const std::string& text) {
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
}

Scalar parse_scalar_token(const std::string& tok, const std::string& key) {
  try {
    size_t used = 0;
    const Scalar v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("field '" + key + "': bad numeric token '" + tok + "'");
  }
}

long parse_int_token(const std::string& tok, const std::string& key) {
  try {
    size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("field '" + key + "': bad integer token '" + tok + "'");
  }
}

const DocField& require(const TextDoc& doc, const std::string& key) {
  const DocField* f = doc.find(key);
  if (f == nullptr) throw ParseError("missing field '" + key + "'");
  return *f;
}

class Writer {
 public:
  void key_int(const std::string& key, long v) {
    out_ += key;
    out_ += ": ";
    out_ += format_int(v);
    out_ += '\n';
  }
  void key_string(const std::string& key, const std::string& v) {
    out_ += key;
    out_ += ":";
    if (!v.empty()) {
      out_ += ' ';
      out_ += v;
    }
    out_ += '\n';
  }
  void key_scalar(const std::string& key, Scalar v) {
    out_ += key;
    out_ += ": ";
    out_ += format_number(v);
    out_ += '\n';
  }
  // Row-major traversal of any Eigen matrix.
  template <typename Derived>
  void key_matrix(const std::string& key, const Eigen::MatrixBase<Derived>& m) {
    out_ += key;
    out_ += ':';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out_ += ' ';
        if constexpr (std::is_integral_v<typename Derived::Scalar>) {
          out_ += format_int(static_cast<long>(m(r, c)));
        } else {
          out_ += format_number(m(r, c));
        }
      }
    }
    out_ += '\n';
  }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

}  // namespace

std::string format_number(Scalar value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_int(long value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%ld", value);
  return buf;
}

const DocField* TextDoc::find(const std::string& key) const {
  for (const DocField& f : fields) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

long TextDoc::get_int(const std::string& key) const {
  const DocField& f = require(*this, key);
  if (f.tokens.size() != 1) {
    throw ParseError("field '" + key + "': expected one integer, got " +
                     std::to_string(f.tokens.size()) + " tokens");
  }
  return parse_int_token(f.tokens[0], key);
}

Scalar TextDoc::get_scalar(const std::string& key) const {
  const DocField& f = require(*this, key);
  if (f.tokens.size() != 1) {
    throw ParseError("field '" + key + "': expected one number, got " +
                     std::to_string(f.tokens.size()) + " tokens");
  }
  return parse_scalar_token(f.tokens[0], key);
}

std::string TextDoc::get_string(const std::string& key) const {
  const DocField& f = require(*this, key);
  if (f.tokens.size() > 1) {
    throw ParseError("field '" + key + "': expected one token");
  }
  return f.tokens.empty() ? std::string() : f.tokens[0];
}

VecX TextDoc::get_array(const std::string& key, int expected_size) const {
  const DocField& f = require(*this, key);
  if (static_cast<int>(f.tokens.size()) != expected_size) {
    throw ParseError("field '" + key + "': expected " + std::to_string(expected_size) +
                     " values, got " + std::to_string(f.tokens.size()));
  }
  VecX v(expected_size);
  for (int i = 0; i < expected_size; ++i) v[i] = parse_scalar_token(f.tokens[i], key);
  return v;
}

TextDoc read_text_doc(const std::string& path) {
  const std::string content = read_file(path);
  TextDoc doc;
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string key, rest;
    if (is_key_line(line, key, rest)) {
      doc.fields.push_back({key, {}});
      append_tokens(doc.fields.back().tokens, rest);
    } else if (!doc.fields.empty()) {
      append_tokens(doc.fields.back().tokens, line);
    } else {
      std::string stray;
      std::istringstream probe(line);
      if (probe >> stray) {
        throw ParseError("'" + path + "': content before the first field");
      }
    }
  }
  return doc;
}

namespace {

MatX doc_matrix(const TextDoc& doc, const std::string& key, int rows, int cols) {
  const VecX flat = doc.get_array(key, rows * cols);
  MatX m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = flat[r * cols + c];
  return m;
}

Points doc_points(const TextDoc& doc, const std::string& key, int rows) {
  return doc_matrix(doc, key, rows, 3);
}

}  // namespace

HandModel read_model_file(const std::string& path) {
  const TextDoc doc = read_text_doc(path);
  const int verts = static_cast<int>(doc.get_int("V"));
  const int face_count = static_cast<int>(doc.get_int("F"));
  const int nodes = static_cast<int>(doc.get_int("K"));
  const int joints = static_cast<int>(doc.get_int("J"));
  const int shapes = static_cast<int>(doc.get_int("B"));
  const int pose_corr = static_cast<int>(doc.get_int("P"));
  const int pca = static_cast<int>(doc.get_int("D_pca"));
  if (verts <= 0 || face_count <= 0 || nodes <= 0 || joints <= 0 || shapes < 0 ||
      pose_corr < 0 || pca < 0) {
    throw ParseError("model dimensions must be positive");
  }

  HandModel model;
  const std::string side = doc.get_string("side");
  if (side == "right") {
    model.side = HandSide::kRight;
  } else if (side == "left") {
    model.side = HandSide::kLeft;
  } else {
    throw ParseError("field 'side': expected 'right' or 'left', got '" + side + "'");
  }

  model.template_vertices = doc_points(doc, "template_vertices", verts);
  {
    const VecX flat = doc.get_array("faces", face_count * 3);
    model.faces.resize(face_count, 3);
    for (int f = 0; f < face_count; ++f)
      for (int c = 0; c < 3; ++c) {
        const Scalar v = flat[f * 3 + c];
        if (v != std::floor(v)) {
          throw ParseError("field 'faces': non-integer index");
        }
        model.faces(f, c) = static_cast<int>(v);
      }
  }
  model.shape_basis =
      shapes > 0 ? doc_matrix(doc, "shape_basis", 3 * verts, shapes) : MatX(3 * verts, 0);
  model.pose_basis =
      pose_corr > 0 ? doc_matrix(doc, "pose_basis", 3 * verts, pose_corr)
                    : MatX(3 * verts, 0);
  model.skin_weights = doc_matrix(doc, "skin_weights", verts, nodes);
  model.joint_regressor = doc_matrix(doc, "joint_regressor", joints, verts);
  {
    const VecX flat = doc.get_array("kinematic_parents", nodes);
    model.kinematic_parents.resize(nodes);
    for (int k = 0; k < nodes; ++k) {
      model.kinematic_parents[k] = static_cast<int>(flat[k]);
    }
  }
  model.pose_pca = pca > 0 ? doc_matrix(doc, "pose_pca", pca, 3 * (nodes - 1)) : MatX();

  validate_model(model);
  return model;
}

void write_model_file(const std::string& path, const HandModel& model) {
  Writer w;
  w.key_string("format", "handseq-model 1");
  w.key_int("V", model.vertex_count());
  w.key_int("F", model.face_count());
  w.key_int("K", model.node_count());
  w.key_int("J", model.joint_count());
  w.key_int("B", model.shape_count());
  w.key_int("P", model.pose_basis.cols());
  w.key_int("D_pca", model.has_pose_pca() ? model.pose_pca.rows() : 0);
  w.key_string("side", model.side == HandSide::kRight ? "right" : "left");
  w.key_matrix("template_vertices", model.template_vertices);
  w.key_matrix("faces", model.faces);
  if (model.shape_count() > 0) w.key_matrix("shape_basis", model.shape_basis);
  if (model.pose_basis.cols() > 0) w.key_matrix("pose_basis", model.pose_basis);
  w.key_matrix("skin_weights", model.skin_weights);
  w.key_matrix("joint_regressor", model.joint_regressor);
  w.key_matrix("kinematic_parents", model.kinematic_parents.transpose());
  if (model.has_pose_pca()) w.key_matrix("pose_pca", model.pose_pca);
  write_file(path, w.str());
}

namespace {

// Sequence files repeat keys per frame; walk the fields with a cursor.
struct FieldCursor {
  const TextDoc& doc;
  size_t pos = 0;

  const DocField* peek() const {
    return pos < doc.fields.size() ? &doc.fields[pos] : nullptr;
  }
  const DocField& expect(const std::string& key) {
    const DocField* f = peek();
    if (f == nullptr || f->key != key) {
      throw ParseError("expected field '" + key + "'" +
                       (f ? " but found '" + f->key + "'" : " but hit end of file"));
    }
    ++pos;
    return *f;
  }
  VecX expect_array(const std::string& key, int n) {
    const DocField& f = expect(key);
    if (static_cast<int>(f.tokens.size()) != n) {
      throw ParseError("field '" + key + "': expected " + std::to_string(n) +
                       " values, got " + std::to_string(f.tokens.size()));
    }
    VecX v(n);
    for (int i = 0; i < n; ++i) v[i] = parse_scalar_token(f.tokens[i], key);
    return v;
  }
};

Points to_points(const VecX& flat) {
  const int n = static_cast<int>(flat.size()) / 3;
  Points p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) = flat.segment(3 * i, 3).transpose();
  return p;
}

}  // namespace

HandParamsSequence read_sequence_file(const std::string& path) {
  const TextDoc doc = read_text_doc(path);
  HandParamsSequence seq;
  seq.fps = doc.get_scalar("fps");
  if (!(seq.fps > 0.0)) throw ParseError("field 'fps': must be positive");
  const int frames = static_cast<int>(doc.get_int("T"));
  if (frames < 1) throw ParseError("field 'T': must be at least 1");
  const int theta_r = static_cast<int>(doc.get_int("theta_r_size"));
  const int beta_r = static_cast<int>(doc.get_int("beta_r_size"));
  const int theta_l = static_cast<int>(doc.get_int("theta_l_size"));
  const int beta_l = static_cast<int>(doc.get_int("beta_l_size"));
  const int gt_joints = static_cast<int>(doc.get_int("gt_joints"));
  const int gt_vertices = static_cast<int>(doc.get_int("gt_vertices"));

  FieldCursor cur{doc};
  while (cur.peek() && cur.peek()->key != "frame") ++cur.pos;

  for (int t = 0; t < frames; ++t) {
    const DocField& marker = cur.expect("frame");
    if (marker.tokens.size() != 1 ||
        parse_int_token(marker.tokens[0], "frame") != t) {
      throw ParseError("frame markers must count 0.." + std::to_string(frames - 1));
    }
    SequenceFrame f;
    const VecX lab = cur.expect_array("labeled", 1);
    f.labeled = lab[0] != 0.0;
    f.theta_r = cur.expect_array("theta_r", theta_r);
    f.beta_r = cur.expect_array("beta_r", beta_r);
    f.theta_l = cur.expect_array("theta_l", theta_l);
    f.beta_l = cur.expect_array("beta_l", beta_l);
    f.translation_c = cur.expect_array("translation_c", 3);
    if (gt_joints > 0) {
      f.gt_joints_r = to_points(cur.expect_array("gt_joints_r", 3 * gt_joints));
      f.gt_joints_l = to_points(cur.expect_array("gt_joints_l", 3 * gt_joints));
    }
    if (gt_vertices > 0) {
      f.gt_vertices_r = to_points(cur.expect_array("gt_vertices_r", 3 * gt_vertices));
      f.gt_vertices_l = to_points(cur.expect_array("gt_vertices_l", 3 * gt_vertices));
    }
    if (!f.theta_r.allFinite() || !f.beta_r.allFinite() || !f.theta_l.allFinite() ||
        !f.beta_l.allFinite() || !f.translation_c.allFinite()) {
      throw ParseError("frame " + std::to_string(t) + ": non-finite values");
    }
    seq.frames.push_back(std::move(f));
  }
  if (cur.peek() != nullptr) {
    throw ParseError("unexpected trailing field '" + cur.peek()->key + "'");
  }
  return seq;
}

void write_sequence_file(const std::string& path, const HandParamsSequence& seq) {
  if (seq.frames.empty()) throw ContractError("cannot write an empty sequence");
  const SequenceFrame& first = seq.frames[0];
  const int gt_joints = first.gt_joints_r ? static_cast<int>(first.gt_joints_r->rows()) : 0;
  const int gt_vertices =
      first.gt_vertices_r ? static_cast<int>(first.gt_vertices_r->rows()) : 0;

  Writer w;
  w.key_string("format", "handseq-sequence 1");
  w.key_scalar("fps", seq.fps);
  w.key_int("T", seq.frame_count());
  w.key_int("theta_r_size", first.theta_r.size());
  w.key_int("beta_r_size", first.beta_r.size());
  w.key_int("theta_l_size", first.theta_l.size());
  w.key_int("beta_l_size", first.beta_l.size());
  w.key_int("gt_joints", gt_joints);
  w.key_int("gt_vertices", gt_vertices);
  for (int t = 0; t < seq.frame_count(); ++t) {
    const SequenceFrame& f = seq.frames[static_cast<size_t>(t)];
    if (f.theta_r.size() != first.theta_r.size() ||
        f.beta_r.size() != first.beta_r.size() ||
        f.theta_l.size() != first.theta_l.size() ||
        f.beta_l.size() != first.beta_l.size() ||
        (f.gt_joints_r ? f.gt_joints_r->rows() : 0) != gt_joints ||
        (f.gt_vertices_r ? f.gt_vertices_r->rows() : 0) != gt_vertices) {
      throw ContractError("sequence dimensions change at frame " + std::to_string(t));
    }
    w.key_int("frame", t);
    w.key_int("labeled", f.labeled ? 1 : 0);
    w.key_matrix("theta_r", f.theta_r.transpose());
    w.key_matrix("beta_r", f.beta_r.transpose());
    w.key_matrix("theta_l", f.theta_l.transpose());
    w.key_matrix("beta_l", f.beta_l.transpose());
    w.key_matrix("translation_c", f.translation_c.transpose());
    if (gt_joints > 0) {
      w.key_matrix("gt_joints_r", *f.gt_joints_r);
      w.key_matrix("gt_joints_l", *f.gt_joints_l);
    }
    if (gt_vertices > 0) {
      w.key_matrix("gt_vertices_r", *f.gt_vertices_r);
      w.key_matrix("gt_vertices_l", *f.gt_vertices_l);
    }
  }
  write_file(path, w.str());
}

FeatureFile read_feature_file(const std::string& path) {
  const TextDoc doc = read_text_doc(path);
  const int frames = static_cast<int>(doc.get_int("T"));
  const int c1 = static_cast<int>(doc.get_int("C1"));
  const int c2 = static_cast<int>(doc.get_int("C2"));
  if (frames < 1 || c1 < 1 || c2 < 1) throw ParseError("feature dims must be positive");
  FeatureFile f;
  f.right = doc_matrix(doc, "right", frames, c1);
  f.left = doc_matrix(doc, "left", frames, c1);
  f.global_1 = doc_matrix(doc, "global_1", frames, c1);
  f.global_2 = doc_matrix(doc, "global_2", frames, c2);
  return f;
}

void write_feature_file(const std::string& path, const FeatureFile& features) {
  Writer w;
  w.key_string("format", "handseq-features 1");
  w.key_int("T", features.right.rows());
  w.key_int("C1", features.right.cols());
  w.key_int("C2", features.global_2.cols());
  w.key_matrix("right", features.right);
  w.key_matrix("left", features.left);
  w.key_matrix("global_1", features.global_1);
  w.key_matrix("global_2", features.global_2);
  write_file(path, w.str());
}

void write_encoded_features(const std::string& path, const MatX& right, const MatX& left) {
  Writer w;
  w.key_string("format", "handseq-encoded 1");
  w.key_int("T", right.rows());
  w.key_int("C", right.cols());
  w.key_matrix("right", right);
  w.key_matrix("left", left);
  write_file(path, w.str());
}

EncoderWeights read_encoder_weights(const std::string& path) {
  const TextDoc doc = read_text_doc(path);
  const int blocks = static_cast<int>(doc.get_int("blocks"));
  const int heads = static_cast<int>(doc.get_int("heads"));
  if (blocks != 2) throw ParseError("field 'blocks': expected 2");
  const VecX channels = doc.get_array("channels", blocks + 1);
  const VecX global_channels = doc.get_array("global_channels", blocks);

  EncoderWeights weights;
  weights.positional_encoding = doc.get_int("positional_encoding") != 0;
  for (int b = 0; b < blocks; ++b) {
    const int c_in = static_cast<int>(channels[b]);
    const int c_out = static_cast<int>(channels[b + 1]);
    const int c_g = static_cast<int>(global_channels[b]);
    const std::string p = "block" + std::to_string(b) + "_";
    TemporalBlockWeights block;
    block.heads = heads;
    block.mhsa = {doc_matrix(doc, p + "mhsa_wq", c_in, c_in),
                  doc_matrix(doc, p + "mhsa_wk", c_in, c_in),
                  doc_matrix(doc, p + "mhsa_wv", c_in, c_in)};
    block.mhca_r = {doc_matrix(doc, p + "mhca_r_wq", c_in, c_in),
                    doc_matrix(doc, p + "mhca_r_wk", c_g, c_in),
                    doc_matrix(doc, p + "mhca_r_wv", c_g, c_in)};
    block.mhca_l = {doc_matrix(doc, p + "mhca_l_wq", c_in, c_in),
                    doc_matrix(doc, p + "mhca_l_wk", c_g, c_in),
                    doc_matrix(doc, p + "mhca_l_wv", c_g, c_in)};
    block.ff = {doc_matrix(doc, p + "ff_w1", c_in, c_in),
                doc_matrix(doc, p + "ff_w2", c_in, c_out)};
    weights.blocks.push_back(std::move(block));
  }
  return weights;
}

void write_encoder_weights(const std::string& path, const EncoderWeights& weights) {
  if (weights.blocks.size() != 2) throw ContractError("encoder weights need two blocks");
  Writer w;
  w.key_string("format", "handseq-encoder 1");
  w.key_int("blocks", 2);
  w.key_int("heads", weights.blocks[0].heads);
  w.key_int("positional_encoding", weights.positional_encoding ? 1 : 0);
  Eigen::Vector3i channels(weights.blocks[0].channels_in(), weights.blocks[1].channels_in(),
                           weights.blocks[1].channels_out());
  w.key_matrix("channels", channels.transpose());
  Eigen::Vector2i global_channels(static_cast<int>(weights.blocks[0].mhca_r.wk.rows()),
                                  static_cast<int>(weights.blocks[1].mhca_r.wk.rows()));
  w.key_matrix("global_channels", global_channels.transpose());
  for (int b = 0; b < 2; ++b) {
    const TemporalBlockWeights& block = weights.blocks[static_cast<size_t>(b)];
    const std::string p = "block" + std::to_string(b) + "_";
    w.key_matrix(p + "mhsa_wq", block.mhsa.wq);
    w.key_matrix(p + "mhsa_wk", block.mhsa.wk);
    w.key_matrix(p + "mhsa_wv", block.mhsa.wv);
    w.key_matrix(p + "mhca_r_wq", block.mhca_r.wq);
    w.key_matrix(p + "mhca_r_wk", block.mhca_r.wk);
    w.key_matrix(p + "mhca_r_wv", block.mhca_r.wv);
    w.key_matrix(p + "mhca_l_wq", block.mhca_l.wq);
    w.key_matrix(p + "mhca_l_wk", block.mhca_l.wk);
    w.key_matrix(p + "mhca_l_wv", block.mhca_l.wv);
    w.key_matrix(p + "ff_w1", block.ff.w1);
    w.key_matrix(p + "ff_w2", block.ff.w2);
  }
  write_file(path, w.str());
}

RunConfig read_config_file(const std::string& path) {
  const TextDoc doc = read_text_doc(path);
  RunConfig cfg;
  const auto scalar = [&](const char* key, Scalar& dst) {
    if (doc.has(key)) dst = doc.get_scalar(key);
  };
  const auto integer = [&](const char* key, int& dst) {
    if (doc.has(key)) dst = static_cast<int>(doc.get_int(key));
  };
  scalar("lambda_j", cfg.weights.lambda_j);
  scalar("lambda_i", cfg.weights.lambda_i);
  scalar("lambda_m", cfg.weights.lambda_m);
  scalar("lambda_r", cfg.weights.lambda_r);
  scalar("lambda_consist", cfg.weights.lambda_consist);
  scalar("lambda_beta", cfg.weights.lambda_beta);
  scalar("alpha_m", cfg.weights.alpha);
  scalar("anchor_weight", cfg.anchor_weight);
  integer("max_iters", cfg.max_iters);
  scalar("step_size", cfg.step_size);
  scalar("moment_decay_1", cfg.moment_decay_1);
  scalar("moment_decay_2", cfg.moment_decay_2);
  scalar("tol", cfg.tol);
  integer("mask_refresh_every", cfg.mask_refresh_every);
  if (doc.has("freeze_translation")) {
    cfg.freeze_translation = doc.get_int("freeze_translation") != 0;
  }
  integer("root_index", cfg.root_index);
  scalar("pck_max_mm", cfg.pck_max_mm);
  integer("pck_steps", cfg.pck_steps);
  integer("default_sequence_length", cfg.default_sequence_length);
  integer("full_hand_vertices", cfg.full_hand_vertices);
  integer("full_hand_joints", cfg.full_hand_joints);
  if (doc.has("model_right_path")) cfg.model_right_path = doc.get_string("model_right_path");
  if (doc.has("model_left_path")) cfg.model_left_path = doc.get_string("model_left_path");
  if (cfg.max_iters < 1) throw ParseError("field 'max_iters': must be at least 1");
  if (!(cfg.step_size > 0.0)) throw ParseError("field 'step_size': must be positive");
  return cfg;
}

void write_config_file(const std::string& path, const RunConfig& config) {
  Writer w;
  w.key_string("format", "handseq-config 1");
  w.key_scalar("lambda_j", config.weights.lambda_j);
  w.key_scalar("lambda_i", config.weights.lambda_i);
  w.key_scalar("lambda_m", config.weights.lambda_m);
  w.key_scalar("lambda_r", config.weights.lambda_r);
  w.key_scalar("lambda_consist", config.weights.lambda_consist);
  w.key_scalar("lambda_beta", config.weights.lambda_beta);
  w.key_scalar("alpha_m", config.weights.alpha);
  w.key_scalar("anchor_weight", config.anchor_weight);
  w.key_int("max_iters", config.max_iters);
  w.key_scalar("step_size", config.step_size);
  w.key_scalar("moment_decay_1", config.moment_decay_1);
  w.key_scalar("moment_decay_2", config.moment_decay_2);
  w.key_scalar("tol", config.tol);
  w.key_int("mask_refresh_every", config.mask_refresh_every);
  w.key_int("freeze_translation", config.freeze_translation ? 1 : 0);
  w.key_int("root_index", config.root_index);
  w.key_scalar("pck_max_mm", config.pck_max_mm);
  w.key_int("pck_steps", config.pck_steps);
  w.key_int("default_sequence_length", config.default_sequence_length);
  w.key_int("full_hand_vertices", config.full_hand_vertices);
  w.key_int("full_hand_joints", config.full_hand_joints);
  w.key_string("model_right_path", config.model_right_path);
  w.key_string("model_left_path", config.model_left_path);
  write_file(path, w.str());
}

RefineConfig make_refine_config(const RunConfig& config, int threads) {
  RefineConfig rc;
  rc.weights = config.weights;
  rc.anchor_weight = config.anchor_weight;
  rc.max_iters = config.max_iters;
  rc.step_size = config.step_size;
  rc.beta1 = config.moment_decay_1;
  rc.beta2 = config.moment_decay_2;
  rc.tol = config.tol;
  rc.mask_refresh_every = config.mask_refresh_every;
  rc.freeze_translation = config.freeze_translation;
  rc.threads = threads;
  return rc;
}

void write_obj(const std::string& path, const Points& vertices, const Faces& faces) {
  std::string out;
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    out += "v " + format_number(vertices(v, 0)) + ' ' + format_number(vertices(v, 1)) +
           ' ' + format_number(vertices(v, 2)) + '\n';
  }
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    out += "f " + format_int(faces(f, 0) + 1) + ' ' + format_int(faces(f, 1) + 1) + ' ' +
           format_int(faces(f, 2) + 1) + '\n';
  }
  write_file(path, out);
}

void read_obj(const std::string& path, Points& vertices, Faces& faces) {
  const std::string content = read_file(path);
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> tris;
  std::istringstream lines(content);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string head;
    if (!(ss >> head)) continue;
    if (head == "v") {
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z())) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad vertex line");
      }
      verts.push_back(v);
    } else if (head == "f") {
      Eigen::Vector3i f;
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        if (!(ss >> tok)) {
          throw ParseError(path + ":" + std::to_string(line_no) + ": bad face line");
        }
        const size_t slash = tok.find('/');
        if (slash != std::string::npos) tok.resize(slash);
        f[i] = static_cast<int>(parse_int_token(tok, "f")) - 1;
      }
      tris.push_back(f);
    }
  }
  vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) {
    vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  }
  faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) {
    faces.row(static_cast<Eigen::Index>(i)) = tris[i].transpose();
  }
}

namespace {

std::string opt_number(const std::optional<Scalar>& v) {
  return v.has_value() ? format_number(*v) : "n/a";
}

}  // namespace

void write_metrics_table(const std::string& path, const MetricsReport& report) {
  std::string out = "metric,value,unit\n";
  out += "mpjpe," + opt_number(report.mpjpe_mm) + ",mm\n";
  out += "pa_mpjpe," + opt_number(report.pa_mpjpe_mm) + ",mm\n";
  out += "mpvpe," + opt_number(report.mpvpe_mm) + ",mm\n";
  out += "pck_auc," + opt_number(report.auc) + ",ratio\n";
  out += "accel_err," + opt_number(report.accel_err_mm_s2) + ",mm/s^2\n";
  out += "mmpd," + format_number(report.mmpd_mm) + ",mm\n";
  write_file(path, out);
}

void write_metrics_per_frame_csv(const std::string& path, const MetricsReport& report,
                                 int frame_count) {
  std::vector<std::string> mpjpe(frame_count, "n/a"), mpjpe_r(frame_count, "n/a"),
      mpjpe_l(frame_count, "n/a"), pa(frame_count, "n/a"), mpvpe(frame_count, "n/a"),
      accel(frame_count, "n/a"), mmpd(frame_count, "n/a");
  const auto fill = [&](const std::vector<std::pair<int, Scalar>>& src,
                        std::vector<std::string>& dst) {
    for (const auto& [frame, value] : src) {
      if (frame >= 0 && frame < frame_count) dst[static_cast<size_t>(frame)] = format_number(value);
    }
  };
  fill(report.per_frame_mpjpe_mm, mpjpe);
  fill(report.per_frame_mpjpe_right_mm, mpjpe_r);
  fill(report.per_frame_mpjpe_left_mm, mpjpe_l);
  fill(report.per_frame_pa_mpjpe_mm, pa);
  fill(report.per_frame_mpvpe_mm, mpvpe);
  fill(report.per_frame_accel_mm_s2, accel);
  fill(report.per_frame_mmpd_mm, mmpd);

  std::string out =
      "frame,mpjpe_mm,mpjpe_right_mm,mpjpe_left_mm,pa_mpjpe_mm,mpvpe_mm,accel_mm_s2,mmpd_mm\n";
  for (int t = 0; t < frame_count; ++t) {
    out += format_int(t) + ',' + mpjpe[static_cast<size_t>(t)] + ',' +
           mpjpe_r[static_cast<size_t>(t)] + ',' + mpjpe_l[static_cast<size_t>(t)] + ',' +
           pa[static_cast<size_t>(t)] + ',' + mpvpe[static_cast<size_t>(t)] + ',' +
           accel[static_cast<size_t>(t)] + ',' + mmpd[static_cast<size_t>(t)] + '\n';
  }
  write_file(path, out);
}

void write_pck_csv(const std::string& path, const std::vector<PckPoint>& curve) {
  std::string out = "threshold_mm,fraction\n";
  for (const PckPoint& p : curve) {
    out += format_number(p.threshold_mm) + ',' + format_number(p.fraction) + '\n';
  }
  write_file(path, out);
}

void write_collision_csv(const std::string& path,
                         const std::vector<CollisionReport>& reports) {
  std::string out = "frame,penetrating_count,max_depth_mm,penetrating_vertex_ids\n";
  for (size_t t = 0; t < reports.size(); ++t) {
    out += format_int(static_cast<long>(t)) + ',' +
           format_int(reports[t].penetrating_count) + ',' +
           format_number(reports[t].max_depth * kMetersToMillimeters) + ',';
    bool first = true;
    for (const auto& [vertex, depth] : reports[t].per_vertex_depth) {
      if (!first) out += ' ';
      out += format_int(vertex);
      first = false;
    }
    out += '\n';
  }
  write_file(path, out);
}

void write_trace_csv(const std::string& path, const RefineTrace& trace) {
  std::string out =
      "iteration,total,smooth,inter,reg,joint,anchor,mmpd_mm,max_gradient\n";
  for (const RefineRecord& r : trace.records) {
    out += format_int(r.iteration) + ',' + format_number(r.total) + ',' +
           format_number(r.smooth) + ',' + format_number(r.inter) + ',' +
           format_number(r.reg) + ',' + format_number(r.joint) + ',' +
           format_number(r.anchor) + ',' + format_number(r.mmpd_mm) + ',' +
           format_number(r.max_gradient) + '\n';
  }
  write_file(path, out);
}

void write_matrix_csv(const std::string& path, const MatX& matrix) {
  std::string out;
  for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
    if (c) out += ',';
    out += 'c' + format_int(c);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c) out += ',';
      out += format_number(matrix(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace handseq
