#include "weakspk/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace weakspk {

namespace {
constexpr double kPoolEps = 1e-8;
}

EmbeddingNet EmbeddingNet::init(const NetConfig& cfg, Rng& rng) {
  if (cfg.input_dim < 1 || cfg.embedding_dim < 1 || cfg.hidden.empty())
    throw ConfigError("embedding net needs input_dim, hidden layers and "
                      "embedding_dim >= 1");
  EmbeddingNet net;
  net.cfg = cfg;
  int prev = cfg.input_dim;
  const auto add_layer = [&](int rows, int cols) {
    Matrix w(rows, cols);
    const double std = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) w(i, j) = std * rng.normal();
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(rows));
  };
  for (int width : cfg.hidden) {
    add_layer(width, prev);
    prev = width;
  }
  add_layer(cfg.embedding_dim, 2 * prev);  // pooling concatenates mean|stddev
  return net;
}

void forward_embed(const EmbeddingNet& net, const Matrix& segment,
                   ForwardTrace& trace) {
  const int num_hidden = net.num_layers() - 1;
  trace.activations.resize(static_cast<size_t>(num_hidden));
  const Matrix* x = &segment;
  for (int l = 0; l < num_hidden; ++l) {
    Matrix& h = trace.activations[static_cast<size_t>(l)];
    h.noalias() = net.weights[static_cast<size_t>(l)] * (*x);
    h.colwise() += net.biases[static_cast<size_t>(l)];
    h = h.array().tanh();
    x = &h;
  }
  const Matrix& top = *x;
  const double t = static_cast<double>(top.cols());
  trace.mean = top.rowwise().mean();
  const Vector var =
      (top.colwise() - trace.mean).array().square().rowwise().sum() / t;
  trace.stddev = (var.array() + kPoolEps).sqrt();
  trace.pooled.resize(2 * top.rows());
  trace.pooled << trace.mean, trace.stddev;
  trace.pre_norm =
      net.weights.back() * trace.pooled + net.biases.back();
  const double norm = std::max(trace.pre_norm.norm(), 1e-12);
  trace.embedding = trace.pre_norm / norm;
}

Vector forward_embed(const EmbeddingNet& net, const Matrix& segment) {
  ForwardTrace trace;
  forward_embed(net, segment, trace);
  return trace.embedding;
}

NetGrads NetGrads::zeros_like(const EmbeddingNet& net) {
  NetGrads g;
  for (const auto& w : net.weights)
    g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : net.biases) g.biases.push_back(Vector::Zero(b.size()));
  return g;
}

void NetGrads::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void NetGrads::add(const NetGrads& other, double scale) {
  for (size_t i = 0; i < weights.size(); ++i) weights[i] += scale * other.weights[i];
  for (size_t i = 0; i < biases.size(); ++i) biases[i] += scale * other.biases[i];
}

bool NetGrads::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

void backward_embed(const EmbeddingNet& net, const Matrix& segment,
                    const ForwardTrace& trace, const Vector& d_embedding,
                    NetGrads& grads) {
  const int num_hidden = net.num_layers() - 1;
  const int top_index = num_hidden - 1;
  const Matrix& top = trace.activations[static_cast<size_t>(top_index)];
  const double t = static_cast<double>(top.cols());

  // z = e / max(||e||, eps):  de = (dz - z (z . dz)) / ||e||.
  const double norm = std::max(trace.pre_norm.norm(), 1e-12);
  const Vector d_pre =
      (d_embedding - trace.embedding * trace.embedding.dot(d_embedding)) /
      norm;

  grads.weights.back().noalias() += d_pre * trace.pooled.transpose();
  grads.biases.back() += d_pre;
  const Vector d_pooled = net.weights.back().transpose() * d_pre;
  const auto d_mean = d_pooled.head(top.rows());
  const auto d_stddev = d_pooled.tail(top.rows());

  // Pooling adjoint: d h_t += d_mean/T + d_stddev * (h_t - mean) / (T * stddev).
  Matrix d_top(top.rows(), top.cols());
  const Vector stddev_scale =
      (d_stddev.array() / (t * trace.stddev.array())).matrix();
  d_top = (top.colwise() - trace.mean).array().colwise() *
          stddev_scale.array();
  d_top.colwise() += d_mean / t;

  // tanh stack, top down.
  Matrix d_h = std::move(d_top);
  for (int l = top_index; l >= 0; --l) {
    const Matrix& h = trace.activations[static_cast<size_t>(l)];
    d_h.array() *= (1.0 - h.array().square());
    const Matrix& below =
        l == 0 ? segment : trace.activations[static_cast<size_t>(l) - 1];
    grads.weights[static_cast<size_t>(l)].noalias() += d_h * below.transpose();
    grads.biases[static_cast<size_t>(l)] += d_h.rowwise().sum();
    if (l > 0)
      d_h = net.weights[static_cast<size_t>(l)].transpose() * d_h;
  }
}

ClassificationHead ClassificationHead::init(int num_classes, int sub_centers,
                                            int embedding_dim, Rng& rng,
                                            std::vector<int> class_ids) {
  if (num_classes < 1 || sub_centers < 1)
    throw ConfigError("classification head needs classes >= 1 and K >= 1");
  ClassificationHead head;
  head.num_classes = num_classes;
  head.sub_centers = sub_centers;
  head.rows.resize(num_classes * sub_centers, embedding_dim);
  for (int i = 0; i < head.rows.rows(); ++i)
    for (int j = 0; j < embedding_dim; ++j) head.rows(i, j) = rng.normal();
  head.renormalize_rows();
  if (class_ids.empty()) {
    head.class_ids.resize(static_cast<size_t>(num_classes));
    for (int j = 0; j < num_classes; ++j)
      head.class_ids[static_cast<size_t>(j)] = j;
  } else {
    if (static_cast<int>(class_ids.size()) != num_classes)
      throw ConfigError("class_ids size does not match num_classes");
    head.class_ids = std::move(class_ids);
  }
  return head;
}

void ClassificationHead::renormalize_rows() {
  for (int i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (n > 1e-12) rows.row(i) /= n;
  }
}

Matrix segment_similarities(const ClassificationHead& head,
                            const Matrix& embeddings,
                            Eigen::MatrixXi* which_sub) {
  const int num_segments = static_cast<int>(embeddings.cols());
  const Matrix all = head.rows * embeddings;  // (J*K) x C
  if (head.sub_centers == 1) {
    if (which_sub) which_sub->setZero(num_segments, head.num_classes);
    return all.transpose();
  }
  Matrix o(num_segments, head.num_classes);
  if (which_sub) which_sub->resize(num_segments, head.num_classes);
  for (int c = 0; c < num_segments; ++c) {
    for (int j = 0; j < head.num_classes; ++j) {
      int best_k = 0;
      double best = all(j * head.sub_centers, c);
      for (int k = 1; k < head.sub_centers; ++k) {
        const double v = all(j * head.sub_centers + k, c);
        if (v > best) {
          best = v;
          best_k = k;
        }
      }
      o(c, j) = best;
      if (which_sub) (*which_sub)(c, j) = best_k;
    }
  }
  return o;
}

namespace {

constexpr char kCheckpointMagic[8] = {'W', 'S', 'P', 'K', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_block(std::ostream& out, const double* data, size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
}
void read_block(std::istream& in, double* data, size_t n) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, 8);
  write_u32(out, kCheckpointVersion);
  write_u64(out, ckpt.seed);
  write_u64(out, ckpt.config_hash);
  write_u32(out, static_cast<uint32_t>(ckpt.net.cfg.input_dim));
  write_u32(out, static_cast<uint32_t>(ckpt.net.cfg.hidden.size()));
  for (int h : ckpt.net.cfg.hidden) write_u32(out, static_cast<uint32_t>(h));
  write_u32(out, static_cast<uint32_t>(ckpt.net.cfg.embedding_dim));
  write_u32(out, static_cast<uint32_t>(ckpt.head.num_classes));
  write_u32(out, static_cast<uint32_t>(ckpt.head.sub_centers));
  for (int id : ckpt.head.class_ids) write_u32(out, static_cast<uint32_t>(id));
  for (size_t l = 0; l < ckpt.net.weights.size(); ++l) {
    write_block(out, ckpt.net.weights[l].data(),
                static_cast<size_t>(ckpt.net.weights[l].size()));
    write_block(out, ckpt.net.biases[l].data(),
                static_cast<size_t>(ckpt.net.biases[l].size()));
  }
  write_block(out, ckpt.head.rows.data(),
              static_cast<size_t>(ckpt.head.rows.size()));
  if (!out) throw FormatError("short checkpoint write: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw MissingArtifactError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());
  const uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + " in " + path.string());
  Checkpoint ckpt;
  ckpt.seed = read_u64(in);
  ckpt.config_hash = read_u64(in);
  NetConfig cfg;
  cfg.input_dim = static_cast<int>(read_u32(in));
  const uint32_t num_hidden = read_u32(in);
  cfg.hidden.resize(num_hidden);
  for (auto& h : cfg.hidden) h = static_cast<int>(read_u32(in));
  cfg.embedding_dim = static_cast<int>(read_u32(in));
  const int num_classes = static_cast<int>(read_u32(in));
  const int sub_centers = static_cast<int>(read_u32(in));
  std::vector<int> class_ids(static_cast<size_t>(num_classes));
  for (auto& id : class_ids) id = static_cast<int>(read_u32(in));

  ckpt.net.cfg = cfg;
  int prev = cfg.input_dim;
  for (int width : cfg.hidden) {
    ckpt.net.weights.emplace_back(width, prev);
    ckpt.net.biases.emplace_back(width);
    prev = width;
  }
  ckpt.net.weights.emplace_back(cfg.embedding_dim, 2 * prev);
  ckpt.net.biases.emplace_back(cfg.embedding_dim);
  for (size_t l = 0; l < ckpt.net.weights.size(); ++l) {
    read_block(in, ckpt.net.weights[l].data(),
               static_cast<size_t>(ckpt.net.weights[l].size()));
    read_block(in, ckpt.net.biases[l].data(),
               static_cast<size_t>(ckpt.net.biases[l].size()));
  }
  ckpt.head.num_classes = num_classes;
  ckpt.head.sub_centers = sub_centers;
  ckpt.head.class_ids = std::move(class_ids);
  ckpt.head.rows.resize(num_classes * sub_centers, cfg.embedding_dim);
  read_block(in, ckpt.head.rows.data(),
             static_cast<size_t>(ckpt.head.rows.size()));
  if (!in) throw FormatError("truncated checkpoint: " + path.string());
  return ckpt;
}

}  // namespace weakspk
