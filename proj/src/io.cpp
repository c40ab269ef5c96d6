#include "weakspk/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace weakspk {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need swaps");

namespace {

constexpr char kFeatureMagic[8] = {'W', 'S', 'P', 'K', 'F', 'E', 'A', 'T'};
constexpr char kLabelMagic[8] = {'W', 'S', 'P', 'K', 'L', 'A', 'B', 'S'};
constexpr uint32_t kFormatVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw MissingArtifactError("cannot open for reading: " + path.string());
  return in;
}

void expect_magic(std::istream& in, const char (&magic)[8],
                  const std::string& what) {
  char buf[8];
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0)
    throw FormatError("bad magic in " + what);
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

std::vector<Chunk> Clustering::all_chunks() const {
  std::vector<Chunk> out;
  for (const auto& cl : clusters) out.insert(out.end(), cl.begin(), cl.end());
  std::sort(out.begin(), out.end(), [](const Chunk& a, const Chunk& b) {
    return a.start_frame < b.start_frame;
  });
  return out;
}

void write_feature_file(const std::filesystem::path& path,
                        const FeatureMatrix& features) {
  auto out = open_out(path);
  out.write(kFeatureMagic, 8);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<uint32_t>(features.num_frames()));
  write_u32(out, static_cast<uint32_t>(features.dim()));
  // Column-major F x T doubles become frame-major float32 on disk.
  std::vector<float> buf(static_cast<size_t>(features.frames.size()));
  const double* src = features.frames.data();
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(src[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw FormatError("short write: " + path.string());
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_magic(in, kFeatureMagic, path.string());
  const uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw FormatError("unsupported feature file version " +
                      std::to_string(version) + " in " + path.string());
  const uint32_t num_frames = read_u32(in);
  const uint32_t dim = read_u32(in);
  if (!in || num_frames == 0 || dim == 0)
    throw FormatError("bad feature header in " + path.string());
  FeatureMatrix f;
  f.frames.resize(dim, num_frames);
  std::vector<float> buf(static_cast<size_t>(num_frames) * dim);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw FormatError("truncated feature file: " + path.string());
  double* dst = f.frames.data();
  for (size_t i = 0; i < buf.size(); ++i) dst[i] = buf[i];
  return f;
}

void write_label_file(const std::filesystem::path& path,
                      const std::vector<int>& labels) {
  auto out = open_out(path);
  out.write(kLabelMagic, 8);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<uint32_t>(labels.size()));
  std::vector<int32_t> buf(labels.begin(), labels.end());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(int32_t)));
  if (!out) throw FormatError("short write: " + path.string());
}

std::vector<int> read_label_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_magic(in, kLabelMagic, path.string());
  const uint32_t version = read_u32(in);
  if (version != kFormatVersion)
    throw FormatError("unsupported label file version in " + path.string());
  const uint32_t n = read_u32(in);
  std::vector<int32_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(int32_t)));
  if (!in) throw FormatError("truncated label file: " + path.string());
  return std::vector<int>(buf.begin(), buf.end());
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  for (const auto& e : entries)
    os << e.recording_id << '\t' << e.weak_label << '\t' << e.path << '\n';
  write_text_file(path, os.str());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.recording_id >> e.weak_label >> e.path))
      throw FormatError("bad manifest line in " + path.string() + ": " + line);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_trials(const std::filesystem::path& path, const TrialList& trials) {
  std::ostringstream os;
  for (const auto& t : trials.trials)
    os << t.enroll_id << '\t' << t.test_id << '\t'
       << (t.is_target ? "target" : "nontarget") << '\n';
  write_text_file(path, os.str());
}

TrialList read_trials(const std::filesystem::path& path) {
  auto in = open_in(path);
  TrialList list;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Trial t;
    std::string label;
    if (!(ls >> t.enroll_id >> t.test_id >> label) ||
        (label != "target" && label != "nontarget"))
      throw FormatError("bad trial line in " + path.string() + ": " + line);
    t.is_target = (label == "target");
    list.trials.push_back(t);
  }
  return list;
}

void write_clusterings(const std::filesystem::path& path,
                       const std::vector<Clustering>& clusterings) {
  std::ostringstream os;
  for (const auto& c : clusterings)
    for (size_t k = 0; k < c.clusters.size(); ++k)
      for (const auto& ch : c.clusters[k])
        os << c.recording_id << '\t' << k << '\t' << ch.start_frame << '\t'
           << ch.end_frame << '\n';
  write_text_file(path, os.str());
}

std::vector<Clustering> read_clusterings(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Clustering> out;
  std::string line;
  int last_rec = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int rec, cluster, start, end;
    if (!(ls >> rec >> cluster >> start >> end))
      throw FormatError("bad clustering line in " + path.string() + ": " +
                        line);
    if (out.empty() || rec != last_rec) {
      out.push_back(Clustering{rec, {}});
      last_rec = rec;
    }
    auto& clusters = out.back().clusters;
    if (cluster >= static_cast<int>(clusters.size()))
      clusters.resize(static_cast<size_t>(cluster) + 1);
    clusters[static_cast<size_t>(cluster)].push_back(
        Chunk{rec, start, end});
  }
  return out;
}

uint64_t fnv1a_hash(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  auto out = open_out(path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("short write: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace weakspk
