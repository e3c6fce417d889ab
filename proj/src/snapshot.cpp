#include "mcflab/snapshot.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mcflab {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'F', 'L', 'A', 'B', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void vec(const Eigen::VectorXd& v) {
    pod<std::uint64_t>(v.size());
    out_.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& s, std::size_t pos = 0) : s_(s), pos_(pos) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto len = pod<std::uint64_t>();
    need(len);
    std::string out = s_.substr(pos_, len);
    pos_ += len;
    return out;
  }
  Eigen::VectorXd vec() {
    const auto len = pod<std::uint64_t>();
    need(len * sizeof(double));
    Eigen::VectorXd v(len);
    std::memcpy(v.data(), s_.data() + pos_, len * sizeof(double));
    pos_ += len * sizeof(double);
    return v;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t k) const {
    if (k > s_.size() - pos_) throw Error(ErrorKind::CorruptSnapshot, "checkpoint payload is truncated");
  }
  const std::string& s_;
  std::size_t pos_;
};

void put_state(Writer& w, const FlowState& st) {
  w.pod<double>(st.time);
  w.pod<std::int32_t>(st.frame == Frame::Mcf ? 0 : 1);
  w.vec(st.graph.r);
  w.vec(st.graph.center);
}

FlowState get_state(Reader& r, const GridPtr<double>& grid) {
  FlowState st;
  st.time = r.pod<double>();
  st.frame = r.pod<std::int32_t>() == 0 ? Frame::Mcf : Frame::Rescaled;
  Eigen::VectorXd rv = r.vec();
  Eigen::VectorXd c = r.vec();
  if (rv.size() != grid->size()) throw Error(ErrorKind::CorruptSnapshot, "checkpoint: node count does not match N");
  st.graph = make_graph(grid, std::move(rv), std::move(c));
  return st;
}

void put_gauge(Writer& w, const Gauge& g) {
  w.pod<double>(g.T);
  w.vec(g.x_star);
}

Gauge get_gauge(Reader& r) {
  Gauge g;
  g.T = r.pod<double>();
  g.x_star = r.vec();
  return g;
}

}  // namespace

std::uint32_t crc32_of(const std::string& bytes) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string encode_checkpoint(const Checkpoint& ck) {
  Writer p;
  p.str(ck.config_json);
  p.pod<std::uint32_t>(ck.config_hash);
  p.pod<std::int32_t>(ck.n);
  p.pod<std::int32_t>(ck.N);
  const auto& c = ck.cursor;
  put_state(p, c.state);
  put_gauge(p, c.gauge);
  p.pod<double>(c.clock);
  p.pod<double>(c.dt);
  p.pod<std::int64_t>(c.snapshot_count);
  p.pod<std::int64_t>(c.gauge_count);
  p.pod<std::int64_t>(ck.raw.accepted_steps);
  p.pod<std::int64_t>(ck.raw.rejected_steps);
  p.pod<std::uint64_t>(ck.raw.snapshots.size());
  for (const auto& s : ck.raw.snapshots) put_state(p, s);
  p.pod<std::uint64_t>(ck.raw.gauges.size());
  for (const auto& g : ck.raw.gauges) put_gauge(p, g);
  put_gauge(p, ck.raw.final_gauge);
  p.pod<std::uint64_t>(ck.raw.steps.size());
  for (const auto& s : ck.raw.steps) {
    for (double v : {s.time, s.dt, s.H_max, s.H_min, s.pinching_max, s.r_min, s.grad_A_max}) p.pod<double>(v);
  }

  Writer out;
  out.bytes().append(kMagic, sizeof(kMagic));
  out.pod<std::uint32_t>(kCheckpointVersion);
  out.pod<std::uint32_t>(crc32_of(p.bytes()));
  out.pod<std::uint64_t>(p.bytes().size());
  out.bytes().append(p.bytes());
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t header = sizeof(kMagic) + 4 + 4 + 8;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorKind::CorruptSnapshot, "not a checkpoint file (bad magic)");
  Reader h(bytes, sizeof(kMagic));
  const auto version = h.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", this build reads " +
                                                std::to_string(kCheckpointVersion));
  const auto crc = h.pod<std::uint32_t>();
  const auto len = h.pod<std::uint64_t>();
  if (len != bytes.size() - header)
    throw Error(ErrorKind::CorruptSnapshot, "checkpoint length " + std::to_string(bytes.size() - header) +
                                                " differs from header " + std::to_string(len));
  const std::string payload = bytes.substr(header);
  const auto actual = crc32_of(payload);
  if (actual != crc) {
    std::ostringstream msg;
    msg << "checkpoint checksum mismatch: stored " << std::hex << crc << ", computed " << actual;
    throw Error(ErrorKind::CorruptSnapshot, msg.str());
  }

  Reader r(payload);
  Checkpoint ck;
  ck.config_json = r.str();
  ck.config_hash = r.pod<std::uint32_t>();
  if (crc32_of(ck.config_json) != ck.config_hash)
    throw Error(ErrorKind::CorruptSnapshot, "checkpoint config hash does not match its config");
  ck.n = r.pod<std::int32_t>();
  ck.N = r.pod<std::int32_t>();
  const auto grid = make_grid<double>(ck.n, ck.N);
  auto& c = ck.cursor;
  c.state = get_state(r, grid);
  c.gauge = get_gauge(r);
  c.clock = r.pod<double>();
  c.dt = r.pod<double>();
  c.snapshot_count = r.pod<std::int64_t>();
  c.gauge_count = r.pod<std::int64_t>();
  ck.raw.frame = Frame::Rescaled;
  ck.raw.accepted_steps = r.pod<std::int64_t>();
  ck.raw.rejected_steps = r.pod<std::int64_t>();
  const auto ns = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < ns; ++i) ck.raw.snapshots.push_back(get_state(r, grid));
  const auto ng = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < ng; ++i) ck.raw.gauges.push_back(get_gauge(r));
  ck.raw.final_gauge = get_gauge(r);
  if (ck.raw.final_gauge.x_star.size() != ck.n + 1 || c.gauge.x_star.size() != ck.n + 1)
    throw Error(ErrorKind::CorruptSnapshot, "checkpoint: gauge dimension does not match n");
  const auto nst = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nst; ++i) {
    StepRecord s;
    s.time = r.pod<double>();
    s.dt = r.pod<double>();
    s.H_max = r.pod<double>();
    s.H_min = r.pod<double>();
    s.pinching_max = r.pod<double>();
    s.r_min = r.pod<double>();
    s.grad_A_max = r.pod<double>();
    ck.raw.steps.push_back(s);
  }
  if (!r.done()) throw Error(ErrorKind::CorruptSnapshot, "checkpoint has trailing bytes");
  return ck;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::Io, "rename " + tmp.string() + " -> " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file_atomic(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace mcflab
