#include "nnaee/store.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include "nnaee/serialize.hpp"

namespace nnaee::store {

std::uint64_t fnv1a64(const void *data, std::size_t size) {
  const auto *p = static_cast<const unsigned char *>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t> &bytes) {
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

void write_atomic(const fs::path &path, const std::vector<std::uint8_t> &bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), "cannot create directory: " + ec.message());
  }
  const auto tag = std::hash<std::thread::id>{}(std::this_thread::get_id());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(tag);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw IoError(tmp.string(), "write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError(path.string(), "rename failed: " + ec.message());
  }
}

void write_text_atomic(const fs::path &path, const std::string &text) {
  write_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> read_bytes(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return bytes;
}

std::string read_text(const fs::path &path) {
  const auto b = read_bytes(path);
  return {b.begin(), b.end()};
}

namespace {

class Writer {
public:
  void raw(const void *p, std::size_t n) {
    const auto *b = static_cast<const std::uint8_t *>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void magic(const char (&m)[5]) { raw(m, 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string &s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
  Reader(const std::vector<std::uint8_t> &bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  void need(std::size_t n, const char *what) const {
    if (bytes_.size() - pos_ < n)
      throw TruncationError(origin_, std::string("file ends inside ") + what + " (offset " +
                                         std::to_string(pos_) + ", need " + std::to_string(n) +
                                         " bytes, have " + std::to_string(bytes_.size() - pos_) + ")");
  }
  void magic(const char (&m)[5]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw CorruptionError(origin_, std::string("bad magic, expected ") + m);
    pos_ += 4;
  }
  std::uint32_t u32(const char *what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char *what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char *what) { return std::bit_cast<double>(u64(what)); }
  float f32(const char *what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char *what) {
    const auto n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void finish() const {
    if (pos_ != bytes_.size())
      throw CorruptionError(origin_, std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string &origin() const { return origin_; }

private:
  const std::vector<std::uint8_t> &bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_field(const SOSField &field) {
  Writer w;
  w.magic("SOSF");
  w.u32(static_cast<std::uint32_t>(field.rows()));
  w.u32(static_cast<std::uint32_t>(field.cols()));
  w.f64(field.dx);
  w.f64(field.origin_x);
  w.f64(field.origin_y);
  for (double v : field.values.flat()) w.f32(static_cast<float>(v));
  return w.take();
}

SOSField decode_field(const std::vector<std::uint8_t> &bytes, const std::string &origin) {
  Reader r(bytes, origin);
  r.magic("SOSF");
  const auto rows = r.u32("header");
  const auto cols = r.u32("header");
  const double dx = r.f64("header");
  const double ox = r.f64("header");
  const double oy = r.f64("header");
  if (rows == 0 || cols == 0 || !(dx > 0.0))
    throw CorruptionError(origin, "invalid field header");
  r.need(static_cast<std::size_t>(rows) * cols * 4, "field values");
  SOSField f(rows, cols, dx, ox, oy);
  for (double &v : f.values.flat()) v = r.f32("field values");
  r.finish();
  return f;
}

void save_field(const fs::path &path, const SOSField &field) { write_atomic(path, encode_field(field)); }

SOSField load_field(const fs::path &path) { return decode_field(read_bytes(path), path.string()); }

std::vector<std::uint8_t> encode_measurements(const MeasurementSet &m) {
  Writer w;
  w.magic("MSIG");
  w.u32(static_cast<std::uint32_t>(m.n_transmitters));
  w.u32(static_cast<std::uint32_t>(m.n_receivers));
  w.u32(static_cast<std::uint32_t>(m.n_samples));
  w.f64(m.dt);
  w.f64(m.geometry_radius);
  for (double v : m.data) w.f32(static_cast<float>(v));
  return w.take();
}

MeasurementSet decode_measurements(const std::vector<std::uint8_t> &bytes, Tier tier,
                                   const std::string &origin) {
  Reader r(bytes, origin);
  r.magic("MSIG");
  const auto ms = r.u32("header");
  const auto mr = r.u32("header");
  const auto mt = r.u32("header");
  const double dt = r.f64("header");
  const double radius = r.f64("header");
  if (ms == 0 || mr == 0 || mt == 0 || !(dt > 0.0))
    throw CorruptionError(origin, "invalid measurement header");
  r.need(static_cast<std::size_t>(ms) * mr * mt * 4, "samples");
  MeasurementSet m(static_cast<int>(ms), static_cast<int>(mr), static_cast<int>(mt), dt, radius,
                   tier);
  for (double &v : m.data) v = r.f32("samples");
  r.finish();
  return m;
}

void save_measurements(const fs::path &path, const MeasurementSet &m) {
  write_atomic(path, encode_measurements(m));
}

MeasurementSet load_measurements(const fs::path &path, Tier tier) {
  return decode_measurements(read_bytes(path), tier, path.string());
}

namespace {

std::string tensor_prefix(std::size_t stage, const nn::Layer &layer) {
  return "stage" + std::to_string(stage) + "/" + layer.name;
}

void put_tensor(Writer &w, const std::string &name, const std::vector<std::uint32_t> &dims,
                const std::function<double(std::size_t)> &value) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(dims.size()));
  std::size_t n = 1;
  for (auto d : dims) {
    w.u32(d);
    n *= d;
  }
  for (std::size_t i = 0; i < n; ++i) w.f64(value(i));
}

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

} // namespace

std::vector<std::uint8_t> encode_network(const nn::NetworkBundle &bundle) {
  std::uint32_t count = 0;
  for (const auto &st : bundle.net.stages()) count += 2 * static_cast<std::uint32_t>(st.layers.size());
  const bool with_optimizer = !bundle.optimizer.m.empty();
  if (with_optimizer) count += 2;

  Writer w;
  w.magic("NNET");
  w.u32(count);
  const auto &stages = bundle.net.stages();
  for (std::size_t s = 0; s < stages.size(); ++s)
    for (const auto &layer : stages[s].layers) {
      const auto rows = static_cast<std::size_t>(layer.weight.rows());
      const auto cols = static_cast<std::size_t>(layer.weight.cols());
      put_tensor(w, tensor_prefix(s, layer) + "/weight",
                 {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)},
                 [&](std::size_t i) {
                   return layer.weight(static_cast<Eigen::Index>(i / cols),
                                       static_cast<Eigen::Index>(i % cols));
                 });
      put_tensor(w, tensor_prefix(s, layer) + "/bias", {static_cast<std::uint32_t>(rows)},
                 [&](std::size_t i) { return layer.bias(static_cast<Eigen::Index>(i)); });
    }
  if (with_optimizer) {
    const auto n = static_cast<std::uint32_t>(bundle.optimizer.m.size());
    put_tensor(w, "adam/m", {n}, [&](std::size_t i) { return bundle.optimizer.m[i]; });
    put_tensor(w, "adam/v", {n}, [&](std::size_t i) { return bundle.optimizer.v[i]; });
  }
  json doc = nn::topology_to_json(bundle);
  doc["format_version"] = kFormatVersion;
  w.str(doc.dump());
  return w.take();
}

nn::NetworkBundle decode_network(const std::vector<std::uint8_t> &bytes, const std::string &origin) {
  Reader r(bytes, origin);
  r.magic("NNET");
  const auto count = r.u32("tensor count");
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str("tensor name");
    Tensor tensor;
    const auto rank = r.u32("tensor rank");
    if (rank > 8) throw CorruptionError(origin, "tensor '" + name + "' has rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      tensor.dims.push_back(r.u32("tensor dims"));
      n *= tensor.dims.back();
    }
    r.need(n * 8, "tensor data");
    tensor.data.resize(n);
    for (double &v : tensor.data) v = r.f64("tensor data");
    if (!tensors.emplace(name, std::move(tensor)).second)
      throw CorruptionError(origin, "duplicate tensor '" + name + "'");
  }
  json doc;
  try {
    doc = json::parse(r.str("topology document"));
  } catch (const json::parse_error &e) {
    throw CorruptionError(origin, std::string("topology document: ") + e.what());
  }
  r.finish();
  const int version = doc.value("format_version", 0);
  if (version > kFormatVersion || version < 1)
    throw VersionError(origin, "network format version " + std::to_string(version) +
                                   " is not supported (this build reads 1.." +
                                   std::to_string(kFormatVersion) + ")");

  nn::NetworkBundle b;
  try {
    b = nn::bundle_from_topology(doc);
  } catch (const Error &e) {
    throw CorruptionError(origin, e.what());
  }
  auto take = [&](const std::string &name, std::vector<std::uint32_t> dims) -> const Tensor & {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw CorruptionError(origin, "missing tensor '" + name + "'");
    if (it->second.dims != dims) throw CorruptionError(origin, "tensor '" + name + "' has the wrong shape");
    return it->second;
  };
  auto &stages = b.net.stages();
  std::size_t used = 0;
  for (std::size_t s = 0; s < stages.size(); ++s)
    for (auto &layer : stages[s].layers) {
      const auto rows = static_cast<std::uint32_t>(layer.weight.rows());
      const auto cols = static_cast<std::uint32_t>(layer.weight.cols());
      const auto &wt = take(tensor_prefix(s, layer) + "/weight", {rows, cols});
      for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < cols; ++j)
          layer.weight(i, j) = wt.data[static_cast<std::size_t>(i) * cols + j];
      const auto &bt = take(tensor_prefix(s, layer) + "/bias", {rows});
      for (std::uint32_t i = 0; i < rows; ++i) layer.bias(i) = bt.data[i];
      used += 2;
    }
  if (tensors.count("adam/m")) {
    const auto n = static_cast<std::uint32_t>(b.net.parameter_count());
    b.optimizer.m = take("adam/m", {n}).data;
    b.optimizer.v = take("adam/v", {n}).data;
    used += 2;
  }
  if (used != tensors.size()) throw CorruptionError(origin, "unexpected extra tensors");
  return b;
}

void save_network(const fs::path &path, const nn::NetworkBundle &bundle) {
  write_atomic(path, encode_network(bundle));
}

nn::NetworkBundle load_network(const fs::path &path) {
  return decode_network(read_bytes(path), path.string());
}

FileEntry describe_file(const fs::path &dir, const std::string &name) {
  const auto bytes = read_bytes(dir / name);
  return {name, bytes.size(), fnv1a64(bytes)};
}

void write_manifest(const fs::path &dir, const Manifest &manifest) {
  json files = json::array();
  for (const auto &f : manifest.files)
    files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"fnv1a64", hex64(f.checksum)}});
  json doc{{"format_version", manifest.format_version},
           {"created", manifest.created},
           {"master_seed", manifest.master_seed},
           {"config_hashes", manifest.config_hashes},
           {"files", files}};
  doc["meta"] = manifest.meta.empty() ? json::object() : json::parse(manifest.meta);
  write_text_atomic(dir / "manifest.json", doc.dump(2) + "\n");
}

Manifest read_manifest(const fs::path &dir) {
  const fs::path path = dir / "manifest.json";
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error &e) {
    throw CorruptionError(path.string(), std::string("unparseable manifest: ") + e.what());
  }
  Manifest m;
  try {
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version > kFormatVersion || m.format_version < 1)
      throw VersionError(path.string(), "manifest format version " +
                                            std::to_string(m.format_version) + " is not supported");
    m.created = doc.value("created", "");
    m.master_seed = doc.value("master_seed", std::uint64_t{0});
    m.config_hashes = doc.value("config_hashes", std::map<std::string, std::string>{});
    for (const auto &f : doc.at("files")) {
      FileEntry e;
      e.name = f.at("name").get<std::string>();
      e.bytes = f.at("bytes").get<std::uint64_t>();
      e.checksum = std::stoull(f.at("fnv1a64").get<std::string>(), nullptr, 16);
      m.files.push_back(std::move(e));
    }
    m.meta = doc.value("meta", json::object()).dump();
  } catch (const json::exception &e) {
    throw CorruptionError(path.string(), std::string("malformed manifest: ") + e.what());
  } catch (const std::logic_error &e) {
    throw CorruptionError(path.string(), std::string("malformed checksum: ") + e.what());
  }
  return m;
}

void verify_manifest(const fs::path &dir, const Manifest &manifest) {
  for (const auto &f : manifest.files) {
    const fs::path path = dir / f.name;
    if (!fs::exists(path)) throw IoError(path.string(), "listed in manifest but missing");
    const auto bytes = read_bytes(path);
    if (bytes.size() < f.bytes)
      throw TruncationError(path.string(), "has " + std::to_string(bytes.size()) +
                                               " bytes, manifest records " + std::to_string(f.bytes));
    if (bytes.size() != f.bytes)
      throw CorruptionError(path.string(), "has " + std::to_string(bytes.size()) +
                                               " bytes, manifest records " + std::to_string(f.bytes));
    const auto sum = fnv1a64(bytes);
    if (sum != f.checksum)
      throw CorruptionError(path.string(), "checksum " + hex64(sum) + " differs from manifest " +
                                               hex64(f.checksum));
  }
}

std::string config_hash(const ModelConfig &config) {
  const std::string canonical = json(config).dump();
  return hex64(fnv1a64(canonical.data(), canonical.size()));
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

} // namespace nnaee::store
