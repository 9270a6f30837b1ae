#include "evsplat/io.hpp"

#include <png.h>

#include <Eigen/LU>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "evsplat/error.hpp"

namespace evsplat {

namespace {

static_assert(std::endian::native == std::endian::little, "byte codecs assume a little-endian host");

class Writer {
 public:
  explicit Writer(std::size_t reserve) { bytes_.reserve(reserve); }
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      fail("truncated: need " + std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
           " available");
    }
  }
  void expect_magic(const char (&magic)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) fail(std::string("bad magic, expected ") + magic);
    pos_ += 4;
  }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw ValidationError(std::string(what_) + ": " + msg + " at offset " + std::to_string(at));
  }
  [[noreturn]] void fail(const std::string& msg) const { fail(msg, pos_); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void dump(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

std::ofstream open_text(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
  const Resolution res = stream.resolution();
  if (res.width > 0xffff || res.height > 0xffff) throw ValidationError("resolution exceeds u16");
  Writer w(kEventHeaderBytes + kEventRecordBytes * stream.size());
  w.raw("SWEV", 4);
  w.put<std::uint32_t>(kEventFormatVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(res.width));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(res.height));
  w.put<float>(static_cast<float>(stream.contrast_threshold()));
  w.put<std::uint64_t>(stream.size());
  for (const Event& e : stream.events()) {
    w.put<std::uint64_t>(e.t);
    w.put<std::uint16_t>(e.x);
    w.put<std::uint16_t>(e.y);
    w.put<std::int8_t>(e.p);
    w.raw("\0\0\0", 3);
  }
  return w.take();
}

EventStream decode_events(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "event file");
  r.expect_magic("SWEV");
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>();
  if (version != kEventFormatVersion) r.fail("unsupported version " + std::to_string(version), version_at);
  const Resolution res{r.get<std::uint16_t>(), r.get<std::uint16_t>()};
  const double a = r.get<float>();
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining() / kEventRecordBytes) {
    r.fail("truncated: header declares " + std::to_string(count) + " events, " +
           std::to_string(r.remaining() / kEventRecordBytes) + " present");
  }
  std::vector<Event> events;
  events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    Event e;
    e.t = r.get<std::uint64_t>();
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.p = r.get<std::int8_t>();
    for (int k = 0; k < 3; ++k) {
      if (r.get<std::uint8_t>() != 0) r.fail("nonzero padding", r.pos() - 1);
    }
    if (e.p != 1 && e.p != -1) r.fail("invalid polarity " + std::to_string(e.p), at + 12);
    if (e.x >= res.width || e.y >= res.height) r.fail("event outside the sensor", at + 8);
    if (!events.empty() && event_before(e, events.back())) r.fail("events out of order", at);
    events.push_back(e);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after " + std::to_string(count) + " events");
  try {
    return EventStream(res, a, std::move(events));
  } catch (const ValidationError& err) {
    r.fail(err.what(), 12);
  }
}

void write_events(const fs::path& path, const EventStream& stream) { dump(path, encode_events(stream)); }

EventStream read_events(const fs::path& path) { return decode_events(slurp(path)); }

void write_events_csv(const fs::path& path, const EventStream& stream) {
  std::ofstream out = open_text(path);
  out << "t_us,x,y,p\n";
  for (const Event& e : stream.events()) out << e.t << ',' << e.x << ',' << e.y << ',' << int{e.p} << '\n';
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

EventStream read_events_csv(const fs::path& path, Resolution resolution, double contrast_threshold) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.starts_with("t_us"))) continue;
    std::istringstream ss(line);
    std::uint64_t t;
    long x, y, p;
    char c1, c2, c3;
    if (!(ss >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": malformed event line");
    }
    if (x < 0 || y < 0 || x >= resolution.width || y >= resolution.height || (p != 1 && p != -1)) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": invalid event");
    }
    events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t, static_cast<std::int8_t>(p)});
  }
  return EventStream::from_unsorted(resolution, contrast_threshold, std::move(events));
}

std::vector<std::uint8_t> encode_scene(const GaussianScene& scene) {
  Writer w(kSceneHeaderBytes + 4 * kSceneRecordFloats * scene.size());
  w.raw("SWGS", 4);
  w.put<std::uint32_t>(kSceneFormatVersion);
  w.put<std::uint64_t>(scene.size());
  for (const Gaussian& g : scene.gaussians) {
    const ParamVector p = pack(g);
    for (double v : p) w.put<float>(static_cast<float>(v));
    w.put<float>(0.0f);
    w.put<float>(0.0f);
  }
  return w.take();
}

GaussianScene decode_scene(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.expect_magic("SWGS");
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>();
  if (version != kSceneFormatVersion) r.fail("unsupported version " + std::to_string(version), version_at);
  const auto count = r.get<std::uint64_t>();
  const std::size_t record = 4 * kSceneRecordFloats;
  if (count > r.remaining() / record) {
    r.fail("truncated: header declares " + std::to_string(count) + " Gaussians, " +
           std::to_string(r.remaining() / record) + " present");
  }
  GaussianScene scene;
  scene.gaussians.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    ParamVector p;
    for (double& v : p) {
      v = r.get<float>();
      if (!std::isfinite(v)) r.fail("non-finite parameter", r.pos() - 4);
    }
    r.get<float>();
    r.get<float>();
    Gaussian g = unpack(p);
    if (g.rotation.squaredNorm() == 0.0) r.fail("zero quaternion", at + 20);
    scene.gaussians.push_back(g);
  }
  if (r.remaining() != 0) r.fail("trailing bytes after " + std::to_string(count) + " Gaussians");
  return scene;
}

void write_scene(const fs::path& path, const GaussianScene& scene) { dump(path, encode_scene(scene)); }

GaussianScene read_scene(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + path.string());
  return decode_scene(slurp(path));
}

nlohmann::json poses_to_json(std::span<const CameraView> views) {
  nlohmann::json doc;
  const Intrinsics in = views.empty() ? Intrinsics{} : views.front().intrinsics;
  doc["intrinsics"] = {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width},
                       {"height", in.height}};
  doc["poses"] = nlohmann::json::array();
  for (const CameraView& v : views) {
    if (!(v.intrinsics == in)) throw ValidationError("pose file requires shared intrinsics");
    std::vector<double> rot(9), trans(3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rot[3 * r + c] = v.world_to_cam.rotation(r, c);
      trans[r] = v.world_to_cam.translation(r);
    }
    doc["poses"].push_back({{"t_us", v.timestamp}, {"R", rot}, {"t", trans}});
  }
  return doc;
}

std::vector<CameraView> poses_from_json(const nlohmann::json& doc) {
  try {
    const auto& j = doc.at("intrinsics");
    Intrinsics in;
    in.fx = j.at("fx").get<double>();
    in.fy = j.at("fy").get<double>();
    in.cx = j.at("cx").get<double>();
    in.cy = j.at("cy").get<double>();
    in.width = j.at("width").get<int>();
    in.height = j.at("height").get<int>();
    in.validate();
    std::vector<CameraView> views;
    for (const auto& p : doc.at("poses")) {
      const auto rot = p.at("R").get<std::vector<double>>();
      const auto trans = p.at("t").get<std::vector<double>>();
      if (rot.size() != 9 || trans.size() != 3) throw ValidationError("pose needs R[9] and t[3]");
      CameraView v;
      v.intrinsics = in;
      v.timestamp = p.at("t_us").get<Timestamp>();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) v.world_to_cam.rotation(r, c) = rot[3 * r + c];
        v.world_to_cam.translation(r) = trans[r];
      }
      const Eigen::Matrix3d& rm = v.world_to_cam.rotation;
      if (!(rm.transpose() * rm).isIdentity(1e-6) || rm.determinant() < 0.0) {
        throw ValidationError("pose " + std::to_string(views.size()) + ": R is not a rotation");
      }
      views.push_back(v);
    }
    return views;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("pose file: ") + e.what());
  }
}

void write_poses(const fs::path& path, std::span<const CameraView> views) {
  write_json(path, poses_to_json(views));
}

std::vector<CameraView> read_poses(const fs::path& path) { return poses_from_json(file_json(path)); }

void write_png(const fs::path& path, const Image& image) {
  std::vector<std::uint8_t> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    throw RuntimeFailure("cannot write " + path.string() + ": " + png.message);
  }
}

Image read_png(const fs::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw ValidationError("cannot read " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ValidationError("cannot decode " + path.string() + ": " + png.message);
  }
  Image out(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixels[i] / 255.0;
  return out;
}

void write_float_image(const fs::path& path, const Image& image) {
  Writer w(4 * image.size());
  for (std::size_t i = 0; i < image.size(); ++i) w.put<float>(static_cast<float>(image[i]));
  const auto bytes = w.take();
  dump(path, bytes);
}

Image read_float_image(const fs::path& path, int width, int height) {
  const auto bytes = slurp(path);
  const std::size_t expected = 4 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() != expected) {
    throw ValidationError(path.string() + ": expected " + std::to_string(expected) + " bytes for " +
                          std::to_string(width) + "x" + std::to_string(height) + ", found " +
                          std::to_string(bytes.size()));
  }
  Reader r(bytes, "float image");
  Image out(width, height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.get<float>();
  return out;
}

void write_times(const fs::path& path, std::span<const Timestamp> times) {
  std::ofstream out = open_text(path);
  for (Timestamp t : times) out << t << '\n';
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

std::vector<Timestamp> read_times(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<Timestamp> times;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Timestamp t;
    std::string rest;
    if (!(ss >> t) || (ss >> rest)) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected one integer timestamp");
    }
    times.push_back(t);
  }
  return times;
}

std::vector<Image> read_frame_dir(const fs::path& dir, int width, int height) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<fs::path> floats, pngs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (!p.filename().string().starts_with("frame_")) continue;
    if (p.extension() == ".f32") floats.push_back(p);
    if (p.extension() == ".png") pngs.push_back(p);
  }
  std::vector<Image> frames;
  if (!floats.empty()) {
    std::sort(floats.begin(), floats.end());
    for (const auto& p : floats) frames.push_back(read_float_image(p, width, height));
    return frames;
  }
  std::sort(pngs.begin(), pngs.end());
  for (const auto& p : pngs) {
    frames.push_back(read_png(p));
    if (frames.back().width() != width || frames.back().height() != height) {
      throw ValidationError(p.string() + ": resolution does not match");
    }
  }
  return frames;
}

nlohmann::json file_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out = open_text(path);
  out << doc.dump(2) << '\n';
  if (!out) throw RuntimeFailure("failed writing " + path.string());
}

nlohmann::json report_to_json(const EvalReport& report) {
  auto psnr_field = [](double v) { return std::isinf(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json doc;
  doc["views"] = nlohmann::json::array();
  for (std::size_t i = 0; i < report.views.size(); ++i) {
    const ViewScore& s = report.views[i];
    doc["views"].push_back(
        {{"index", i}, {"psnr", psnr_field(s.psnr)}, {"psnr_infinite", std::isinf(s.psnr)}, {"ssim", s.ssim}});
  }
  doc["mean_psnr"] = psnr_field(report.mean_psnr);
  doc["mean_psnr_infinite"] = std::isinf(report.mean_psnr);
  doc["mean_ssim"] = report.mean_ssim;
  return doc;
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json doc;
  doc["events"] = events.string();
  doc["events_format"] = events_csv ? "csv" : "swev";
  doc["poses"] = poses.string();
  if (initial_frame) doc["initial_frame"] = initial_frame->string();
  if (gt_dir) doc["gt_dir"] = gt_dir->string();
  if (times) doc["times"] = times->string();
  doc["width"] = width;
  doc["height"] = height;
  doc["contrast_threshold"] = contrast_threshold;
  doc["scene_bounds"] = {{"lo", {scene_bounds.lo.x(), scene_bounds.lo.y(), scene_bounds.lo.z()}},
                         {"hi", {scene_bounds.hi.x(), scene_bounds.hi.y(), scene_bounds.hi.z()}}};
  return doc;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  DatasetManifest m;
  try {
    m.events = resolve(doc.at("events").get<std::string>());
    const std::string format = doc.value("events_format", std::string("swev"));
    if (format != "swev" && format != "csv") throw ValidationError("manifest: unknown events_format " + format);
    m.events_csv = format == "csv";
    m.poses = resolve(doc.at("poses").get<std::string>());
    if (doc.contains("initial_frame")) m.initial_frame = resolve(doc["initial_frame"].get<std::string>());
    if (doc.contains("gt_dir")) m.gt_dir = resolve(doc["gt_dir"].get<std::string>());
    if (doc.contains("times")) m.times = resolve(doc["times"].get<std::string>());
    m.width = doc.at("width").get<int>();
    m.height = doc.at("height").get<int>();
    m.contrast_threshold = doc.at("contrast_threshold").get<double>();
    if (doc.contains("scene_bounds")) {
      const auto lo = doc["scene_bounds"].at("lo").get<std::vector<double>>();
      const auto hi = doc["scene_bounds"].at("hi").get<std::vector<double>>();
      if (lo.size() != 3 || hi.size() != 3) throw ValidationError("manifest: scene_bounds needs 3-vectors");
      m.scene_bounds.lo = Eigen::Vector3d(lo[0], lo[1], lo[2]);
      m.scene_bounds.hi = Eigen::Vector3d(hi[0], hi[1], hi[2]);
      if (!((m.scene_bounds.hi - m.scene_bounds.lo).array() > 0.0).all()) {
        throw ValidationError("manifest: scene_bounds must have hi > lo");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  if (m.width <= 0 || m.height <= 0) throw ValidationError("manifest: resolution must be positive");
  if (!(m.contrast_threshold > 0.0)) throw ValidationError("manifest: contrast_threshold must be > 0");
  return m;
}

DatasetManifest read_manifest(const fs::path& path) {
  return DatasetManifest::from_json(file_json(path), path.parent_path());
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) { write_json(path, manifest.to_json()); }

LoadedDataset load_dataset(const DatasetManifest& m) {
  const Resolution res{m.width, m.height};
  for (const fs::path* p : {&m.events, &m.poses}) {
    if (!fs::exists(*p)) throw ValidationError("manifest references a missing file: " + p->string());
  }
  if (m.initial_frame && !fs::exists(*m.initial_frame)) {
    throw ValidationError("manifest references a missing file: " + m.initial_frame->string());
  }

  // Cheap checks first so a mismatch is reported before the event file is parsed.
  LoadedDataset out;
  out.scene_bounds = m.scene_bounds;
  out.views = read_poses(m.poses);
  if (out.views.empty()) throw ValidationError("pose file has no poses");
  const Intrinsics& in = out.views.front().intrinsics;
  if (in.width != m.width || in.height != m.height) {
    throw ValidationError("pose intrinsics " + std::to_string(in.width) + "x" + std::to_string(in.height) +
                          " do not match manifest " + std::to_string(m.width) + "x" + std::to_string(m.height));
  }
  for (std::size_t i = 1; i < out.views.size(); ++i) {
    if (out.views[i].timestamp <= out.views[i - 1].timestamp) {
      throw ValidationError("pose timestamps must be strictly increasing");
    }
  }
  if (m.initial_frame) {
    const auto expected = 4 * static_cast<std::uintmax_t>(m.width) * static_cast<std::uintmax_t>(m.height);
    if (fs::file_size(*m.initial_frame) != expected) {
      throw ValidationError("initial frame size does not match " + std::to_string(m.width) + "x" +
                            std::to_string(m.height));
    }
  }
  if (!m.events_csv) {
    std::ifstream in_file(m.events, std::ios::binary);
    std::uint8_t header[kEventHeaderBytes] = {};
    in_file.read(reinterpret_cast<char*>(header), sizeof header);
    if (in_file.gcount() == static_cast<std::streamsize>(sizeof header)) {
      std::uint16_t w, h;
      std::memcpy(&w, header + 8, 2);
      std::memcpy(&h, header + 10, 2);
      if (w != m.width || h != m.height) {
        throw ValidationError("event file resolution " + std::to_string(w) + "x" + std::to_string(h) +
                              " does not match manifest");
      }
    }
  }

  out.stream = m.events_csv ? read_events_csv(m.events, res, m.contrast_threshold) : read_events(m.events);
  if (!(out.stream.resolution() == res)) throw ValidationError("event resolution does not match manifest");
  if (std::abs(out.stream.contrast_threshold() - m.contrast_threshold) > 1e-6 * m.contrast_threshold) {
    throw ValidationError("event file contrast threshold does not match manifest");
  }
  if (m.initial_frame) out.initial_frame = read_float_image(*m.initial_frame, m.width, m.height);
  return out;
}

}  // namespace evsplat
