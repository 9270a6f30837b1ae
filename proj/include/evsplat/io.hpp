#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "evsplat/camera.hpp"
#include "evsplat/events.hpp"
#include "evsplat/gaussian.hpp"
#include "evsplat/image.hpp"
#include "evsplat/metrics.hpp"

namespace evsplat {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kEventFormatVersion = 1;
inline constexpr std::uint32_t kSceneFormatVersion = 1;
inline constexpr std::size_t kEventHeaderBytes = 24;
inline constexpr std::size_t kEventRecordBytes = 16;
inline constexpr std::size_t kSceneHeaderBytes = 16;
inline constexpr std::size_t kSceneRecordFloats = 14;

// Event files. A is stored as float32.
std::vector<std::uint8_t> encode_events(const EventStream& stream);
EventStream decode_events(std::span<const std::uint8_t> bytes);
void write_events(const fs::path& path, const EventStream& stream);
EventStream read_events(const fs::path& path);

// "t_us,x,y,p" lines with a header row.
void write_events_csv(const fs::path& path, const EventStream& stream);
EventStream read_events_csv(const fs::path& path, Resolution resolution, double contrast_threshold);

// Scene checkpoints; parameters are stored as float32.
std::vector<std::uint8_t> encode_scene(const GaussianScene& scene);
GaussianScene decode_scene(std::span<const std::uint8_t> bytes);
void write_scene(const fs::path& path, const GaussianScene& scene);
GaussianScene read_scene(const fs::path& path);

nlohmann::json poses_to_json(std::span<const CameraView> views);
std::vector<CameraView> poses_from_json(const nlohmann::json& doc);
void write_poses(const fs::path& path, std::span<const CameraView> views);
std::vector<CameraView> read_poses(const fs::path& path);

/// 8-bit grayscale; values are clamped to [0, 1] and rounded.
void write_png(const fs::path& path, const Image& image);
/// Grayscale (or converted) PNG scaled to [0, 1].
Image read_png(const fs::path& path);
/// Raw little-endian float32, row-major, no header.
void write_float_image(const fs::path& path, const Image& image);
Image read_float_image(const fs::path& path, int width, int height);

void write_times(const fs::path& path, std::span<const Timestamp> times);
std::vector<Timestamp> read_times(const fs::path& path);

/// Frames in `dir` named frame_NNNNN.f32 (preferred, needs width/height) or frame_NNNNN.png, in name order.
std::vector<Image> read_frame_dir(const fs::path& dir, int width, int height);

nlohmann::json file_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& doc);

nlohmann::json report_to_json(const EvalReport& report);

/// Dataset package. Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  fs::path events;
  bool events_csv = false;
  fs::path poses;
  std::optional<fs::path> initial_frame;  // float32 dump
  std::optional<fs::path> gt_dir;
  std::optional<fs::path> times;
  int width = 0;
  int height = 0;
  double contrast_threshold = 0.0;
  Box scene_bounds;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& doc, const fs::path& base_dir);
};

DatasetManifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const DatasetManifest& manifest);

struct LoadedDataset {
  EventStream stream;
  std::vector<CameraView> views;
  std::optional<Image> initial_frame;
  Box scene_bounds;
};

/// Parses every referenced file and checks that resolutions and A agree.
LoadedDataset load_dataset(const DatasetManifest& manifest);

}  // namespace evsplat
