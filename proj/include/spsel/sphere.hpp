#pragma once

// Patch sampling on 360-degree equirectangular (ERP) images: a uniform pixel
// grid, latitude bands whose patches double in size toward the poles, and
// fixation-centered spherical patches. Angles are in degrees throughout;
// latitude is positive north, longitude in [-180, 180).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace spsel {

struct ErpImage {
  std::size_t width = 0;
  std::size_t height = 0;
  static constexpr std::size_t channels = 3;
  std::vector<double> pixels;  // row-major, interleaved RGB

  ErpImage() = default;
  ErpImage(std::size_t w, std::size_t h, double fill = 0.0);

  double& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

struct Patch {
  std::size_t size = 0;
  std::vector<double> pixels;  // size x size x 3, row-major interleaved

  double at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * size + x) * 3 + c]; }
};

enum class LocationKind { pixel_rect, spherical };

struct PatchLocation {
  LocationKind kind = LocationKind::pixel_rect;
  // pixel_rect
  std::size_t u = 0;
  std::size_t v = 0;
  std::size_t size = 0;
  // spherical
  double lat = 0.0;
  double lon = 0.0;
  double extent = 0.0;
  std::size_t level = 0;

  static PatchLocation rect(std::size_t u, std::size_t v, std::size_t size);
  static PatchLocation sphere(double lat, double lon, double extent, std::size_t level = 0);
};

enum class SamplingMethod { erp, lat, sp };
std::string_view to_string(SamplingMethod method);

struct SamplingParams {
  std::size_t patch_size = 128;
  // lat
  double alpha0 = 0.0;
  std::size_t levels = 0;  // N
  double polar_latitude = 0.0;
  bool polar_caps = true;
  // sp
  double fov = 0.0;
  std::size_t scanpaths = 0;
  std::size_t fixations = 0;
  // erp
  std::size_t image_width = 0;
  std::size_t image_height = 0;
};

struct SamplingPlan {
  SamplingMethod method = SamplingMethod::erp;
  SamplingParams params;
  std::vector<PatchLocation> locations;
};

SamplingPlan erp_grid(std::size_t width, std::size_t height, std::size_t patch_size = 128);

struct LatitudeBand {
  std::size_t level = 0;
  double lat_min = 0.0;  // northern hemisphere; the southern band is the mirror
  double lat_max = 0.0;
  double extent = 0.0;
  std::size_t longitude_count = 0;
  bool polar_cap = false;
};

struct LatitudePlan {
  double alpha0 = 0.0;
  std::size_t levels = 0;       // N
  double polar_latitude = 0.0;  // L_P
  std::vector<LatitudeBand> bands;  // equator first, polar cap last (when L_P > 0)
};

// Finds the level count N and polar latitude L_P for an initial patch size
// alpha0; throws ConstraintError listing every failed condition.
LatitudePlan latitude_plan(double alpha0);

SamplingPlan latitude_locations(const LatitudePlan& plan, bool polar_caps = true);

struct Fixation {
  std::string image_id;
  std::size_t scanpath_id = 0;
  std::size_t fixation_index = 0;
  double t = 0.0;
  double lat = 0.0;
  double lon = 0.0;
};

constexpr double kDefaultFov = 30.0;

SamplingPlan scanpath_locations(const std::vector<Fixation>& fixations, double fov = kDefaultFov);

// Reads `image_id,scanpath_id,fixation_index,t,lat_deg,lon_deg` rows in file
// order. Timestamps are kept but sampling ignores them.
std::vector<Fixation> read_scanpath_csv(std::istream& in);
std::vector<Fixation> read_scanpath_csv(const std::string& path);

// Bilinear ERP sample at a direction; wraps in longitude and clamps at the poles.
double sample_erp(const ErpImage& image, double lat, double lon, std::size_t channel);

// Pixel rectangles are copied; spherical locations are rendered with a
// gnomonic projection spanning `extent` degrees.
Patch extract_patch(const ErpImage& image, const PatchLocation& loc, std::size_t out_size = 128);

// Binary PPM (P6, maxval 255) and raw planar float images.
ErpImage read_image(const std::string& path);
ErpImage read_ppm(std::istream& in);
void write_ppm(std::ostream& out, const ErpImage& image);
ErpImage read_raw_planar(std::istream& in);
void write_raw_planar(std::ostream& out, const ErpImage& image);

}  // namespace spsel
