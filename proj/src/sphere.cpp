#include "spsel/sphere.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "spsel/error.hpp"
#include "spsel/log.hpp"

namespace spsel {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

bool is_positive_integer(double x) {
  const double r = std::round(x);
  return r >= 1.0 && std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x));
}

std::string fmt_deg(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError(std::string("truncated ") + what, offset);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::string next_ppm_token(std::istream& in) {
  std::string token;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

ErpImage::ErpImage(std::size_t w, std::size_t h, double fill)
    : width(w), height(h), pixels(w * h * channels, fill) {}

PatchLocation PatchLocation::rect(std::size_t u, std::size_t v, std::size_t size) {
  PatchLocation loc;
  loc.kind = LocationKind::pixel_rect;
  loc.u = u;
  loc.v = v;
  loc.size = size;
  return loc;
}

PatchLocation PatchLocation::sphere(double lat, double lon, double extent, std::size_t level) {
  PatchLocation loc;
  loc.kind = LocationKind::spherical;
  loc.lat = lat;
  loc.lon = lon;
  loc.extent = extent;
  loc.level = level;
  return loc;
}

std::string_view to_string(SamplingMethod method) {
  switch (method) {
    case SamplingMethod::erp: return "ERP";
    case SamplingMethod::lat: return "LAT";
    case SamplingMethod::sp: return "SP";
  }
  return "?";
}

SamplingPlan erp_grid(std::size_t width, std::size_t height, std::size_t patch_size) {
  if (patch_size == 0) throw InputError("patch size must be positive");
  if (width != 2 * height) {
    warn("image is " + std::to_string(width) + "x" + std::to_string(height) + ", not 2:1 equirectangular");
  }
  SamplingPlan plan;
  plan.method = SamplingMethod::erp;
  plan.params.patch_size = patch_size;
  plan.params.image_width = width;
  plan.params.image_height = height;
  const std::size_t cols = width / patch_size;
  const std::size_t rows = height / patch_size;
  if (cols == 0 || rows == 0) {
    warn("image smaller than one " + std::to_string(patch_size) + "px patch; ERP plan is empty");
    return plan;
  }
  plan.locations.reserve(rows * cols);
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t i = 0; i < cols; ++i) plan.locations.push_back(PatchLocation::rect(i * patch_size, j * patch_size, patch_size));
  }
  return plan;
}

LatitudePlan latitude_plan(double alpha0) {
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw ConstraintError({"alpha0 must be positive"});

  std::vector<std::string> failures;
  const bool base_divides = is_positive_integer(360.0 / alpha0);
  if (!base_divides) failures.push_back("360/" + fmt_deg(alpha0) + " is not a positive integer");

  // (1 + sum_{i=0}^{N} 2^i) * alpha0 = 2^{N+1} * alpha0.
  for (std::size_t n = 0;; ++n) {
    const double top = std::ldexp(alpha0, static_cast<int>(n));  // alpha0 * 2^N
    const double covered = 2.0 * top;
    const std::string tag = "N=" + std::to_string(n) + ": ";
    if (covered > 90.0) {
      failures.push_back(tag + "(1 + sum 2^i) * alpha0 = " + fmt_deg(covered) + " overshoots 90");
      break;
    }
    const double polar = 90.0 - covered;
    bool ok = true;
    if (!(polar < top)) {
      failures.push_back(tag + "L_P = " + fmt_deg(polar) + " is not below alpha0 * 2^N = " + fmt_deg(top));
      ok = false;
    }
    if (!is_positive_integer(360.0 / top)) {
      failures.push_back(tag + "360/(alpha0 * 2^N) = 360/" + fmt_deg(top) + " is not a positive integer");
      ok = false;
    }
    if (ok && base_divides) {
      LatitudePlan plan;
      plan.alpha0 = alpha0;
      plan.levels = n;
      plan.polar_latitude = polar;
      double lat = 0.0;
      for (std::size_t b = 0; b <= n + 1; ++b) {
        const double extent = b == 0 ? alpha0 : std::ldexp(alpha0, static_cast<int>(b) - 1);
        LatitudeBand band;
        band.level = b;
        band.lat_min = lat;
        band.lat_max = lat + extent;
        band.extent = extent;
        band.longitude_count = static_cast<std::size_t>(std::round(360.0 / extent));
        plan.bands.push_back(band);
        lat += extent;
      }
      if (polar > 0.0) {
        LatitudeBand cap;
        cap.level = n + 2;
        cap.lat_min = 90.0 - polar;
        cap.lat_max = 90.0;
        cap.extent = 2.0 * polar;
        cap.longitude_count = 1;
        cap.polar_cap = true;
        plan.bands.push_back(cap);
      }
      return plan;
    }
  }
  throw ConstraintError(std::move(failures));
}

SamplingPlan latitude_locations(const LatitudePlan& plan, bool polar_caps) {
  SamplingPlan out;
  out.method = SamplingMethod::lat;
  out.params.alpha0 = plan.alpha0;
  out.params.levels = plan.levels;
  out.params.polar_latitude = plan.polar_latitude;
  out.params.polar_caps = polar_caps;
  out.params.patch_size = 128;

  for (const double hemisphere : {1.0, -1.0}) {
    for (const auto& band : plan.bands) {
      if (band.polar_cap) {
        if (polar_caps) out.locations.push_back(PatchLocation::sphere(hemisphere * 90.0, 0.0, band.extent, band.level));
        continue;
      }
      const double center = hemisphere * 0.5 * (band.lat_min + band.lat_max);
      for (std::size_t j = 0; j < band.longitude_count; ++j) {
        const double lon = -180.0 + band.extent * (static_cast<double>(j) + 0.5);
        out.locations.push_back(PatchLocation::sphere(center, lon, band.extent, band.level));
      }
    }
  }
  return out;
}

SamplingPlan scanpath_locations(const std::vector<Fixation>& fixations, double fov) {
  if (!(fov > 0.0 && fov <= 120.0)) throw InputError("field of view must lie in (0, 120] degrees");
  SamplingPlan plan;
  plan.method = SamplingMethod::sp;
  plan.params.fov = fov;
  plan.params.fixations = fixations.size();
  std::vector<std::size_t> scanpaths;
  for (std::size_t k = 0; k < fixations.size(); ++k) {
    const auto& f = fixations[k];
    if (!(f.lat >= -90.0 && f.lat <= 90.0) || !(f.lon >= -180.0 && f.lon < 180.0)) {
      throw InputError("fixation record " + std::to_string(k) + " (image " + f.image_id + ", scanpath " +
                       std::to_string(f.scanpath_id) + ", fixation " + std::to_string(f.fixation_index) +
                       ") has out-of-range coordinates (" + fmt_deg(f.lat) + ", " + fmt_deg(f.lon) + ")");
    }
    if (std::find(scanpaths.begin(), scanpaths.end(), f.scanpath_id) == scanpaths.end()) {
      scanpaths.push_back(f.scanpath_id);
    }
    plan.locations.push_back(PatchLocation::sphere(f.lat, f.lon, fov, 0));
  }
  plan.params.scanpaths = scanpaths.size();
  return plan;
}

std::vector<Fixation> read_scanpath_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("scanpath CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_id,scanpath_id,fixation_index,t,lat_deg,lon_deg") {
    throw InputError("scanpath CSV header must be image_id,scanpath_id,fixation_index,t,lat_deg,lon_deg");
  }
  std::vector<Fixation> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 6) throw InputError("scanpath CSV line " + std::to_string(line_no) + ": expected 6 fields");
    try {
      Fixation f;
      f.image_id = fields[0];
      f.scanpath_id = std::stoul(fields[1]);
      f.fixation_index = std::stoul(fields[2]);
      f.t = std::stod(fields[3]);
      f.lat = std::stod(fields[4]);
      f.lon = std::stod(fields[5]);
      out.push_back(std::move(f));
    } catch (const std::logic_error&) {
      throw InputError("scanpath CSV line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

std::vector<Fixation> read_scanpath_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scanpath file " + path);
  return read_scanpath_csv(in);
}

double sample_erp(const ErpImage& image, double lat, double lon, std::size_t channel) {
  const auto w = static_cast<double>(image.width);
  const auto h = static_cast<double>(image.height);
  const double fx = (lon + 180.0) / 360.0 * w - 0.5;
  const double fy = std::clamp((90.0 - lat) / 180.0 * h - 0.5, 0.0, h - 1.0);
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double tx = fx - x0f;
  const double ty = fy - y0f;
  const auto wrap = [&](double x) {
    const auto wi = static_cast<long long>(image.width);
    long long xi = static_cast<long long>(x) % wi;
    if (xi < 0) xi += wi;
    return static_cast<std::size_t>(xi);
  };
  const std::size_t x0 = wrap(x0f);
  const std::size_t x1 = wrap(x0f + 1.0);
  const auto y0 = static_cast<std::size_t>(y0f);
  const std::size_t y1 = std::min(y0 + 1, image.height - 1);
  const double top = (1.0 - tx) * image.at(x0, y0, channel) + tx * image.at(x1, y0, channel);
  const double bottom = (1.0 - tx) * image.at(x0, y1, channel) + tx * image.at(x1, y1, channel);
  return (1.0 - ty) * top + ty * bottom;
}

Patch extract_patch(const ErpImage& image, const PatchLocation& loc, std::size_t out_size) {
  if (image.width == 0 || image.height == 0) throw ShapeError("cannot extract from an empty image");
  if (image.pixels.size() != image.width * image.height * ErpImage::channels) {
    throw ShapeError("image pixel buffer does not match its dimensions");
  }
  Patch patch;
  patch.size = out_size;
  patch.pixels.resize(out_size * out_size * 3);

  if (loc.kind == LocationKind::pixel_rect) {
    if (loc.size != out_size) throw ShapeError("pixel patches are copied verbatim; out_size must equal the patch size");
    if (loc.u + loc.size > image.width || loc.v + loc.size > image.height) {
      throw ShapeError("pixel patch exceeds image bounds");
    }
    for (std::size_t y = 0; y < out_size; ++y) {
      const auto* src = &image.pixels[((loc.v + y) * image.width + loc.u) * 3];
      std::copy(src, src + out_size * 3, &patch.pixels[y * out_size * 3]);
    }
    return patch;
  }

  if (!(loc.extent > 0.0 && loc.extent < 180.0)) throw ShapeError("spherical patch extent must lie in (0, 180)");
  const double half = std::tan(0.5 * loc.extent * kDegToRad);
  const double lat0 = loc.lat * kDegToRad;
  const double sin0 = std::sin(lat0);
  const double cos0 = std::cos(lat0);
  const auto s = static_cast<double>(out_size);

  for (std::size_t py = 0; py < out_size; ++py) {
    const double y = half * (1.0 - 2.0 * (static_cast<double>(py) + 0.5) / s);
    for (std::size_t px = 0; px < out_size; ++px) {
      const double x = half * (2.0 * (static_cast<double>(px) + 0.5) / s - 1.0);
      const double rho = std::hypot(x, y);
      double lat = loc.lat;
      double lon = loc.lon;
      if (rho > 0.0) {
        const double c = std::atan(rho);
        const double sin_c = std::sin(c);
        const double cos_c = std::cos(c);
        lat = std::asin(std::clamp(cos_c * sin0 + y * sin_c * cos0 / rho, -1.0, 1.0)) / kDegToRad;
        lon = loc.lon + std::atan2(x * sin_c, rho * cos0 * cos_c - y * sin0 * sin_c) / kDegToRad;
      }
      for (std::size_t c = 0; c < 3; ++c) patch.pixels[(py * out_size + px) * 3 + c] = sample_erp(image, lat, lon, c);
    }
  }
  return patch;
}

ErpImage read_ppm(std::istream& in) {
  if (next_ppm_token(in) != "P6") throw FormatError("not a binary PPM (P6) image", 0);
  const auto width = std::stoul(next_ppm_token(in));
  const auto height = std::stoul(next_ppm_token(in));
  const auto maxval = std::stoul(next_ppm_token(in));
  if (maxval != 255) throw FormatError("only 8-bit PPM images are supported", static_cast<std::size_t>(in.tellg()));
  ErpImage image(width, height);
  std::vector<unsigned char> raw(image.pixels.size());
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("truncated PPM pixel data", offset);
  }
  std::copy(raw.begin(), raw.end(), image.pixels.begin());
  return image;
}

void write_ppm(std::ostream& out, const ErpImage& image) {
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), raw.begin(), [](double v) {
    return static_cast<unsigned char>(std::clamp(std::round(v), 0.0, 255.0));
  });
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// Raw planar: "RPF1", u32 width, u32 height, u32 channels (3), then one
// little-endian float32 plane per channel.
ErpImage read_raw_planar(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "RPF1", 4) != 0) throw FormatError("bad raw planar magic", 0);
  const auto width = read_u32(in, "width");
  const auto height = read_u32(in, "height");
  const auto channels = read_u32(in, "channel count");
  if (channels != 3) throw FormatError("raw planar image must have 3 channels", 12);
  ErpImage image(width, height);
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const auto bits = read_u32(in, "pixel data");
      image.pixels[i * 3 + c] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return image;
}

void write_raw_planar(std::ostream& out, const ErpImage& image) {
  out.write("RPF1", 4);
  write_u32(out, static_cast<std::uint32_t>(image.width));
  write_u32(out, static_cast<std::uint32_t>(image.height));
  write_u32(out, 3);
  const std::size_t plane = image.width * image.height;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(image.pixels[i * 3 + c])));
    }
  }
}

ErpImage read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path);
  char first[2] = {};
  in.read(first, 2);
  in.seekg(0);
  if (first[0] == 'P' && first[1] == '6') return read_ppm(in);
  return read_raw_planar(in);
}

}  // namespace spsel
