#include "spsel/formats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>
#include <system_error>
#include <unordered_set>

#include "spsel/error.hpp"

namespace spsel {

namespace {

constexpr std::uint32_t kFlagF64 = 1u << 0;
constexpr std::uint32_t kFlagIds = 1u << 1;

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::size_t offset() const { return offset_; }

  void read(void* dst, std::size_t len, const char* what) {
    if (!in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(len))) {
      throw FormatError(std::string("truncated ") + what, offset_ + static_cast<std::size_t>(std::max<std::streamsize>(in_.gcount(), 0)));
    }
    offset_ += len;
  }

  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b{};
    read(b.data(), 4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

double parse_number(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw InputError(context + ": cannot parse number '" + s + "'");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

void expect_header(std::istream& in, const std::string& expected, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw InputError(what + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) throw InputError(what + " header must be '" + expected + "', got '" + line + "'");
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_esf(std::ostream& out, const EmbeddingFile& file) {
  const auto n = file.values.rows();
  const auto d = file.values.cols();
  if (!file.patch_ids.empty() && file.patch_ids.size() != n) throw ShapeError("patch-id table must have one id per row");
  out.write("ESF1", 4);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(d));
  std::uint32_t flags = 0;
  if (file.dtype == Dtype::f64) flags |= kFlagF64;
  if (!file.patch_ids.empty()) flags |= kFlagIds;
  put_u32(out, flags);
  for (const double v : file.values.data()) {
    if (file.dtype == Dtype::f64) {
      put_f64(out, v);
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  for (const auto id : file.patch_ids) put_u32(out, id);
}

EmbeddingFile read_esf(std::istream& in) {
  ByteReader r(in);
  char magic[4] = {};
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, "ESF1", 4) != 0) throw FormatError("bad ESF magic", 0);
  const std::uint32_t n = r.u32("row count");
  const std::uint32_t d = r.u32("column count");
  const std::size_t flags_offset = r.offset();
  const std::uint32_t flags = r.u32("flags");
  if ((flags & ~(kFlagF64 | kFlagIds)) != 0) throw FormatError("unknown ESF flag bits", flags_offset);

  EmbeddingFile file;
  file.dtype = (flags & kFlagF64) ? Dtype::f64 : Dtype::f32;
  const std::size_t payload_offset = r.offset();
  std::vector<double> data(static_cast<std::size_t>(n) * d);
  for (double& v : data) v = file.dtype == Dtype::f64 ? r.f64("payload") : static_cast<double>(r.f32("payload"));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw FormatError("non-finite embedding value", payload_offset + i * (file.dtype == Dtype::f64 ? 8 : 4));
    }
  }
  file.values = Matrix(n, d, std::move(data));

  if (flags & kFlagIds) {
    const std::size_t ids_offset = r.offset();
    file.patch_ids.resize(n);
    for (auto& id : file.patch_ids) id = r.u32("patch-id table");
    std::unordered_set<std::uint32_t> seen(file.patch_ids.begin(), file.patch_ids.end());
    if (seen.size() != file.patch_ids.size()) throw FormatError("duplicate patch ids", ids_offset);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after ESF payload", r.offset());
  return file;
}

Matrix read_embedding_csv(std::istream& in) {
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) throw InputError("embedding CSV line " + std::to_string(line_no) + ": ragged row");
    for (const auto& f : fields) data.push_back(parse_number(f, "embedding CSV line " + std::to_string(line_no)));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

EmbeddingFile load_embeddings(const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    auto in = open_in(path, false);
    EmbeddingFile file;
    file.values = read_embedding_csv(in);
    file.dtype = Dtype::f64;
    return file;
  }
  auto in = open_in(path, true);
  return read_esf(in);
}

void save_esf(const std::filesystem::path& path, const EmbeddingFile& file) {
  std::ostringstream os(std::ios::binary);
  write_esf(os, file);
  write_file_atomic(path, os.str());
}

void write_checkpoint(std::ostream& out, const MlpModel& model) {
  out.write("MLP1", 4);
  put_u32(out, static_cast<std::uint32_t>(model.input_dim));
  put_u32(out, static_cast<std::uint32_t>(kHiddenWidth));
  for (double v : model.w1) put_f64(out, v);
  for (double v : model.b1) put_f64(out, v);
  for (double v : model.w2) put_f64(out, v);
  put_f64(out, model.b2);
}

MlpModel read_checkpoint(std::istream& in) {
  ByteReader r(in);
  char magic[4] = {};
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, "MLP1", 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t c = r.u32("input dimension");
  const std::size_t hidden_offset = r.offset();
  const std::uint32_t hidden = r.u32("hidden width");
  if (hidden != kHiddenWidth) throw FormatError("checkpoint hidden width must be 512", hidden_offset);
  if (c == 0) throw FormatError("checkpoint input dimension is zero", 4);
  MlpModel model(c);
  for (double& v : model.w1) v = r.f64("w1");
  for (double& v : model.b1) v = r.f64("b1");
  for (double& v : model.w2) v = r.f64("w2");
  model.b2 = r.f64("b2");
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.offset());
  if (!model.all_finite()) throw FormatError("checkpoint contains non-finite parameters", 12);
  return model;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  expect_header(in, "image_id,path", "manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != 2) throw InputError("manifest row must be image_id,path: '" + line + "'");
    if (!seen.insert(fields[0]).second) throw InputError("duplicate image_id in manifest: " + fields[0]);
    std::filesystem::path p(fields[1]);
    if (p.is_relative()) p = base / p;
    out.push_back({fields[0], p});
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::string text = "image_id,path\n";
  for (const auto& e : entries) text += e.image_id + "," + e.path.string() + "\n";
  write_file_atomic(path, text);
}

std::vector<std::pair<std::string, double>> read_mos_csv(const std::filesystem::path& path) {
  auto in = open_in(path, false);
  expect_header(in, "image_id,mos", "MOS file " + path.string());
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != 2) throw InputError("MOS row must be image_id,mos: '" + line + "'");
    out.emplace_back(fields[0], parse_number(fields[1], "MOS for " + fields[0]));
  }
  return out;
}

void write_predictions_csv(std::ostream& out, const std::vector<PatchPrediction>& rows) {
  out << "image_id,patch_id,pmos\n";
  for (const auto& r : rows) out << r.image_id << ',' << r.patch_id << ',' << format_double(r.pmos) << '\n';
}

std::vector<PatchPrediction> read_predictions_csv(std::istream& in) {
  expect_header(in, "image_id,patch_id,pmos", "predictions CSV");
  std::vector<PatchPrediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != 3) throw InputError("prediction row must have 3 fields: '" + line + "'");
    out.push_back({f[0], static_cast<std::uint32_t>(parse_number(f[1], "patch_id")), parse_number(f[2], "pmos")});
  }
  return out;
}

void write_pooled_csv(std::ostream& out, const std::vector<PooledPrediction>& rows) {
  out << "image_id,pmos,mos\n";
  for (const auto& r : rows) {
    out << r.image_id << ',' << format_double(r.pmos) << ',' << (r.mos ? format_double(*r.mos) : std::string()) << '\n';
  }
}

std::vector<PooledPrediction> read_pooled_csv(std::istream& in) {
  expect_header(in, "image_id,pmos,mos", "pooled CSV");
  std::vector<PooledPrediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_fields(line);
    if (f.size() != 3) throw InputError("pooled row must have 3 fields: '" + line + "'");
    PooledPrediction p{f[0], parse_number(f[1], "pmos"), std::nullopt};
    if (!f[2].empty()) p.mos = parse_number(f[2], "mos");
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::ordered_json plan_to_json(const SamplingPlan& plan) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(plan.method));
  nlohmann::ordered_json params;
  params["patch_size"] = plan.params.patch_size;
  switch (plan.method) {
    case SamplingMethod::erp:
      params["image_width"] = plan.params.image_width;
      params["image_height"] = plan.params.image_height;
      break;
    case SamplingMethod::lat:
      params["alpha0"] = plan.params.alpha0;
      params["levels"] = plan.params.levels;
      params["polar_latitude"] = plan.params.polar_latitude;
      params["polar_caps"] = plan.params.polar_caps;
      break;
    case SamplingMethod::sp:
      params["fov"] = plan.params.fov;
      params["scanpaths"] = plan.params.scanpaths;
      params["fixations"] = plan.params.fixations;
      break;
  }
  j["params"] = params;
  j["count"] = plan.locations.size();
  auto locations = nlohmann::ordered_json::array();
  for (const auto& loc : plan.locations) {
    nlohmann::ordered_json l;
    if (loc.kind == LocationKind::pixel_rect) {
      l["kind"] = "pixel-rect";
      l["u"] = loc.u;
      l["v"] = loc.v;
      l["size"] = loc.size;
    } else {
      l["kind"] = "spherical";
      l["lat"] = loc.lat;
      l["lon"] = loc.lon;
      l["extent"] = loc.extent;
    }
    l["level"] = loc.level;
    locations.push_back(std::move(l));
  }
  j["locations"] = std::move(locations);
  return j;
}

SamplingPlan plan_from_json(const nlohmann::ordered_json& j) {
  try {
    SamplingPlan plan;
    const auto method = j.at("method").get<std::string>();
    if (method == "ERP") {
      plan.method = SamplingMethod::erp;
    } else if (method == "LAT") {
      plan.method = SamplingMethod::lat;
    } else if (method == "SP") {
      plan.method = SamplingMethod::sp;
    } else {
      throw InputError("unknown sampling method '" + method + "'");
    }
    const auto& p = j.at("params");
    plan.params.patch_size = p.at("patch_size").get<std::size_t>();
    plan.params.image_width = p.value("image_width", std::size_t{0});
    plan.params.image_height = p.value("image_height", std::size_t{0});
    plan.params.alpha0 = p.value("alpha0", 0.0);
    plan.params.levels = p.value("levels", std::size_t{0});
    plan.params.polar_latitude = p.value("polar_latitude", 0.0);
    plan.params.polar_caps = p.value("polar_caps", true);
    plan.params.fov = p.value("fov", 0.0);
    plan.params.scanpaths = p.value("scanpaths", std::size_t{0});
    plan.params.fixations = p.value("fixations", std::size_t{0});
    for (const auto& l : j.at("locations")) {
      const auto kind = l.at("kind").get<std::string>();
      if (kind == "pixel-rect") {
        plan.locations.push_back(
            PatchLocation::rect(l.at("u").get<std::size_t>(), l.at("v").get<std::size_t>(), l.at("size").get<std::size_t>()));
      } else if (kind == "spherical") {
        plan.locations.push_back(PatchLocation::sphere(l.at("lat").get<double>(), l.at("lon").get<double>(),
                                                       l.at("extent").get<double>(), l.at("level").get<std::size_t>()));
      } else {
        throw InputError("unknown location kind '" + kind + "'");
      }
    }
    if (j.at("count").get<std::size_t>() != plan.locations.size()) throw InputError("plan count does not match its locations");
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed plan JSON: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace spsel
