#include "emfv/store.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "emfv/errors.hpp"
#include "json.hpp"

namespace emfv {

using json = nlohmann::json;

namespace {

const json& require(const json& obj, const char* key) {
  if (!obj.is_object()) throw FormatError("expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw FormatError(std::string("missing key '") + key + "'");
  }
  return *it;
}

double as_number(const json& j, const char* what) {
  if (!j.is_number()) throw FormatError(std::string(what) + " must be a number");
  return j.get<double>();
}

std::uint64_t as_count(const json& j, const char* what) {
  if (!j.is_number_unsigned()) {
    throw FormatError(std::string(what) + " must be a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

std::vector<double> as_numbers(const json& j, const char* what) {
  if (!j.is_array()) throw FormatError(std::string(what) + " must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(as_number(v, what));
  return out;
}

// Little-endian byte cursor over a weights file.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t read_le(std::size_t width) {
    if (bytes_.size() - pos_ < width) {
      throw FormatError("weights file truncated at byte " +
                        std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += width;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(read_le(1)); }
  double f64() { return std::bit_cast<double>(read_le(8)); }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("weights file truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_le(std::string& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

constexpr std::string_view kNetMagic = "EMFVNET1";
constexpr std::uint32_t kNoFeatureLayer = 0xffffffffu;

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view data) {
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move snapshot into place at " + path.string());
  }
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string snapshot_to_json(const BandedIndex& index, const Gallery& gallery,
                             const std::string& created_at) {
  json doc;
  doc["format_version"] = kSnapshotFormatVersion;
  doc["dimension"] = index.dimension();
  doc["mean"] = std::vector<double>(index.mean().values().begin(),
                                    index.mean().values().end());
  doc["mean_source_count"] = index.mean().source_count();
  doc["index_version"] = index.version();
  doc["options"] = {{"margin", index.options().margin},
                    {"single_sample_halfwidth",
                     index.options().single_sample_halfwidth},
                    {"tie_tolerance", index.options().tie_tolerance}};
  doc["created_at"] = created_at;

  json persons = json::array();
  for (const Band& band : index.bands()) {
    json samples = json::array();
    auto it = gallery.persons().find(band.person);
    if (it == gallery.persons().end()) {
      throw SerializationError("band owner " + band.person.str() +
                               " is missing from the gallery");
    }
    for (const auto& s : it->second) {
      samples.push_back(std::vector<double>(s.values().begin(), s.values().end()));
    }
    persons.push_back({{"id", band.person.str()},
                       {"band", {band.low, band.high}},
                       {"samples", std::move(samples)}});
  }
  if (persons.size() != gallery.persons().size()) {
    throw SerializationError("gallery has persons without a band");
  }
  doc["persons"] = std::move(persons);
  // No trailing newline: every proper prefix of the document is invalid.
  return doc.dump();
}

void save_snapshot(const BandedIndex& index, const Gallery& gallery,
                   const std::filesystem::path& path) {
  write_file_atomic(path, snapshot_to_json(index, gallery, utc_timestamp()));
}

SnapshotDocument parse_snapshot_document(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("snapshot is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("snapshot must be a JSON object");

  SnapshotDocument out;
  const json& version = require(doc, "format_version");
  if (!version.is_number_integer() ||
      version.get<long long>() != kSnapshotFormatVersion) {
    throw FormatError("unsupported snapshot format_version " + version.dump() +
                      "; supported versions: 1");
  }
  out.dimension = as_count(require(doc, "dimension"), "dimension");
  out.mean = as_numbers(require(doc, "mean"), "mean");
  if (doc.contains("mean_source_count")) {
    out.mean_source_count =
        as_count(doc["mean_source_count"], "mean_source_count");
  }
  if (doc.contains("index_version")) {
    out.index_version = as_count(doc["index_version"], "index_version");
  }
  if (doc.contains("options")) {
    const json& o = doc["options"];
    out.options.margin = as_number(require(o, "margin"), "margin");
    out.options.single_sample_halfwidth = as_number(
        require(o, "single_sample_halfwidth"), "single_sample_halfwidth");
    out.options.tie_tolerance =
        as_number(require(o, "tie_tolerance"), "tie_tolerance");
  }
  if (doc.contains("created_at")) {
    if (!doc["created_at"].is_string()) {
      throw FormatError("created_at must be a string");
    }
    out.created_at = doc["created_at"].get<std::string>();
  }
  const json& persons = require(doc, "persons");
  if (!persons.is_array()) throw FormatError("persons must be an array");
  for (const auto& p : persons) {
    SnapshotDocument::Person person;
    const json& id = require(p, "id");
    if (!id.is_string()) throw FormatError("person id must be a string");
    person.id = id.get<std::string>();
    const json& band = require(p, "band");
    if (!band.is_array() || band.size() != 2) {
      throw FormatError("band must be a two-element array");
    }
    person.low = as_number(band[0], "band");
    person.high = as_number(band[1], "band");
    const json& samples = require(p, "samples");
    if (!samples.is_array()) throw FormatError("samples must be an array");
    for (const auto& s : samples) person.samples.push_back(as_numbers(s, "sample"));
    out.persons.push_back(std::move(person));
  }
  return out;
}

Snapshot snapshot_from_document(const SnapshotDocument& doc) {
  try {
    if (doc.mean.size() != doc.dimension) {
      throw InvariantViolationError("mean has " +
                                    std::to_string(doc.mean.size()) +
                                    " entries, dimension is " +
                                    std::to_string(doc.dimension));
    }
    Snapshot snap;
    std::vector<Band> bands;
    for (const auto& p : doc.persons) {
      PersonId id(p.id);
      std::vector<FeatureVector> samples;
      for (const auto& s : p.samples) {
        if (s.size() != doc.dimension) {
          throw InvariantViolationError("sample of " + p.id +
                                        " has the wrong dimension");
        }
        samples.emplace_back(s);
      }
      snap.gallery = snap.gallery.with_person(id, std::move(samples));
      bands.push_back(Band{id, p.low, p.high});
    }
    MeanVector mean;
    if (!doc.mean.empty()) {
      mean = MeanVector(doc.mean, std::max<std::size_t>(
                                      1, doc.mean_source_count));
    }
    snap.index = BandedIndex::from_bands(std::move(mean), std::move(bands),
                                         doc.options, doc.index_version);
    return snap;
  } catch (const InvariantViolationError&) {
    throw;
  } catch (const Error& e) {
    throw InvariantViolationError("snapshot violates index invariants: " +
                                  std::string(e.what()));
  }
}

Snapshot parse_snapshot(std::string_view text) {
  return snapshot_from_document(parse_snapshot_document(text));
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  return parse_snapshot(read_file(path));
}

std::string serialize_network(const Network& network) {
  std::string out(kNetMagic);
  const Shape in = network.input_shape();
  put_le(out, in.channels, 4);
  put_le(out, in.height, 4);
  put_le(out, in.width, 4);
  const auto layers = network.layers();
  put_le(out, layers.size(), 4);
  std::uint32_t feature = kNoFeatureLayer;
  try {
    feature = static_cast<std::uint32_t>(network.feature_layer_index());
  } catch (const LayerShapeError&) {
  }
  put_le(out, feature, 4);
  for (const Layer& l : layers) {
    put_le(out, static_cast<std::uint8_t>(l.kind), 1);
    std::uint32_t params[4] = {0, 0, 0, 0};
    switch (l.kind) {
      case LayerKind::kConv:
        params[0] = static_cast<std::uint32_t>(l.output.channels);
        params[1] = static_cast<std::uint32_t>(l.kernel);
        params[2] = static_cast<std::uint32_t>(l.padding);
        params[3] = static_cast<std::uint32_t>(l.stride);
        break;
      case LayerKind::kMaxPool:
        params[0] = static_cast<std::uint32_t>(l.window);
        break;
      case LayerKind::kDense:
        params[0] = static_cast<std::uint32_t>(l.output.size());
        break;
      default:
        break;
    }
    for (auto p : params) put_le(out, p, 4);
    put_le(out, l.weights.size(), 4);
    for (double w : l.weights) put_le(out, std::bit_cast<std::uint64_t>(w), 8);
    put_le(out, l.biases.size(), 4);
    for (double b : l.biases) put_le(out, std::bit_cast<std::uint64_t>(b), 8);
  }
  return out;
}

Network deserialize_network(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kNetMagic.size()) != kNetMagic) {
    throw FormatError("not an EMFVNET1 weights file");
  }
  Shape in;
  in.channels = r.u32();
  in.height = r.u32();
  in.width = r.u32();
  const std::uint32_t count = r.u32();
  const std::uint32_t feature = r.u32();
  try {
    Network net(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto kind = static_cast<LayerKind>(r.u8());
      std::uint32_t p[4];
      for (auto& v : p) v = r.u32();
      switch (kind) {
        case LayerKind::kConv:
          net.conv(p[0], p[1], p[2], p[3]);
          break;
        case LayerKind::kRelu:
          net.relu();
          break;
        case LayerKind::kMaxPool:
          net.maxpool(p[0]);
          break;
        case LayerKind::kDense:
          net.dense(p[0]);
          break;
        case LayerKind::kSoftmax:
          net.softmax();
          break;
        default:
          throw FormatError("unknown layer kind " +
                            std::to_string(static_cast<int>(kind)));
      }
      const Layer& layer = net.layers().back();
      const std::uint32_t nw = r.u32();
      if (nw != layer.weights.size()) {
        throw FormatError("layer " + std::to_string(i) +
                          " weight count does not match its shape");
      }
      std::vector<double> w(nw);
      for (double& v : w) v = r.f64();
      const std::uint32_t nb = r.u32();
      if (nb != layer.biases.size()) {
        throw FormatError("layer " + std::to_string(i) +
                          " bias count does not match its shape");
      }
      std::vector<double> b(nb);
      for (double& v : b) v = r.f64();
      if (layer.has_parameters()) {
        std::copy(w.begin(), w.end(), net.weights(i).begin());
        std::copy(b.begin(), b.end(), net.biases(i).begin());
      }
    }
    if (r.remaining() != 0) {
      throw FormatError("trailing bytes after the last layer");
    }
    if (feature != kNoFeatureLayer) net.set_feature_layer(feature);
    return net;
  } catch (const LayerShapeError& e) {
    throw FormatError(std::string("invalid layer description: ") + e.what());
  }
}

void save_network(const Network& network, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_network(network));
}

Network load_network(const std::filesystem::path& path) {
  return deserialize_network(read_file(path));
}

std::vector<VectorRecord> read_vector_lines(std::istream& in) {
  std::vector<VectorRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      VectorRecord rec;
      const json& id = require(j, "id");
      rec.id = id.is_string() ? id.get<std::string>() : id.dump();
      rec.values = as_numbers(require(j, "vector"), "vector");
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<VectorRecord> read_vector_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_vector_lines(in);
}

std::string vector_line(const VectorRecord& record) {
  return json{{"id", record.id}, {"vector", record.values}}.dump();
}

Tensor decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() &&
           std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
      ++digits;
    }
    if (digits == 0) throw FormatError("malformed PGM header");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) {
    throw FormatError("not a P2/P5 greyscale PGM image");
  }
  const bool binary = bytes[1] == '5';
  pos = 2;
  const std::size_t width = number();
  const std::size_t height = number();
  const std::size_t maxval = number();
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
    throw FormatError("unsupported PGM geometry or depth");
  }
  Tensor img(Shape{1, height, width});
  auto data = img.data();
  if (binary) {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + data.size()) throw FormatError("PGM data truncated");
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = static_cast<unsigned char>(bytes[pos + i]) /
                static_cast<double>(maxval);
    }
  } else {
    for (double& v : data) v = static_cast<double>(number()) / static_cast<double>(maxval);
  }
  return img;
}

Tensor read_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file(path));
}

void write_pgm(const Tensor& image, const std::filesystem::path& path) {
  const Shape& s = image.shape();
  if (s.channels != 1) throw LayerShapeError("PGM images have one channel");
  std::string out = "P5\n" + std::to_string(s.width) + " " +
                    std::to_string(s.height) + "\n255\n";
  for (double v : image.data()) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(c * 255.0 + 0.5)));
  }
  write_file_atomic(path, out);
}

LabeledDataset load_labeled_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  LabeledDataset ds;
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) classes.push_back(e.path());
  }
  std::sort(classes.begin(), classes.end());
  for (std::size_t label = 0; label < classes.size(); ++label) {
    ds.class_names.push_back(classes[label].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[label])) {
      if (e.is_regular_file() && e.path().extension() == ".pgm") {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) ds.images.push_back({read_pgm(f), label});
  }
  return ds;
}

void write_labeled_directory(const LabeledDataset& dataset,
                             const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<std::size_t> counters(dataset.class_names.size(), 0);
  for (const auto& name : dataset.class_names) fs::create_directories(dir / name);
  for (const auto& item : dataset.images) {
    if (item.label >= dataset.class_names.size()) {
      throw LabelError("image label has no class name");
    }
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.pgm", counters[item.label]++);
    write_pgm(item.image, dir / dataset.class_names[item.label] / name);
  }
}

}  // namespace emfv
