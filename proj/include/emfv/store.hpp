#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "emfv/banded_index.hpp"
#include "emfv/neuralnet.hpp"

namespace emfv {

inline constexpr int kSnapshotFormatVersion = 1;

struct Snapshot {
  BandedIndex index;
  Gallery gallery;
};

// Parsed snapshot before any invariant is checked. `verify` inspects this
// form so it can report problems a strict load would refuse outright.
struct SnapshotDocument {
  struct Person {
    std::string id;
    double low = 0.0;
    double high = 0.0;
    std::vector<std::vector<double>> samples;
  };

  int format_version = kSnapshotFormatVersion;
  std::size_t dimension = 0;
  std::vector<double> mean;
  std::size_t mean_source_count = 0;
  std::uint64_t index_version = 0;
  IndexOptions options;
  std::string created_at;
  std::vector<Person> persons;
};

// Only feature vectors, band endpoints and the mean are written. Numbers
// use the shortest decimal form that parses back to the same double.
std::string snapshot_to_json(const BandedIndex& index, const Gallery& gallery,
                             const std::string& created_at);

// Writes via a temporary file and rename. Throws IoError.
void save_snapshot(const BandedIndex& index, const Gallery& gallery,
                   const std::filesystem::path& path);

// Throws FormatError for malformed text or an unsupported format_version.
SnapshotDocument parse_snapshot_document(std::string_view text);

// Throws InvariantViolationError when bands overlap, dimensions disagree,
// vectors are invalid, or gallery and bands name different persons.
Snapshot snapshot_from_document(const SnapshotDocument& doc);

Snapshot parse_snapshot(std::string_view text);
Snapshot load_snapshot(const std::filesystem::path& path);

// Binary weights: "EMFVNET1", then little-endian u32 layer descriptors and
// f64 parameter arrays.
std::string serialize_network(const Network& network);
Network deserialize_network(std::string_view bytes);
void save_network(const Network& network, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

// One JSON object per line: {"id": ..., "vector": [...]}.
struct VectorRecord {
  std::string id;
  std::vector<double> values;
};

std::vector<VectorRecord> read_vector_lines(std::istream& in);
std::vector<VectorRecord> read_vector_file(const std::filesystem::path& path);
std::string vector_line(const VectorRecord& record);

// Netpbm greyscale (P2 or P5), scaled into [0, 1].
Tensor read_pgm(const std::filesystem::path& path);
Tensor decode_pgm(std::string_view bytes);
void write_pgm(const Tensor& image, const std::filesystem::path& path);

// One subdirectory per class, sorted by name; label = position.
struct LabeledDataset {
  std::vector<LabeledImage> images;
  std::vector<std::string> class_names;
};

LabeledDataset load_labeled_directory(const std::filesystem::path& dir);
void write_labeled_directory(const LabeledDataset& dataset,
                             const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view data);
std::string utc_timestamp();

}  // namespace emfv
