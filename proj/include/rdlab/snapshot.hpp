#ifndef RDLAB_SNAPSHOT_HPP
#define RDLAB_SNAPSHOT_HPP

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdlab/error.hpp"
#include "rdlab/field.hpp"

namespace rdlab {

static_assert(std::endian::native == std::endian::little, ".tfs I/O assumes a little-endian host");

/// Writes text under a temporary name, then renames it into place.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp.string());
    out << text;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Writes `f` as a .tfs snapshot: one JSON header line, then raw f64le lattices per component.
/// The file is written under a temporary name and renamed into place.
template <int Dim>
void write_snapshot(const std::filesystem::path& path, const Field<Dim>& f, const std::string& stem = "g") {
  nlohmann::json hdr;
  hdr["version"] = 1;
  hdr["dim"] = Dim;
  hdr["N"] = f.grid().n;
  hdr["L"] = f.grid().length;
  hdr["components"] = f.component_names(stem);
  hdr["dtype"] = "f64le";
  hdr["order"] = "row-major, axis 0 slowest";
  hdr["rank"] = f.shape().rank;
  hdr["symmetric"] = f.shape().symmetric;
  hdr["upper"] = f.shape().upper;
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp.string());
    out << hdr.dump() << '\n';
    out.write(reinterpret_cast<const char*>(f.raw().data()),
              static_cast<std::streamsize>(f.raw().size() * sizeof(double)));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct SnapshotHeader {
  int dim = 0;
  int n = 0;
  double length = 0.0;
  std::vector<std::string> components;
  TensorShape shape;
};

inline SnapshotHeader read_snapshot_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing .tfs header line");
  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad .tfs header: ") + e.what());
  }
  if (hdr.value("version", 0) != 1) throw FormatError("unsupported .tfs version");
  if (hdr.value("dtype", std::string()) != "f64le") throw FormatError("unsupported dtype");
  SnapshotHeader h;
  h.dim = hdr.at("dim").get<int>();
  h.n = hdr.at("N").get<int>();
  h.length = hdr.at("L").get<double>();
  h.components = hdr.at("components").get<std::vector<std::string>>();
  const auto nc = static_cast<int>(h.components.size());
  if (hdr.contains("rank")) {
    h.shape = {hdr["rank"].get<int>(), hdr.value("symmetric", false), hdr.value("upper", 0u)};
  } else if (nc == 1) {
    h.shape = TensorShape::scalar();
  } else if (nc == h.dim * (h.dim + 1) / 2) {
    h.shape = TensorShape::metric();
  } else if (nc == h.dim) {
    h.shape = TensorShape::vector();
  } else {
    throw FormatError("cannot infer tensor shape from component count");
  }
  return h;
}

template <int Dim>
Field<Dim> read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto h = read_snapshot_header(in);
  if (h.dim != Dim) throw FormatError("snapshot dimension mismatch");
  Field<Dim> f(GridSpec<Dim>(h.n, h.length), h.shape);
  if (f.components() != static_cast<int>(h.components.size())) throw FormatError("component count mismatch");
  in.read(reinterpret_cast<char*>(f.raw().data()), static_cast<std::streamsize>(f.raw().size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(f.raw().size() * sizeof(double)))
    throw FormatError("truncated .tfs payload");
  return f;
}

template <int Dim>
MetricField<Dim> read_metric_snapshot(const std::filesystem::path& path) {
  auto f = read_snapshot<Dim>(path);
  if (!f.shape().symmetric || f.shape().rank != 2) throw FormatError("snapshot is not a symmetric 2-tensor");
  return MetricField<Dim>(std::move(f));
}

}  // namespace rdlab

#endif  // RDLAB_SNAPSHOT_HPP
