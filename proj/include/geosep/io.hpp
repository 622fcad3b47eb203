#pragma once

#include "geosep/chart.hpp"
#include "geosep/curvature.hpp"
#include "geosep/embedding.hpp"

#include <iosfwd>
#include <string>

// Binary files are little-endian with a four-byte magic and a u32 version.
namespace geosep::io {

// Series: "GBSS", u32 version, u32 dim, u64 segments, then per segment
// u64 length, f64 dt and length * dim f64 points, row by row.
void write_series(std::ostream& out, const Series& s);
Series read_series(std::istream& in);
void save_series(const std::string& path, const Series& s);
Series load_series(const std::string& path);

// CSV mirror: header "segment,dt,x0,...", one row per point.
void write_series_csv(std::ostream& out, const Series& s);
Series read_series_csv(std::istream& in);

enum class FieldKind : std::uint32_t { Metric = 1, Connection = 2, Curvature = 3, ChartMetric = 4 };

// Fields: "GBSF", u32 version, u32 kind, u32 ndim, per axis f64 lo, f64 hi,
// u64 count, then u64 components, the row-major payload and a validity
// bitmask (bit i of byte i / 8 for node i).
void write_field(std::ostream& out, FieldKind kind, const geometry::TensorField& f);
geometry::TensorField read_field(std::istream& in, FieldKind expected);

// A metric is stored as one field of 2 n^2 + 1 components per node: g^kl,
// g_kl and the sample count.
void save_metric(const std::string& path, const geometry::MetricField& m);
geometry::MetricField load_metric(const std::string& path);
void save_connection(const std::string& path, const geometry::ConnectionField& c);
geometry::ConnectionField load_connection(const std::string& path);
void save_curvature(const std::string& path, const geometry::CurvatureField& c);
geometry::CurvatureField load_curvature(const std::string& path);

// "GBSE": LLE model with its landmarks, neighbour lists and weights.
void save_embedding(const std::string& path, const embedding::EmbeddingModel& m);
embedding::EmbeddingModel load_embedding(const std::string& path);

// "GBSC": geodesic chart lattice with node positions and frames.
void save_chart(const std::string& path, const separation::GeodesicChart& c);
separation::GeodesicChart load_chart(const std::string& path);

void save_text(const std::string& path, const std::string& text);
std::string load_text(const std::string& path);

}  // namespace geosep::io
