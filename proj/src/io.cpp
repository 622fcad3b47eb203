#include "geosep/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace geosep::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("unexpected end of file");
    return v;
}

void put_doubles(std::ostream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& in, double* p, std::size_t n) {
    if (!in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double))))
        throw FormatError("unexpected end of file");
}

void put_magic(std::ostream& out, const char* magic) {
    out.write(magic, 4);
    put<std::uint32_t>(out, kVersion);
}

void expect_magic(std::istream& in, const char* magic) {
    char m[4];
    if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0)
        throw FormatError(std::string("not a ") + std::string(magic, 4) + " file");
    const auto v = get<std::uint32_t>(in);
    if (v != kVersion) throw FormatError("unsupported " + std::string(magic, 4) + " version " + std::to_string(v));
}

// Guards allocations driven by header fields against corrupt files.
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 34;

std::uint64_t checked(std::uint64_t n) {
    if (n > kMaxElements) throw FormatError("implausible element count in header");
    return n;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot read " + path);
    return f;
}

void finish(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw FormatError("write failed for " + path);
}

void put_ints(std::ostream& out, const std::vector<int>& v) {
    put<std::uint64_t>(out, v.size());
    for (int x : v) put<std::int64_t>(out, x);
}

std::vector<int> get_ints(std::istream& in) {
    std::vector<int> v(checked(get<std::uint64_t>(in)));
    for (auto& x : v) x = static_cast<int>(get<std::int64_t>(in));
    return v;
}

void put_matrix(std::ostream& out, const PointMatrix& m) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    put_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
}

PointMatrix get_matrix(std::istream& in) {
    const auto r = checked(get<std::uint64_t>(in));
    const auto c = checked(get<std::uint64_t>(in));
    PointMatrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    get_doubles(in, m.data(), static_cast<std::size_t>(m.size()));
    return m;
}

void put_vec(std::ostream& out, const Vec& v) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
    put_doubles(out, v.data(), static_cast<std::size_t>(v.size()));
}

Vec get_vec(std::istream& in) {
    Vec v(static_cast<Eigen::Index>(checked(get<std::uint64_t>(in))));
    get_doubles(in, v.data(), static_cast<std::size_t>(v.size()));
    return v;
}

void put_bits(std::ostream& out, const std::vector<std::uint8_t>& flags) {
    std::vector<char> bits((flags.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) bits[i / 8] = static_cast<char>(bits[i / 8] | (1 << (i % 8)));
    out.write(bits.data(), static_cast<std::streamsize>(bits.size()));
}

std::vector<std::uint8_t> get_bits(std::istream& in, std::size_t n) {
    std::vector<char> bits((n + 7) / 8);
    if (!in.read(bits.data(), static_cast<std::streamsize>(bits.size()))) throw FormatError("unexpected end of file");
    std::vector<std::uint8_t> flags(n);
    for (std::size_t i = 0; i < n; ++i) flags[i] = (bits[i / 8] >> (i % 8)) & 1;
    return flags;
}

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

void write_series(std::ostream& out, const Series& s) {
    put_magic(out, "GBSS");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.dim));
    put<std::uint64_t>(out, s.segments.size());
    for (const auto& seg : s.segments) {
        if (seg.points.cols() != s.dim) throw DomainError("segment dimension does not match the series");
        put<std::uint64_t>(out, static_cast<std::uint64_t>(seg.points.rows()));
        put<double>(out, seg.dt);
        put_doubles(out, seg.points.data(), static_cast<std::size_t>(seg.points.size()));
    }
}

Series read_series(std::istream& in) {
    expect_magic(in, "GBSS");
    Series s;
    s.dim = static_cast<int>(get<std::uint32_t>(in));
    const auto count = checked(get<std::uint64_t>(in));
    s.segments.reserve(std::min<std::uint64_t>(count, 1 << 24));
    for (std::uint64_t i = 0; i < count; ++i) {
        Segment seg;
        const auto len = checked(get<std::uint64_t>(in));
        seg.dt = get<double>(in);
        seg.points.resize(static_cast<Eigen::Index>(len), s.dim);
        get_doubles(in, seg.points.data(), static_cast<std::size_t>(seg.points.size()));
        s.segments.push_back(std::move(seg));
    }
    return s;
}

void save_series(const std::string& path, const Series& s) {
    auto f = open_out(path);
    write_series(f, s);
    finish(f, path);
}

Series load_series(const std::string& path) {
    auto f = open_in(path);
    return read_series(f);
}

void write_series_csv(std::ostream& out, const Series& s) {
    out << "segment,dt";
    for (int a = 0; a < s.dim; ++a) out << ",x" << a;
    out << "\n";
    for (std::size_t i = 0; i < s.segments.size(); ++i) {
        const auto& seg = s.segments[i];
        for (Eigen::Index r = 0; r < seg.points.rows(); ++r) {
            out << i << "," << num(seg.dt);
            for (int a = 0; a < s.dim; ++a) out << "," << num(seg.points(r, a));
            out << "\n";
        }
    }
}

Series read_series_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("segment,dt", 0) != 0) throw FormatError("missing CSV header");
    Series s;
    s.dim = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
    if (s.dim < 1) throw FormatError("CSV has no coordinate columns");
    std::vector<std::vector<double>> rows;
    long current = -1;
    double dt = 0.0;
    auto flush = [&] {
        if (rows.empty()) return;
        Segment seg;
        seg.dt = dt;
        seg.points.resize(static_cast<Eigen::Index>(rows.size()), s.dim);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (int a = 0; a < s.dim; ++a) seg.points(static_cast<Eigen::Index>(r), a) = rows[r][a];
        s.segments.push_back(std::move(seg));
        rows.clear();
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != s.dim + 2) throw FormatError("CSV row has the wrong column count");
        try {
            const long seg = std::stol(cells[0]);
            if (seg != current) {
                flush();
                current = seg;
                dt = std::stod(cells[1]);
            }
            std::vector<double> p(s.dim);
            for (int a = 0; a < s.dim; ++a) p[a] = std::stod(cells[a + 2]);
            rows.push_back(std::move(p));
        } catch (const std::logic_error&) {
            throw FormatError("bad number in CSV row: " + line);
        }
    }
    flush();
    return s;
}

void write_field(std::ostream& out, FieldKind kind, const geometry::TensorField& f) {
    put_magic(out, "GBSF");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kind));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.ndim()));
    for (int a = 0; a < f.grid.ndim(); ++a) {
        put<double>(out, f.grid.lo[a]);
        put<double>(out, f.grid.hi[a]);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(f.grid.count[a]));
    }
    put<std::uint64_t>(out, static_cast<std::uint64_t>(f.components));
    put_doubles(out, f.data.data(), f.data.size());
    put_bits(out, f.valid);
}

geometry::TensorField read_field(std::istream& in, FieldKind expected) {
    expect_magic(in, "GBSF");
    if (get<std::uint32_t>(in) != static_cast<std::uint32_t>(expected)) throw FormatError("field file has the wrong kind");
    geometry::GridSpec g;
    const auto ndim = get<std::uint32_t>(in);
    if (ndim == 0 || ndim > 16) throw FormatError("implausible field dimension");
    for (std::uint32_t a = 0; a < ndim; ++a) {
        g.lo.push_back(get<double>(in));
        g.hi.push_back(get<double>(in));
        g.count.push_back(static_cast<int>(checked(get<std::uint64_t>(in))));
    }
    try {
        g.validate();
    } catch (const DomainError& e) {
        throw FormatError(std::string("bad grid in field file: ") + e.what());
    }
    const auto comps = checked(get<std::uint64_t>(in));
    checked(g.node_count() * comps);
    geometry::TensorField f(g, static_cast<int>(comps));
    get_doubles(in, f.data.data(), f.data.size());
    f.valid = get_bits(in, g.node_count());
    return f;
}

void save_metric(const std::string& path, const geometry::MetricField& m) {
    const int n = m.dim();
    const int nn = n * n;
    geometry::TensorField packed(m.grid(), 2 * nn + 1);
    for (std::size_t i = 0; i < m.grid().node_count(); ++i) {
        std::copy_n(m.upper.at(i), nn, packed.at(i));
        std::copy_n(m.lower.at(i), nn, packed.at(i) + nn);
        packed.at(i)[2 * nn] = static_cast<double>(m.count[i]);
        packed.valid[i] = m.upper.valid[i];
    }
    auto f = open_out(path);
    write_field(f, FieldKind::Metric, packed);
    finish(f, path);
}

geometry::MetricField load_metric(const std::string& path) {
    auto f = open_in(path);
    const auto packed = read_field(f, FieldKind::Metric);
    const int n = packed.grid.ndim();
    const int nn = n * n;
    if (packed.components != 2 * nn + 1) throw FormatError("metric field has the wrong component count");
    geometry::MetricField m;
    m.upper = geometry::TensorField(packed.grid, nn);
    m.lower = geometry::TensorField(packed.grid, nn);
    m.count.resize(packed.grid.node_count());
    for (std::size_t i = 0; i < packed.grid.node_count(); ++i) {
        std::copy_n(packed.at(i), nn, m.upper.at(i));
        std::copy_n(packed.at(i) + nn, nn, m.lower.at(i));
        m.count[i] = static_cast<std::uint64_t>(packed.at(i)[2 * nn]);
        m.upper.valid[i] = m.lower.valid[i] = packed.valid[i];
    }
    return m;
}

void save_connection(const std::string& path, const geometry::ConnectionField& c) {
    auto f = open_out(path);
    write_field(f, FieldKind::Connection, c.gamma);
    finish(f, path);
}

geometry::ConnectionField load_connection(const std::string& path) {
    auto f = open_in(path);
    geometry::ConnectionField c{read_field(f, FieldKind::Connection)};
    const int n = c.dim();
    if (c.gamma.components != n * n * n) throw FormatError("connection field has the wrong component count");
    return c;
}

void save_curvature(const std::string& path, const geometry::CurvatureField& c) {
    auto f = open_out(path);
    write_field(f, FieldKind::Curvature, c.riemann);
    finish(f, path);
}

geometry::CurvatureField load_curvature(const std::string& path) {
    auto f = open_in(path);
    geometry::CurvatureField c{read_field(f, FieldKind::Curvature)};
    const int n = c.dim();
    if (c.riemann.components != n * n * n * n) throw FormatError("curvature field has the wrong component count");
    return c;
}

void save_embedding(const std::string& path, const embedding::EmbeddingModel& m) {
    auto f = open_out(path);
    put_magic(f, "GBSE");
    put<std::int64_t>(f, m.k);
    put<double>(f, m.regularization);
    put<double>(f, m.max_distance);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(m.out_of_sample));
    put<std::int64_t>(f, m.affine_neighbors);
    put_matrix(f, m.landmarks);
    put_ints(f, m.neighbors);
    put<std::uint64_t>(f, m.weights.size());
    put_doubles(f, m.weights.data(), m.weights.size());
    put_matrix(f, m.embedded);
    put_vec(f, m.eigenvalues);
    finish(f, path);
}

embedding::EmbeddingModel load_embedding(const std::string& path) {
    auto f = open_in(path);
    expect_magic(f, "GBSE");
    embedding::EmbeddingModel m;
    m.k = static_cast<int>(get<std::int64_t>(f));
    m.regularization = get<double>(f);
    m.max_distance = get<double>(f);
    const auto rule = get<std::uint32_t>(f);
    if (rule > 1) throw FormatError("unknown out-of-sample rule");
    m.out_of_sample = static_cast<embedding::OutOfSample>(rule);
    m.affine_neighbors = static_cast<int>(get<std::int64_t>(f));
    m.landmarks = get_matrix(f);
    m.neighbors = get_ints(f);
    m.weights.resize(checked(get<std::uint64_t>(f)));
    get_doubles(f, m.weights.data(), m.weights.size());
    m.embedded = get_matrix(f);
    m.eigenvalues = get_vec(f);
    const auto rows = static_cast<std::size_t>(m.landmarks.rows());
    if (m.k < 1 || m.neighbors.size() != rows * static_cast<std::size_t>(m.k) || m.weights.size() != m.neighbors.size() ||
        static_cast<std::size_t>(m.embedded.rows()) != rows)
        throw FormatError("embedding arrays have inconsistent sizes");
    for (int j : m.neighbors)
        if (j < 0 || static_cast<std::size_t>(j) >= rows) throw FormatError("neighbour index out of range");
    m.build_index();
    return m;
}

void save_chart(const std::string& path, const separation::GeodesicChart& c) {
    auto f = open_out(path);
    put_magic(f, "GBSC");
    put_ints(f, c.extents);
    put<std::uint64_t>(f, c.s_unit.size());
    put_doubles(f, c.s_unit.data(), c.s_unit.size());
    put_vec(f, c.base);
    put_ints(f, c.blocks);
    put_ints(f, c.columns);
    put_matrix(f, c.positions);
    put_matrix(f, c.frames);
    put<std::uint64_t>(f, c.valid.size());
    put_bits(f, c.valid);
    finish(f, path);
}

separation::GeodesicChart load_chart(const std::string& path) {
    auto f = open_in(path);
    expect_magic(f, "GBSC");
    separation::GeodesicChart c;
    c.extents = get_ints(f);
    c.s_unit.resize(checked(get<std::uint64_t>(f)));
    get_doubles(f, c.s_unit.data(), c.s_unit.size());
    c.base = get_vec(f);
    c.blocks = get_ints(f);
    c.columns = get_ints(f);
    c.positions = get_matrix(f);
    c.frames = get_matrix(f);
    const auto nodes = checked(get<std::uint64_t>(f));
    c.valid = get_bits(f, nodes);
    const int n = c.dim();
    std::size_t expect = 1;
    for (int e : c.extents) {
        if (e < 0) throw FormatError("negative chart extent");
        expect *= static_cast<std::size_t>(2 * e + 1);
    }
    if (static_cast<int>(c.s_unit.size()) != n || c.base.size() != n || nodes != expect ||
        static_cast<std::size_t>(c.positions.rows()) != nodes || c.positions.cols() != n)
        throw FormatError("chart arrays have inconsistent sizes");
    c.build_index();
    return c;
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f << text;
    finish(f, path);
}

std::string load_text(const std::string& path) {
    auto f = open_in(path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace geosep::io
