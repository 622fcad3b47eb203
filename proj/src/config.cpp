#include "geosep/config.hpp"

#include <charconv>
#include <sstream>

namespace geosep::pipeline {

namespace {

std::string fmt(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(key + ": not a number: '" + s + "'");
    return v;
}

template <class I>
I to_integer(const std::string& key, const std::string& s) {
    I v{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(key + ": not an integer: '" + s + "'");
    return v;
}

// Reads keys out of a parsed table or writes them, so that both directions
// share one list of keys.
class Binder {
public:
    explicit Binder(std::map<std::string, std::string>* in) : in_(in) {}

    bool reading() const { return in_ != nullptr; }
    bool has(const std::string& key) const { return in_ && in_->count(key); }

    void section(const std::string& title) {
        if (!in_) out_ << (out_.tellp() > 0 ? "\n" : "") << "# " << title << "\n";
    }

    void field(const std::string& key, std::string& v) {
        if (in_) {
            if (auto s = take(key)) v = *s;
        } else {
            emit(key, v);
        }
    }
    void field(const std::string& key, double& v) {
        std::string s = fmt(v);
        field(key, s);
        if (in_) v = to_double(key, s);
    }
    void field(const std::string& key, int& v) { integer(key, v); }
    void field(const std::string& key, std::uint64_t& v) { integer(key, v); }
    void field(const std::string& key, unsigned long long& v) { integer(key, v); }
    void field(const std::string& key, bool& v) {
        std::string s = v ? "true" : "false";
        field(key, s);
        if (!in_) return;
        if (s == "true" || s == "1") v = true;
        else if (s == "false" || s == "0") v = false;
        else throw ConfigError(key + ": expected true or false");
    }
    void field(const std::string& key, std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
        field(key, s);
        if (!in_) return;
        v.clear();
        for (const auto& w : words(s)) v.push_back(to_double(key, w));
    }
    template <class Fixed>
    void fixed(const std::string& key, Fixed& v, std::size_t count) {
        std::vector<double> tmp(v.data(), v.data() + count);
        field(key, tmp);
        if (!in_) return;
        if (tmp.size() != count) throw ConfigError(key + ": expected " + std::to_string(count) + " numbers");
        std::copy(tmp.begin(), tmp.end(), v.data());
    }
    template <class E>
    void choice(const std::string& key, E& v, const std::vector<std::pair<E, std::string>>& names) {
        std::string s;
        for (const auto& [e, n] : names)
            if (e == v) s = n;
        field(key, s);
        if (!in_) return;
        for (const auto& [e, n] : names)
            if (n == s) {
                v = e;
                return;
            }
        std::string allowed;
        for (const auto& p : names) allowed += (allowed.empty() ? "" : ", ") + p.second;
        throw ConfigError(key + ": '" + s + "' is not one of " + allowed);
    }

    void finish() const {
        if (in_ && !in_->empty()) {
            std::string keys;
            for (const auto& kv : *in_) keys += (keys.empty() ? "" : ", ") + kv.first;
            throw ConfigError("unknown config keys: " + keys);
        }
    }
    std::string text() const { return out_.str(); }

private:
    template <class I>
    void integer(const std::string& key, I& v) {
        std::string s = std::to_string(v);
        field(key, s);
        if (in_) v = to_integer<I>(key, s);
    }
    std::optional<std::string> take(const std::string& key) {
        auto it = in_->find(key);
        if (it == in_->end()) return std::nullopt;
        std::string v = it->second;
        in_->erase(it);
        return v;
    }
    void emit(const std::string& key, const std::string& v) { out_ << key << " = " << v << "\n"; }

    std::map<std::string, std::string>* in_;
    std::ostringstream out_;
};

void bind(Binder& b, PipelineConfig& c) {
    using stimulus::ManifoldKind;
    using stimulus::MassKind;
    using stimulus::PotentialKind;
    auto& st = c.stimulus;
    b.section("stimulus");
    b.field("stimulus.kT", st.kT);
    b.field("stimulus.segment_length", st.segment_length);
    b.field("stimulus.dt", st.dt);
    std::uint64_t segments = st.n_segments;
    b.field("stimulus.segments", segments);
    st.n_segments = static_cast<std::size_t>(segments);
    b.field("stimulus.seed", st.rng_seed);
    b.field("stimulus.substeps", st.substeps);
    b.field("stimulus.max_attempts", st.max_attempts);
    int factors = static_cast<int>(st.factors.size());
    const bool replace = b.has("stimulus.factors");
    b.field("stimulus.factors", factors);
    if (replace) {
        if (factors < 1 || factors > 16) throw ConfigError("stimulus.factors must be between 1 and 16");
        st.factors.assign(static_cast<std::size_t>(factors), stimulus::ManifoldSpec{});
    }
    for (std::size_t i = 0; i < st.factors.size(); ++i) {
        auto& f = st.factors[i];
        const std::string k = "stimulus.factor." + std::to_string(i) + ".";
        b.choice(k + "kind", f.kind,
                 {{ManifoldKind::SpherePatch, "sphere_patch"}, {ManifoldKind::Line, "line"}, {ManifoldKind::Euclidean, "euclidean"}});
        b.field(k + "radius", f.radius);
        b.field(k + "patch_angle", f.patch_angle);
        b.fixed(k + "center", f.center, 3);
        b.field(k + "half_length", f.half_length);
        b.field(k + "euclid_dim", f.euclid_dim);
        b.field(k + "half_width", f.half_width);
        b.field(k + "mass", f.mass);
        b.choice(k + "mass_kind", f.mass_kind, {{MassKind::Constant, "constant"}, {MassKind::ConformalBump, "conformal_bump"}});
        b.field(k + "bump_amplitude", f.bump_amplitude);
        b.field(k + "bump_width", f.bump_width);
        b.field(k + "bump_center", f.bump_center);
        b.choice(k + "potential", f.potential, {{PotentialKind::Zero, "zero"}, {PotentialKind::Harmonic, "harmonic"}});
        b.field(k + "stiffness", f.stiffness);
    }

    b.section("sensing");
    b.choice("sensing.mode", c.sensing, {{SensingMode::Cameras, "cameras"}, {SensingMode::Direct, "direct"}});

    b.section("rig");
    b.field("rig.camera_count", c.rig_options.camera_count);
    b.field("rig.camera_distance", c.rig_options.camera_distance);
    b.field("rig.max_quadratic", c.rig_options.max_quadratic);
    b.field("rig.seed", c.rig_options.seed);
    bool frozen = c.rig.has_value();
    b.field("rig.frozen", frozen);
    if (b.reading()) {
        if (frozen) {
            if (c.rig_options.camera_count < 1) throw ConfigError("rig.camera_count must be positive");
            c.rig.emplace();
            c.rig->cameras.resize(static_cast<std::size_t>(c.rig_options.camera_count));
            c.rig->placements.resize(st.factors.size());
        } else {
            c.rig.reset();
        }
    }
    if (c.rig) {
        c.rig->factors = st.factors;
        for (std::size_t i = 0; i < c.rig->cameras.size(); ++i) {
            auto& cam = c.rig->cameras[i];
            const std::string k = "rig.camera." + std::to_string(i) + ".";
            b.fixed(k + "position", cam.position, 3);
            Eigen::Matrix<double, 3, 3, Eigen::RowMajor> o = cam.orientation;
            b.fixed(k + "orientation", o, 9);
            cam.orientation = o;
            b.field(k + "focal_distance", cam.focal_distance);
            b.fixed(k + "distort_u", cam.distort_u, 6);
            b.fixed(k + "distort_v", cam.distort_v, 6);
        }
        for (std::size_t i = 0; i < c.rig->placements.size(); ++i) {
            auto& p = c.rig->placements[i];
            const std::string k = "rig.placement." + std::to_string(i) + ".";
            b.fixed(k + "origin", p.origin, 3);
            Eigen::Matrix<double, 3, 3, Eigen::RowMajor> a = p.axes;
            b.fixed(k + "axes", a, 9);
            p.axes = a;
        }
    }

    b.section("embedding");
    auto& e = c.embedding;
    b.field("embedding.k", e.lle.k);
    b.field("embedding.dim", e.lle.dim);
    b.field("embedding.regularization", e.lle.regularization);
    b.field("embedding.seed", e.lle.seed);
    b.field("embedding.max_iterations", e.lle.max_iterations);
    b.field("embedding.tolerance", e.lle.tolerance);
    b.choice("embedding.out_of_sample", e.lle.out_of_sample,
             {{embedding::OutOfSample::Weights, "weights"}, {embedding::OutOfSample::LocalAffine, "local_affine"}});
    b.field("embedding.affine_neighbors", e.lle.affine_neighbors);
    std::uint64_t landmarks = e.landmarks;
    b.field("embedding.landmarks", landmarks);
    e.landmarks = static_cast<std::size_t>(landmarks);
    b.field("embedding.landmark_seed", e.landmark_seed);

    auto& s = c.separation;
    b.section("grid");
    b.field("grid.count", s.grid.count);
    b.field("grid.quantile", s.grid.quantile);

    b.section("metric");
    b.field("metric.min_count", s.metric.min_count);
    b.field("metric.smoothing_sigma", s.metric.smoothing_sigma);
    b.field("metric.smoothing_order", s.metric.smoothing_order);
    b.field("metric.count_weighted", s.metric.count_weighted);
    std::uint64_t chunk = s.metric.chunk_segments;
    b.field("metric.chunk_segments", chunk);
    s.metric.chunk_segments = static_cast<std::size_t>(chunk);

    b.section("solver");
    b.field("solver.tol", s.solver.tol);
    b.field("solver.min_gap_ratio", s.solver.min_gap_ratio);
    b.field("solver.flat_threshold", s.solver.flat_threshold);
    b.field("solver.flat_snr", s.solver.flat_snr);
    b.field("solver.split_half_noise", s.split_half_noise);
    b.field("solver.cluster_gap", s.solver.cluster_gap);
    b.field("solver.coupling_tol", s.solver.coupling_tol);
    b.field("solver.average_radius", s.solver.average_radius);
    b.field("solver.probe_points", s.solver.probe_points);
    b.field("solver.probe_radius", s.solver.probe_radius);
    b.field("solver.trials", s.solver.trials);
    b.field("solver.seed", s.solver.seed);

    b.section("chart");
    b.field("chart.step", s.chart.step);
    b.field("chart.extent", s.chart.extent);
    b.choice("chart.calibration", c.calibration,
             {{CalibrationMode::Reference, "reference"}, {CalibrationMode::Blind, "blind"}});

    b.section("threshold");
    b.field("threshold.block_score", s.block_threshold);
    b.field("threshold.dependence", s.dependence_threshold);
    b.field("threshold.cross_floor", s.cross_floor);

    b.section("recursion");
    b.field("recursion.max_depth", s.max_depth);
    std::uint64_t min_segments = s.min_segments;
    b.field("recursion.min_segments", min_segments);
    s.min_segments = static_cast<std::size_t>(min_segments);

    b.section("evaluate");
    b.field("evaluate.fd_step", c.evaluate.fd_step);
    b.field("evaluate.half_range", c.evaluate.half_range);
    b.field("evaluate.points", c.evaluate.points);
    b.field("evaluate.offsets", c.evaluate.offsets);
    b.field("evaluate.rms_limit", c.evaluate.rms_limit);
    b.field("evaluate.sagitta_limit", c.evaluate.sagitta_limit);

    b.section("run");
    b.field("threads", c.threads);
}

}  // namespace

std::string to_string(SensingMode m) { return m == SensingMode::Cameras ? "cameras" : "direct"; }

PipelineConfig default_config() {
    PipelineConfig c;
    c.stimulus = stimulus::sphere_line_config(3);
    c.stimulus.n_segments = 200000;
    auto& s = c.separation;
    s.grid.count = 12;
    s.metric.smoothing_sigma = 3.0;
    s.metric.smoothing_order = 2;
    s.metric.count_weighted = true;
    s.solver.tol = 0.25;
    s.solver.average_radius = 3.0;
    s.solver.probe_points = 0;
    return c;
}

PipelineConfig parse_config(const std::string& text) {
    std::map<std::string, std::string> table;
    std::istringstream in(text);
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!table.emplace(key, trim(line.substr(eq + 1))).second)
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    PipelineConfig c = default_config();
    Binder b(&table);
    bind(b, c);
    b.finish();
    try {
        c.stimulus.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("stimulus: ") + e.what());
    }
    if (c.separation.grid.count < 5) throw ConfigError("grid.count must be at least 5");
    if (c.threads < 0) throw ConfigError("threads must be non-negative");
    if (c.evaluate.points < 3) throw ConfigError("evaluate.points must be at least 3");
    return c;
}

std::string write_config(const PipelineConfig& cfg) {
    PipelineConfig c = cfg;
    Binder b(nullptr);
    bind(b, c);
    return b.text();
}

}  // namespace geosep::pipeline
