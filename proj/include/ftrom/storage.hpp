#pragma once

// Deterministic binary serialization for all pipeline records and a flat
// text configuration format.
//
// File layout: magic "FTRM", version u32, kind u32, payload length u64,
// then a fixed per-kind sequence of arrays. Each array: rank u32, one u64
// per dimension, then the data as little-endian 64-bit floats, row-major.
// Identical records serialize to identical bytes.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ftrom/errors.hpp"
#include "ftrom/mesh.hpp"
#include "ftrom/hdm.hpp"
#include "ftrom/registration.hpp"
#include "ftrom/rom.hpp"

namespace ftrom {

enum class RecordKind : uint32_t {
    Mesh = 1,
    State = 2,
    Dofs = 3,
    Snapshot = 4,
    Landmarks = 5,
    Warp = 6,
    Bases = 7,
    Solution = 8,
};

namespace archive {

constexpr char kMagic[4] = {'F', 'T', 'R', 'M'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    void put_scalar(double v) { put_dims({}); append(&v, sizeof v); }

    void put_vector(const Eigen::VectorXd& v) {
        put_dims({static_cast<uint64_t>(v.size())});
        append(v.data(), sizeof(double) * static_cast<size_t>(v.size()));
    }

    void put_matrix(const Eigen::MatrixXd& m) {
        put_dims({static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())});
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const double v = m(i, j);
                append(&v, sizeof v);
            }
    }

    void put_points(const std::vector<Vec2>& pts) {
        put_dims({static_cast<uint64_t>(pts.size()), 2});
        for (const auto& p : pts) {
            const double xy[2] = {p.x(), p.y()};
            append(xy, sizeof xy);
        }
    }

    void save(const std::string& path, RecordKind kind) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw StorageError("cannot open for writing: " + path);
        f.write(kMagic, 4);
        const uint32_t ver = kVersion;
        const uint32_t k = static_cast<uint32_t>(kind);
        const uint64_t len = payload_.size();
        f.write(reinterpret_cast<const char*>(&ver), sizeof ver);
        f.write(reinterpret_cast<const char*>(&k), sizeof k);
        f.write(reinterpret_cast<const char*>(&len), sizeof len);
        f.write(payload_.data(), static_cast<std::streamsize>(payload_.size()));
        if (!f) throw StorageError("write failure: " + path);
    }

private:
    void put_dims(const std::vector<uint64_t>& dims) {
        const uint32_t rank = static_cast<uint32_t>(dims.size());
        append(&rank, sizeof rank);
        for (uint64_t d : dims) append(&d, sizeof d);
    }
    void append(const void* p, size_t n) {
        payload_.insert(payload_.end(), static_cast<const char*>(p),
                        static_cast<const char*>(p) + n);
    }
    std::vector<char> payload_;
};

class Reader {
public:
    Reader(const std::string& path, RecordKind expected) : path_(path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw StorageError("cannot open for reading: " + path);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, kMagic, 4) != 0)
            throw StorageError("bad magic in " + path);
        uint32_t ver = 0, kind = 0;
        uint64_t len = 0;
        f.read(reinterpret_cast<char*>(&ver), sizeof ver);
        f.read(reinterpret_cast<char*>(&kind), sizeof kind);
        f.read(reinterpret_cast<char*>(&len), sizeof len);
        if (!f) throw StorageError("truncated header in " + path);
        if (ver != kVersion)
            throw StorageError("version mismatch in " + path + ": file has v" +
                               std::to_string(ver) + ", expected v" +
                               std::to_string(kVersion));
        if (kind != static_cast<uint32_t>(expected))
            throw StorageError("unexpected record kind in " + path);
        payload_.resize(len);
        f.read(payload_.data(), static_cast<std::streamsize>(len));
        if (static_cast<uint64_t>(f.gcount()) != len)
            throw StorageError("truncated payload in " + path + ": expected " +
                               std::to_string(len) + " bytes, got " +
                               std::to_string(f.gcount()));
    }

    double get_scalar() {
        expect_rank(0);
        double v;
        take(&v, sizeof v);
        return v;
    }

    Eigen::VectorXd get_vector() {
        expect_rank(1);
        const uint64_t n = take_u64();
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        take(v.data(), sizeof(double) * n);
        return v;
    }

    Eigen::MatrixXd get_matrix() {
        expect_rank(2);
        const uint64_t r = take_u64(), c = take_u64();
        Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (uint64_t i = 0; i < r; ++i)
            for (uint64_t j = 0; j < c; ++j) {
                double v;
                take(&v, sizeof v);
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            }
        return m;
    }

    std::vector<Vec2> get_points() {
        const Eigen::MatrixXd m = get_matrix();
        if (m.cols() != 2) throw StorageError("expected point array in " + path_);
        std::vector<Vec2> pts(static_cast<size_t>(m.rows()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) pts[static_cast<size_t>(i)] = m.row(i);
        return pts;
    }

private:
    void expect_rank(uint32_t want) {
        uint32_t rank;
        take(&rank, sizeof rank);
        if (rank != want)
            throw StorageError("unexpected array rank in " + path_);
    }
    uint64_t take_u64() {
        uint64_t v;
        take(&v, sizeof v);
        return v;
    }
    void take(void* out, size_t n) {
        if (pos_ + n > payload_.size())
            throw StorageError("truncated record in " + path_ + ": expected " +
                               std::to_string(n) + " more bytes, " +
                               std::to_string(payload_.size() - pos_) + " available");
        std::memcpy(out, payload_.data() + pos_, n);
        pos_ += n;
    }
    std::string path_;
    std::vector<char> payload_;
    size_t pos_ = 0;
};

}  // namespace archive

// --- record serializers ---------------------------------------------------

inline void write_mesh(const std::string& path, const StructuredQuadMesh& mesh) {
    archive::Writer w;
    w.put_scalar(mesh.nx());
    w.put_scalar(mesh.nt());
    const Rect& b = mesh.bounds();
    Eigen::VectorXd bounds(4);
    bounds << b.x_lo, b.x_hi, b.t_lo, b.t_hi;
    w.put_vector(bounds);
    w.put_points(mesh.ref_nodes());
    w.save(path, RecordKind::Mesh);
}

inline StructuredQuadMesh read_mesh(const std::string& path) {
    archive::Reader r(path, RecordKind::Mesh);
    const int nx = static_cast<int>(r.get_scalar());
    const int nt = static_cast<int>(r.get_scalar());
    const Eigen::VectorXd b = r.get_vector();
    StructuredQuadMesh mesh = build_rect_mesh(nx, nt, Rect{b[0], b[1], b[2], b[3]});
    const auto nodes = r.get_points();
    if (nodes.size() != mesh.ref_nodes().size())
        throw StorageError("mesh record node count inconsistent in " + path);
    return mesh;
}

inline void write_state(const std::string& path, const DiscreteState& s) {
    archive::Writer w;
    w.put_vector(s.values);
    w.save(path, RecordKind::State);
}

inline DiscreteState read_state(const std::string& path) {
    archive::Reader r(path, RecordKind::State);
    return DiscreteState{r.get_vector()};
}

inline void write_dofs(const std::string& path, const MappingDofs& d) {
    archive::Writer w;
    w.put_points(d.phys_nodes);
    w.save(path, RecordKind::Dofs);
}

inline MappingDofs read_dofs(const std::string& path) {
    archive::Reader r(path, RecordKind::Dofs);
    return MappingDofs{r.get_points()};
}

inline void write_snapshot(const std::string& path, const SnapshotRecord& s) {
    archive::Writer w;
    w.put_scalar(s.mu);
    w.put_vector(s.Q.values);
    w.put_points(s.xh.phys_nodes);
    w.put_vector(s.aligned.values);
    w.save(path, RecordKind::Snapshot);
}

inline SnapshotRecord read_snapshot(const std::string& path) {
    archive::Reader r(path, RecordKind::Snapshot);
    SnapshotRecord s;
    s.mu = r.get_scalar();
    s.Q.values = r.get_vector();
    s.xh.phys_nodes = r.get_points();
    s.aligned.values = r.get_vector();
    return s;
}

inline void write_landmarks(const std::string& path, const LandmarkSet& lm) {
    archive::Writer w;
    w.put_points(lm.shock_centroids);
    w.put_points(lm.endpoints);
    w.put_points(lm.boundary_points);
    w.save(path, RecordKind::Landmarks);
}

inline LandmarkSet read_landmarks(const std::string& path) {
    archive::Reader r(path, RecordKind::Landmarks);
    LandmarkSet lm;
    lm.shock_centroids = r.get_points();
    lm.endpoints = r.get_points();
    lm.boundary_points = r.get_points();
    return lm;
}

inline void write_warp(const std::string& path, const RbfWarp& warp) {
    archive::Writer w;
    w.put_points(warp.centers);
    w.put_scalar(warp.radius);
    w.put_matrix(warp.weights);
    w.save(path, RecordKind::Warp);
}

inline RbfWarp read_warp(const std::string& path) {
    archive::Reader r(path, RecordKind::Warp);
    RbfWarp warp;
    warp.centers = r.get_points();
    warp.radius = r.get_scalar();
    warp.weights = r.get_matrix();
    return warp;
}

inline void write_bases(const std::string& path, const RomBases& b) {
    archive::Writer w;
    w.put_matrix(b.Phi);
    w.put_vector(b.Qr);
    w.put_matrix(b.Psi);
    w.put_vector(b.theta);
    Eigen::VectorXd tm(static_cast<Eigen::Index>(b.train_mu.size()));
    for (size_t i = 0; i < b.train_mu.size(); ++i)
        tm[static_cast<Eigen::Index>(i)] = b.train_mu[i];
    w.put_vector(tm);
    w.put_scalar(b.ref_mu);
    w.put_vector(b.singular_values);
    w.put_matrix(b.train_a);
    Eigen::VectorXd tam(static_cast<Eigen::Index>(b.train_a_mu.size()));
    for (size_t i = 0; i < b.train_a_mu.size(); ++i)
        tam[static_cast<Eigen::Index>(i)] = b.train_a_mu[i];
    w.put_vector(tam);
    w.save(path, RecordKind::Bases);
}

inline RomBases read_bases(const std::string& path) {
    archive::Reader r(path, RecordKind::Bases);
    RomBases b;
    b.Phi = r.get_matrix();
    b.Qr = r.get_vector();
    b.Psi = r.get_matrix();
    b.theta = r.get_vector();
    const Eigen::VectorXd tm = r.get_vector();
    b.train_mu.assign(tm.data(), tm.data() + tm.size());
    b.ref_mu = r.get_scalar();
    b.singular_values = r.get_vector();
    b.train_a = r.get_matrix();
    const Eigen::VectorXd tam = r.get_vector();
    b.train_a_mu.assign(tam.data(), tam.data() + tam.size());
    return b;
}

inline void write_solution(const std::string& path, const RomSolution& s) {
    archive::Writer w;
    w.put_vector(s.a);
    w.put_vector(s.y);
    w.put_vector(s.Q_hat);
    w.put_vector(s.x_hat);
    w.put_scalar(s.weighted_residual_norm);
    w.put_scalar(s.iterations);
    w.put_scalar(s.converged ? 1.0 : 0.0);
    w.save(path, RecordKind::Solution);
}

inline RomSolution read_solution(const std::string& path) {
    archive::Reader r(path, RecordKind::Solution);
    RomSolution s;
    s.a = r.get_vector();
    s.y = r.get_vector();
    s.Q_hat = r.get_vector();
    s.x_hat = r.get_vector();
    s.weighted_residual_norm = r.get_scalar();
    s.iterations = static_cast<int>(r.get_scalar());
    s.converged = r.get_scalar() != 0.0;
    return s;
}

// --- flat text configuration ----------------------------------------------

/// Line-oriented `key = value` configuration with `#` comments and `[name]`
/// sections; keys are stored section-qualified as "section.key".
class ConfigMap {
public:
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const std::string& raw(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key: " + key);
        return it->second;
    }

    double get_double(const std::string& key) const {
        return parse_double(key, raw(key));
    }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long get_int(const std::string& key) const {
        const double v = get_double(key);
        const long n = static_cast<long>(v);
        if (static_cast<double>(n) != v)
            throw ConfigError("config key is not an integer: " + key);
        return n;
    }
    long get_int(const std::string& key, long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::string get_string(const std::string& key) const { return raw(key); }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? raw(key) : fallback;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(raw(key));
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(parse_double(key, item));
        return out;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& items() const { return values_; }

private:
    static double parse_double(const std::string& key, const std::string& text) {
        size_t pos = 0;
        double v;
        try {
            v = std::stod(text, &pos);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: '" + text + "'");
        }
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
        if (pos != text.size())
            throw ConfigError("config key " + key + ": not a number: '" + text + "'");
        return v;
    }
    std::map<std::string, std::string> values_;
};

inline ConfigMap parse_config(const std::string& text,
                              const std::set<std::string>* allowed_keys = nullptr) {
    ConfigMap cfg;
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (allowed_keys && !allowed_keys->count(full))
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": unknown key '" + full + "'");
        cfg.set(full, value);
    }
    return cfg;
}

}  // namespace ftrom
