#include "core/io.hpp"

#include "core/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace dp3d::io {

namespace fs = std::filesystem;

std::string path_stem(const std::string& path) { return fs::path(path).stem().string(); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) fail(Err::Io, "read error on " + path);
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Err::Io, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out.good()) fail(Err::Io, "write error on " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) fail(Err::Io, "cannot rename " + tmp.string() + " to " + path);
}

// --- binary buffer helpers ---------------------------------------------------

namespace {

struct Writer {
    std::string buf;

    void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void magic(const char* m) { buf.append(m, 4); }
    void crc() {
        const auto c = static_cast<std::uint32_t>(
            ::crc32(0, reinterpret_cast<const Bytef*>(buf.data()),
                    static_cast<uInt>(buf.size())));
        u32(c);
    }
};

struct Reader {
    const std::string& data;
    const std::string& path;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > data.size()) {
            fail(Err::Format, path + ": truncated file while reading " + what);
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(data[pos++]);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    void expect_magic(const char* m) {
        need(4, "magic");
        if (std::memcmp(data.data() + pos, m, 4) != 0) {
            fail(Err::Format, path + ": bad magic, expected " + std::string(m, 4));
        }
        pos += 4;
    }
    void check_crc() {
        if (data.size() < 4 || pos > data.size() - 4) {
            fail(Err::Format, path + ": truncated file while reading checksum");
        }
        const auto stored = [&] {
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) {
                v |= static_cast<std::uint32_t>(
                         static_cast<std::uint8_t>(data[data.size() - 4 + i]))
                     << (8 * i);
            }
            return v;
        }();
        const auto computed = static_cast<std::uint32_t>(
            ::crc32(0, reinterpret_cast<const Bytef*>(data.data()),
                    static_cast<uInt>(data.size() - 4)));
        if (stored != computed) fail(Err::Format, path + ": checksum mismatch");
    }
    void expect_end(std::size_t trailer = 0) {
        if (pos + trailer != data.size()) {
            fail(Err::Format, path + ": trailing bytes after payload");
        }
    }
};

constexpr std::uint32_t kFormatVersion = 1;

void write_matrix_f32(Writer& w, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
    }
}

void write_vector_f32(Writer& w, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(static_cast<float>(v[i]));
}

Eigen::MatrixXd read_matrix_f32(Reader& r, Eigen::Index rows, Eigen::Index cols,
                                const char* what) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(r.f32(what));
    }
    return m;
}

Eigen::VectorXd read_vector_f32(Reader& r, Eigen::Index n, const char* what) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<double>(r.f32(what));
    return v;
}

std::uint32_t checked_count(std::uint32_t v, std::uint32_t limit, const std::string& path,
                            const char* what) {
    if (v > limit) fail(Err::Format, path + ": unreasonable " + what);
    return v;
}

}  // namespace

// --- point cloud formats -----------------------------------------------------

namespace {

bool is_blank_or_comment(const std::string& line) {
    for (char ch : line) {
        if (ch == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(ch))) return false;
    }
    return true;
}

}  // namespace

PointCloud load_xyz(const std::string& path) {
    const std::string text = read_file(path);
    PointCloud cloud;
    cloud.id = path_stem(path);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ls(line);
        double x, y, z;
        if (!(ls >> x >> y >> z)) {
            fail(Err::Format, path + ":" + std::to_string(lineno) + ": expected three floats");
        }
        std::string extra;
        if (ls >> extra) {
            fail(Err::Format,
                 path + ":" + std::to_string(lineno) + ": unexpected trailing tokens");
        }
        cloud.points.emplace_back(x, y, z);
    }
    if (cloud.points.empty()) fail(Err::Format, path + ": no points");
    return cloud;
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
    std::string out;
    out.reserve(cloud.points.size() * 60);
    char line[128];
    for (const Vec3& p : cloud.points) {
        std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
        out += line;
    }
    write_file_atomic(path, out);
}

PointCloud load_ply(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;

    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) fail(Err::Format, path + ": truncated header, missing " +
                                                           std::string(what));
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };

    next_line("ply signature");
    if (line != "ply") fail(Err::Format, path + ": not a PLY file");

    struct ElementInfo {
        std::string name;
        std::size_t count = 0;
        std::vector<std::string> properties;
    };
    std::vector<ElementInfo> elements;
    bool ascii = false;
    for (;;) {
        next_line("end_header");
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        if (token == "comment" || token.empty()) continue;
        if (token == "format") {
            std::string kind, version;
            ls >> kind >> version;
            if (kind != "ascii") fail(Err::Format, path + ": only ASCII PLY is supported");
            ascii = true;
        } else if (token == "element") {
            ElementInfo el;
            ls >> el.name >> el.count;
            elements.push_back(el);
        } else if (token == "property") {
            if (elements.empty()) fail(Err::Format, path + ": property before element");
            std::string type, name;
            ls >> type;
            if (type == "list") {
                std::string t1, t2;
                ls >> t1 >> t2 >> name;
            } else {
                ls >> name;
            }
            elements.back().properties.push_back(name);
        } else if (token == "end_header") {
            break;
        } else {
            fail(Err::Format, path + ": unsupported header line: " + line);
        }
    }
    if (!ascii) fail(Err::Format, path + ": missing format line");

    PointCloud cloud;
    cloud.id = path_stem(path);
    for (const ElementInfo& el : elements) {
        if (el.name != "vertex") {
            for (std::size_t i = 0; i < el.count; ++i) next_line("element data");
            continue;
        }
        int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
            const std::string& name = el.properties[p];
            if (name == "x") ix = static_cast<int>(p);
            else if (name == "y") iy = static_cast<int>(p);
            else if (name == "z") iz = static_cast<int>(p);
            else if (name == "nx") inx = static_cast<int>(p);
            else if (name == "ny") iny = static_cast<int>(p);
            else if (name == "nz") inz = static_cast<int>(p);
            else fail(Err::Format, path + ": unsupported vertex property '" + name + "'");
        }
        if (ix < 0 || iy < 0 || iz < 0) fail(Err::Format, path + ": vertex needs x, y, z");
        const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
        if ((inx >= 0 || iny >= 0 || inz >= 0) && !with_normals) {
            fail(Err::Format, path + ": partial normal properties");
        }
        for (std::size_t i = 0; i < el.count; ++i) {
            next_line("vertex data");
            std::istringstream ls(line);
            std::vector<double> vals(el.properties.size());
            for (double& v : vals) {
                if (!(ls >> v)) fail(Err::Format, path + ": malformed vertex line");
            }
            cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
            if (with_normals) {
                Vec3 n(vals[inx], vals[iny], vals[inz]);
                const double len = n.norm();
                if (len <= 0.0) fail(Err::Format, path + ": zero-length normal");
                cloud.normals.push_back(n / len);
            }
        }
    }
    if (cloud.points.empty()) fail(Err::Format, path + ": no vertices");
    return cloud;
}

PointCloud load_cloud(const std::string& path) {
    std::string ext = fs::path(path).extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".ply") return load_ply(path);
    return load_xyz(path);
}

// --- corpus text formats -----------------------------------------------------

namespace {

std::vector<int> load_int_lines(const std::string& path, const char* what) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<int> out;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ls(line);
        long long v;
        if (!(ls >> v)) {
            fail(Err::Format,
                 path + ":" + std::to_string(lineno) + ": expected " + std::string(what));
        }
        out.push_back(static_cast<int>(v));
    }
    return out;
}

void save_int_lines(const std::vector<int>& values, const std::string& path) {
    std::string out;
    for (int v : values) {
        out += std::to_string(v);
        out += '\n';
    }
    write_file_atomic(path, out);
}

}  // namespace

std::vector<int> load_keypoints(const std::string& path) {
    return load_int_lines(path, "a keypoint index");
}

void save_keypoints(const std::vector<int>& keypoints, const std::string& path) {
    save_int_lines(keypoints, path);
}

std::vector<int> load_part_labels(const std::string& path) {
    return load_int_lines(path, "a part label");
}

void save_part_labels(const std::vector<int>& labels, const std::string& path) {
    save_int_lines(labels, path);
}

std::vector<CorrespondenceSet> load_correspondences(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<CorrespondenceSet> sets;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ls(line);
        std::string a, b;
        int ia, ib;
        if (!(ls >> a >> b >> ia >> ib)) {
            fail(Err::Format, path + ":" + std::to_string(lineno) +
                                  ": expected 'model_a model_b idx_a idx_b [sym_group]'");
        }
        int group = -1;
        ls >> group;  // optional

        auto key = std::make_pair(a, b);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, sets.size()).first;
            sets.push_back({a, b, {}, {}, {}});
        }
        CorrespondenceSet& cs = sets[it->second];
        cs.pairs.emplace_back(ia, ib);
        if (group >= 0) {
            auto add_unique = [](std::vector<std::pair<int, int>>& groups, int kp, int g) {
                for (const auto& [k, existing] : groups) {
                    if (k == kp) return;
                }
                groups.emplace_back(kp, g);
            };
            add_unique(cs.sym_a, ia, group);
            add_unique(cs.sym_b, ib, group);
        }
    }
    if (sets.empty()) fail(Err::Format, path + ": no correspondences");
    return sets;
}

void save_correspondences(const std::vector<CorrespondenceSet>& sets, const std::string& path) {
    std::string out;
    char line[256];
    for (const CorrespondenceSet& cs : sets) {
        for (const auto& [ia, ib] : cs.pairs) {
            int ga = -1, gb = -1;
            for (const auto& [kp, g] : cs.sym_a) {
                if (kp == ia) ga = g;
            }
            for (const auto& [kp, g] : cs.sym_b) {
                if (kp == ib) gb = g;
            }
            if (ga >= 0 && ga == gb) {
                std::snprintf(line, sizeof(line), "%s %s %d %d %d\n", cs.model_a.c_str(),
                              cs.model_b.c_str(), ia, ib, ga);
            } else {
                std::snprintf(line, sizeof(line), "%s %s %d %d\n", cs.model_a.c_str(),
                              cs.model_b.c_str(), ia, ib);
            }
            out += line;
        }
    }
    write_file_atomic(path, out);
}

Corpus load_manifest(const std::string& path) {
    const std::string text = read_file(path);
    const fs::path base = fs::path(path).parent_path();

    std::map<std::string, std::vector<std::string>> stanzas;
    std::string current;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (is_blank_or_comment(line)) continue;
        std::string trimmed = line;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) {
            trimmed.erase(trimmed.begin());
        }
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) {
            trimmed.pop_back();
        }
        if (trimmed.back() == ':') {
            current = trimmed.substr(0, trimmed.size() - 1);
            if (current != "clouds" && current != "keypoints" && current != "labels" &&
                current != "correspondences") {
                fail(Err::Format,
                     path + ":" + std::to_string(lineno) + ": unknown stanza '" + current + "'");
            }
            continue;
        }
        if (current.empty()) {
            fail(Err::Format, path + ":" + std::to_string(lineno) + ": entry before any stanza");
        }
        stanzas[current].push_back((base / trimmed).string());
    }

    const auto& clouds = stanzas["clouds"];
    const auto& keypoints = stanzas["keypoints"];
    const auto& labels = stanzas["labels"];
    const auto& correspondences = stanzas["correspondences"];
    if (clouds.empty()) fail(Err::Format, path + ": manifest lists no clouds");
    if (keypoints.size() != clouds.size()) {
        fail(Err::Format, path + ": keypoints stanza must match clouds stanza");
    }
    if (!labels.empty() && labels.size() != clouds.size()) {
        fail(Err::Format, path + ": labels stanza must match clouds stanza");
    }

    Corpus corpus;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        Model model;
        model.cloud = load_cloud(clouds[i]);
        model.keypoints = load_keypoints(keypoints[i]);
        for (int kp : model.keypoints) {
            if (kp < 0 || static_cast<std::size_t>(kp) >= model.cloud.size()) {
                fail(Err::InvalidInput, keypoints[i] + ": keypoint index out of range");
            }
        }
        if (!labels.empty()) {
            model.part_labels = load_part_labels(labels[i]);
            if (model.part_labels.size() != model.keypoints.size()) {
                fail(Err::InvalidInput, labels[i] + ": label count must match keypoint count");
            }
        } else {
            model.part_labels.resize(model.keypoints.size());
            for (std::size_t k = 0; k < model.keypoints.size(); ++k) {
                model.part_labels[k] = static_cast<int>(k);
            }
        }
        corpus.models.push_back(std::move(model));
    }
    for (const std::string& cpath : correspondences) {
        for (CorrespondenceSet& cs : load_correspondences(cpath)) {
            const int a = corpus.model_index(cs.model_a);
            const int b = corpus.model_index(cs.model_b);
            if (a < 0 || b < 0) {
                fail(Err::InvalidInput, cpath + ": correspondence references unknown model");
            }
            for (const auto& [ia, ib] : cs.pairs) {
                if (ia < 0 ||
                    static_cast<std::size_t>(ia) >= corpus.models[a].keypoints.size() ||
                    ib < 0 ||
                    static_cast<std::size_t>(ib) >= corpus.models[b].keypoints.size()) {
                    fail(Err::InvalidInput, cpath + ": correspondence index out of range");
                }
            }
            corpus.correspondences.push_back(std::move(cs));
        }
    }
    return corpus;
}

std::string write_corpus(const Corpus& corpus, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);

    std::string manifest;
    manifest += "# corpus manifest\nclouds:\n";
    for (const Model& m : corpus.models) {
        save_xyz(m.cloud, (fs::path(dir) / (m.cloud.id + ".xyz")).string());
        manifest += m.cloud.id + ".xyz\n";
    }
    manifest += "keypoints:\n";
    for (const Model& m : corpus.models) {
        save_keypoints(m.keypoints, (fs::path(dir) / (m.cloud.id + ".kp")).string());
        manifest += m.cloud.id + ".kp\n";
    }
    manifest += "labels:\n";
    for (const Model& m : corpus.models) {
        save_part_labels(m.part_labels, (fs::path(dir) / (m.cloud.id + ".parts")).string());
        manifest += m.cloud.id + ".parts\n";
    }
    manifest += "correspondences:\n";
    for (std::size_t i = 0; i < corpus.correspondences.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "pair_%04zu.corr", i);
        save_correspondences({corpus.correspondences[i]}, (fs::path(dir) / name).string());
        manifest += name;
        manifest += '\n';
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    write_file_atomic(manifest_path, manifest);
    return manifest_path;
}

// --- binary formats ------------------------------------------------------------

void save_checkpoint(const model::EncoderParams& params, const std::string& path) {
    params.validate();
    Writer w;
    w.magic("DP3D");
    w.u32(kFormatVersion);
    w.u32(params.arch.variant == model::Variant::aggregated ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(params.arch.point_mlp_dims.size()));
    for (int d : params.arch.point_mlp_dims) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(params.arch.head_dims.size()));
    for (int d : params.arch.head_dims) w.u32(static_cast<std::uint32_t>(d));
    for (const model::Layer& l : params.point_layers) {
        write_matrix_f32(w, l.weight);
        write_vector_f32(w, l.bias);
    }
    for (const model::Layer& l : params.head_layers) {
        write_matrix_f32(w, l.weight);
        write_vector_f32(w, l.bias);
    }
    w.crc();
    write_file_atomic(path, w.buf);
}

model::EncoderParams load_checkpoint(const std::string& path) {
    const std::string data = read_file(path);
    Reader r{data, path};
    r.expect_magic("DP3D");
    r.check_crc();
    if (r.u32("version") != kFormatVersion) fail(Err::Format, path + ": unsupported version");

    model::EncoderParams params;
    const std::uint32_t variant = r.u32("variant");
    if (variant > 1) fail(Err::Format, path + ": unknown variant tag");
    params.arch.variant = variant == 1 ? model::Variant::aggregated
                                       : model::Variant::patch_siamese;
    const std::uint32_t n_mlp = checked_count(r.u32("point dims"), 64, path, "layer count");
    params.arch.point_mlp_dims.clear();
    for (std::uint32_t i = 0; i < n_mlp; ++i) {
        params.arch.point_mlp_dims.push_back(static_cast<int>(
            checked_count(r.u32("point dim"), 1 << 20, path, "layer width")));
    }
    const std::uint32_t n_head = checked_count(r.u32("head dims"), 64, path, "layer count");
    params.arch.head_dims.clear();
    for (std::uint32_t i = 0; i < n_head; ++i) {
        params.arch.head_dims.push_back(static_cast<int>(
            checked_count(r.u32("head dim"), 1 << 20, path, "layer width")));
    }
    params.arch.validate();
    for (std::size_t l = 0; l + 1 < params.arch.point_mlp_dims.size(); ++l) {
        model::Layer layer;
        layer.weight = read_matrix_f32(r, params.arch.point_mlp_dims[l + 1],
                                       params.arch.point_mlp_dims[l], "point weights");
        layer.bias = read_vector_f32(r, params.arch.point_mlp_dims[l + 1], "point bias");
        params.point_layers.push_back(std::move(layer));
    }
    for (std::size_t l = 0; l + 1 < params.arch.head_dims.size(); ++l) {
        model::Layer layer;
        layer.weight = read_matrix_f32(r, params.arch.head_dims[l + 1],
                                       params.arch.head_dims[l], "head weights");
        layer.bias = read_vector_f32(r, params.arch.head_dims[l + 1], "head bias");
        params.head_layers.push_back(std::move(layer));
    }
    r.expect_end(4);
    params.validate();
    return params;
}

void save_descriptor_set(const DescriptorSet& set, const std::string& path) {
    for (const auto& v : set.values) {
        if (v.size() != static_cast<Eigen::Index>(set.dim)) {
            fail(Err::InvalidInput, "descriptor dimension mismatch");
        }
    }
    if (set.keypoint_indices.size() != set.values.size()) {
        fail(Err::InvalidInput, "descriptor set index/value count mismatch");
    }
    Writer w;
    w.magic("DP3F");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(set.dim));
    w.u32(static_cast<std::uint32_t>(set.values.size()));
    for (std::size_t i = 0; i < set.values.size(); ++i) {
        w.u32(static_cast<std::uint32_t>(set.keypoint_indices[i]));
        write_vector_f32(w, set.values[i]);
    }
    write_file_atomic(path, w.buf);
}

DescriptorSet load_descriptor_set(const std::string& path) {
    const std::string data = read_file(path);
    Reader r{data, path};
    r.expect_magic("DP3F");
    if (r.u32("version") != kFormatVersion) fail(Err::Format, path + ": unsupported version");
    const std::uint32_t dim = checked_count(r.u32("dimension"), 1 << 20, path, "dimension");
    const std::uint32_t count = checked_count(r.u32("count"), 1 << 28, path, "record count");
    if (dim == 0) fail(Err::Format, path + ": zero descriptor dimension");
    DescriptorSet set;
    set.dim = static_cast<int>(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        set.keypoint_indices.push_back(static_cast<int>(r.u32("keypoint index")));
        set.values.push_back(read_vector_f32(r, dim, "descriptor values"));
    }
    r.expect_end();
    return set;
}

void save_codes(const std::vector<itq::BinaryCode>& codes, const std::string& path) {
    if (codes.empty()) fail(Err::InvalidInput, "no codes to save");
    const int bits = codes.front().bits;
    Writer w;
    w.magic("DP3B");
    w.u8(1);  // version byte
    w.u32(static_cast<std::uint32_t>(bits));
    w.u32(static_cast<std::uint32_t>(codes.size()));
    for (const itq::BinaryCode& c : codes) {
        if (c.bits != bits) fail(Err::InvalidInput, "mixed code lengths");
        w.buf.append(reinterpret_cast<const char*>(c.bytes.data()), c.bytes.size());
    }
    write_file_atomic(path, w.buf);
}

std::vector<itq::BinaryCode> load_codes(const std::string& path) {
    const std::string data = read_file(path);
    Reader r{data, path};
    r.expect_magic("DP3B");
    if (r.u8("version") != 1) fail(Err::Format, path + ": unsupported version");
    const std::uint32_t bits = checked_count(r.u32("bit count"), 1 << 20, path, "bit count");
    const std::uint32_t count = checked_count(r.u32("code count"), 1 << 28, path, "code count");
    if (bits == 0) fail(Err::Format, path + ": zero code length");
    const std::size_t stride = (bits + 7) / 8;
    std::vector<itq::BinaryCode> codes;
    for (std::uint32_t i = 0; i < count; ++i) {
        r.need(stride, "code bytes");
        itq::BinaryCode c = itq::make_code(static_cast<int>(bits));
        std::memcpy(c.bytes.data(), data.data() + r.pos, stride);
        r.pos += stride;
        codes.push_back(std::move(c));
    }
    r.expect_end();
    return codes;
}

void save_itq_model(const itq::ItqModel& model, const std::string& path) {
    Writer w;
    w.magic("DP3Q");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.dim()));
    w.u32(static_cast<std::uint32_t>(model.bits()));
    write_vector_f32(w, model.mean);
    write_matrix_f32(w, model.projection);
    write_matrix_f32(w, model.rotation);
    w.crc();
    write_file_atomic(path, w.buf);
}

itq::ItqModel load_itq_model(const std::string& path) {
    const std::string data = read_file(path);
    Reader r{data, path};
    r.expect_magic("DP3Q");
    r.check_crc();
    if (r.u32("version") != kFormatVersion) fail(Err::Format, path + ": unsupported version");
    const std::uint32_t dim = checked_count(r.u32("dimension"), 1 << 20, path, "dimension");
    const std::uint32_t bits = checked_count(r.u32("bit count"), 1 << 20, path, "bit count");
    if (dim == 0 || bits == 0 || bits > dim) fail(Err::Format, path + ": invalid shape header");
    itq::ItqModel model;
    model.mean = read_vector_f32(r, dim, "mean");
    model.projection = read_matrix_f32(r, dim, bits, "projection");
    model.rotation = read_matrix_f32(r, bits, bits, "rotation");
    r.expect_end(4);
    return model;
}

namespace {

void write_patch(Writer& w, const Patch& patch, int n_points) {
    if (static_cast<int>(patch.points.size()) != n_points) {
        fail(Err::InvalidInput, "patch size does not match dataset header");
    }
    w.u32(static_cast<std::uint32_t>(patch.keypoint_index));
    w.u32(static_cast<std::uint32_t>(patch.valid_count));
    for (const Vec3& p : patch.points) {
        w.f32(static_cast<float>(p.x()));
        w.f32(static_cast<float>(p.y()));
        w.f32(static_cast<float>(p.z()));
    }
}

Patch read_patch(Reader& r, int n_points, const std::string& path) {
    Patch patch;
    patch.keypoint_index = static_cast<int>(r.u32("patch keypoint"));
    patch.valid_count = static_cast<int>(r.u32("patch valid count"));
    if (patch.valid_count < 1 || patch.valid_count > n_points) {
        fail(Err::Format, path + ": invalid patch valid count");
    }
    patch.points.reserve(n_points);
    for (int i = 0; i < n_points; ++i) {
        const double x = static_cast<double>(r.f32("patch point"));
        const double y = static_cast<double>(r.f32("patch point"));
        const double z = static_cast<double>(r.f32("patch point"));
        patch.points.emplace_back(x, y, z);
    }
    return patch;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
    Writer w;
    w.magic("DP3T");
    w.u32(kFormatVersion);
    w.u32(dataset.kind == Dataset::Kind::triplets ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(dataset.n_points));
    w.u32(static_cast<std::uint32_t>(dataset.size()));
    if (dataset.kind == Dataset::Kind::pairs) {
        for (const TrainingPair& p : dataset.pairs) {
            w.u8(p.positive ? 1 : 0);
            w.u8(static_cast<std::uint8_t>(p.gamma));
            write_patch(w, p.a, dataset.n_points);
            write_patch(w, p.b, dataset.n_points);
        }
    } else {
        for (const TrainingTriplet& t : dataset.triplets) {
            write_patch(w, t.anchor, dataset.n_points);
            write_patch(w, t.positive, dataset.n_points);
            write_patch(w, t.negative, dataset.n_points);
        }
    }
    w.crc();
    write_file_atomic(path, w.buf);
}

Dataset load_dataset(const std::string& path) {
    const std::string data = read_file(path);
    Reader r{data, path};
    r.expect_magic("DP3T");
    r.check_crc();
    if (r.u32("version") != kFormatVersion) fail(Err::Format, path + ": unsupported version");
    const std::uint32_t kind = r.u32("kind");
    if (kind > 1) fail(Err::Format, path + ": unknown dataset kind");
    Dataset dataset;
    dataset.kind = kind == 1 ? Dataset::Kind::triplets : Dataset::Kind::pairs;
    dataset.n_points = static_cast<int>(
        checked_count(r.u32("patch size"), 1 << 16, path, "patch size"));
    if (dataset.n_points < 1) fail(Err::Format, path + ": invalid patch size");
    const std::uint32_t count = checked_count(r.u32("record count"), 1 << 26, path,
                                              "record count");
    for (std::uint32_t i = 0; i < count; ++i) {
        if (dataset.kind == Dataset::Kind::pairs) {
            TrainingPair p;
            const std::uint8_t label = r.u8("pair label");
            if (label > 1) fail(Err::Format, path + ": invalid pair label");
            p.positive = label == 1;
            const std::uint8_t gamma = r.u8("pair gamma");
            if (gamma > 1) fail(Err::Format, path + ": invalid gamma flag");
            p.gamma = gamma;
            p.a = read_patch(r, dataset.n_points, path);
            p.b = read_patch(r, dataset.n_points, path);
            dataset.pairs.push_back(std::move(p));
        } else {
            TrainingTriplet t;
            t.anchor = read_patch(r, dataset.n_points, path);
            t.positive = read_patch(r, dataset.n_points, path);
            t.negative = read_patch(r, dataset.n_points, path);
            dataset.triplets.push_back(std::move(t));
        }
    }
    r.expect_end(4);
    return dataset;
}

}  // namespace dp3d::io
