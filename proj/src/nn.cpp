#include "advscene/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "advscene/world.hpp"

namespace advscene {

void Linear::init(ParamStore& ps, int in_dim, int out_dim, Rng& rng) {
    in = in_dim;
    out = out_dim;
    w_off = ps.alloc(static_cast<size_t>(in) * out);
    b_off = ps.alloc(out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (size_t i = 0; i < static_cast<size_t>(in) * out; ++i) {
        ps.value[w_off + i] = rng.normal() * scale;
    }
}

void Linear::init_zero(ParamStore& ps, int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    w_off = ps.alloc(static_cast<size_t>(in) * out);
    b_off = ps.alloc(out);
}

void Linear::forward(const ParamStore& ps, const double* x, double* y) const {
    const double* w = ps.value.data() + w_off;
    const double* b = ps.value.data() + b_off;
    for (int o = 0; o < out; ++o) {
        double acc = b[o];
        const double* row = w + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

void Linear::backward(ParamStore& ps, const double* x, const double* dy, double* dx) const {
    const double* w = ps.value.data() + w_off;
    double* gw = ps.grad.data() + w_off;
    double* gb = ps.grad.data() + b_off;
    if (dx) std::memset(dx, 0, sizeof(double) * in);
    for (int o = 0; o < out; ++o) {
        const double g = dy[o];
        gb[o] += g;
        const double* row = w + static_cast<size_t>(o) * in;
        double* grow = gw + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            grow[i] += g * x[i];
            if (dx) dx[i] += g * row[i];
        }
    }
}

void Mlp::init(ParamStore& ps, const std::vector<int>& widths, Rng& rng, bool zero_last) {
    dims = widths;
    layers.clear();
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        Linear l;
        if (zero_last && i + 2 == widths.size()) {
            l.init_zero(ps, widths[i], widths[i + 1]);
        } else {
            l.init(ps, widths[i], widths[i + 1], rng);
        }
        layers.push_back(l);
    }
}

void Mlp::forward(const ParamStore& ps, const double* x, double* y, Cache* cache) const {
    std::vector<double> cur(x, x + dims.front());
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(cur);
    }
    std::vector<double> next;
    for (size_t i = 0; i < layers.size(); ++i) {
        next.assign(layers[i].out, 0.0);
        layers[i].forward(ps, cur.data(), next.data());
        if (i + 1 < layers.size()) {
            for (double& v : next) v = tanh_clip(v);
        }
        cur = next;
        if (cache) cache->acts.push_back(cur);
    }
    std::memcpy(y, cur.data(), sizeof(double) * dims.back());
}

void Mlp::backward(ParamStore& ps, const Cache& cache, const double* dy, double* dx) const {
    std::vector<double> cur(dy, dy + dims.back());
    std::vector<double> prev;
    for (size_t i = layers.size(); i-- > 0;) {
        prev.assign(layers[i].in, 0.0);
        layers[i].backward(ps, cache.acts[i].data(), cur.data(),
                           (i > 0 || dx) ? prev.data() : nullptr);
        if (i > 0) {
            // undo the tanh applied to this layer's input
            const std::vector<double>& a = cache.acts[i];
            for (int j = 0; j < layers[i].in; ++j) prev[j] *= 1.0 - a[j] * a[j];
            cur = prev;
        }
    }
    if (dx) std::memcpy(dx, prev.data(), sizeof(double) * dims.front());
}

void Adam::step(ParamStore& ps) {
    if (m.size() != ps.size()) {
        m.assign(ps.size(), 0.0);
        v.assign(ps.size(), 0.0);
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < ps.size(); ++i) {
        const double g = ps.grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        ps.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

double tanh_clip(double x) {
    if (x > 20.0) return 1.0;
    if (x < -20.0) return -1.0;
    return std::tanh(x);
}

// ------------------------------------------------------------------- blobs ---

static constexpr char kMagic[4] = {'A', 'D', 'V', 'B'};
static constexpr uint32_t kBlobVersion = 1;

void save_blob(const std::string& path, const std::string& schema, const std::string& meta_json,
               const std::vector<BlobArray>& arrays) {
    nlohmann::json header;
    header["schema"] = schema;
    header["meta"] = meta_json.empty() ? nlohmann::json::object()
                                       : nlohmann::json::parse(meta_json);
    nlohmann::json arr = nlohmann::json::array();
    for (const BlobArray& a : arrays) {
        arr.push_back({{"name", a.name}, {"count", a.data->size()}});
    }
    header["arrays"] = arr;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw WorldError("save_blob: cannot open " + path);
    out.write(kMagic, 4);
    uint32_t ver = kBlobVersion;
    out.write(reinterpret_cast<const char*>(&ver), 4);
    uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const BlobArray& a : arrays) {
        out.write(reinterpret_cast<const char*>(a.data->data()),
                  static_cast<std::streamsize>(a.data->size() * sizeof(double)));
    }
    if (!out) throw WorldError("save_blob: write failed for " + path);
}

LoadedBlob load_blob(const std::string& path, const std::string& want_schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WorldError("load_blob: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw WorldError("load_blob: bad magic in " + path);
    }
    uint32_t ver = 0;
    in.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kBlobVersion) throw WorldError("load_blob: unsupported version in " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (!in || hlen > (1ull << 20)) throw WorldError("load_blob: bad header length in " + path);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const std::exception& e) {
        throw WorldError(std::string("load_blob: header parse: ") + e.what());
    }

    LoadedBlob blob;
    blob.schema = header.at("schema").get<std::string>();
    if (!want_schema.empty() && blob.schema != want_schema) {
        throw WorldError("load_blob: schema mismatch, want " + want_schema + " got " + blob.schema);
    }
    blob.meta_json = header.at("meta").dump();
    for (const auto& a : header.at("arrays")) {
        const std::string name = a.at("name").get<std::string>();
        const size_t count = a.at("count").get<size_t>();
        std::vector<double> data(count);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw WorldError("load_blob: truncated array " + name + " in " + path);
        blob.arrays.emplace_back(name, std::move(data));
    }
    return blob;
}

const std::vector<double>& LoadedBlob::array(const std::string& name) const {
    for (const auto& [n, d] : arrays) {
        if (n == name) return d;
    }
    throw WorldError("blob: missing array " + name);
}

}  // namespace advscene
