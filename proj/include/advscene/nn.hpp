#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace advscene {

/// Deterministic RNG with fixed bit-level behaviour (the standard distributions
/// are implementation-defined, these are not).
struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed = 0) : gen(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
    uint64_t next() { return gen(); }
};

/// Flat parameter/gradient storage shared by every layer of one model.
struct ParamStore {
    std::vector<double> value;
    std::vector<double> grad;

    size_t alloc(size_t n) {
        const size_t off = value.size();
        value.resize(off + n, 0.0);
        grad.resize(off + n, 0.0);
        return off;
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
    size_t size() const { return value.size(); }
};

/// Dense layer y = W x + b over a ParamStore slice.
struct Linear {
    int in = 0, out = 0;
    size_t w_off = 0, b_off = 0;

    void init(ParamStore& ps, int in_dim, int out_dim, Rng& rng);
    void init_zero(ParamStore& ps, int in_dim, int out_dim);
    void forward(const ParamStore& ps, const double* x, double* y) const;
    /// Accumulates weight gradients; writes input adjoints when dx != nullptr.
    void backward(ParamStore& ps, const double* x, const double* dy, double* dx) const;
};

/// Stack of Linear layers with tanh between them and a linear output.
struct Mlp {
    std::vector<Linear> layers;
    std::vector<int> dims;  // layer widths, input first

    struct Cache {
        // acts[0] = input, acts[i] = post-activation output of layer i
        std::vector<std::vector<double>> acts;
    };

    void init(ParamStore& ps, const std::vector<int>& widths, Rng& rng, bool zero_last = false);
    int in_dim() const { return dims.front(); }
    int out_dim() const { return dims.back(); }
    void forward(const ParamStore& ps, const double* x, double* y, Cache* cache = nullptr) const;
    /// Needs the Cache produced by the matching forward call.
    void backward(ParamStore& ps, const Cache& cache, const double* dy, double* dx) const;
};

/// Adam with bias correction over one ParamStore.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::vector<double> m, v;

    void step(ParamStore& ps);
};

double tanh_clip(double x);  // numerically safe tanh

// --- versioned binary blobs ---
// layout: magic "ADVB", u32 version, u64 header bytes, JSON header, then the
// arrays named in header["arrays"] as raw little-endian doubles.
struct BlobArray {
    std::string name;
    const std::vector<double>* data;
};

void save_blob(const std::string& path, const std::string& schema, const std::string& meta_json,
               const std::vector<BlobArray>& arrays);

struct LoadedBlob {
    std::string schema;
    std::string meta_json;
    std::vector<std::pair<std::string, std::vector<double>>> arrays;

    const std::vector<double>& array(const std::string& name) const;
};

LoadedBlob load_blob(const std::string& path, const std::string& want_schema);

}  // namespace advscene
