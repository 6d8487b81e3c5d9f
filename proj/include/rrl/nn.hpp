#ifndef RRL_NN_HPP
#define RRL_NN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rrl/errors.hpp"
#include "rrl/matrix.hpp"
#include "rrl/rng.hpp"

namespace rrl {

enum class Activation : std::uint8_t { Identity, Relu, Tanh };

// Fully connected network with a flat parameter vector laid out as
// [W0 (n1 x n0, row-major), b0, W1, b1, ...]. The flat layout keeps the
// optimizer, target blending and checkpointing trivial.
struct DenseNet {
    std::vector<std::size_t> layer_sizes;
    Activation hidden_activation = Activation::Relu;
    Activation output_activation = Activation::Identity;
    std::vector<double> params;

    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }

    std::size_t weight_offset(std::size_t layer) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layer; ++l)
            off += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
        return off;
    }
    std::size_t bias_offset(std::size_t layer) const {
        return weight_offset(layer) + layer_sizes[layer] * layer_sizes[layer + 1];
    }

    static std::size_t param_count(const std::vector<std::size_t>& sizes) {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
            n += sizes[l] * sizes[l + 1] + sizes[l + 1];
        return n;
    }
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // post-activation per layer
};

inline double apply_act(Activation a, double x) {
    switch (a) {
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        default: return x;
    }
}

inline double act_grad_from_pre(Activation a, double pre, double post) {
    switch (a) {
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: return 1.0 - post * post;
        default: return 1.0;
    }
}

inline DenseNet net_init(const std::vector<std::size_t>& layer_sizes,
                         Activation hidden, Activation output,
                         std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw ConfigError("net_init: need at least input and output layer sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ConfigError("net_init: layer sizes must be positive");

    DenseNet net;
    net.layer_sizes = layer_sizes;
    net.hidden_activation = hidden;
    net.output_activation = output;
    net.params.resize(DenseNet::param_count(layer_sizes));

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const double bound = std::sqrt(1.0 / static_cast<double>(layer_sizes[l]));
        const std::size_t woff = net.weight_offset(l);
        const std::size_t n = layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
        for (std::size_t i = 0; i < n; ++i)
            net.params[woff + i] = rng.uniform(-bound, bound);
    }
    return net;
}

inline Matrix net_forward(const DenseNet& net, const Matrix& input, ForwardCache* cache = nullptr) {
    if (input.cols != net.input_dim())
        throw ShapeError("net_forward: input has " + std::to_string(input.cols) +
                         " features, expected " + std::to_string(net.input_dim()));
    const std::size_t B = input.rows;
    const std::size_t L = net.num_layers();

    if (cache) {
        cache->input = input;
        cache->pre.assign(L, Matrix());
        cache->post.assign(L, Matrix());
    }

    Matrix cur = input;
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = net.layer_sizes[l];
        const std::size_t out = net.layer_sizes[l + 1];
        const double* W = net.params.data() + net.weight_offset(l);
        const double* b = net.params.data() + net.bias_offset(l);
        const Activation act = (l + 1 == L) ? net.output_activation : net.hidden_activation;

        Matrix z(B, out);
        for (std::size_t r = 0; r < B; ++r) {
            const double* x = cur.row(r);
            double* zr = z.row(r);
            for (std::size_t j = 0; j < out; ++j) {
                const double* wj = W + j * in;
                double acc = b[j];
                for (std::size_t i = 0; i < in; ++i) acc += wj[i] * x[i];
                zr[j] = acc;
            }
        }
        Matrix a(B, out);
        for (std::size_t k = 0; k < z.data.size(); ++k) a.data[k] = apply_act(act, z.data[k]);
        if (cache) {
            cache->pre[l] = z;
            cache->post[l] = a;
        }
        cur = std::move(a);
    }
    return cur;
}

// Exact reverse-mode gradients for the cached forward pass. Returns the
// gradient wrt the flat parameter vector; optionally the gradient wrt input.
inline std::vector<double> net_backward(const DenseNet& net, const ForwardCache& cache,
                                        const Matrix& output_grad,
                                        Matrix* input_grad = nullptr) {
    const std::size_t L = net.num_layers();
    if (cache.pre.size() != L || cache.post.size() != L)
        throw ShapeError("net_backward: cache does not match network depth");
    if (output_grad.rows != cache.input.rows || output_grad.cols != net.output_dim())
        throw ShapeError("net_backward: output gradient shape mismatch");

    const std::size_t B = cache.input.rows;
    std::vector<double> grads(net.params.size(), 0.0);

    // delta = dL/d(pre-activation of layer l)
    Matrix delta = output_grad;
    for (std::size_t l = L; l-- > 0;) {
        const std::size_t in = net.layer_sizes[l];
        const std::size_t out = net.layer_sizes[l + 1];
        const Activation act = (l + 1 == L) ? net.output_activation : net.hidden_activation;
        const Matrix& z = cache.pre[l];
        const Matrix& a = cache.post[l];
        for (std::size_t k = 0; k < delta.data.size(); ++k)
            delta.data[k] *= act_grad_from_pre(act, z.data[k], a.data[k]);

        double* gW = grads.data() + net.weight_offset(l);
        double* gb = grads.data() + net.bias_offset(l);
        const Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
        for (std::size_t r = 0; r < B; ++r) {
            const double* d = delta.row(r);
            const double* x = below.row(r);
            for (std::size_t j = 0; j < out; ++j) {
                const double dj = d[j];
                if (dj == 0.0) continue;
                gb[j] += dj;
                double* gwj = gW + j * in;
                for (std::size_t i = 0; i < in; ++i) gwj[i] += dj * x[i];
            }
        }

        if (l > 0 || input_grad) {
            const double* W = net.params.data() + net.weight_offset(l);
            Matrix prev(B, in);
            for (std::size_t r = 0; r < B; ++r) {
                const double* d = delta.row(r);
                double* p = prev.row(r);
                for (std::size_t j = 0; j < out; ++j) {
                    const double dj = d[j];
                    if (dj == 0.0) continue;
                    const double* wj = W + j * in;
                    for (std::size_t i = 0; i < in; ++i) p[i] += dj * wj[i];
                }
            }
            if (l == 0) {
                if (input_grad) *input_grad = std::move(prev);
            } else {
                delta = std::move(prev);
            }
        }
    }
    return grads;
}

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step_count = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n = 0, double lr = 1e-4)
        : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {}
};

inline constexpr double kGradClipNorm = 10.0;

// Global-norm clip followed by a bias-corrected Adam update, in place.
inline void adam_step(std::vector<double>& params, std::vector<double> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: parameter/gradient/state size mismatch");

    double sq = 0.0;
    for (double g : grads) sq += g * g;
    if (!std::isfinite(sq))
        throw NumericalError("adam_step: non-finite gradient");
    const double norm = std::sqrt(sq);
    if (norm > kGradClipNorm) {
        const double scale = kGradClipNorm / norm;
        for (double& g : grads) g *= scale;
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
        v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

inline void polyak_blend(std::vector<double>& target, const std::vector<double>& online, double rho) {
    if (rho < 0.0 || rho > 1.0)
        throw ConfigError("polyak_blend: rho must be in [0,1]");
    if (target.size() != online.size())
        throw ShapeError("polyak_blend: size mismatch");
    for (std::size_t i = 0; i < target.size(); ++i)
        target[i] = rho * online[i] + (1.0 - rho) * target[i];
}

// --- checkpoint format ------------------------------------------------------
// magic "RRLNET1\0", u32 layer count, u32 layer sizes, then the flat f64
// parameter vector (W0 row-major, b0, W1, b1, ...), all little-endian.

inline constexpr char kNetMagic[8] = {'R', 'R', 'L', 'N', 'E', 'T', '1', '\0'};

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of stream reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("unexpected end of stream reading f64");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

inline void net_save(const DenseNet& net, std::ostream& os) {
    os.write(kNetMagic, 8);
    write_u32(os, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (std::size_t s : net.layer_sizes) write_u32(os, static_cast<std::uint32_t>(s));
    for (double p : net.params) write_f64(os, p);
}

// The format carries shapes only; the caller supplies the activations.
inline DenseNet net_load(std::istream& is, Activation hidden, Activation output) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kNetMagic, 8) != 0)
        throw IoError("net_load: bad magic");
    const std::uint32_t nlayers = read_u32(is);
    if (nlayers < 2) throw IoError("net_load: fewer than 2 layer sizes");
    DenseNet net;
    net.hidden_activation = hidden;
    net.output_activation = output;
    net.layer_sizes.resize(nlayers);
    for (auto& s : net.layer_sizes) s = read_u32(is);
    net.params.resize(DenseNet::param_count(net.layer_sizes));
    for (auto& p : net.params) p = read_f64(is);
    return net;
}

} // namespace rrl

#endif
