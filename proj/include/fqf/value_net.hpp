#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fqf/error.hpp"
#include "fqf/quantile_loss.hpp"

namespace fqf {

/// Named parameter (or gradient) array with a row-major shape.
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
        std::size_t count = 1;
        for (auto d : shape) count *= d;
        data.assign(count, 0.0);
    }

    std::size_t size() const noexcept { return data.size(); }
};

using TensorList = std::vector<Tensor>;

inline TensorList zeros_like(const TensorList& params) {
    TensorList out;
    out.reserve(params.size());
    for (const auto& p : params) out.emplace_back(p.name, p.shape);
    return out;
}

inline void scale_tensors(TensorList& ts, double factor) {
    for (auto& t : ts)
        for (auto& x : t.data) x *= factor;
}

struct NetShape {
    std::size_t state_dim = 1;
    std::size_t hidden = 64;
    std::size_t n_basis = 64;
    std::size_t actions = 1;

    bool operator==(const NetShape&) const = default;
};

/// Cosine basis cos(i*pi*tau), i = 0..n-1.
inline void cosine_basis(double tau, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(static_cast<double>(i) * std::numbers::pi * tau);
}

/// phi_j(tau) = ReLU(sum_i cos(i pi tau) w_ij + b_j), with w stored n_basis x d.
struct CosineEmbedding {
    std::size_t n_basis = 0;
    std::size_t dim = 0;
    std::span<const double> weights;
    std::span<const double> biases;

    std::vector<double> operator()(double tau) const {
        if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("embed_fraction: tau must lie in [0,1]");
        std::vector<double> basis(n_basis), phi(biases.begin(), biases.end());
        cosine_basis(tau, basis);
        for (std::size_t i = 0; i < n_basis; ++i)
            for (std::size_t j = 0; j < dim; ++j) phi[j] += basis[i] * weights[i * dim + j];
        for (auto& v : phi) v = std::max(v, 0.0);
        return phi;
    }
};

inline std::vector<double> embed_fraction(const CosineEmbedding& emb, double tau) { return emb(tau); }

/// Activations recorded by a forward pass; consumed by backward.
struct ForwardPass {
    std::vector<double> state;
    std::vector<double> taus;
    std::vector<double> psi_pre;
    std::vector<double> psi;
    Matrix basis;    // T x n_basis
    Matrix phi_pre;  // T x d
    Matrix phi;      // T x d
    Matrix out;      // T x |A|
};

/// Quantile value network: out(x, tau)[a] = head(psi(x) * phi(tau))[a],
/// psi(x) = ReLU(W_e x + b_e).
///
/// Parameters, in order: encoder.weight (d x state_dim), encoder.bias (d),
/// embedding.weight (n_basis x d), embedding.bias (d), head.weight (|A| x d),
/// head.bias (|A|).
class QuantileValueNet {
public:
    enum Param : std::size_t { EncoderW = 0, EncoderB, EmbeddingW, EmbeddingB, HeadW, HeadB, ParamCount };

    explicit QuantileValueNet(NetShape shape) : shape_(shape) {
        if (shape.state_dim == 0 || shape.hidden == 0 || shape.n_basis == 0 || shape.actions == 0)
            throw InvalidArgument("value net: all dimensions must be positive");
        params_.emplace_back("encoder.weight", std::vector<std::size_t>{shape.hidden, shape.state_dim});
        params_.emplace_back("encoder.bias", std::vector<std::size_t>{shape.hidden});
        params_.emplace_back("embedding.weight", std::vector<std::size_t>{shape.n_basis, shape.hidden});
        params_.emplace_back("embedding.bias", std::vector<std::size_t>{shape.hidden});
        params_.emplace_back("head.weight", std::vector<std::size_t>{shape.actions, shape.hidden});
        params_.emplace_back("head.bias", std::vector<std::size_t>{shape.actions});
    }

    /// Uniform(+-1/sqrt(fan_in)) weights for encoder and embedding, zero
    /// biases, head weights scaled by `head_scale` (0 gives a zero head).
    template <class Rng>
    static QuantileValueNet initialized(NetShape shape, Rng& rng, double head_scale = 0.0) {
        QuantileValueNet net(shape);
        auto fill = [&](Tensor& t, double bound) {
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& x : t.data) x = bound == 0.0 ? 0.0 : u(rng);
        };
        fill(net.params_[EncoderW], 1.0 / std::sqrt(static_cast<double>(shape.state_dim)));
        fill(net.params_[EmbeddingW], 1.0 / std::sqrt(static_cast<double>(shape.n_basis)));
        fill(net.params_[HeadW], head_scale / std::sqrt(static_cast<double>(shape.hidden)));
        return net;
    }

    static QuantileValueNet from_tensors(NetShape shape, const TensorList& tensors) {
        QuantileValueNet net(shape);
        for (auto& p : net.params_) {
            auto it = std::find_if(tensors.begin(), tensors.end(), [&](const Tensor& t) { return t.name == p.name; });
            if (it == tensors.end()) throw InvalidArgument("value net: missing parameter '" + p.name + "'");
            if (it->shape != p.shape || it->data.size() != p.data.size())
                throw InvalidArgument("value net: shape mismatch for '" + p.name + "'");
            p.data = it->data;
        }
        return net;
    }

    const NetShape& shape() const noexcept { return shape_; }
    TensorList& parameters() noexcept { return params_; }
    const TensorList& parameters() const noexcept { return params_; }
    Tensor& param(Param p) { return params_[p]; }
    const Tensor& param(Param p) const { return params_[p]; }

    CosineEmbedding embedding() const {
        return {shape_.n_basis, shape_.hidden, params_[EmbeddingW].data, params_[EmbeddingB].data};
    }

    /// psi(x) = ReLU(W_e x + b_e).
    std::vector<double> encode(std::span<const double> state) const {
        std::vector<double> pre, psi;
        encode_into(state, pre, psi);
        return psi;
    }

    ForwardPass forward(std::span<const double> state, std::span<const double> taus) const {
        const std::size_t d = shape_.hidden, n = shape_.n_basis, na = shape_.actions, t_count = taus.size();
        ForwardPass fp;
        fp.state.assign(state.begin(), state.end());
        fp.taus.assign(taus.begin(), taus.end());
        encode_into(state, fp.psi_pre, fp.psi);
        fp.basis = Matrix(t_count, n);
        fp.phi_pre = Matrix(t_count, d);
        fp.phi = Matrix(t_count, d);
        fp.out = Matrix(t_count, na);
        const auto& we = params_[EmbeddingW].data;
        const auto& be = params_[EmbeddingB].data;
        const auto& wh = params_[HeadW].data;
        const auto& bh = params_[HeadB].data;
        std::vector<double> h(d);
        for (std::size_t t = 0; t < t_count; ++t) {
            if (!(taus[t] >= 0.0 && taus[t] <= 1.0)) throw InvalidArgument("value net: tau must lie in [0,1]");
            auto basis = fp.basis.row(t);
            cosine_basis(taus[t], basis);
            auto pre = fp.phi_pre.row(t);
            std::copy(be.begin(), be.end(), pre.begin());
            for (std::size_t i = 0; i < n; ++i) {
                const double c = basis[i];
                const double* w = &we[i * d];
                for (std::size_t j = 0; j < d; ++j) pre[j] += c * w[j];
            }
            auto phi = fp.phi.row(t);
            for (std::size_t j = 0; j < d; ++j) {
                phi[j] = std::max(pre[j], 0.0);
                h[j] = fp.psi[j] * phi[j];
            }
            auto out = fp.out.row(t);
            for (std::size_t a = 0; a < na; ++a) {
                const double* w = &wh[a * d];
                double acc = bh[a];
                for (std::size_t j = 0; j < d; ++j) acc += w[j] * h[j];
                out[a] = acc;
            }
        }
        return fp;
    }

    /// Quantile values of one action at each tau.
    std::vector<double> quantiles(std::span<const double> state, std::span<const double> taus, std::size_t action) const {
        if (action >= shape_.actions) throw InvalidArgument("value net: action index out of range");
        const auto fp = forward(state, taus);
        std::vector<double> q(taus.size());
        for (std::size_t t = 0; t < q.size(); ++t) q[t] = fp.out(t, action);
        return q;
    }

    /// Accumulates into `grads` the gradient of sum_{t,a} upstream(t,a) * out(t,a).
    /// ReLU subgradient at 0 is 0.
    void backward(const ForwardPass& fp, const Matrix& upstream, TensorList& grads) const {
        const std::size_t d = shape_.hidden, n = shape_.n_basis, na = shape_.actions, s = shape_.state_dim;
        if (upstream.rows != fp.taus.size() || upstream.cols != na)
            throw InvalidArgument("value net backward: upstream gradient must be " + std::to_string(fp.taus.size()) +
                                  " x " + std::to_string(na));
        if (fp.state.size() != s || fp.psi.size() != d) throw InvalidArgument("value net backward: forward pass shape mismatch");
        if (grads.size() != ParamCount) throw InvalidArgument("value net backward: gradient list shape mismatch");
        for (std::size_t k = 0; k < ParamCount; ++k)
            if (grads[k].data.size() != params_[k].data.size())
                throw InvalidArgument("value net backward: gradient shape mismatch for '" + params_[k].name + "'");

        const auto& wh = params_[HeadW].data;
        auto& g_we = grads[EmbeddingW].data;
        auto& g_be = grads[EmbeddingB].data;
        auto& g_wh = grads[HeadW].data;
        auto& g_bh = grads[HeadB].data;
        std::vector<double> dpsi(d, 0.0), dh(d), dpre(d);
        for (std::size_t t = 0; t < fp.taus.size(); ++t) {
            const auto up = upstream.row(t);
            const auto phi = fp.phi.row(t);
            const auto pre = fp.phi_pre.row(t);
            const auto basis = fp.basis.row(t);
            std::fill(dh.begin(), dh.end(), 0.0);
            for (std::size_t a = 0; a < na; ++a) {
                const double g = up[a];
                if (g == 0.0) continue;
                g_bh[a] += g;
                const double* w = &wh[a * d];
                double* gw = &g_wh[a * d];
                for (std::size_t j = 0; j < d; ++j) {
                    gw[j] += g * fp.psi[j] * phi[j];
                    dh[j] += g * w[j];
                }
            }
            for (std::size_t j = 0; j < d; ++j) {
                dpsi[j] += dh[j] * phi[j];
                dpre[j] = pre[j] > 0.0 ? dh[j] * fp.psi[j] : 0.0;
                g_be[j] += dpre[j];
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double c = basis[i];
                double* gw = &g_we[i * d];
                for (std::size_t j = 0; j < d; ++j) gw[j] += c * dpre[j];
            }
        }
        auto& g_wenc = grads[EncoderW].data;
        auto& g_benc = grads[EncoderB].data;
        for (std::size_t j = 0; j < d; ++j) {
            if (!(fp.psi_pre[j] > 0.0)) continue;
            g_benc[j] += dpsi[j];
            for (std::size_t k = 0; k < s; ++k) g_wenc[j * s + k] += dpsi[j] * fp.state[k];
        }
    }

    TensorList zero_gradients() const { return zeros_like(params_); }

private:
    void encode_into(std::span<const double> state, std::vector<double>& pre, std::vector<double>& psi) const {
        const std::size_t d = shape_.hidden, s = shape_.state_dim;
        if (state.size() != s)
            throw InvalidArgument("value net: state has " + std::to_string(state.size()) + " features, expected " +
                                  std::to_string(s));
        const auto& w = params_[EncoderW].data;
        const auto& b = params_[EncoderB].data;
        pre.assign(b.begin(), b.end());
        psi.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t k = 0; k < s; ++k) pre[j] += w[j * s + k] * state[k];
            psi[j] = std::max(pre[j], 0.0);
        }
    }

    NetShape shape_;
    TensorList params_;
};

/// Adam over a tensor list.
struct AdamOptimizer {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    TensorList first;
    TensorList second;
    std::size_t iteration = 0;

    explicit AdamOptimizer(double lr = 1e-3, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
        : step_size(lr), beta1(b1), beta2(b2), epsilon(eps) {
        if (!(step_size >= 0)) throw InvalidArgument("adam: step size must be non-negative");
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw InvalidArgument("adam: betas must lie in [0,1)");
    }

    void apply(TensorList& params, const TensorList& grads) {
        if (params.size() != grads.size()) throw InvalidArgument("adam: parameter/gradient count mismatch");
        if (first.empty()) {
            first = zeros_like(params);
            second = zeros_like(params);
        }
        ++iteration;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(iteration));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(iteration));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = params[k].data;
            const auto& g = grads[k].data;
            if (p.size() != g.size() || first[k].data.size() != p.size())
                throw InvalidArgument("adam: shape mismatch for '" + params[k].name + "'");
            auto& m = first[k].data;
            auto& v = second[k].data;
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= step_size * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
            }
        }
    }
};

} // namespace fqf
