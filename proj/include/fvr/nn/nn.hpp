#pragma once

#include "fvr/types.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fvr::nn {

// Dense feature map: `c` channels over an h x w grid. Channel c is row c of
// `data`; pixel (y,x) is column y*w + x.
struct Tensor {
    int c = 0, h = 0, w = 0;
    MatX data;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), data(MatX::Zero(c_, h_ * w_)) {}

    Scalar& at(int ch, int y, int x) { return data(ch, y * w + x); }
    Scalar at(int ch, int y, int x) const { return data(ch, y * w + x); }
    bool sameShape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

Tensor imageToTensor(const Image& img);
Image tensorToImage(const Tensor& t);
Tensor planeToTensor(const Plane& p);

struct Param {
    std::string name;
    MatX value;
    MatX grad;

    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(MatX::Zero(rows, cols)), grad(MatX::Zero(rows, cols)) {}
    void zeroGrad() { grad.setZero(); }
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;  // accumulates into param grads
    virtual std::vector<Param*> params() { return {}; }
};

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
           std::mt19937_64& rng);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }
    int outChannels() const { return out_ch_; }

private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    Param weight_;  // (out_ch, in_ch*k*k)
    Param bias_;    // (out_ch, 1)
    MatX col_;      // cached im2col of the last input
    int in_h_ = 0, in_w_ = 0;
};

enum class Act { ReLU, LeakyReLU, Sigmoid, Tanh, ELU };

class Activation : public Layer {
public:
    explicit Activation(Act kind) : kind_(kind) {}
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;

private:
    Act kind_;
    Tensor x_, y_;
};

// Convolution gated by a learned sigmoid mask from a parallel convolution:
// y = elu(conv_f(x)) .* sigmoid(conv_g(x))
class GatedConv2d : public Layer {
public:
    GatedConv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
                std::mt19937_64& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override;

private:
    Conv2d feature_, gate_;
    Tensor f_, g_;  // pre-activation caches
};

class Upsample2x : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;

private:
    int in_h_ = 0, in_w_ = 0, c_ = 0;
};

// Fully connected layer on flattened vectors (stored as n x 1 tensors).
class Linear : public Layer {
public:
    Linear(std::string name, int in_dim, int out_dim, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    Param weight_, bias_;
    Tensor x_;
};

// conv followed by an activation; the default LeakyReLU matches the U-Net blocks
class ConvAct : public Layer {
public:
    ConvAct(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
            std::mt19937_64& rng, Act act = Act::LeakyReLU)
        : conv_(std::move(name), in_ch, out_ch, kernel, stride, pad, rng), act_(act) {}
    Tensor forward(const Tensor& x) override { return act_.forward(conv_.forward(x)); }
    Tensor backward(const Tensor& dy) override { return conv_.backward(act_.backward(dy)); }
    std::vector<Param*> params() override { return conv_.params(); }

private:
    Conv2d conv_;
    Activation act_;
};

Tensor concatChannels(const Tensor& a, const Tensor& b);
void splitChannels(const Tensor& grad, int c_a, Tensor& da, Tensor& db);

// Encoder-decoder with skip connections. `levels` resolutions, channel width
// doubling per level from `base` (capped at 8x). No activation on the head.
class UNet {
public:
    UNet(std::string name, int in_ch, int out_ch, int levels, int base, bool gated,
         std::mt19937_64& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    std::vector<Param*> params();
    Conv2d& head() { return *head_; }

private:
    std::unique_ptr<Layer> makeConv(const std::string& name, int in, int out, int k, int stride,
                                    int pad, std::mt19937_64& rng);

    int levels_;
    bool gated_;
    std::vector<std::unique_ptr<Layer>> enc_;       // one block per level
    std::vector<std::unique_ptr<Layer>> down_;      // stride-2, between levels
    std::vector<std::unique_ptr<Upsample2x>> up_;
    std::vector<std::unique_ptr<Layer>> dec_;       // after skip concat
    std::unique_ptr<Conv2d> head_;
    std::vector<int> ch_;
    std::vector<Tensor> enc_out_;  // caches for skip gradients
};

class Adam {
public:
    Adam(std::vector<Param*> params, Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999,
         Scalar eps = 1e-8);
    void step();
    void zeroGrad();
    std::int64_t stepCount() const { return t_; }

    // checkpoint support
    void serializeState(std::ostream& os) const;
    void deserializeState(std::istream& is);
    static void skipState(std::istream& is);

private:
    std::vector<Param*> params_;
    Scalar lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<MatX> m_, v_;
};

// Single-archive checkpoint of named parameter matrices plus a step counter.
void saveCheckpoint(const std::string& path, const std::vector<Param*>& params,
                    std::int64_t step, const std::string& meta_json = "{}",
                    const Adam* adam_g = nullptr, const Adam* adam_d = nullptr);

struct CheckpointInfo {
    std::int64_t step = 0;
    std::string meta_json;
    bool has_optimizer = false;
};

CheckpointInfo loadCheckpoint(const std::string& path, const std::vector<Param*>& params,
                              Adam* adam_g = nullptr, Adam* adam_d = nullptr);

// Reads only the header (step + metadata) without touching any parameters.
CheckpointInfo peekCheckpoint(const std::string& path);

// He-style fan-in init used by all layers.
void initHe(MatX& w, int fan_in, std::mt19937_64& rng);

}  // namespace fvr::nn
