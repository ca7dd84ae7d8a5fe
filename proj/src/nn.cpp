#include "fvr/nn/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace fvr::nn {

Tensor imageToTensor(const Image& img) {
    Tensor t(img.channels(), img.height(), img.width());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) t.at(c, y, x) = img.ch[c](y, x);
    return t;
}

Image tensorToImage(const Tensor& t) {
    Image img(t.c, t.h, t.w);
    for (int c = 0; c < t.c; ++c)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) img.ch[c](y, x) = t.at(c, y, x);
    return img;
}

Tensor planeToTensor(const Plane& p) {
    Tensor t(1, static_cast<int>(p.rows()), static_cast<int>(p.cols()));
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) t.at(0, y, x) = p(y, x);
    return t;
}

void initHe(MatX& w, int fan_in, std::mt19937_64& rng) {
    std::normal_distribution<Scalar> gauss(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = gauss(rng);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
               std::mt19937_64& rng)
    : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride), pad_(pad),
      weight_(name + ".weight", out_ch, in_ch * kernel * kernel),
      bias_(name + ".bias", out_ch, 1) {
    initHe(weight_.value, in_ch * kernel * kernel, rng);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c != in_ch_) throw std::runtime_error(weight_.name + ": channel mismatch");
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
    col_.setZero(in_ch_ * k_ * k_, oh * ow);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const int out_col = oy * ow + ox;
            for (int ky = 0; ky < k_; ++ky) {
                const int iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int kx = 0; kx < k_; ++kx) {
                    const int ix = ox * stride_ - pad_ + kx;
                    if (ix < 0 || ix >= x.w) continue;
                    const int in_col = iy * x.w + ix;
                    for (int ci = 0; ci < in_ch_; ++ci)
                        col_((ci * k_ + ky) * k_ + kx, out_col) = x.data(ci, in_col);
                }
            }
        }
    Tensor y(out_ch_, oh, ow);
    y.data.noalias() = weight_.value * col_;
    y.data.colwise() += bias_.value.col(0);
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    weight_.grad.noalias() += dy.data * col_.transpose();
    bias_.grad.col(0) += dy.data.rowwise().sum();
    const MatX dcol = weight_.value.transpose() * dy.data;
    Tensor dx(in_ch_, in_h_, in_w_);
    const int ow = dy.w;
    for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const int out_col = oy * ow + ox;
            for (int ky = 0; ky < k_; ++ky) {
                const int iy = oy * stride_ - pad_ + ky;
                if (iy < 0 || iy >= in_h_) continue;
                for (int kx = 0; kx < k_; ++kx) {
                    const int ix = ox * stride_ - pad_ + kx;
                    if (ix < 0 || ix >= in_w_) continue;
                    const int in_col = iy * in_w_ + ix;
                    for (int ci = 0; ci < in_ch_; ++ci)
                        dx.data(ci, in_col) += dcol((ci * k_ + ky) * k_ + kx, out_col);
                }
            }
        }
    return dx;
}

// ------------------------------------------------------------ Activation

Tensor Activation::forward(const Tensor& x) {
    x_ = x;
    Tensor y = x;
    switch (kind_) {
        case Act::ReLU: y.data = x.data.cwiseMax(0.0); break;
        case Act::LeakyReLU: y.data = x.data.cwiseMax(0.0) + 0.2 * x.data.cwiseMin(0.0); break;
        case Act::Sigmoid: y.data = (1.0 + (-x.data.array()).exp()).inverse().matrix(); break;
        case Act::Tanh: y.data = x.data.array().tanh().matrix(); break;
        case Act::ELU: y.data = x.data.array().max(0.0).matrix() +
                                (x.data.array().min(0.0).exp() - 1.0).matrix(); break;
    }
    y_ = y;
    return y;
}

Tensor Activation::backward(const Tensor& dy) {
    Tensor dx = dy;
    switch (kind_) {
        case Act::ReLU:
            dx.data = dy.data.cwiseProduct((x_.data.array() > 0).cast<Scalar>().matrix());
            break;
        case Act::LeakyReLU:
            dx.data = dy.data.cwiseProduct(
                ((x_.data.array() > 0).cast<Scalar>() + 0.2 * (x_.data.array() <= 0).cast<Scalar>()).matrix());
            break;
        case Act::Sigmoid:
            dx.data = dy.data.cwiseProduct((y_.data.array() * (1.0 - y_.data.array())).matrix());
            break;
        case Act::Tanh:
            dx.data = dy.data.cwiseProduct((1.0 - y_.data.array().square()).matrix());
            break;
        case Act::ELU:
            dx.data = dy.data.cwiseProduct(
                ((x_.data.array() > 0).cast<Scalar>() +
                 (x_.data.array() <= 0).cast<Scalar>() * (y_.data.array() + 1.0)).matrix());
            break;
    }
    return dx;
}

// ------------------------------------------------------------ GatedConv2d

GatedConv2d::GatedConv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
                         std::mt19937_64& rng)
    : feature_(name + ".f", in_ch, out_ch, kernel, stride, pad, rng),
      gate_(name + ".g", in_ch, out_ch, kernel, stride, pad, rng) {}

namespace {
inline MatX eluOf(const MatX& x) {
    return x.array().max(0.0).matrix() + (x.array().min(0.0).exp() - 1.0).matrix();
}
inline MatX sigmoidOf(const MatX& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }
}  // namespace

Tensor GatedConv2d::forward(const Tensor& x) {
    f_ = feature_.forward(x);
    g_ = gate_.forward(x);
    Tensor y = f_;
    y.data = eluOf(f_.data).cwiseProduct(sigmoidOf(g_.data));
    return y;
}

Tensor GatedConv2d::backward(const Tensor& dy) {
    const MatX ef = eluOf(f_.data);
    const MatX sg = sigmoidOf(g_.data);
    Tensor df = f_, dg = g_;
    df.data = dy.data.cwiseProduct(sg).cwiseProduct(
        ((f_.data.array() > 0).cast<Scalar>() + (f_.data.array() <= 0).cast<Scalar>() * (ef.array() + 1.0)).matrix());
    dg.data = dy.data.cwiseProduct(ef).cwiseProduct((sg.array() * (1.0 - sg.array())).matrix());
    Tensor dx = feature_.backward(df);
    const Tensor dx2 = gate_.backward(dg);
    dx.data += dx2.data;
    return dx;
}

std::vector<Param*> GatedConv2d::params() {
    auto p = feature_.params();
    const auto g = gate_.params();
    p.insert(p.end(), g.begin(), g.end());
    return p;
}

// ------------------------------------------------------------- Upsample2x

Tensor Upsample2x::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    c_ = x.c;
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int ch = 0; ch < x.c; ++ch)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) y.at(ch, yy, xx) = x.at(ch, yy / 2, xx / 2);
    return y;
}

Tensor Upsample2x::backward(const Tensor& dy) {
    Tensor dx(c_, in_h_, in_w_);
    for (int ch = 0; ch < c_; ++ch)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx) dx.at(ch, yy / 2, xx / 2) += dy.at(ch, yy, xx);
    return dx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_dim, int out_dim, std::mt19937_64& rng)
    : weight_(name + ".weight", out_dim, in_dim), bias_(name + ".bias", out_dim, 1) {
    initHe(weight_.value, in_dim, rng);
}

Tensor Linear::forward(const Tensor& x) {
    x_ = x;
    Tensor y(static_cast<int>(weight_.value.rows()), 1, 1);
    y.data.noalias() = weight_.value * x.data;
    y.data += bias_.value;
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    weight_.grad.noalias() += dy.data * x_.data.transpose();
    bias_.grad += dy.data;
    Tensor dx = x_;
    dx.data.noalias() = weight_.value.transpose() * dy.data;
    return dx;
}

// ------------------------------------------------------------ concat/split

Tensor concatChannels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w) throw std::runtime_error("concatChannels: size mismatch");
    Tensor y(a.c + b.c, a.h, a.w);
    y.data.topRows(a.c) = a.data;
    y.data.bottomRows(b.c) = b.data;
    return y;
}

void splitChannels(const Tensor& grad, int c_a, Tensor& da, Tensor& db) {
    da = Tensor(c_a, grad.h, grad.w);
    db = Tensor(grad.c - c_a, grad.h, grad.w);
    da.data = grad.data.topRows(c_a);
    db.data = grad.data.bottomRows(grad.c - c_a);
}

// ------------------------------------------------------------------ UNet

std::unique_ptr<Layer> UNet::makeConv(const std::string& name, int in, int out, int k, int stride,
                                      int pad, std::mt19937_64& rng) {
    if (gated_) return std::make_unique<GatedConv2d>(name, in, out, k, stride, pad, rng);
    return std::make_unique<ConvAct>(name, in, out, k, stride, pad, rng);
}

UNet::UNet(std::string name, int in_ch, int out_ch, int levels, int base, bool gated,
           std::mt19937_64& rng)
    : levels_(levels), gated_(gated) {
    if (levels < 2) throw std::runtime_error("UNet: need at least 2 levels");
    ch_.resize(levels);
    for (int i = 0; i < levels; ++i) ch_[i] = std::min(base << i, base * 8);
    enc_.push_back(makeConv(name + ".enc0", in_ch, ch_[0], 3, 1, 1, rng));
    for (int i = 1; i < levels; ++i) {
        down_.push_back(makeConv(name + ".down" + std::to_string(i - 1), ch_[i - 1], ch_[i], 3, 2, 1, rng));
        enc_.push_back(makeConv(name + ".enc" + std::to_string(i), ch_[i], ch_[i], 3, 1, 1, rng));
    }
    for (int i = levels - 2; i >= 0; --i) {
        up_.push_back(std::make_unique<Upsample2x>());
        dec_.push_back(makeConv(name + ".dec" + std::to_string(i), ch_[i + 1] + ch_[i], ch_[i], 3, 1, 1, rng));
    }
    head_ = std::make_unique<Conv2d>(name + ".head", ch_[0], out_ch, 3, 1, 1, rng);
}

Tensor UNet::forward(const Tensor& x) {
    if (x.h % (1 << (levels_ - 1)) != 0 || x.w % (1 << (levels_ - 1)) != 0)
        throw std::runtime_error("UNet: input size not divisible by 2^(levels-1)");
    enc_out_.assign(levels_, Tensor());
    enc_out_[0] = enc_[0]->forward(x);
    for (int i = 1; i < levels_; ++i)
        enc_out_[i] = enc_[i]->forward(down_[i - 1]->forward(enc_out_[i - 1]));
    Tensor u = enc_out_[levels_ - 1];
    for (int i = levels_ - 2; i >= 0; --i) {
        const int di = levels_ - 2 - i;  // storage order of up_/dec_
        u = dec_[di]->forward(concatChannels(up_[di]->forward(u), enc_out_[i]));
    }
    return head_->forward(u);
}

Tensor UNet::backward(const Tensor& dy) {
    std::vector<Tensor> genc(levels_);
    Tensor gu = head_->backward(dy);
    for (int i = 0; i <= levels_ - 2; ++i) {
        const int di = levels_ - 2 - i;
        const Tensor gcat = dec_[di]->backward(gu);
        Tensor gup, gskip;
        splitChannels(gcat, ch_[i + 1], gup, gskip);
        genc[i] = std::move(gskip);
        gu = up_[di]->backward(gup);
    }
    // gu is now the gradient w.r.t. enc_out_[levels_-1]
    Tensor g = std::move(gu);
    for (int i = levels_ - 1; i >= 1; --i) {
        const Tensor gd = enc_[i]->backward(g);
        g = down_[i - 1]->backward(gd);
        g.data += genc[i - 1].data;
    }
    return enc_[0]->backward(g);
}

std::vector<Param*> UNet::params() {
    std::vector<Param*> out;
    auto add = [&](std::vector<Param*> p) { out.insert(out.end(), p.begin(), p.end()); };
    for (auto& l : enc_) add(l->params());
    for (auto& l : down_) add(l->params());
    for (auto& l : dec_) add(l->params());
    add(head_->params());
    return out;
}

// ------------------------------------------------------------------- Adam

Adam::Adam(std::vector<Param*> params, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Param* p : params_) {
        m_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(MatX::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step() {
    ++t_;
    const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Param& p = *params_[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
        const MatX mhat = m_[i] / bc1;
        const MatX vhat = v_[i] / bc2;
        p.value -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
}

void Adam::zeroGrad() {
    for (Param* p : params_) p->zeroGrad();
}

namespace {

void writeMat(std::ostream& os, const MatX& m) {
    const std::int64_t r = m.rows(), c = m.cols();
    os.write(reinterpret_cast<const char*>(&r), sizeof(r));
    os.write(reinterpret_cast<const char*>(&c), sizeof(c));
    os.write(reinterpret_cast<const char*>(m.data()), sizeof(Scalar) * r * c);
}

MatX readMat(std::istream& is) {
    std::int64_t r = 0, c = 0;
    is.read(reinterpret_cast<char*>(&r), sizeof(r));
    is.read(reinterpret_cast<char*>(&c), sizeof(c));
    if (!is || r < 0 || c < 0) throw std::runtime_error("checkpoint: corrupt matrix header");
    MatX m(r, c);
    is.read(reinterpret_cast<char*>(m.data()), sizeof(Scalar) * r * c);
    if (!is) throw std::runtime_error("checkpoint: truncated matrix");
    return m;
}

void writeString(std::ostream& os, const std::string& s) {
    const std::uint32_t n = static_cast<std::uint32_t>(s.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(s.data(), n);
}

std::string readString(std::istream& is) {
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

}  // namespace

void Adam::serializeState(std::ostream& os) const {
    const std::uint32_t n = static_cast<std::uint32_t>(m_.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    for (const auto& m : m_) writeMat(os, m);
    for (const auto& v : v_) writeMat(os, v);
}

void Adam::deserializeState(std::istream& is) {
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != m_.size()) throw std::runtime_error("checkpoint: optimizer state size mismatch");
    is.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    for (auto& m : m_) m = readMat(is);
    for (auto& v : v_) v = readMat(is);
}

void Adam::skipState(std::istream& is) {
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::int64_t t = 0;
    is.read(reinterpret_cast<char*>(&t), sizeof(t));
    for (std::uint32_t i = 0; i < 2 * n; ++i) (void)readMat(is);
}

void saveCheckpoint(const std::string& path, const std::vector<Param*>& params,
                    std::int64_t step, const std::string& meta_json,
                    const Adam* adam_g, const Adam* adam_d) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write("FVRCKPT1", 8);
    os.write(reinterpret_cast<const char*>(&step), sizeof(step));
    writeString(os, meta_json);
    const std::uint32_t n = static_cast<std::uint32_t>(params.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const Param* p : params) {
        writeString(os, p->name);
        writeMat(os, p->value);
    }
    const std::uint8_t has_opt = (adam_g != nullptr) ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&has_opt), sizeof(has_opt));
    if (adam_g) adam_g->serializeState(os);
    const std::uint8_t has_d = (adam_d != nullptr) ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&has_d), sizeof(has_d));
    if (adam_d) adam_d->serializeState(os);
}

CheckpointInfo loadCheckpoint(const std::string& path, const std::vector<Param*>& params,
                              Adam* adam_g, Adam* adam_d) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, "FVRCKPT1", 8) != 0) throw std::runtime_error("not a checkpoint: " + path);
    CheckpointInfo info;
    is.read(reinterpret_cast<char*>(&info.step), sizeof(info.step));
    info.meta_json = readString(is);
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = readString(is);
        const MatX value = readMat(is);
        if (params[i]->name != name) throw std::runtime_error("checkpoint: parameter order mismatch at " + name);
        if (value.rows() != params[i]->value.rows() || value.cols() != params[i]->value.cols())
            throw std::runtime_error("checkpoint: shape mismatch at " + name);
        params[i]->value = value;
    }
    std::uint8_t has_opt = 0;
    is.read(reinterpret_cast<char*>(&has_opt), sizeof(has_opt));
    info.has_optimizer = has_opt != 0;
    if (has_opt && adam_g) adam_g->deserializeState(is);
    else if (has_opt) Adam::skipState(is);
    std::uint8_t has_d = 0;
    is.read(reinterpret_cast<char*>(&has_d), sizeof(has_d));
    if (has_d && adam_d) adam_d->deserializeState(is);
    else if (has_d) Adam::skipState(is);
    return info;
}

CheckpointInfo peekCheckpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, "FVRCKPT1", 8) != 0) throw std::runtime_error("not a checkpoint: " + path);
    CheckpointInfo info;
    is.read(reinterpret_cast<char*>(&info.step), sizeof(info.step));
    info.meta_json = readString(is);
    return info;
}

}  // namespace fvr::nn
