#include "sgc/zinb.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "sgc/errors.hpp"

namespace sgc {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'C', 'M'};
constexpr std::uint32_t kVersion = 1;

ad::Var apply_activation(const ad::Var& v, Activation act) {
    switch (act) {
        case Activation::Linear:
            return v;
        case Activation::Sigmoid:
            return ad::sigmoid(v);
        case Activation::Tanh:
            return ad::tanh(v);
    }
    throw ValueError("unhandled activation");
}

ad::Var affine(const ad::Var& h, const ModelParams::Layer& layer) {
    return ad::add_rowvec(ad::matmul(h, layer.weight), layer.bias);
}

ModelParams::Layer make_layer(std::size_t in, std::size_t out, Activation act,
                              const std::string& name, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    DenseMatrix w(in, out);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
    ModelParams::Layer layer;
    layer.weight = ad::leaf(std::move(w), name + ".weight");
    layer.bias = ad::leaf(DenseMatrix(1, out, 0.0), name + ".bias");
    layer.act = act;
    return layer;
}

}  // namespace

std::vector<ad::Var> ModelParams::trainable() const {
    std::vector<ad::Var> all;
    auto push = [&all](const Layer& l) {
        all.push_back(l.weight);
        all.push_back(l.bias);
    };
    for (const auto& l : encoder) push(l);
    for (const auto& l : decoder) push(l);
    push(head_pi);
    push(head_mu);
    push(head_theta);
    return all;
}

ModelParams init_params(std::size_t input_dim, const AutoencoderConfig& cfg, std::uint64_t seed) {
    if (input_dim == 0) throw ValueError("init_params: input_dim must be positive");
    if (cfg.embedding_dim == 0) throw ValueError("init_params: embedding_dim must be positive");
    for (std::size_t h : cfg.hidden) {
        if (h == 0) throw ValueError("init_params: hidden sizes must be positive");
    }

    std::mt19937_64 rng(seed);
    ModelParams params;
    params.input_dim = input_dim;
    params.embedding_dim = cfg.embedding_dim;

    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(cfg.embedding_dim);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = i + 2 == dims.size();
        // The embedding layer itself is linear; hidden layers carry the nonlinearity.
        params.encoder.push_back(make_layer(dims[i], dims[i + 1],
                                            last ? Activation::Linear : cfg.hidden_activation,
                                            "encoder." + std::to_string(i), rng));
    }
    // Mirrored decoder stops at the widest hidden layer; the heads map it to
    // the gene axis.
    std::size_t head_in = cfg.embedding_dim;
    for (std::size_t i = 0; i + 1 < dims.size() - 1; ++i) {
        const std::size_t in = dims[dims.size() - 1 - i];
        const std::size_t out = dims[dims.size() - 2 - i];
        params.decoder.push_back(make_layer(in, out, cfg.hidden_activation,
                                            "decoder." + std::to_string(i), rng));
        head_in = out;
    }
    params.head_pi = make_layer(head_in, input_dim, Activation::Linear, "head_pi", rng);
    params.head_mu = make_layer(head_in, input_dim, Activation::Linear, "head_mu", rng);
    params.head_theta = make_layer(head_in, input_dim, Activation::Linear, "head_theta", rng);
    return params;
}

ad::Var encode(const ad::Var& x, const ModelParams& params) {
    if (params.encoder.empty()) throw ValueError("encode: uninitialized params");
    if (x.cols() != params.input_dim) {
        throw ShapeError("encode: input has " + std::to_string(x.cols()) + " genes, model expects " +
                         std::to_string(params.input_dim));
    }
    ad::Var h = x;
    for (const auto& layer : params.encoder) h = apply_activation(affine(h, layer), layer.act);
    return h;
}

ZinbOutput decode_heads(const ad::Var& z, const ModelParams& params,
                        const std::vector<double>& size_factors) {
    if (z.cols() != params.embedding_dim) {
        throw ShapeError("decode_heads: embedding width " + std::to_string(z.cols()) + ", model expects " +
                         std::to_string(params.embedding_dim));
    }
    if (size_factors.size() != z.rows()) {
        throw ShapeError("decode_heads: " + std::to_string(size_factors.size()) + " size factors for " +
                         std::to_string(z.rows()) + " cells");
    }
    DenseMatrix s(z.rows(), 1);
    for (std::size_t i = 0; i < size_factors.size(); ++i) {
        if (!(size_factors[i] > 0.0)) {
            throw ValueError("decode_heads: nonpositive size factor for cell " + std::to_string(i));
        }
        s(i, 0) = size_factors[i];
    }

    ad::Var h = z;
    for (const auto& layer : params.decoder) h = apply_activation(affine(h, layer), layer.act);

    ZinbOutput out;
    out.pi = ad::clamp(ad::sigmoid(affine(h, params.head_pi)), 1e-6, 1.0 - 1e-6);
    const ad::Var mu_unit = ad::exp(affine(h, params.head_mu));
    out.mu = ad::clamp(ad::row_scale(mu_unit, ad::constant(std::move(s), "size_factors")), 1e-6, 1e6);
    out.theta = ad::clamp(ad::exp(affine(h, params.head_theta)), 1e-6, 1e6);
    return out;
}

ad::Var zinb_log_likelihood(const DenseMatrix& x, const ZinbOutput& out) {
    if (!x.same_shape(out.pi.value()) || !x.same_shape(out.mu.value()) || !x.same_shape(out.theta.value())) {
        throw ShapeError("zinb_log_likelihood: x " + x.shape_str() + " does not match head shapes");
    }
    DenseMatrix zero_mask(x.rows(), x.cols());
    DenseMatrix pos_mask(x.rows(), x.cols());
    DenseMatrix lgamma_x1(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        if (v < 0.0) throw ValueError("zinb_log_likelihood: negative count at entry " + std::to_string(i));
        zero_mask.data()[i] = v == 0.0 ? 1.0 : 0.0;
        pos_mask.data()[i] = v == 0.0 ? 0.0 : 1.0;
        lgamma_x1.data()[i] = std::lgamma(v + 1.0);
    }
    const ad::Var xc = ad::constant(x, "x");
    const ad::Var zero_c = ad::constant(std::move(zero_mask));
    const ad::Var pos_c = ad::constant(std::move(pos_mask));
    const ad::Var lgx1_c = ad::constant(std::move(lgamma_x1));

    const ad::Var theta_mu = ad::add(out.theta, out.mu);
    const ad::Var log_theta_mu = ad::log(theta_mu);
    // log NB(x) = lgamma(x+theta) - lgamma(theta) - lgamma(x+1)
    //           + theta*(log theta - log(theta+mu)) + x*(log mu - log(theta+mu))
    const ad::Var log_norm = ad::sub(ad::sub(ad::lgamma(ad::add(xc, out.theta)), ad::lgamma(out.theta)), lgx1_c);
    const ad::Var log_disp = ad::mul(out.theta, ad::sub(ad::log(out.theta), log_theta_mu));
    const ad::Var log_mean = ad::mul(xc, ad::sub(ad::log(out.mu), log_theta_mu));
    const ad::Var log_nb = ad::add(ad::add(log_norm, log_disp), log_mean);

    // Zero entries carry the point mass; their mixture lives in the linear
    // domain with the sum floored at 1e-10 against exp underflow. Positive
    // entries have no point mass and stay in the log domain, so a far-tail
    // count keeps its exact log likelihood instead of a floored one. The
    // 1e-12 floor on 1 - pi only matters at pi = 1, where a positive count
    // has zero likelihood.
    const double dmax = std::numeric_limits<double>::max();
    const ad::Var one_minus_pi = ad::add_scalar(ad::scale(out.pi, -1.0), 1.0);
    const ad::Var mix_zero = ad::add(ad::mul(out.pi, zero_c), ad::mul(one_minus_pi, ad::exp(log_nb)));
    const ad::Var ll_zero = ad::log(ad::clamp(mix_zero, 1e-10, dmax));
    const ad::Var ll_pos = ad::add(ad::log(ad::clamp(one_minus_pi, 1e-12, dmax)), log_nb);
    return ad::add(ad::mul(zero_c, ll_zero), ad::mul(pos_c, ll_pos));
}

ad::Var zinb_nll(const DenseMatrix& x, const ZinbOutput& out) {
    const ad::Var ll = zinb_log_likelihood(x, out);
    const DenseMatrix& v = ll.value();
    std::string bad;
    std::size_t bad_count = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v.data()[i])) {
            if (bad_count < 5) {
                if (!bad.empty()) bad += ", ";
                bad += "(" + std::to_string(i / v.cols()) + "," + std::to_string(i % v.cols()) + ")";
            }
            ++bad_count;
        }
    }
    if (bad_count > 0) {
        throw ValueError("zinb_nll: non-finite log likelihood at " + std::to_string(bad_count) + " entries: " + bad);
    }
    return ad::scale(ad::full_sum(ll), -1.0 / static_cast<double>(v.size()));
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}
void put_u64(std::string& buf, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buf.append(b, 8);
}
void put_f64(std::string& buf, const double* p, std::size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n * sizeof(double));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw ParseError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    void f64(double* p, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(p, buf.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
    }
};

void put_layer(std::string& buf, const ModelParams::Layer& layer) {
    put_u32(buf, static_cast<std::uint32_t>(layer.act));
    put_u64(buf, layer.weight.rows());
    put_u64(buf, layer.weight.cols());
    put_f64(buf, layer.weight.value().data(), layer.weight.value().size());
    put_f64(buf, layer.bias.value().data(), layer.bias.value().size());
}

ModelParams::Layer read_layer(Reader& r, const std::string& name) {
    const auto act_raw = r.u32();
    if (act_raw > 2) throw ParseError("checkpoint: bad activation code " + std::to_string(act_raw));
    const std::uint64_t in = r.u64();
    const std::uint64_t out = r.u64();
    if (in == 0 || out == 0 || in > (1u << 24) || out > (1u << 24)) {
        throw ParseError("checkpoint: implausible layer shape " + std::to_string(in) + "x" + std::to_string(out));
    }
    DenseMatrix w(in, out);
    r.f64(w.data(), w.size());
    DenseMatrix b(1, out);
    r.f64(b.data(), b.size());
    ModelParams::Layer layer;
    layer.weight = ad::leaf(std::move(w), name + ".weight");
    layer.bias = ad::leaf(std::move(b), name + ".bias");
    layer.act = static_cast<Activation>(act_raw);
    return layer;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u64(buf, params.input_dim);
    put_u64(buf, params.embedding_dim);
    put_u64(buf, params.encoder.size());
    put_u64(buf, params.decoder.size());
    for (const auto& l : params.encoder) put_layer(buf, l);
    for (const auto& l : params.decoder) put_layer(buf, l);
    put_layer(buf, params.head_pi);
    put_layer(buf, params.head_mu);
    put_layer(buf, params.head_theta);

    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot move checkpoint into place: " + ec.message());
    }
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r(buf);
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw ParseError("checkpoint: bad magic");
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));

    ModelParams params;
    params.input_dim = r.u64();
    params.embedding_dim = r.u64();
    const std::uint64_t n_enc = r.u64();
    const std::uint64_t n_dec = r.u64();
    if (n_enc == 0 || n_enc > 64 || n_dec > 64) throw ParseError("checkpoint: implausible layer counts");
    for (std::uint64_t i = 0; i < n_enc; ++i) params.encoder.push_back(read_layer(r, "encoder." + std::to_string(i)));
    for (std::uint64_t i = 0; i < n_dec; ++i) params.decoder.push_back(read_layer(r, "decoder." + std::to_string(i)));
    params.head_pi = read_layer(r, "head_pi");
    params.head_mu = read_layer(r, "head_mu");
    params.head_theta = read_layer(r, "head_theta");
    if (r.pos != buf.size()) throw ParseError("checkpoint: trailing bytes");

    // Shape chain sanity.
    if (params.encoder.front().weight.rows() != params.input_dim ||
        params.encoder.back().weight.cols() != params.embedding_dim) {
        throw ParseError("checkpoint: encoder chain does not match declared dimensions");
    }
    for (std::size_t i = 0; i + 1 < params.encoder.size(); ++i) {
        if (params.encoder[i].weight.cols() != params.encoder[i + 1].weight.rows()) {
            throw ParseError("checkpoint: encoder layer shapes do not chain");
        }
    }
    return params;
}

}  // namespace sgc
