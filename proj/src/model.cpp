#include "merit/model.hpp"

#include "merit/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace merit {
namespace {

DenseMatrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseMatrix w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform_real(-bound, bound);
    return w;
}

MlpHead init_head(std::size_t dim, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(dim);
    MlpHead h;
    h.w1 = glorot(dim, dim, rng);
    h.b1 = DenseMatrix::Zero(1, d);
    h.bn_scale = DenseMatrix::Ones(1, d);
    h.bn_shift = DenseMatrix::Zero(1, d);
    h.act_slope = DenseMatrix::Constant(1, 1, 0.25);
    h.w2 = glorot(dim, dim, rng);
    h.b2 = DenseMatrix::Zero(1, d);
    h.bn_stats = ad::BatchNormStats::fresh(d);
    return h;
}

template <class Fn>
void visit_encoder(const std::string& prefix, GcnEncoder& e, Fn&& fn) {
    fn(prefix + ".weight", e.weight);
    fn(prefix + ".prelu_slope", e.prelu_slope);
}

template <class Fn>
void visit_head_params(const std::string& prefix, MlpHead& h, Fn&& fn) {
    fn(prefix + ".w1", h.w1);
    fn(prefix + ".b1", h.b1);
    fn(prefix + ".bn_scale", h.bn_scale);
    fn(prefix + ".bn_shift", h.bn_shift);
    fn(prefix + ".act_slope", h.act_slope);
    fn(prefix + ".w2", h.w2);
    fn(prefix + ".b2", h.b2);
}

template <class Fn>
void visit_head(const std::string& prefix, MlpHead& h, Fn&& fn) {
    visit_head_params(prefix, h, fn);
    fn(prefix + ".bn_running_mean", h.bn_stats.running_mean);
    fn(prefix + ".bn_running_var", h.bn_stats.running_var);
}

template <class Fn>
void visit_model(MeritModel& m, Fn&& fn) {
    visit_encoder("online.encoder", m.online.encoder, fn);
    visit_head("online.projector", m.online.projector, fn);
    visit_head("online.predictor", m.online.predictor, fn);
    visit_encoder("target.encoder", m.target.encoder, fn);
    visit_head("target.projector", m.target.projector, fn);
}

void append_named(std::vector<std::pair<std::string, ad::Var>>& out, const std::string& prefix,
                  const EncoderVars& e) {
    out.emplace_back(prefix + ".weight", e.weight);
    out.emplace_back(prefix + ".prelu_slope", e.slope);
}

void append_named(std::vector<std::pair<std::string, ad::Var>>& out, const std::string& prefix,
                  const HeadVars& h) {
    out.emplace_back(prefix + ".w1", h.w1);
    out.emplace_back(prefix + ".b1", h.b1);
    out.emplace_back(prefix + ".bn_scale", h.bn_scale);
    out.emplace_back(prefix + ".bn_shift", h.bn_shift);
    out.emplace_back(prefix + ".act_slope", h.act_slope);
    out.emplace_back(prefix + ".w2", h.w2);
    out.emplace_back(prefix + ".b2", h.b2);
}

// Features this sparse go through the CSR kernel rather than dense GEMM.
constexpr double kSparseFeatureDensity = 0.1;

ad::Var feature_product(ad::Tape& tape, const DenseMatrix& x, ad::Var weight) {
    const auto total = static_cast<double>(x.size());
    const auto nnz = static_cast<double>((x.array() != 0.0).count());
    if (total > 0 && nnz / total < kSparseFeatureDensity)
        return ad::spmm_const(std::make_shared<const SparseMatrix>(SparseMatrix::from_dense(x)), weight);
    return ad::matmul(tape.constant(x), weight);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

bool read_u64(std::istream& in, std::uint64_t& v) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

constexpr char kMagic[] = "MERIT1";

}  // namespace

MeritModel init_model(std::size_t input_dim, std::size_t latent_dim, Rng& rng, double momentum) {
    if (input_dim < 1 || latent_dim < 1) throw ValidationError("init_model: dimensions must be >= 1");
    MeritModel m;
    m.momentum = momentum;
    m.online.encoder.weight = glorot(input_dim, latent_dim, rng);
    m.online.encoder.prelu_slope = DenseMatrix::Constant(1, 1, 0.25);
    m.online.projector = init_head(latent_dim, rng);
    m.online.predictor = init_head(latent_dim, rng);
    m.target.encoder = m.online.encoder;
    m.target.projector = m.online.projector;
    return m;
}

std::vector<std::pair<std::string, ad::Var>> OnlineVars::named() const {
    std::vector<std::pair<std::string, ad::Var>> out;
    append_named(out, "online.encoder", encoder);
    append_named(out, "online.projector", projector);
    append_named(out, "online.predictor", predictor);
    return out;
}

std::vector<std::pair<std::string, ad::Var>> TargetVars::named() const {
    std::vector<std::pair<std::string, ad::Var>> out;
    append_named(out, "target.encoder", encoder);
    append_named(out, "target.projector", projector);
    return out;
}

EncoderVars bind(ad::Tape& tape, const GcnEncoder& enc, bool requires_grad) {
    return {tape.leaf(enc.weight, requires_grad), tape.leaf(enc.prelu_slope, requires_grad)};
}

HeadVars bind(ad::Tape& tape, const MlpHead& head, bool requires_grad) {
    return {tape.leaf(head.w1, requires_grad),       tape.leaf(head.b1, requires_grad),
            tape.leaf(head.bn_scale, requires_grad), tape.leaf(head.bn_shift, requires_grad),
            tape.leaf(head.act_slope, requires_grad), tape.leaf(head.w2, requires_grad),
            tape.leaf(head.b2, requires_grad)};
}

OnlineVars bind(ad::Tape& tape, const OnlineNetwork& net) {
    return {bind(tape, net.encoder), bind(tape, net.projector), bind(tape, net.predictor)};
}

TargetVars bind(ad::Tape& tape, const TargetNetwork& net) {
    return {bind(tape, net.encoder), bind(tape, net.projector)};
}

ad::Var encode(ad::Tape& tape, const EncoderVars& enc, const GraphView& view) {
    const auto& x = view.features;
    if (x.cols() != enc.weight.rows())
        throw DimensionError("encode: view has " + std::to_string(x.cols()) +
                             " features, encoder expects " + std::to_string(enc.weight.rows()));
    const ad::Var xw = feature_product(tape, x, enc.weight);
    ad::Var propagated;
    if (const auto* sp = std::get_if<SparseMatrix>(&view.op)) {
        if (sp->rows() != static_cast<std::size_t>(x.rows()) || sp->cols() != sp->rows())
            throw DimensionError("encode: operator does not match view size");
        propagated = ad::spmm_const(std::make_shared<const SparseMatrix>(*sp), xw);
    } else {
        const auto& dense = std::get<DenseMatrix>(view.op);
        if (dense.rows() != x.rows() || dense.cols() != x.rows())
            throw DimensionError("encode: operator does not match view size");
        propagated = ad::matmul(tape.constant(dense), xw);
    }
    return ad::prelu(propagated, enc.slope);
}

ad::Var apply_head(const HeadVars& head, ad::BatchNormStats& stats, ad::Var x, bool training) {
    ad::Var h = ad::add_row_bias(ad::matmul(x, head.w1), head.b1);
    h = ad::batchnorm_rows(h, head.bn_scale, head.bn_shift, stats, training);
    h = ad::prelu(h, head.act_slope);
    return ad::add_row_bias(ad::matmul(h, head.w2), head.b2);
}

OnlineOutput online_forward(ad::Tape& tape, MeritModel& model, const OnlineVars& vars,
                            const GraphView& view, bool training) {
    const ad::Var emb = encode(tape, vars.encoder, view);
    const ad::Var z = apply_head(vars.projector, model.online.projector.bn_stats, emb, training);
    const ad::Var h = apply_head(vars.predictor, model.online.predictor.bn_stats, z, training);
    return {z, h};
}

ad::Var target_forward(ad::Tape& tape, MeritModel& model, const TargetVars& vars,
                       const GraphView& view, bool training) {
    const ad::Var emb = encode(tape, vars.encoder, view);
    const ad::Var z = apply_head(vars.projector, model.target.projector.bn_stats, emb, training);
    return ad::detach(z);
}

DenseMatrix encode_values(const GcnEncoder& enc, const GraphView& view) {
    ad::Tape tape;
    const auto vars = bind(tape, enc, false);
    return encode(tape, vars, view).value();
}

void momentum_update(MeritModel& model) {
    const double m = model.momentum;
    if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("momentum must lie in [0, 1]");
    for_each_momentum_pair(model, [m](DenseMatrix& target, const DenseMatrix& online) {
        target = m * target + (1.0 - m) * online;
    });
}

void for_each_momentum_pair(MeritModel& model,
                            const std::function<void(DenseMatrix&, const DenseMatrix&)>& fn) {
    fn(model.target.encoder.weight, model.online.encoder.weight);
    fn(model.target.encoder.prelu_slope, model.online.encoder.prelu_slope);
    auto& t = model.target.projector;
    const auto& o = model.online.projector;
    fn(t.w1, o.w1);
    fn(t.b1, o.b1);
    fn(t.bn_scale, o.bn_scale);
    fn(t.bn_shift, o.bn_shift);
    fn(t.act_slope, o.act_slope);
    fn(t.w2, o.w2);
    fn(t.b2, o.b2);
}

DenseMatrix infer_embeddings(const MeritModel& model, const Graph& g, const DenseMatrix& diffusion,
                             bool through_heads) {
    const GraphView adj_view = full_adjacency_view(g);
    const GraphView diff_view = full_diffusion_view(g, diffusion);
    if (!through_heads)
        return encode_values(model.online.encoder, adj_view) +
               encode_values(model.online.encoder, diff_view);

    auto heads = [&](const GraphView& view) {
        ad::Tape tape;
        const auto enc = bind(tape, model.online.encoder, false);
        const auto proj = bind(tape, model.online.projector, false);
        const auto pred = bind(tape, model.online.predictor, false);
        auto proj_stats = model.online.projector.bn_stats;
        auto pred_stats = model.online.predictor.bn_stats;
        const ad::Var z = apply_head(proj, proj_stats, encode(tape, enc, view), false);
        return DenseMatrix(apply_head(pred, pred_stats, z, false).value());
    };
    return heads(adj_view) + heads(diff_view);
}

void for_each_tensor(MeritModel& model,
                     const std::function<void(const std::string&, DenseMatrix&)>& fn) {
    visit_model(model, fn);
}

void for_each_tensor(const MeritModel& model,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn) {
    visit_model(const_cast<MeritModel&>(model),
                [&](const std::string& name, DenseMatrix& t) { fn(name, t); });
}

void save_checkpoint(const MeritModel& model, const std::filesystem::path& path) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(kMagic, 6);
        for_each_tensor(model, [&](const std::string& name, const DenseMatrix& t) {
            write_u32(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u64(out, static_cast<std::uint64_t>(t.rows()));
            write_u64(out, static_cast<std::uint64_t>(t.cols()));
            for (Eigen::Index i = 0; i < t.size(); ++i)
                write_u64(out, std::bit_cast<std::uint64_t>(t.data()[i]));
        });
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

MeritModel load_checkpoint(const std::filesystem::path& path, double momentum) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
        throw ValidationError(path.string() + ": not a MERIT1 checkpoint");

    std::map<std::string, DenseMatrix> tensors;
    std::uint32_t len = 0;
    while (read_u32(in, len)) {
        std::string name(len, '\0');
        std::uint64_t rows = 0, cols = 0;
        if (!in.read(name.data(), len) || !read_u64(in, rows) || !read_u64(in, cols))
            throw ValidationError(path.string() + ": truncated tensor header");
        DenseMatrix t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            std::uint64_t bits = 0;
            if (!read_u64(in, bits)) throw ValidationError(path.string() + ": truncated tensor '" + name + "'");
            t.data()[i] = std::bit_cast<double>(bits);
        }
        tensors.emplace(std::move(name), std::move(t));
    }

    MeritModel m;
    m.momentum = momentum;
    visit_model(m, [&](const std::string& name, DenseMatrix& t) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ValidationError(path.string() + ": missing tensor '" + name + "'");
        t = std::move(it->second);
    });
    if (m.online.encoder.weight.cols() != m.online.projector.w1.rows())
        throw ValidationError(path.string() + ": inconsistent tensor shapes");
    return m;
}

}  // namespace merit
