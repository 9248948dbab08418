#include "s2fpn/nn.hpp"

#include "s2fpn/errors.hpp"
#include "s2fpn/sphops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s2fpn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

std::size_t product(const std::vector<std::size_t>& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void fill_uniform(std::span<double> values, double bound, Rng& rng)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : values) v = dist(rng);
}

// Plain sequential sums: Eigen's vectorised reductions peel according to the
// buffer's alignment, which would make gradients depend on heap addresses.
void add_row_sums(std::span<const double> m, std::size_t n_rows, std::size_t n_cols, std::span<double> out)
{
    for (std::size_t r = 0; r < n_rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n_cols; ++c) s += m[r * n_cols + c];
        out[r] += s;
    }
}

auto rows(std::size_t r) { return static_cast<Eigen::Index>(r); }

void require_input(const MeshSignal& x, int level, std::size_t channels, const std::string& layer)
{
    if (x.level() != level || x.channels() != channels) {
        throw ShapeError(layer + ": expected level " + std::to_string(level) + " with " +
                         std::to_string(channels) + " channels, got level " +
                         std::to_string(x.level()) + " with " + std::to_string(x.channels()));
    }
    if (x.batch() == 0) throw InputError(layer + ": empty batch");
}

} // namespace

Parameter::Parameter(std::string name, std::vector<std::size_t> shape, bool trainable)
    : name_(std::move(name)),
      shape_(std::move(shape)),
      value_(product(shape_), 0.0),
      grad_(trainable ? product(shape_) : 0, 0.0),
      trainable_(trainable)
{
}

void Parameter::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

void LayerTape::record(std::initializer_list<const Parameter*> params)
{
    versions_.clear();
    for (const Parameter* p : params) versions_.emplace_back(p, p->version());
    recorded_ = true;
}

void LayerTape::record(const std::vector<const Parameter*>& params)
{
    versions_.clear();
    for (const Parameter* p : params) versions_.emplace_back(p, p->version());
    recorded_ = true;
}

void LayerTape::check(const std::string& layer) const
{
    if (!recorded_) throw StateError(layer + ": backward called without a forward pass");
    for (const auto& [p, version] : versions_) {
        if (p->version() != version) {
            throw StateError(layer + ": parameter " + p->name() + " changed since forward");
        }
    }
}

// ---------------------------------------------------------------- MeshConv

MeshConv::MeshConv(std::size_t c_in, std::size_t c_out, std::shared_ptr<const PdoOperators> ops,
                   const std::string& name, Rng& rng, StencilUnits units)
    : c_in_(c_in),
      c_out_(c_out),
      ops_(std::move(ops)),
      units_(units),
      stencil_(units == StencilUnits::mesh ? &ops_->unit : &ops_->fused),
      stencil_t_(units == StencilUnits::mesh ? &ops_->unit_t : &ops_->fused_t),
      theta_(name + ".theta", {c_out, c_in, 4}),
      bias_(name + ".bias", {c_out}),
      name_(name)
{
    fill_uniform(theta_.mutable_value(), 1.0 / std::sqrt(4.0 * static_cast<double>(c_in)), rng);
}

// Features are stored vertex-major: row v holds [x, Gx x, Gy x, L x] for all
// input channels (operator-major), so theta is permuted to match.
void MeshConv::features(const MeshSignal& x, std::size_t b, std::span<double> f) const
{
    const std::size_t n = x.num_vertices();
    const std::size_t stride = 4 * c_in_;
    ConstRowMap xs(x.sample(b).data(), rows(c_in_), rows(n));
    RowMap fm(f.data(), rows(n), rows(stride));
    fm.leftCols(rows(c_in_)) = xs.transpose();
    stencil_->apply(f.data(), stride, c_in_, f.data() + c_in_, stride);
}

MeshConv::Matrix MeshConv::permuted_theta() const
{
    RowMatrix w(rows(c_out_), rows(4 * c_in_));
    const auto theta = theta_.value();
    for (std::size_t co = 0; co < c_out_; ++co)
        for (std::size_t ci = 0; ci < c_in_; ++ci)
            for (std::size_t k = 0; k < 4; ++k) w(rows(co), rows(k * c_in_ + ci)) = theta[(co * c_in_ + ci) * 4 + k];
    return w;
}

MeshSignal MeshConv::forward(const MeshSignal& x, Mode)
{
    require_input(x, ops_->level, c_in_, name_);
    const std::size_t n = x.num_vertices();
    const std::size_t stride = 4 * c_in_;
    MeshSignal y(x.level(), x.batch(), c_out_);
    const RowMatrix w = permuted_theta();
    Eigen::Map<const Eigen::VectorXd> bias(bias_.value().data(), rows(c_out_));
    features_.resize(x.batch() * n * stride);
    batch_ = x.batch();
    for (std::size_t b = 0; b < x.batch(); ++b) {
        std::span<double> f(features_.data() + b * n * stride, n * stride);
        features(x, b, f);
        ConstRowMap fm(f.data(), rows(n), rows(stride));
        RowMap ym(y.sample(b).data(), rows(c_out_), rows(n));
        ym.noalias() = w * fm.transpose();
        ym.colwise() += bias;
    }
    tape_.record({&theta_, &bias_});
    return y;
}

MeshSignal MeshConv::backward(const MeshSignal& grad_out)
{
    tape_.check(name_);
    require_input(grad_out, ops_->level, c_out_, name_ + " (gradient)");
    if (grad_out.batch() != batch_) throw ShapeError(name_ + ": gradient batch mismatch");
    const std::size_t n = grad_out.num_vertices();
    const std::size_t stride = 4 * c_in_;
    MeshSignal gx(grad_out.level(), batch_, c_in_);
    const RowMatrix w = permuted_theta();
    RowMatrix gw = RowMatrix::Zero(rows(c_out_), rows(stride));
    RowMatrix gf(rows(n), rows(stride));
    RowMatrix gin(rows(n), rows(c_in_));
    for (std::size_t b = 0; b < batch_; ++b) {
        ConstRowMap fm(features_.data() + b * n * stride, rows(n), rows(stride));
        ConstRowMap gy(grad_out.sample(b).data(), rows(c_out_), rows(n));
        gw.noalias() += gy * fm;
        add_row_sums(grad_out.sample(b), c_out_, n, bias_.grad());
        gf.noalias() = gy.transpose() * w;
        gin = gf.leftCols(rows(c_in_));
        stencil_t_->apply_sum_add(gf.data() + c_in_, stride, c_in_, gin.data());
        RowMap(gx.sample(b).data(), rows(c_in_), rows(n)) = gin.transpose();
    }
    auto gtheta = theta_.grad();
    for (std::size_t co = 0; co < c_out_; ++co)
        for (std::size_t ci = 0; ci < c_in_; ++ci)
            for (std::size_t k = 0; k < 4; ++k) gtheta[(co * c_in_ + ci) * 4 + k] += gw(rows(co), rows(k * c_in_ + ci));
    return gx;
}

void MeshConv::collect(std::vector<Parameter*>& out)
{
    out.push_back(&theta_);
    out.push_back(&bias_);
}

// ----------------------------------------------------------------- Conv1x1

Conv1x1::Conv1x1(std::size_t c_in, std::size_t c_out, const std::string& name, Rng& rng)
    : c_in_(c_in),
      c_out_(c_out),
      weight_(name + ".weight", {c_out, c_in}),
      bias_(name + ".bias", {c_out}),
      name_(name)
{
    fill_uniform(weight_.mutable_value(), 1.0 / std::sqrt(static_cast<double>(c_in)), rng);
}

MeshSignal Conv1x1::forward(const MeshSignal& x, Mode)
{
    if (x.channels() != c_in_) {
        throw ShapeError(name_ + ": expected " + std::to_string(c_in_) + " channels, got " +
                         std::to_string(x.channels()));
    }
    const std::size_t n = x.num_vertices();
    MeshSignal y(x.level(), x.batch(), c_out_);
    ConstRowMap w(weight_.value().data(), rows(c_out_), rows(c_in_));
    Eigen::Map<const Eigen::VectorXd> bias(bias_.value().data(), rows(c_out_));
    for (std::size_t b = 0; b < x.batch(); ++b) {
        ConstRowMap xm(x.sample(b).data(), rows(c_in_), rows(n));
        RowMap ym(y.sample(b).data(), rows(c_out_), rows(n));
        ym.noalias() = w * xm;
        ym.colwise() += bias;
    }
    input_ = x;
    tape_.record({&weight_, &bias_});
    return y;
}

MeshSignal Conv1x1::backward(const MeshSignal& grad_out)
{
    tape_.check(name_);
    if (grad_out.channels() != c_out_ || grad_out.batch() != input_.batch() ||
        grad_out.level() != input_.level()) {
        throw ShapeError(name_ + ": gradient shape mismatch");
    }
    const std::size_t n = input_.num_vertices();
    MeshSignal gx(input_.level(), input_.batch(), c_in_);
    ConstRowMap w(weight_.value().data(), rows(c_out_), rows(c_in_));
    RowMap gw(weight_.grad().data(), rows(c_out_), rows(c_in_));
    for (std::size_t b = 0; b < input_.batch(); ++b) {
        ConstRowMap xm(input_.sample(b).data(), rows(c_in_), rows(n));
        ConstRowMap gy(grad_out.sample(b).data(), rows(c_out_), rows(n));
        gw.noalias() += gy * xm.transpose();
        add_row_sums(grad_out.sample(b), c_out_, n, bias_.grad());
        RowMap gxm(gx.sample(b).data(), rows(c_in_), rows(n));
        gxm.noalias() = w.transpose() * gy;
    }
    return gx;
}

void Conv1x1::collect(std::vector<Parameter*>& out)
{
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// --------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, const std::string& name)
    : channels_(channels),
      scale_(name + ".scale", {channels}),
      shift_(name + ".shift", {channels}),
      running_mean_(name + ".running_mean", {channels}, false),
      running_var_(name + ".running_var", {channels}, false),
      name_(name)
{
    auto s = scale_.mutable_value();
    std::fill(s.begin(), s.end(), 1.0);
    auto rv = running_var_.mutable_value();
    std::fill(rv.begin(), rv.end(), 1.0);
}

MeshSignal BatchNorm::forward(const MeshSignal& x, Mode mode)
{
    if (x.batch() == 0 || x.num_vertices() == 0) throw InputError(name_ + ": zero-size batch");
    if (x.channels() != channels_) {
        throw ShapeError(name_ + ": expected " + std::to_string(channels_) + " channels, got " +
                         std::to_string(x.channels()));
    }
    mode_ = mode;
    tape_.record({&scale_, &shift_});
    if (bypass_) return x;

    const std::size_t n = x.num_vertices();
    const double count = static_cast<double>(x.batch() * n);
    normalized_ = MeshSignal(x.level(), x.batch(), channels_);
    inv_std_.assign(channels_, 0.0);
    MeshSignal y(x.level(), x.batch(), channels_);
    auto rm = running_mean_.value();
    auto rv = running_var_.value();
    std::vector<double> batch_mean(channels_), batch_var(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (std::size_t b = 0; b < x.batch(); ++b)
                for (double v : x.channel(b, c)) s += v;
            mean = s / count;
            double ss = 0.0;
            for (std::size_t b = 0; b < x.batch(); ++b)
                for (double v : x.channel(b, c)) ss += (v - mean) * (v - mean);
            var = ss / count;
            batch_mean[c] = mean;
            batch_var[c] = var;
        } else {
            mean = rm[c];
            var = rv[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
        inv_std_[c] = inv_std;
        const double g = scale_.value()[c];
        const double beta = shift_.value()[c];
        for (std::size_t b = 0; b < x.batch(); ++b) {
            auto in = x.channel(b, c);
            auto xh = normalized_.channel(b, c);
            auto out = y.channel(b, c);
            for (std::size_t v = 0; v < n; ++v) {
                xh[v] = (in[v] - mean) * inv_std;
                out[v] = g * xh[v] + beta;
            }
        }
    }
    if (mode == Mode::train) {
        auto rm_out = running_mean_.mutable_value();
        auto rv_out = running_var_.mutable_value();
        const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
        for (std::size_t c = 0; c < channels_; ++c) {
            rm_out[c] = (1.0 - kBatchNormMomentum) * rm_out[c] + kBatchNormMomentum * batch_mean[c];
            rv_out[c] = (1.0 - kBatchNormMomentum) * rv_out[c] +
                        kBatchNormMomentum * batch_var[c] * unbias;
        }
    }
    return y;
}

MeshSignal BatchNorm::backward(const MeshSignal& grad_out)
{
    tape_.check(name_);
    if (bypass_) return grad_out;
    require_same_shape(grad_out, normalized_, name_.c_str());
    const std::size_t n = grad_out.num_vertices();
    const double count = static_cast<double>(grad_out.batch() * n);
    MeshSignal gx(grad_out.level(), grad_out.batch(), channels_);
    auto gscale = scale_.grad();
    auto gshift = shift_.grad();
    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t b = 0; b < grad_out.batch(); ++b) {
            auto dy = grad_out.channel(b, c);
            auto xh = normalized_.channel(b, c);
            for (std::size_t v = 0; v < n; ++v) {
                sum_dy += dy[v];
                sum_dy_xh += dy[v] * xh[v];
            }
        }
        gscale[c] += sum_dy_xh;
        gshift[c] += sum_dy;
        const double k = scale_.value()[c] * inv_std_[c];
        const double mean_dy = mode_ == Mode::train ? sum_dy / count : 0.0;
        const double mean_dy_xh = mode_ == Mode::train ? sum_dy_xh / count : 0.0;
        for (std::size_t b = 0; b < grad_out.batch(); ++b) {
            auto dy = grad_out.channel(b, c);
            auto xh = normalized_.channel(b, c);
            auto out = gx.channel(b, c);
            for (std::size_t v = 0; v < n; ++v) out[v] = k * (dy[v] - mean_dy - xh[v] * mean_dy_xh);
        }
    }
    return gx;
}

void BatchNorm::collect(std::vector<Parameter*>& out)
{
    out.push_back(&scale_);
    out.push_back(&shift_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
}

// -------------------------------------------------------------------- ReLU

MeshSignal ReLU::forward(const MeshSignal& x, Mode)
{
    tape_.record({});
    if (identity_) return x;
    MeshSignal y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    output_ = y;
    return y;
}

MeshSignal ReLU::backward(const MeshSignal& grad_out)
{
    tape_.check("relu");
    if (identity_) return grad_out;
    require_same_shape(grad_out, output_, "relu");
    MeshSignal g = grad_out;
    auto& v = g.values();
    const auto& y = output_.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(y[i] > 0.0)) v[i] = 0.0;
    }
    return g;
}

// -------------------------------------------------------------- Transition

Transition::Transition(std::shared_ptr<const TransitionOperator> op) : op_(std::move(op)) {}

MeshSignal Transition::forward(const MeshSignal& x, Mode)
{
    if (x.level() != op_->from_level) {
        throw ShapeError("transition expects level " + std::to_string(op_->from_level) +
                         ", got " + std::to_string(x.level()));
    }
    batch_ = x.batch();
    tape_.record({});
    return apply(op_->op, x, op_->to_level);
}

MeshSignal Transition::backward(const MeshSignal& grad_out)
{
    tape_.check("transition");
    if (grad_out.level() != op_->to_level) throw ShapeError("transition: gradient level mismatch");
    return apply(op_->op_t, grad_out, op_->from_level);
}

// -------------------------------------------------------------- Sequential

Sequential& Sequential::add(std::unique_ptr<Module> m)
{
    layers_.push_back(std::move(m));
    return *this;
}

MeshSignal Sequential::forward(const MeshSignal& x, Mode mode)
{
    MeshSignal h = x;
    for (auto& layer : layers_) h = layer->forward(h, mode);
    return h;
}

MeshSignal Sequential::backward(const MeshSignal& grad_out)
{
    MeshSignal g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Sequential::collect(std::vector<Parameter*>& out)
{
    for (auto& layer : layers_) layer->collect(out);
}

void Sequential::set_linearized(bool on)
{
    for (auto& layer : layers_) layer->set_linearized(on);
}

std::unique_ptr<Sequential> conv_bn_relu(std::size_t c_in, std::size_t c_out,
                                         std::shared_ptr<const PdoOperators> ops,
                                         const std::string& name, Rng& rng, StencilUnits units)
{
    auto seq = std::make_unique<Sequential>();
    seq->emplace<MeshConv>(c_in, c_out, std::move(ops), name + ".conv", rng, units);
    seq->emplace<BatchNorm>(c_out, name + ".bn");
    seq->emplace<ReLU>();
    return seq;
}

// ---------------------------------------------------------------- ResBlock

ResBlock::ResBlock(std::size_t c_in, std::size_t c_mid, std::size_t c_out,
                   std::shared_ptr<const PdoOperators> ops, const std::string& name, Rng& rng,
                   bool force_projection, StencilUnits units)
    : level_(ops->level)
{
    main_.emplace<Conv1x1>(c_in, c_mid, name + ".conv1", rng);
    main_.emplace<BatchNorm>(c_mid, name + ".bn1");
    main_.emplace<ReLU>();
    main_.emplace<MeshConv>(c_mid, c_mid, ops, name + ".conv2", rng, units);
    main_.emplace<BatchNorm>(c_mid, name + ".bn2");
    main_.emplace<ReLU>();
    main_.emplace<Conv1x1>(c_mid, c_out, name + ".conv3", rng);
    main_.emplace<BatchNorm>(c_out, name + ".bn3");
    if (c_in != c_out || force_projection) {
        skip_ = std::make_unique<Sequential>();
        skip_->emplace<Conv1x1>(c_in, c_out, name + ".skip", rng);
        skip_->emplace<BatchNorm>(c_out, name + ".skip_bn");
    }
}

MeshSignal ResBlock::forward(const MeshSignal& x, Mode mode)
{
    if (x.level() != level_) {
        throw ShapeError("resblock at level " + std::to_string(level_) + " got level " +
                         std::to_string(x.level()));
    }
    MeshSignal h = main_.forward(x, mode);
    h += skip_ ? skip_->forward(x, mode) : x;
    return out_relu_.forward(h, mode);
}

MeshSignal ResBlock::backward(const MeshSignal& grad_out)
{
    const MeshSignal g = out_relu_.backward(grad_out);
    MeshSignal gx = main_.backward(g);
    gx += skip_ ? skip_->backward(g) : g;
    return gx;
}

void ResBlock::collect(std::vector<Parameter*>& out)
{
    main_.collect(out);
    if (skip_) skip_->collect(out);
}

void ResBlock::set_linearized(bool on)
{
    main_.set_linearized(on);
    if (skip_) skip_->set_linearized(on);
    out_relu_.set_linearized(on);
}

// --------------------------------------------------------------- DownBlock

DownBlock::DownBlock(std::size_t c_in, std::size_t c_mid, std::size_t c_out,
                     const ResampleSpec& spec, const OperatorBank& bank, int fine_level,
                     const std::string& name, Rng& rng, StencilUnits units)
    : swapped_(spec.swapped),
      fine_level_(fine_level),
      pool_(bank.down(fine_level, spec.down_mode))
{
    const int block_level = spec.swapped ? fine_level : fine_level - 1;
    block_ = std::make_unique<ResBlock>(c_in, c_mid, c_out, bank.pdo(block_level), name + ".res",
                                        rng, /*force_projection=*/true, units);
}

MeshSignal DownBlock::forward(const MeshSignal& x, Mode mode)
{
    if (x.level() != fine_level_) {
        throw ShapeError("down block from level " + std::to_string(fine_level_) + " got level " +
                         std::to_string(x.level()));
    }
    if (swapped_) return pool_.forward(block_->forward(x, mode), mode);
    return block_->forward(pool_.forward(x, mode), mode);
}

MeshSignal DownBlock::backward(const MeshSignal& grad_out)
{
    if (swapped_) return block_->backward(pool_.backward(grad_out));
    return pool_.backward(block_->backward(grad_out));
}

void DownBlock::collect(std::vector<Parameter*>& out) { block_->collect(out); }

void DownBlock::set_linearized(bool on) { block_->set_linearized(on); }

std::vector<int> impulse_support(Module& module, const MeshSignal& probe, std::size_t vertex)
{
    module.set_linearized(true);
    const MeshSignal y = module.forward(probe, Mode::eval);
    if (vertex >= y.num_vertices()) {
        module.set_linearized(false);
        throw IndexError("vertex " + std::to_string(vertex) + " out of range");
    }
    MeshSignal g(y.level(), y.batch(), y.channels());
    for (std::size_t c = 0; c < y.channels(); ++c) g.at(0, c, vertex) = 1.0;
    const MeshSignal gx = module.backward(g);
    module.set_linearized(false);
    std::vector<int> out;
    for (std::size_t v = 0; v < gx.num_vertices(); ++v) {
        for (std::size_t c = 0; c < gx.channels(); ++c) {
            if (gx.at(0, c, v) != 0.0) {
                out.push_back(static_cast<int>(v));
                break;
            }
        }
    }
    return out;
}

int support_ring(Module& module, const MeshSignal& probe, const IcoMesh& input_mesh, std::size_t vertex)
{
    const std::vector<int> support = impulse_support(module, probe, vertex);
    if (support.empty()) return -1;
    const std::vector<int> dist = graph_distances(input_mesh, vertex);
    int k = 0;
    for (int v : support) k = std::max(k, dist[static_cast<std::size_t>(v)]);
    return k;
}

std::size_t count_parameters(const std::vector<Parameter*>& params)
{
    std::size_t total = 0;
    for (const Parameter* p : params) {
        if (p->trainable()) total += p->size();
    }
    return total;
}

void zero_grads(const std::vector<Parameter*>& params)
{
    for (Parameter* p : params) p->zero_grad();
}

} // namespace s2fpn
