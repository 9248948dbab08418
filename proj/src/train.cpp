#include "s2fpn/train.hpp"

#include "s2fpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace s2fpn {

void TrainConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
    if (epochs < 1) fail("epochs must be positive");
    if (batch_size < 1) fail("batch_size must be positive");
    if (!(lr0 > 0.0)) fail("lr0 must be positive");
    if (!(decay_factor > 0.0)) fail("decay_factor must be positive");
    if (decay_every < 1) fail("decay_every must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        fail("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    for (double w : class_weights) {
        if (!(w >= 0.0)) fail("class weights must be non-negative");
    }
}

TrainConfig stanford_train_config(int min_level)
{
    TrainConfig c;
    c.epochs = 100;
    c.batch_size = min_level == 0 ? 8 : 16;
    c.lr0 = 0.01;
    c.decay_factor = 0.9;
    c.decay_every = 20;
    return c;
}

TrainConfig climate_train_config()
{
    TrainConfig c;
    c.epochs = 50;
    c.batch_size = 128;
    c.lr0 = 0.001;
    c.decay_factor = 0.4;
    c.decay_every = 20;
    return c;
}

double lr_schedule(const TrainConfig& config, int epoch)
{
    if (epoch < 0) throw InputError("epoch must be non-negative");
    return config.lr0 * std::pow(config.decay_factor, epoch / config.decay_every);
}

// ------------------------------------------------------------------ losses

MeshSignal softmax(const MeshSignal& logits)
{
    MeshSignal p(logits.level(), logits.batch(), logits.channels());
    const std::size_t n = logits.num_vertices();
    const std::size_t C = logits.channels();
    for (std::size_t b = 0; b < logits.batch(); ++b) {
        for (std::size_t v = 0; v < n; ++v) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.at(b, c, v));
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) z += std::exp(logits.at(b, c, v) - mx);
            for (std::size_t c = 0; c < C; ++c) p.at(b, c, v) = std::exp(logits.at(b, c, v) - mx) / z;
        }
    }
    return p;
}

LossResult weighted_cross_entropy(const MeshSignal& logits, std::span<const int> labels,
                                  std::span<const double> weights, std::optional<int> ignore_index)
{
    const std::size_t n = logits.num_vertices();
    const std::size_t C = logits.channels();
    if (labels.size() != logits.batch() * n) {
        throw ShapeError("cross-entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.batch() * n) + " vertices");
    }
    if (!weights.empty() && weights.size() != C) {
        throw ShapeError("cross-entropy: class weight count differs from logit channels");
    }
    LossResult out{0.0, MeshSignal(logits.level(), logits.batch(), C)};
    double loss_sum = 0.0;
    double weight_sum = 0.0;
    std::vector<double> logp(C);
    for (std::size_t b = 0; b < logits.batch(); ++b) {
        for (std::size_t v = 0; v < n; ++v) {
            const int y = labels[b * n + v];
            if (ignore_index && y == *ignore_index) continue;
            if (y < 0 || static_cast<std::size_t>(y) >= C) {
                throw InputError("cross-entropy: label " + std::to_string(y) + " out of range");
            }
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.at(b, c, v));
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) z += std::exp(logits.at(b, c, v) - mx);
            const double log_z = std::log(z) + mx;
            for (std::size_t c = 0; c < C; ++c) logp[c] = logits.at(b, c, v) - log_z;
            const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(y)];
            loss_sum += -w * logp[static_cast<std::size_t>(y)];
            weight_sum += w;
            for (std::size_t c = 0; c < C; ++c) {
                out.grad.at(b, c, v) = w * (std::exp(logp[c]) - (static_cast<int>(c) == y ? 1.0 : 0.0));
            }
        }
    }
    if (weight_sum > 0.0) {
        out.loss = loss_sum / weight_sum;
        out.grad *= 1.0 / weight_sum;
    }
    return out;
}

// -------------------------------------------------------------------- Adam

AdamState make_adam_state(const std::vector<Parameter*>& params, double beta1, double beta2,
                          double eps)
{
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    for (const Parameter* p : params) {
        const std::size_t size = p->trainable() ? p->size() : 0;
        s.m.emplace_back(size, 0.0);
        s.v.emplace_back(size, 0.0);
    }
    return s;
}

void adam_step(AdamState& state, const std::vector<Parameter*>& params, double lr)
{
    if (state.m.size() != params.size()) throw ShapeError("Adam state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::size_t expected = params[i]->trainable() ? params[i]->size() : 0;
        if (state.m[i].size() != expected) {
            throw ShapeError("Adam state shape mismatch for " + params[i]->name());
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.trainable()) continue;
        auto g = p.grad();
        auto w = p.mutable_value();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

// ----------------------------------------------------------------- metrics

double average_precision(std::vector<std::pair<double, bool>> scored)
{
    const auto positives = static_cast<double>(
        std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.second; }));
    if (positives == 0.0) return std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : scored) {
        if (!std::isfinite(s.first)) throw InputError("average_precision: non-finite score");
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    double tp = 0.0, fp = 0.0;
    double prev_recall = 0.0, prev_precision = -1.0;
    double ap = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        const double score = scored[i].first;
        while (i < scored.size() && scored[i].first == score) {
            (scored[i].second ? tp : fp) += 1.0;
            ++i;
        }
        const double recall = tp / positives;
        const double precision = tp / (tp + fp);
        if (prev_precision < 0.0) prev_precision = precision; // curve starts at (0, p_first)
        ap += (recall - prev_recall) * 0.5 * (precision + prev_precision);
        prev_recall = recall;
        prev_precision = precision;
    }
    return ap;
}

MetricAccumulator::MetricAccumulator(int n_classes, std::optional<int> ignore_index)
    : n_classes_(n_classes),
      ignore_(ignore_index),
      confusion_(n_classes, std::vector<std::int64_t>(n_classes, 0)),
      scores_(n_classes)
{
    if (n_classes < 2) throw InputError("metrics need at least two classes");
}

void MetricAccumulator::add(const MeshSignal& logits, std::span<const int> labels)
{
    const std::size_t n = logits.num_vertices();
    if (logits.channels() != static_cast<std::size_t>(n_classes_) ||
        labels.size() != logits.batch() * n) {
        throw ShapeError("evaluate: logits/labels shape mismatch");
    }
    const MeshSignal prob = softmax(logits);
    for (std::size_t b = 0; b < logits.batch(); ++b) {
        for (std::size_t v = 0; v < n; ++v) {
            const int y = labels[b * n + v];
            if (ignore_ && y == *ignore_) continue;
            if (y < 0 || y >= n_classes_) {
                throw InputError("evaluate: label " + std::to_string(y) + " out of range");
            }
            int pred = 0;
            for (int c = 1; c < n_classes_; ++c) {
                if (logits.at(b, c, v) > logits.at(b, pred, v)) pred = c;
            }
            ++confusion_[y][pred];
            for (int c = 1; c < n_classes_; ++c) scores_[c].emplace_back(prob.at(b, c, v), y == c);
        }
    }
}

MetricReport MetricAccumulator::report() const
{
    MetricReport r;
    r.confusion = confusion_;
    std::int64_t total = 0, correct = 0;
    for (int t = 0; t < n_classes_; ++t) {
        for (int p = 0; p < n_classes_; ++p) total += confusion_[t][p];
        correct += confusion_[t][t];
    }
    r.pixel_accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    double iou_sum = 0.0;
    int iou_count = 0;
    for (int c = 0; c < n_classes_; ++c) {
        std::int64_t fp = 0, fn = 0;
        for (int k = 0; k < n_classes_; ++k) {
            if (k == c) continue;
            fp += confusion_[k][c];
            fn += confusion_[c][k];
        }
        const std::int64_t tp = confusion_[c][c];
        const std::int64_t denom = tp + fp + fn;
        if (denom == 0) {
            r.per_class_iou.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double iou = static_cast<double>(tp) / static_cast<double>(denom);
        r.per_class_iou.push_back(iou);
        iou_sum += iou;
        ++iou_count;
    }
    r.miou = iou_count > 0 ? iou_sum / iou_count : 0.0;
    double ap_sum = 0.0;
    int ap_count = 0;
    for (int c = 1; c < n_classes_; ++c) {
        const double ap = average_precision(scores_[c]);
        if (std::isnan(ap)) continue;
        ap_sum += ap;
        ++ap_count;
    }
    r.mean_average_precision = ap_count > 0 ? ap_sum / ap_count : 0.0;
    return r;
}

MetricReport evaluate(const MeshSignal& logits, std::span<const int> labels, int n_classes,
                      std::optional<int> ignore_index)
{
    MetricAccumulator acc(n_classes, ignore_index);
    acc.add(logits, labels);
    return acc.report();
}

// --------------------------------------------------------------- synthetic

Dataset synth_caps_dataset(const IcoMesh& mesh, int n_samples, int n_classes, std::uint64_t seed,
                           const SynthOptions& options)
{
    using std::numbers::pi;
    if (n_classes < 2) throw InputError("synthetic caps need at least two classes");
    if (n_samples < 0) throw InputError("sample count must be non-negative");
    if (options.in_channels < 1) throw InputError("synthetic data needs at least one channel");
    const int n_caps = n_classes - 1;
    Dataset data;
    data.level = mesh.level();
    data.n_classes = n_classes;
    data.in_channels = options.in_channels;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = mesh.num_vertices();
    for (int s = 0; s < n_samples; ++s) {
        std::vector<Vec3> centers;
        std::vector<double> radii;
        for (int k = 0; k < n_caps; ++k) {
            const double z = 2.0 * unit(rng) - 1.0;
            const double lon = 2.0 * pi * unit(rng) - pi;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            centers.emplace_back(r * std::cos(lon), r * std::sin(lon), z);
            radii.push_back(options.min_radius + (options.max_radius - options.min_radius) * unit(rng));
        }
        Sample sample{MeshSignal(mesh.level(), 1, static_cast<std::size_t>(options.in_channels)),
                      std::vector<int>(n, 0)};
        std::vector<double> dist(n_caps);
        for (std::size_t v = 0; v < n; ++v) {
            const Vec3& p = mesh.vertex(v);
            for (int k = 0; k < n_caps; ++k) {
                dist[k] = std::acos(std::clamp(p.dot(centers[k]), -1.0, 1.0));
                if (dist[k] <= radii[k]) sample.labels[v] = k + 1;
            }
            for (int c = 0; c < options.in_channels; ++c) {
                const int k = c % n_caps;
                const double clean = c < n_caps
                                         ? std::tanh((radii[k] - dist[k]) / options.edge_width)
                                         : std::cos(dist[k]);
                sample.input.at(0, c, v) = clean + options.noise * gauss(rng);
            }
        }
        data.samples.push_back(std::move(sample));
    }
    return data;
}

SynthSplits synth_caps_splits(const IcoMesh& mesh, int n_train, int n_val, int n_classes,
                              std::uint64_t seed, const SynthOptions& options)
{
    return {synth_caps_dataset(mesh, n_train, n_classes, 2 * seed + 1, options),
            synth_caps_dataset(mesh, n_val, n_classes, 2 * seed + 2, options)};
}

std::vector<double> inverse_frequency_weights(const Dataset& data)
{
    std::vector<double> counts(data.n_classes, 0.0);
    for (const Sample& s : data.samples) {
        for (int y : s.labels) {
            if (y >= 0 && y < data.n_classes) counts[y] += 1.0;
        }
    }
    std::vector<double> w(data.n_classes, 0.0);
    double sum = 0.0;
    int seen = 0;
    for (int c = 0; c < data.n_classes; ++c) {
        if (counts[c] > 0.0) {
            w[c] = 1.0 / counts[c];
            sum += w[c];
            ++seen;
        }
    }
    for (double& x : w) x *= seen > 0 ? seen / sum : 0.0;
    return w;
}

// --------------------------------------------------------------- training

ModelState capture_state(const Model& model)
{
    ModelState s;
    for (const Parameter* p : model.parameters()) {
        s.names.push_back(p->name());
        s.values.emplace_back(p->value().begin(), p->value().end());
    }
    return s;
}

void restore_state(Model& model, const ModelState& state)
{
    const auto& params = model.parameters();
    if (state.names.size() != params.size()) throw ShapeError("model state size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.names[i] != params[i]->name() || state.values[i].size() != params[i]->size()) {
            throw ShapeError("model state mismatch at " + params[i]->name());
        }
        auto dst = params[i]->mutable_value();
        std::copy(state.values[i].begin(), state.values[i].end(), dst.begin());
    }
}

namespace {

void check_dataset(const Model& model, const Dataset& data, const char* which)
{
    const ModelSpec& spec = model.spec();
    if (data.level != spec.max_level || data.in_channels != spec.in_channels ||
        data.n_classes != spec.n_classes) {
        throw ShapeError(std::string(which) + " dataset (level " + std::to_string(data.level) +
                         ", " + std::to_string(data.in_channels) + " channels, " +
                         std::to_string(data.n_classes) + " classes) does not match the model");
    }
}

struct Batch {
    MeshSignal input;
    std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices)
{
    std::vector<const MeshSignal*> inputs;
    Batch batch;
    for (std::size_t i : indices) {
        inputs.push_back(&data.samples[i].input);
        const auto& l = data.samples[i].labels;
        batch.labels.insert(batch.labels.end(), l.begin(), l.end());
    }
    batch.input = stack(inputs);
    return batch;
}

} // namespace

namespace {

// diverged_epoch >= 0: non-finite logits mean training diverged in that epoch.
MetricReport evaluate_impl(Model& model, const Dataset& data, int batch_size, std::optional<int> ignore_index,
                           int diverged_epoch)
{
    check_dataset(model, data, "evaluation");
    if (data.samples.empty()) throw InputError("evaluation split is empty");
    MetricAccumulator acc(data.n_classes, ignore_index);
    std::vector<std::size_t> idx(data.samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t start = 0; start < idx.size(); start += bs) {
        const std::size_t count = std::min(bs, idx.size() - start);
        const Batch batch = make_batch(data, std::span(idx).subspan(start, count));
        const MeshSignal logits = model.forward(batch.input, Mode::eval);
        if (!logits.all_finite()) {
            if (diverged_epoch >= 0) {
                throw DivergenceError("non-finite validation logits after epoch " + std::to_string(diverged_epoch),
                                      diverged_epoch, -1);
            }
            throw InputError("evaluation produced non-finite logits");
        }
        acc.add(logits, batch.labels);
    }
    return acc.report();
}

} // namespace

MetricReport evaluate_dataset(Model& model, const Dataset& data, int batch_size,
                              std::optional<int> ignore_index)
{
    return evaluate_impl(model, data, batch_size, ignore_index, -1);
}

TrainLog fit(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
             const FitOptions& options)
{
    config.validate();
    check_dataset(model, train, "training");
    check_dataset(model, val, "validation");
    if (train.samples.empty()) throw InputError("training split is empty");
    if (!config.class_weights.empty() &&
        config.class_weights.size() != static_cast<std::size_t>(train.n_classes)) {
        throw ConfigError("class_weights must have one entry per class");
    }

    const std::vector<Parameter*> params = model.trainable_parameters();
    AdamState adam = make_adam_state(params, config.adam_beta1, config.adam_beta2, config.adam_eps);
    Rng shuffle_rng(config.seed);
    TrainLog log;
    ModelState best;
    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_schedule(config, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t count = std::min(bs, order.size() - start);
            const Batch batch = make_batch(train, std::span(order).subspan(start, count));
            model.zero_grad();
            const MeshSignal logits = model.forward(batch.input, Mode::train);
            LossResult loss =
                weighted_cross_entropy(logits, batch.labels, config.class_weights, config.ignore_index);
            if (!std::isfinite(loss.loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                          ", step " + std::to_string(steps),
                                      epoch, steps);
            }
            model.backward(loss.grad);
            adam_step(adam, params, lr);
            loss_sum += loss.loss;
            ++steps;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.lr = lr;
        record.train_loss = loss_sum / steps;
        record.val = val.samples.empty()
                         ? MetricReport{}
                         : evaluate_impl(model, val, config.batch_size, config.ignore_index, epoch);
        if (log.best_epoch < 0 || record.val.miou > log.best_miou) {
            log.best_epoch = epoch;
            log.best_miou = record.val.miou;
            best = capture_state(model);
        }
        log.epochs.push_back(record);
        if (options.on_epoch) options.on_epoch(record);
        if (options.target_accuracy && record.val.pixel_accuracy >= *options.target_accuracy) break;
    }
    restore_state(model, best);
    return log;
}

} // namespace s2fpn
