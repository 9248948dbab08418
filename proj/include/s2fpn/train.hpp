#pragma once

#include "s2fpn/model.hpp"
#include "s2fpn/nn.hpp"
#include "s2fpn/signal.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace s2fpn {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    double lr0 = 0.01;
    double decay_factor = 0.9;
    int decay_every = 20;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::vector<double> class_weights; // empty: uniform
    std::optional<int> ignore_index;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Stanford 2D-3D-S recipe: lr 0.01, x0.9 every 20 epochs, 100 epochs, batch 16
/// (8 for the L0:5 model).
TrainConfig stanford_train_config(int min_level);
/// ClimateNet recipe: lr 0.001, x0.4 every 20 epochs, 50 epochs, batch 128.
TrainConfig climate_train_config();

/// lr0 * decay_factor ^ floor(epoch / decay_every).
double lr_schedule(const TrainConfig& config, int epoch);

struct LossResult {
    double loss = 0.0;
    MeshSignal grad; // d loss / d logits
};

/// Weighted mean of -log softmax(logits)[label] over non-ignored vertices,
/// normalised by the summed weights of those vertices. labels are indexed
/// [b * n + v]. Empty weights means uniform.
LossResult weighted_cross_entropy(const MeshSignal& logits, std::span<const int> labels,
                                  std::span<const double> weights,
                                  std::optional<int> ignore_index = std::nullopt);

/// Per-vertex class probabilities, same layout as the logits.
MeshSignal softmax(const MeshSignal& logits);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const std::vector<Parameter*>& params, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);

/// Bias-corrected Adam update of every trainable parameter from its grad.
void adam_step(AdamState& state, const std::vector<Parameter*>& params, double lr);

struct MetricReport {
    double pixel_accuracy = 0.0;
    std::vector<double> per_class_iou; // NaN where the class is absent from both
    double miou = 0.0;
    double mean_average_precision = 0.0;
    std::vector<std::vector<std::int64_t>> confusion; // [truth][prediction]
};

/// Accumulates predictions across batches and produces a MetricReport.
class MetricAccumulator {
public:
    explicit MetricAccumulator(int n_classes, std::optional<int> ignore_index = std::nullopt);
    void add(const MeshSignal& logits, std::span<const int> labels);
    MetricReport report() const;

private:
    int n_classes_;
    std::optional<int> ignore_;
    std::vector<std::vector<std::int64_t>> confusion_;
    // (score, is_positive) per foreground class for average precision.
    std::vector<std::vector<std::pair<double, bool>>> scores_;
};

MetricReport evaluate(const MeshSignal& logits, std::span<const int> labels, int n_classes,
                      std::optional<int> ignore_index = std::nullopt);

/// Average precision from (score, positive) pairs using the trapezoidal rule
/// over the precision-recall curve; tied scores form one operating point.
double average_precision(std::vector<std::pair<double, bool>> scored);

struct Sample {
    MeshSignal input;        // batch 1
    std::vector<int> labels; // one per vertex
};

struct Dataset {
    int level = 0;
    int n_classes = 0;
    int in_channels = 0;
    std::vector<Sample> samples;
};

struct SynthOptions {
    int in_channels = 4;
    double noise = 0.05;
    double min_radius = 0.2;
    double max_radius = 0.8;
    /// Width (radians) of the tanh edge encoding each cap boundary.
    double edge_width = 0.15;
};

/// n_classes - 1 random geodesic caps over a background class; later caps
/// override earlier ones. Channel k < n_caps encodes the signed distance to
/// the boundary of cap k; further channels are cos(distance) to cap centres.
Dataset synth_caps_dataset(const IcoMesh& mesh, int n_samples, int n_classes, std::uint64_t seed,
                           const SynthOptions& options = {});

struct SynthSplits {
    Dataset train;
    Dataset val;
};

/// Train/validation pair drawn from disjoint streams derived from one seed.
SynthSplits synth_caps_splits(const IcoMesh& mesh, int n_train, int n_val, int n_classes,
                              std::uint64_t seed, const SynthOptions& options = {});

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    MetricReport val;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_miou = -1.0;
};

/// Snapshot of every model parameter and BN statistic.
struct ModelState {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;
};

ModelState capture_state(const Model& model);
void restore_state(Model& model, const ModelState& state);

struct FitOptions {
    /// Called after each epoch (e.g. to stream a JSON-lines log).
    std::function<void(const EpochRecord&)> on_epoch;
    /// Stop once validation pixel accuracy reaches this value.
    std::optional<double> target_accuracy;
};

/// Epoch loop: seeded shuffle, forward, loss, backward, Adam. Evaluates the
/// validation split after every epoch and restores the best-mIoU parameters
/// before returning. Throws DivergenceError on a non-finite loss.
TrainLog fit(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& config,
             const FitOptions& options = {});

/// Inference-mode evaluation of a whole dataset in batches.
MetricReport evaluate_dataset(Model& model, const Dataset& data, int batch_size,
                              std::optional<int> ignore_index = std::nullopt);

/// Inverse class frequency, normalised to mean 1; classes never seen get 0.
std::vector<double> inverse_frequency_weights(const Dataset& data);

} // namespace s2fpn
