#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ghostseg/pipeline.hpp"
#include "ghostseg/simulator.hpp"

namespace ghostseg {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// ---- configuration --------------------------------------------------------

/// One multi-scale grouping level: FPS centroids, then one mini-PointNet per
/// grouping radius whose max-pooled outputs are concatenated.
struct MsgLevelConfig {
    std::size_t centers = 1;
    std::vector<double> radii;
    std::vector<std::size_t> max_group_size;         // per radius
    std::vector<std::vector<std::size_t>> mlp_widths;  // per radius

    std::size_t output_width() const;
    void validate(const std::string& where) const;
};

struct NetworkConfig {
    std::size_t input_channels = 4;
    std::size_t num_classes = 2;
    std::array<MsgLevelConfig, 3> msg;
    /// Upsampling path, coarsest first (level 3 -> 2, 2 -> 1, 1 -> input).
    std::array<std::vector<std::size_t>, 3> fp;
    /// Two hidden widths then num_classes.
    std::array<std::size_t, 3> fc{32, 32, 2};
    double dropout = 0.5;  // on the two hidden FC layers

    void validate() const;

    /// Three-level desk-scale default: centers (512, 128, 32), two radii per
    /// level, FP (128,64)/(64,32)/(32,32), FC (32, 32, c).
    static NetworkConfig standard(std::size_t num_classes, std::size_t input_channels = 4);
    /// Small variant for 32-point gradient checks.
    static NetworkConfig tiny(std::size_t num_classes, std::size_t input_channels = 4);

    bool operator==(const NetworkConfig&) const;
};

nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);

// ---- parameters -----------------------------------------------------------

struct Dense {
    Mat weight;  // out x in
    Vec bias;    // out
};

/// Every weight matrix and bias vector of the network, in a fixed order keyed
/// by layer path (sa<l>.r<j>.mlp<k>, fp<l>.mlp<k>, fc<k>).
class NetworkParams {
public:
    NetworkParams() = default;
    /// Zero-initialized parameters shaped by `config`.
    explicit NetworkParams(const NetworkConfig& config);

    const NetworkConfig& config() const { return config_; }
    std::size_t layer_count() const { return layers_.size(); }
    const std::string& layer_name(std::size_t i) const { return names_[i]; }
    Dense& layer(std::size_t i) { return layers_[i]; }
    const Dense& layer(std::size_t i) const { return layers_[i]; }

    std::size_t sa_layer(std::size_t level, std::size_t radius, std::size_t k) const { return sa_index_[level][radius][k]; }
    std::size_t fp_layer(std::size_t level, std::size_t k) const { return fp_index_[level][k]; }
    std::size_t fc_layer(std::size_t k) const { return fc_index_[k]; }
    std::size_t sa_depth(std::size_t level, std::size_t radius) const { return sa_index_[level][radius].size(); }
    std::size_t fp_depth(std::size_t level) const { return fp_index_[level].size(); }

    /// Scalar count over all layers.
    std::size_t size() const;
    /// Flat access: layer by layer, weight row-major then bias.
    double& at(std::size_t flat_index);
    double at(std::size_t flat_index) const;
    /// Name of the layer holding `flat_index`.
    const std::string& owner(std::size_t flat_index) const;

    void set_zero();
    /// Fan-in scaled uniform weights (limit scale * sqrt(6 / fan_in)), zero biases.
    void init_uniform(std::uint64_t seed, double scale = 1.0);
    bool all_finite() const;

    /// this += alpha * other (same shapes).
    void add_scaled(const NetworkParams& other, double alpha);
    bool operator==(const NetworkParams& o) const;

private:
    std::pair<std::size_t, std::size_t> locate(std::size_t flat_index) const;

    NetworkConfig config_;
    std::vector<std::string> names_;
    std::vector<Dense> layers_;
    std::vector<std::size_t> flat_offsets_;  // layer_count + 1
    std::array<std::vector<std::vector<std::size_t>>, 3> sa_index_;
    std::array<std::vector<std::size_t>, 3> fp_index_;
    std::array<std::size_t, 3> fc_index_{};
};

// ---- sampling and grouping -------------------------------------------------

/// Greedy max-min subset of `k` rows of `points` (N x 2) starting at
/// `start_index`. Distance ties pick the smaller index. Throws
/// std::invalid_argument if k is 0 or exceeds N.
std::vector<std::size_t> farthest_point_sampling(const Mat& points, std::size_t k, std::size_t start_index);

/// Per center up to `max_samples` indices within `radius`, nearest first
/// (ties by index). A center with no neighbour in range gets its single
/// nearest point.
std::vector<std::vector<std::size_t>> ball_query(const Mat& points, const Mat& centers, double radius,
                                                 std::size_t max_samples);

// ---- layers ----------------------------------------------------------------

struct MlpCache {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
};

/// Shared per-row MLP, rectifier after every layer.
Mat mlp_forward(const Mat& x, std::span<const Dense* const> layers, MlpCache* cache, const std::string& name = "mlp");
/// Accumulates layer gradients; returns d(input) when `need_input_grad`.
Mat mlp_backward(const Mat& d_out, std::span<const Dense* const> layers, std::span<Dense* const> grads,
                 const MlpCache& cache, bool need_input_grad);

/// Shared MLP over the rows of one group followed by a coordinate-wise max.
Vec mini_pointnet(const Mat& group_rows, std::span<const Dense* const> layers);

struct SaRadiusCache {
    std::vector<std::size_t> members;   // flattened group members
    std::vector<std::size_t> offsets;   // centers + 1 offsets into members
    MlpCache mlp;
    std::vector<std::size_t> argmax;    // centers x width row index into the stack
    std::size_t width = 0;
};

struct SaLevelCache {
    std::vector<std::size_t> centers;
    std::vector<SaRadiusCache> radii;
};

struct SaLevelOutput {
    std::vector<std::size_t> centers;  // indices into the input rows
    Mat positions;                     // centers x 2
    Mat features;                      // centers x sum of last widths
};

/// One MSG level. `layers[j]` is the MLP of radius j. Group rows are the
/// member coordinates recentered on the centroid followed by member features.
SaLevelOutput set_abstraction_msg(const Mat& positions, const Mat& features, const MsgLevelConfig& level,
                                  const std::vector<std::vector<const Dense*>>& layers, std::size_t start_index,
                                  SaLevelCache* cache, const std::string& name = "sa");

struct FpCache {
    std::size_t k = 0;
    std::vector<std::size_t> neighbours;  // fine x k
    std::vector<double> weights;          // fine x k, normalized inverse distance
    std::size_t coarse_width = 0;
    MlpCache mlp;
};

/// Inverse-distance interpolation from the k (<= 3) nearest coarse points;
/// distances are floored at 1e-10.
Mat interpolate_features(const Mat& coarse_positions, const Mat& coarse_features, const Mat& fine_positions,
                         std::size_t k, FpCache* cache);

/// Interpolated coarse features concatenated with the skip features, then
/// the shared MLP (passthrough if `layers` is empty).
Mat feature_propagation(const Mat& coarse_positions, const Mat& coarse_features, const Mat& fine_positions,
                        const Mat& skip_features, std::span<const Dense* const> layers, FpCache* cache,
                        const std::string& name = "fp");

/// Inverted-dropout multipliers: 0 with probability `rate`, else 1/(1-rate).
Mat dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

// ---- whole network ---------------------------------------------------------

enum class Mode { Train, Eval };

struct ForwardState {
    std::array<Mat, 4> positions;   // level 0 (input) .. 3
    std::array<Mat, 4> features;    // SA outputs per level (0 = input)
    std::array<Mat, 3> upsampled;   // FP outputs, coarsest first
    std::array<SaLevelCache, 3> sa;
    std::array<FpCache, 3> fp;
    std::array<Mat, 3> fc_input;
    std::array<Mat, 3> fc_pre;
    std::array<Mat, 2> dropout;
    Mat logits;
    Mat probabilities;
};

/// Throws std::runtime_error naming the layer if an intermediate is not finite.
ForwardState forward(const Sample& sample, const NetworkParams& params, Mode mode, Rng& rng);

/// Row-wise softmax with max subtraction.
Mat softmax_rows(const Mat& logits);

/// Per-class loss multipliers. Weighted training uses 1/(c * s_l).
struct ClassWeights {
    std::vector<double> w;

    static ClassWeights uniform(std::size_t c);
    static ClassWeights from_proportions(std::span<const double> proportions);
};

struct LossResult {
    double loss = 0.0;  // sum of weighted per-point losses / normalizer
    Mat d_logits;
};

/// Per point w_l * -log(max(p_l, 1e-12)); the sum is divided by `normalizer`
/// (0 selects the point count).
LossResult weighted_ce_loss(const Mat& probabilities, std::span<const int> labels, const ClassWeights& weights,
                            double normalizer = 0.0);

/// Accumulates d(loss)/d(params) into `grads`. Index selection (FPS, ball
/// query, interpolation neighbours) is treated as constant.
void backward(const ForwardState& state, const Mat& d_logits, const NetworkParams& params, NetworkParams& grads);

/// forward + loss + backward for one sample; returns the loss.
double loss_and_gradient(const Sample& sample, std::span<const int> labels, const NetworkParams& params,
                         const ClassWeights& weights, Mode mode, Rng& rng, NetworkParams& grads,
                         double normalizer = 0.0);

/// Eval-mode argmax class per point.
std::vector<int> predict(const Sample& sample, const NetworkParams& params);

// ---- checkpoint ------------------------------------------------------------

/// Text manifest line (layer paths, shapes, config, seed, extra metadata)
/// followed by every layer as little-endian IEEE-754 float64, weight
/// row-major then bias, in manifest order.
void write_checkpoint(std::ostream& out, const NetworkParams& params, std::uint64_t seed,
                      const nlohmann::json& extra = nlohmann::json::object());
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
    NetworkParams params;
    std::uint64_t seed = 0;
    nlohmann::json extra;
};

Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ghostseg
