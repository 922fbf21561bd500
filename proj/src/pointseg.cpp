#include "ghostseg/pointseg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ghostseg {

using nlohmann::json;

// ---- configuration --------------------------------------------------------

std::size_t MsgLevelConfig::output_width() const {
    std::size_t w = 0;
    for (const auto& widths : mlp_widths) w += widths.empty() ? 0 : widths.back();
    return w;
}

void MsgLevelConfig::validate(const std::string& where) const {
    if (centers < 1) throw std::invalid_argument(where + ": centers must be >= 1");
    if (radii.empty()) throw std::invalid_argument(where + ": at least one radius required");
    if (max_group_size.size() != radii.size() || mlp_widths.size() != radii.size())
        throw std::invalid_argument(where + ": radii, max_group_size and mlp_widths must have equal length");
    for (std::size_t j = 0; j < radii.size(); ++j) {
        if (!(radii[j] > 0.0)) throw std::invalid_argument(where + ": radii must be > 0");
        if (j > 0 && !(radii[j] > radii[j - 1])) throw std::invalid_argument(where + ": radii must be strictly increasing");
        if (max_group_size[j] < 1) throw std::invalid_argument(where + ": max_group_size must be >= 1");
        if (mlp_widths[j].empty()) throw std::invalid_argument(where + ": mlp widths must be nonempty");
        for (auto w : mlp_widths[j])
            if (w < 1) throw std::invalid_argument(where + ": mlp widths must be >= 1");
    }
}

void NetworkConfig::validate() const {
    if (input_channels < 1) throw std::invalid_argument("network: input_channels must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("network: num_classes must be >= 2");
    for (std::size_t l = 0; l < 3; ++l) msg[l].validate("msg" + std::to_string(l));
    for (std::size_t l = 0; l < 3; ++l) {
        if (fp[l].empty()) throw std::invalid_argument("network: fp" + std::to_string(l) + " widths must be nonempty");
        for (auto w : fp[l])
            if (w < 1) throw std::invalid_argument("network: fp widths must be >= 1");
    }
    if (msg[1].centers > msg[0].centers || msg[2].centers > msg[1].centers)
        throw std::invalid_argument("network: centers must not increase with depth");
    if (fc[0] < 1 || fc[1] < 1) throw std::invalid_argument("network: fc widths must be >= 1");
    if (fc[2] != num_classes) throw std::invalid_argument("network: last fc width must equal num_classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("network: dropout must lie in [0, 1)");
}

NetworkConfig NetworkConfig::standard(std::size_t num_classes, std::size_t input_channels) {
    NetworkConfig c;
    c.input_channels = input_channels;
    c.num_classes = num_classes;
    c.msg[0] = {512, {0.5, 1.0}, {16, 32}, {{16, 16, 32}, {16, 16, 32}}};
    c.msg[1] = {128, {1.0, 2.0}, {16, 32}, {{32, 32, 64}, {32, 32, 64}}};
    c.msg[2] = {32, {2.0, 4.0}, {16, 32}, {{64, 64, 128}, {64, 64, 128}}};
    c.fp = {std::vector<std::size_t>{128, 64}, {64, 32}, {32, 32}};
    c.fc = {32, 32, num_classes};
    c.dropout = 0.5;
    return c;
}

NetworkConfig NetworkConfig::tiny(std::size_t num_classes, std::size_t input_channels) {
    NetworkConfig c;
    c.input_channels = input_channels;
    c.num_classes = num_classes;
    c.msg[0] = {16, {0.5, 1.5}, {4, 8}, {{6, 8}, {6, 8}}};
    c.msg[1] = {8, {1.0, 3.0}, {4, 8}, {{8, 12}, {8, 12}}};
    c.msg[2] = {4, {2.0, 6.0}, {4, 4}, {{12, 16}, {12, 16}}};
    c.fp = {std::vector<std::size_t>{16}, {12}, {8}};
    c.fc = {8, 8, num_classes};
    c.dropout = 0.5;
    return c;
}

bool NetworkConfig::operator==(const NetworkConfig& o) const { return to_json(*this) == to_json(o); }

json to_json(const NetworkConfig& c) {
    json msg = json::array();
    for (const auto& m : c.msg)
        msg.push_back({{"centers", m.centers}, {"radii", m.radii}, {"max_group_size", m.max_group_size},
                       {"mlp_widths", m.mlp_widths}});
    return json{{"input_channels", c.input_channels},
                {"num_classes", c.num_classes},
                {"msg", msg},
                {"fp", {c.fp[0], c.fp[1], c.fp[2]}},
                {"fc", {c.fc[0], c.fc[1], c.fc[2]}},
                {"dropout", c.dropout}};
}

NetworkConfig network_config_from_json(const json& j) {
    NetworkConfig c;
    c.input_channels = j.at("input_channels").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& m = j.at("msg").at(l);
        c.msg[l].centers = m.at("centers").get<std::size_t>();
        c.msg[l].radii = m.at("radii").get<std::vector<double>>();
        c.msg[l].max_group_size = m.at("max_group_size").get<std::vector<std::size_t>>();
        c.msg[l].mlp_widths = m.at("mlp_widths").get<std::vector<std::vector<std::size_t>>>();
        c.fp[l] = j.at("fp").at(l).get<std::vector<std::size_t>>();
        c.fc[l] = j.at("fc").at(l).get<std::size_t>();
    }
    c.dropout = j.at("dropout").get<double>();
    c.validate();
    return c;
}

// ---- parameters -----------------------------------------------------------

NetworkParams::NetworkParams(const NetworkConfig& config) : config_(config) {
    config_.validate();
    auto add = [&](std::string name, std::size_t in, std::size_t out) {
        names_.push_back(std::move(name));
        layers_.push_back({Mat::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                           Vec::Zero(static_cast<Eigen::Index>(out))});
        return layers_.size() - 1;
    };
    std::size_t feat = config_.input_channels;
    std::array<std::size_t, 4> level_width{config_.input_channels, 0, 0, 0};
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& m = config_.msg[l];
        sa_index_[l].resize(m.radii.size());
        for (std::size_t j = 0; j < m.radii.size(); ++j) {
            std::size_t in = 2 + feat;
            for (std::size_t k = 0; k < m.mlp_widths[j].size(); ++k) {
                const auto out = m.mlp_widths[j][k];
                sa_index_[l][j].push_back(
                    add("sa" + std::to_string(l) + ".r" + std::to_string(j) + ".mlp" + std::to_string(k), in, out));
                in = out;
            }
        }
        feat = m.output_width();
        level_width[l + 1] = feat;
    }
    std::size_t coarse = level_width[3];
    for (std::size_t l = 0; l < 3; ++l) {
        std::size_t in = coarse + level_width[2 - l];
        for (std::size_t k = 0; k < config_.fp[l].size(); ++k) {
            const auto out = config_.fp[l][k];
            fp_index_[l].push_back(add("fp" + std::to_string(l) + ".mlp" + std::to_string(k), in, out));
            in = out;
        }
        coarse = config_.fp[l].back();
    }
    std::size_t in = coarse;
    for (std::size_t k = 0; k < 3; ++k) {
        fc_index_[k] = add("fc" + std::to_string(k), in, config_.fc[k]);
        in = config_.fc[k];
    }
    flat_offsets_.assign(1, 0);
    for (const auto& d : layers_)
        flat_offsets_.push_back(flat_offsets_.back() + static_cast<std::size_t>(d.weight.size() + d.bias.size()));
}

std::size_t NetworkParams::size() const { return flat_offsets_.empty() ? 0 : flat_offsets_.back(); }

std::pair<std::size_t, std::size_t> NetworkParams::locate(std::size_t flat_index) const {
    if (flat_index >= size()) throw std::out_of_range("NetworkParams: flat index out of range");
    const auto it = std::upper_bound(flat_offsets_.begin(), flat_offsets_.end(), flat_index);
    const auto layer = static_cast<std::size_t>(it - flat_offsets_.begin()) - 1;
    return {layer, flat_index - flat_offsets_[layer]};
}

double& NetworkParams::at(std::size_t flat_index) {
    const auto [l, off] = locate(flat_index);
    auto& d = layers_[l];
    const auto wsize = static_cast<std::size_t>(d.weight.size());
    return off < wsize ? d.weight.data()[off] : d.bias.data()[off - wsize];
}

double NetworkParams::at(std::size_t flat_index) const { return const_cast<NetworkParams*>(this)->at(flat_index); }

const std::string& NetworkParams::owner(std::size_t flat_index) const { return names_[locate(flat_index).first]; }

void NetworkParams::set_zero() {
    for (auto& d : layers_) {
        d.weight.setZero();
        d.bias.setZero();
    }
}

void NetworkParams::init_uniform(std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (auto& d : layers_) {
        const double limit = scale * std::sqrt(6.0 / static_cast<double>(d.weight.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = u(rng);
        d.bias.setZero();
    }
}

bool NetworkParams::all_finite() const {
    return std::all_of(layers_.begin(), layers_.end(),
                       [](const Dense& d) { return d.weight.allFinite() && d.bias.allFinite(); });
}

void NetworkParams::add_scaled(const NetworkParams& other, double alpha) {
    if (other.layers_.size() != layers_.size()) throw std::invalid_argument("add_scaled: layer count mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].weight += alpha * other.layers_[i].weight;
        layers_[i].bias += alpha * other.layers_[i].bias;
    }
}

bool NetworkParams::operator==(const NetworkParams& o) const {
    if (names_ != o.names_ || !(config_ == o.config_)) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = o.layers_[i];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
        if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(double) * a.weight.size()) != 0) return false;
        if (std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) != 0) return false;
    }
    return true;
}

// ---- sampling and grouping -------------------------------------------------

namespace {

inline double sq_dist(const Mat& a, Eigen::Index i, const Mat& b, Eigen::Index j) {
    const double dx = a(i, 0) - b(j, 0);
    const double dy = a(i, 1) - b(j, 1);
    return dx * dx + dy * dy;
}

void check_finite(const Mat& m, const std::string& name) {
    if (!m.allFinite()) throw std::runtime_error("non-finite values in layer " + name);
}

}  // namespace

std::vector<std::size_t> farthest_point_sampling(const Mat& points, std::size_t k, std::size_t start_index) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0 || k > n)
        throw std::invalid_argument("farthest_point_sampling: k=" + std::to_string(k) + " outside [1, " +
                                    std::to_string(n) + "]");
    if (start_index >= n) throw std::invalid_argument("farthest_point_sampling: start index out of range");
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(n, false);
    std::vector<std::size_t> out;
    out.reserve(k);
    std::size_t cur = start_index;
    for (std::size_t it = 0; it < k; ++it) {
        out.push_back(cur);
        chosen[cur] = true;
        if (it + 1 == k) break;
        std::size_t next = n;
        double next_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (chosen[i]) continue;
            const double d = sq_dist(points, static_cast<Eigen::Index>(i), points, static_cast<Eigen::Index>(cur));
            if (d < best[i]) best[i] = d;
            if (best[i] > next_d) {
                next_d = best[i];
                next = i;
            }
        }
        cur = next;
    }
    return out;
}

std::vector<std::vector<std::size_t>> ball_query(const Mat& points, const Mat& centers, double radius,
                                                 std::size_t max_samples) {
    if (!(radius > 0.0)) throw std::invalid_argument("ball_query: radius must be > 0");
    if (max_samples == 0) throw std::invalid_argument("ball_query: max_samples must be >= 1");
    const auto n = points.rows();
    if (n == 0) throw std::invalid_argument("ball_query: empty point set");
    const double r2 = radius * radius;
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(centers.rows()));
    std::vector<std::pair<double, std::size_t>> cand;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        cand.clear();
        double nearest_d = std::numeric_limits<double>::infinity();
        std::size_t nearest = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = sq_dist(points, i, centers, c);
            if (d <= r2) cand.emplace_back(d, static_cast<std::size_t>(i));
            if (d < nearest_d) {
                nearest_d = d;
                nearest = static_cast<std::size_t>(i);
            }
        }
        auto& g = groups[static_cast<std::size_t>(c)];
        if (cand.empty()) {
            g.push_back(nearest);
            continue;
        }
        const auto take = std::min(max_samples, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
        for (std::size_t i = 0; i < take; ++i) g.push_back(cand[i].second);
    }
    return groups;
}

// ---- layers ----------------------------------------------------------------

Mat mlp_forward(const Mat& x, std::span<const Dense* const> layers, MlpCache* cache, const std::string& name) {
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    Mat h = x;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const Dense& d = *layers[k];
        if (h.cols() != d.weight.cols())
            throw std::invalid_argument(name + ".mlp" + std::to_string(k) + ": input width " +
                                        std::to_string(h.cols()) + " != " + std::to_string(d.weight.cols()));
        Mat z = h * d.weight.transpose();
        z.rowwise() += d.bias.transpose();
        check_finite(z, name + ".mlp" + std::to_string(k));
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->pre.push_back(z);
        }
        h = z.cwiseMax(0.0);
    }
    return h;
}

Mat mlp_backward(const Mat& d_out, std::span<const Dense* const> layers, std::span<Dense* const> grads,
                 const MlpCache& cache, bool need_input_grad) {
    if (layers.empty()) return d_out;
    Mat da = d_out;
    for (std::size_t kk = layers.size(); kk-- > 0;) {
        Mat dz = (cache.pre[kk].array() > 0.0).select(da, 0.0);
        grads[kk]->weight.noalias() += dz.transpose() * cache.inputs[kk];
        grads[kk]->bias += dz.colwise().sum().transpose();
        if (kk > 0 || need_input_grad) da = dz * layers[kk]->weight;
    }
    return need_input_grad ? da : Mat();
}

Vec mini_pointnet(const Mat& group_rows, std::span<const Dense* const> layers) {
    if (group_rows.rows() < 1) throw std::invalid_argument("mini_pointnet: empty group");
    const Mat h = mlp_forward(group_rows, layers, nullptr, "mini_pointnet");
    return h.colwise().maxCoeff().transpose();
}

SaLevelOutput set_abstraction_msg(const Mat& positions, const Mat& features, const MsgLevelConfig& level,
                                  const std::vector<std::vector<const Dense*>>& layers, std::size_t start_index,
                                  SaLevelCache* cache, const std::string& name) {
    const auto n = static_cast<std::size_t>(positions.rows());
    if (level.centers > n)
        throw std::invalid_argument(name + ": centers (" + std::to_string(level.centers) + ") exceed input size (" +
                                    std::to_string(n) + ")");
    if (layers.size() != level.radii.size()) throw std::invalid_argument(name + ": one MLP per radius required");
    SaLevelOutput out;
    out.centers = farthest_point_sampling(positions, level.centers, start_index);
    const auto m = static_cast<Eigen::Index>(out.centers.size());
    out.positions.resize(m, 2);
    for (Eigen::Index c = 0; c < m; ++c) out.positions.row(c) = positions.row(static_cast<Eigen::Index>(out.centers[c]));
    out.features.resize(m, static_cast<Eigen::Index>(level.output_width()));
    if (cache) {
        cache->centers = out.centers;
        cache->radii.assign(level.radii.size(), {});
    }
    const auto fw = features.cols();
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < level.radii.size(); ++j) {
        const auto groups = ball_query(positions, out.positions, level.radii[j], level.max_group_size[j]);
        std::vector<std::size_t> offsets{0};
        std::vector<std::size_t> members;
        for (const auto& g : groups) {
            members.insert(members.end(), g.begin(), g.end());
            offsets.push_back(members.size());
        }
        Mat rows(static_cast<Eigen::Index>(members.size()), 2 + fw);
        for (Eigen::Index c = 0; c < m; ++c) {
            for (std::size_t r = offsets[c]; r < offsets[c + 1]; ++r) {
                const auto i = static_cast<Eigen::Index>(members[r]);
                const auto ri = static_cast<Eigen::Index>(r);
                rows(ri, 0) = positions(i, 0) - out.positions(c, 0);
                rows(ri, 1) = positions(i, 1) - out.positions(c, 1);
                rows.block(ri, 2, 1, fw) = features.row(i);
            }
        }
        MlpCache mlp;
        const std::string rname = name + ".r" + std::to_string(j);
        const Mat h = mlp_forward(rows, layers[j], cache ? &mlp : nullptr, rname);
        const auto w = h.cols();
        std::vector<std::size_t> argmax(static_cast<std::size_t>(m * w));
        for (Eigen::Index c = 0; c < m; ++c) {
            for (Eigen::Index ch = 0; ch < w; ++ch) {
                auto best_row = static_cast<Eigen::Index>(offsets[c]);
                double best = h(best_row, ch);
                for (auto r = best_row + 1; r < static_cast<Eigen::Index>(offsets[c + 1]); ++r) {
                    if (h(r, ch) > best) {
                        best = h(r, ch);
                        best_row = r;
                    }
                }
                out.features(c, col + ch) = best;
                argmax[static_cast<std::size_t>(c * w + ch)] = static_cast<std::size_t>(best_row);
            }
        }
        if (cache) {
            auto& rc = cache->radii[j];
            rc.members = std::move(members);
            rc.offsets = std::move(offsets);
            rc.mlp = std::move(mlp);
            rc.argmax = std::move(argmax);
            rc.width = static_cast<std::size_t>(w);
        }
        col += w;
    }
    return out;
}

Mat interpolate_features(const Mat& coarse_positions, const Mat& coarse_features, const Mat& fine_positions,
                         std::size_t k, FpCache* cache) {
    const auto m = coarse_positions.rows();
    if (m == 0) throw std::invalid_argument("interpolate_features: empty coarse set");
    k = std::min<std::size_t>(k, static_cast<std::size_t>(m));
    const auto n = fine_positions.rows();
    Mat out = Mat::Zero(n, coarse_features.cols());
    std::vector<std::size_t> nbr(static_cast<std::size_t>(n) * k);
    std::vector<double> wts(static_cast<std::size_t>(n) * k);
    std::vector<std::pair<double, std::size_t>> cand(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < m; ++c) cand[c] = {sq_dist(fine_positions, i, coarse_positions, c), c};
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        double norm = 0.0;
        for (std::size_t q = 0; q < k; ++q) {
            const double d = std::max(std::sqrt(cand[q].first), 1e-10);
            wts[i * k + q] = 1.0 / d;
            norm += 1.0 / d;
        }
        for (std::size_t q = 0; q < k; ++q) {
            wts[i * k + q] /= norm;
            nbr[i * k + q] = cand[q].second;
            out.row(i) += wts[i * k + q] * coarse_features.row(static_cast<Eigen::Index>(cand[q].second));
        }
    }
    if (cache) {
        cache->k = k;
        cache->neighbours = std::move(nbr);
        cache->weights = std::move(wts);
        cache->coarse_width = static_cast<std::size_t>(coarse_features.cols());
    }
    return out;
}

Mat feature_propagation(const Mat& coarse_positions, const Mat& coarse_features, const Mat& fine_positions,
                        const Mat& skip_features, std::span<const Dense* const> layers, FpCache* cache,
                        const std::string& name) {
    const Mat interp = interpolate_features(coarse_positions, coarse_features, fine_positions, 3, cache);
    Mat cat(interp.rows(), interp.cols() + skip_features.cols());
    cat.leftCols(interp.cols()) = interp;
    if (skip_features.cols() > 0) {
        if (skip_features.rows() != interp.rows()) throw std::invalid_argument(name + ": skip row count mismatch");
        cat.rightCols(skip_features.cols()) = skip_features;
    }
    return mlp_forward(cat, layers, cache ? &cache->mlp : nullptr, name);
}

Mat dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    Mat mask(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = u(rng) < rate ? 0.0 : keep_scale;
    return mask;
}

// ---- whole network ---------------------------------------------------------

namespace {

std::vector<const Dense*> fp_layers(const NetworkParams& p, std::size_t l) {
    std::vector<const Dense*> out;
    for (std::size_t k = 0; k < p.fp_depth(l); ++k) out.push_back(&p.layer(p.fp_layer(l, k)));
    return out;
}

std::vector<Dense*> fp_grads(NetworkParams& g, std::size_t l) {
    std::vector<Dense*> out;
    for (std::size_t k = 0; k < g.fp_depth(l); ++k) out.push_back(&g.layer(g.fp_layer(l, k)));
    return out;
}

std::vector<std::vector<const Dense*>> sa_layers(const NetworkParams& p, std::size_t l) {
    std::vector<std::vector<const Dense*>> out(p.config().msg[l].radii.size());
    for (std::size_t j = 0; j < out.size(); ++j)
        for (std::size_t k = 0; k < p.sa_depth(l, j); ++k) out[j].push_back(&p.layer(p.sa_layer(l, j, k)));
    return out;
}

Mat dense_forward(const Mat& x, const Dense& d, const std::string& name) {
    Mat z = x * d.weight.transpose();
    z.rowwise() += d.bias.transpose();
    check_finite(z, name);
    return z;
}

void dense_grad(const Mat& dz, const Mat& input, Dense& g) {
    g.weight.noalias() += dz.transpose() * input;
    g.bias += dz.colwise().sum().transpose();
}

}  // namespace

Mat softmax_rows(const Mat& logits) {
    Mat p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

ForwardState forward(const Sample& sample, const NetworkParams& params, Mode mode, Rng& rng) {
    const auto& cfg = params.config();
    const auto n = static_cast<Eigen::Index>(sample.size);
    if (sample.channels != cfg.input_channels)
        throw std::invalid_argument("forward: sample has " + std::to_string(sample.channels) +
                                    " channels, network expects " + std::to_string(cfg.input_channels));
    if (sample.positions.size() != sample.size * 2 || sample.features.size() != sample.size * sample.channels)
        throw std::invalid_argument("forward: inconsistent sample shapes");
    ForwardState st;
    st.positions[0] = Eigen::Map<const Mat>(sample.positions.data(), n, 2);
    st.features[0] = Eigen::Map<const Mat>(sample.features.data(), n, static_cast<Eigen::Index>(sample.channels));

    std::size_t start = 0;
    if (!sample.amplitude.empty())
        start = static_cast<std::size_t>(std::max_element(sample.amplitude.begin(), sample.amplitude.end()) -
                                         sample.amplitude.begin());
    for (std::size_t l = 0; l < 3; ++l) {
        auto out = set_abstraction_msg(st.positions[l], st.features[l], cfg.msg[l], sa_layers(params, l),
                                       l == 0 ? start : 0, &st.sa[l], "sa" + std::to_string(l));
        st.positions[l + 1] = std::move(out.positions);
        st.features[l + 1] = std::move(out.features);
    }
    const Mat* coarse = &st.features[3];
    for (std::size_t l = 0; l < 3; ++l) {
        const std::size_t fine = 2 - l;
        st.upsampled[l] = feature_propagation(st.positions[fine + 1], *coarse, st.positions[fine], st.features[fine],
                                              fp_layers(params, l), &st.fp[l], "fp" + std::to_string(l));
        coarse = &st.upsampled[l];
    }

    Mat h = st.upsampled[2];
    for (std::size_t k = 0; k < 3; ++k) {
        const std::string name = "fc" + std::to_string(k);
        st.fc_input[k] = h;
        st.fc_pre[k] = dense_forward(h, params.layer(params.fc_layer(k)), name);
        if (k == 2) break;
        h = st.fc_pre[k].cwiseMax(0.0);
        if (mode == Mode::Train && cfg.dropout > 0.0) {
            st.dropout[k] = dropout_mask(static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h.cols()),
                                         cfg.dropout, rng);
            h = h.cwiseProduct(st.dropout[k]);
        }
    }
    st.logits = st.fc_pre[2];
    st.probabilities = softmax_rows(st.logits);
    check_finite(st.probabilities, "softmax");
    return st;
}

ClassWeights ClassWeights::uniform(std::size_t c) { return {std::vector<double>(c, 1.0)}; }

ClassWeights ClassWeights::from_proportions(std::span<const double> proportions) {
    ClassWeights w;
    const double c = static_cast<double>(proportions.size());
    for (double s : proportions) {
        if (!(s > 0.0)) throw std::invalid_argument("class weights: every class proportion must be > 0");
        w.w.push_back(1.0 / (c * s));
    }
    return w;
}

LossResult weighted_ce_loss(const Mat& probabilities, std::span<const int> labels, const ClassWeights& weights,
                            double normalizer) {
    const auto n = probabilities.rows();
    const auto c = probabilities.cols();
    if (static_cast<std::size_t>(n) != labels.size())
        throw std::invalid_argument("weighted_ce_loss: label count does not match rows");
    if (static_cast<std::size_t>(c) != weights.w.size())
        throw std::invalid_argument("weighted_ce_loss: weight count does not match classes");
    if (normalizer <= 0.0) normalizer = static_cast<double>(n);
    LossResult r;
    r.d_logits = probabilities;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        if (l < 0 || l >= c) throw std::invalid_argument("weighted_ce_loss: label out of range");
        const double w = weights.w[static_cast<std::size_t>(l)];
        sum += -w * std::log(std::max(probabilities(i, l), 1e-12));
        r.d_logits(i, l) -= 1.0;
        r.d_logits.row(i) *= w / normalizer;
    }
    r.loss = sum / normalizer;
    return r;
}

void backward(const ForwardState& st, const Mat& d_logits, const NetworkParams& params, NetworkParams& grads) {
    const auto& cfg = params.config();
    // FC head
    Mat d = d_logits;
    for (std::size_t kk = 3; kk-- > 0;) {
        const auto li = params.fc_layer(kk);
        if (kk < 2) {
            if (st.dropout[kk].size() > 0) d = d.cwiseProduct(st.dropout[kk]);
            d = (st.fc_pre[kk].array() > 0.0).select(d, 0.0);
        }
        dense_grad(d, st.fc_input[kk], grads.layer(li));
        d = d * params.layer(li).weight;
    }

    // Feature propagation, finest first. d holds d(upsampled[2]).
    std::array<Mat, 4> d_feat;
    for (std::size_t l = 1; l < 4; ++l) d_feat[l] = Mat::Zero(st.features[l].rows(), st.features[l].cols());
    Mat d_up = d;
    for (std::size_t ll = 3; ll-- > 0;) {
        const std::size_t fine = 2 - ll;
        const auto& fc = st.fp[ll];
        const auto layers = fp_layers(params, ll);
        const auto g = fp_grads(grads, ll);
        const Mat d_cat = mlp_backward(d_up, layers, g, fc.mlp, true);
        const auto cw = static_cast<Eigen::Index>(fc.coarse_width);
        if (fine > 0) d_feat[fine] += d_cat.rightCols(d_cat.cols() - cw);
        Mat d_coarse = Mat::Zero(ll == 0 ? st.features[3].rows() : st.upsampled[ll - 1].rows(), cw);
        for (Eigen::Index i = 0; i < d_cat.rows(); ++i)
            for (std::size_t q = 0; q < fc.k; ++q) {
                const auto idx = static_cast<std::size_t>(i) * fc.k + q;
                d_coarse.row(static_cast<Eigen::Index>(fc.neighbours[idx])) += fc.weights[idx] * d_cat.row(i).leftCols(cw);
            }
        if (ll == 0) d_feat[3] += d_coarse;
        else d_up = std::move(d_coarse);
    }

    // Set abstraction, coarsest first.
    for (std::size_t ll = 3; ll-- > 0;) {
        const auto& sc = st.sa[ll];
        const auto layers = sa_layers(params, ll);
        const bool need_input = ll > 0;
        const auto fw = st.features[ll].cols();
        Eigen::Index col = 0;
        for (std::size_t j = 0; j < sc.radii.size(); ++j) {
            const auto& rc = sc.radii[j];
            const auto w = static_cast<Eigen::Index>(rc.width);
            Mat d_h = Mat::Zero(static_cast<Eigen::Index>(rc.members.size()), w);
            const auto m = static_cast<Eigen::Index>(sc.centers.size());
            for (Eigen::Index c = 0; c < m; ++c)
                for (Eigen::Index ch = 0; ch < w; ++ch)
                    d_h(static_cast<Eigen::Index>(rc.argmax[static_cast<std::size_t>(c * w + ch)]), ch) +=
                        d_feat[ll + 1](c, col + ch);
            std::vector<Dense*> g;
            for (std::size_t k = 0; k < params.sa_depth(ll, j); ++k) g.push_back(&grads.layer(grads.sa_layer(ll, j, k)));
            const Mat d_rows = mlp_backward(d_h, layers[j], g, rc.mlp, need_input);
            if (need_input) {
                for (std::size_t r = 0; r < rc.members.size(); ++r)
                    d_feat[ll].row(static_cast<Eigen::Index>(rc.members[r])) +=
                        d_rows.block(static_cast<Eigen::Index>(r), 2, 1, fw);
            }
            col += w;
        }
    }
    for (std::size_t i = 0; i < grads.layer_count(); ++i) {
        const auto& dl = grads.layer(i);
        if (!dl.weight.allFinite() || !dl.bias.allFinite())
            throw std::runtime_error("non-finite gradient in layer " + grads.layer_name(i));
    }
    (void)cfg;
}

double loss_and_gradient(const Sample& sample, std::span<const int> labels, const NetworkParams& params,
                         const ClassWeights& weights, Mode mode, Rng& rng, NetworkParams& grads, double normalizer) {
    const auto st = forward(sample, params, mode, rng);
    const auto loss = weighted_ce_loss(st.probabilities, labels, weights, normalizer);
    backward(st, loss.d_logits, params, grads);
    return loss.loss;
}

std::vector<int> predict(const Sample& sample, const NetworkParams& params) {
    Rng unused(0);
    const auto st = forward(sample, params, Mode::Eval, unused);
    std::vector<int> out(static_cast<std::size_t>(st.probabilities.rows()));
    for (Eigen::Index i = 0; i < st.probabilities.rows(); ++i) {
        Eigen::Index best = 0;
        st.probabilities.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "GHOSTSEG-CHECKPOINT 1";

void write_le(std::ostream& out, const double* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        auto bits = std::bit_cast<std::uint64_t>(data[i]);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

void read_le(std::istream& in, double* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint: truncated data");
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        data[i] = std::bit_cast<double>(bits);
    }
}

}  // namespace

void write_checkpoint(std::ostream& out, const NetworkParams& params, std::uint64_t seed, const json& extra) {
    json layers = json::array();
    for (std::size_t i = 0; i < params.layer_count(); ++i) {
        const auto& d = params.layer(i);
        layers.push_back({{"path", params.layer_name(i)},
                          {"weight", {d.weight.rows(), d.weight.cols()}},
                          {"bias", {d.bias.size()}}});
    }
    const json manifest{{"byte_order", "little-endian float64; per layer weight row-major then bias"},
                        {"config", to_json(params.config())},
                        {"seed", seed},
                        {"layers", layers},
                        {"extra", extra}};
    out << kCheckpointMagic << '\n' << manifest.dump() << '\n';
    for (std::size_t i = 0; i < params.layer_count(); ++i) {
        const auto& d = params.layer(i);
        write_le(out, d.weight.data(), static_cast<std::size_t>(d.weight.size()));
        write_le(out, d.bias.data(), static_cast<std::size_t>(d.bias.size()));
    }
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params, std::uint64_t seed,
                     const json& extra) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    write_checkpoint(out, params, seed, extra);
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic line");
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing manifest");
    const json manifest = json::parse(line);
    Checkpoint ck;
    ck.params = NetworkParams(network_config_from_json(manifest.at("config")));
    ck.seed = manifest.at("seed").get<std::uint64_t>();
    ck.extra = manifest.value("extra", json::object());
    const auto& layers = manifest.at("layers");
    if (layers.size() != ck.params.layer_count()) throw std::runtime_error("checkpoint: layer count mismatch");
    for (std::size_t i = 0; i < ck.params.layer_count(); ++i) {
        auto& d = ck.params.layer(i);
        const auto& m = layers.at(i);
        if (m.at("path").get<std::string>() != ck.params.layer_name(i) ||
            m.at("weight").at(0).get<Eigen::Index>() != d.weight.rows() ||
            m.at("weight").at(1).get<Eigen::Index>() != d.weight.cols() ||
            m.at("bias").at(0).get<Eigen::Index>() != d.bias.size())
            throw std::runtime_error("checkpoint: manifest does not match config at layer " + ck.params.layer_name(i));
        read_le(in, d.weight.data(), static_cast<std::size_t>(d.weight.size()));
        read_le(in, d.bias.data(), static_cast<std::size_t>(d.bias.size()));
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    return read_checkpoint(in);
}

}  // namespace ghostseg
