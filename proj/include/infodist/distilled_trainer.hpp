#pragma once

// Linear softmax classifier trained on a distilled subset with
//   L = mean cross-entropy + sum_c L_c,
//   L_c = sum_pos |min(p_i - b_p, 0)| + sum_neg |max(p_j - b_n + tau, 0)|,
// where b_p is the positive probability at rank ceil(B * rho) within the batch
// and b_n = b_p - tau. Boundaries are constants for the gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "infodist/embedding_io.hpp"
#include "infodist/error.hpp"
#include "infodist/matrix.hpp"
#include "infodist/random.hpp"

namespace infodist {

// Second hinge of L_c: as printed (p_j - b_n + tau) or against b_n (p_j - b_n).
enum class NegativeHinge { AsPrinted, AgainstBn };

struct LossConfig {
    double rho = 0.75;
    double tau = 0.1;
    double learning_rate = 0.05;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    NegativeHinge negative_hinge = NegativeHinge::AsPrinted;
};

inline void check_loss_config(const LossConfig& c) {
    if (!(c.rho > 0.0 && c.rho <= 1.0)) throw std::invalid_argument("rho must be in (0, 1]");
    if (!(c.tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate))
        throw std::invalid_argument("learning rate must be finite and non-negative");
    if (c.epochs == 0 || c.batch_size == 0) throw std::invalid_argument("epochs and batch size must be positive");
}

struct Classifier {
    std::uint32_t num_classes = 0;
    std::uint32_t dim = 0;
    std::vector<double> weights;  // num_classes x dim, row-major
    std::vector<double> bias;

    static Classifier zeros(std::uint32_t num_classes, std::uint32_t dim) {
        return {num_classes, dim, std::vector<double>(std::size_t{num_classes} * dim, 0.0),
                std::vector<double>(num_classes, 0.0)};
    }

    void logits(std::span<const float> x, std::span<double> out) const {
        for (std::uint32_t c = 0; c < num_classes; ++c) {
            double z = bias[c];
            const double* w = weights.data() + std::size_t{c} * dim;
            for (std::uint32_t k = 0; k < dim; ++k) z += w[k] * static_cast<double>(x[k]);
            out[c] = z;
        }
    }

    friend bool operator==(const Classifier&, const Classifier&) = default;
};

inline DenseMatrix softmax_probabilities(const DenseMatrix& logits) {
    DenseMatrix probs = logits;
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        auto row = probs.row(b);
        if (row.empty()) continue;
        const double top = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (auto& v : row) {
            v = std::exp(v - top);
            sum += v;
        }
        for (auto& v : row) v /= sum;
    }
    return probs;
}

struct Boundaries {
    double positive = 0.0;        // b_p
    double negative = 0.0;        // b_n = b_p - tau
    std::size_t defining_row = 0; // batch row whose probability set b_p
};

// b_p is the probability at 1-indexed rank ceil(B * rho), clamped to [1, B],
// among the B positives sorted descending; nullopt when the batch has no
// positive for `c`.
inline std::optional<Boundaries> class_boundaries(std::span<const double> probs_c, std::span<const ClassLabel> labels,
                                                  ClassLabel c, double rho, double tau) {
    if (probs_c.size() != labels.size()) throw std::invalid_argument("probabilities and labels differ in length");
    std::vector<std::size_t> positives;
    for (std::size_t b = 0; b < labels.size(); ++b)
        if (labels[b] == c) positives.push_back(b);
    if (positives.empty()) return std::nullopt;
    std::stable_sort(positives.begin(), positives.end(),
                     [&](std::size_t a, std::size_t b) { return probs_c[a] > probs_c[b]; });
    const auto count = static_cast<double>(positives.size());
    auto rank = static_cast<std::size_t>(std::ceil(count * rho - 1e-12));
    rank = std::clamp<std::size_t>(rank, 1, positives.size());
    Boundaries out;
    out.defining_row = positives[rank - 1];
    out.positive = probs_c[out.defining_row];
    out.negative = out.positive - tau;
    return out;
}

inline double negative_hinge_argument(double p, const Boundaries& bd, double tau, NegativeHinge mode) {
    return mode == NegativeHinge::AsPrinted ? p - bd.negative + tau : p - bd.negative;
}

inline double contrastive_class_loss(std::span<const double> probs_c, std::span<const ClassLabel> labels, ClassLabel c,
                                     const Boundaries& bd, double tau,
                                     NegativeHinge mode = NegativeHinge::AsPrinted) {
    double loss = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        if (labels[b] == c)
            loss += std::abs(std::min(probs_c[b] - bd.positive, 0.0));
        else
            loss += std::abs(std::max(negative_hinge_argument(probs_c[b], bd, tau, mode), 0.0));
    }
    return loss;
}

struct LossResult {
    double total = 0.0;
    double cross_entropy = 0.0;
    double contrastive = 0.0;
    DenseMatrix gradient;  // dL/dlogits, batch x C
};

inline LossResult total_loss(const DenseMatrix& logits, std::span<const ClassLabel> labels, const LossConfig& config) {
    const std::size_t batch = logits.rows();
    const std::size_t classes = logits.cols();
    if (batch == 0) throw std::invalid_argument("empty batch");
    if (labels.size() != batch) throw std::invalid_argument("labels do not match batch");
    for (auto l : labels)
        if (l >= classes) throw std::invalid_argument("label out of range");

    const DenseMatrix probs = softmax_probabilities(logits);
    LossResult out;
    out.gradient = DenseMatrix(batch, classes, 0.0);

    // Cross-entropy, mean over the batch, via log-sum-exp.
    for (std::size_t b = 0; b < batch; ++b) {
        const auto z = logits.row(b);
        const double top = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - top);
        out.cross_entropy += (top + std::log(sum) - z[labels[b]]) / static_cast<double>(batch);
        for (std::size_t k = 0; k < classes; ++k)
            out.gradient(b, k) = (probs(b, k) - (k == labels[b] ? 1.0 : 0.0)) / static_cast<double>(batch);
    }

    // Contrastive part: dL/dp, then through the softmax Jacobian.
    DenseMatrix dprob(batch, classes, 0.0);
    std::vector<double> column(batch);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t b = 0; b < batch; ++b) column[b] = probs(b, c);
        const auto bd = class_boundaries(column, labels, static_cast<ClassLabel>(c), config.rho, config.tau);
        if (!bd) continue;
        out.contrastive +=
            contrastive_class_loss(column, labels, static_cast<ClassLabel>(c), *bd, config.tau, config.negative_hinge);
        for (std::size_t b = 0; b < batch; ++b) {
            if (labels[b] == c) {
                if (column[b] < bd->positive) dprob(b, c) = -1.0;
            } else if (negative_hinge_argument(column[b], *bd, config.tau, config.negative_hinge) > 0.0) {
                dprob(b, c) = 1.0;
            }
        }
    }
    for (std::size_t b = 0; b < batch; ++b) {
        double dot = 0.0;
        for (std::size_t c = 0; c < classes; ++c) dot += dprob(b, c) * probs(b, c);
        for (std::size_t k = 0; k < classes; ++k) out.gradient(b, k) += probs(b, k) * (dprob(b, k) - dot);
    }
    out.total = out.cross_entropy + out.contrastive;
    return out;
}

// Mini-batch SGD from zero parameters over the items in `ids`, reshuffled
// every epoch.
inline Classifier train(const EmbeddingSet& set, std::span<const ItemId> ids, const LossConfig& config) {
    check_loss_config(config);
    if (ids.empty()) throw Error("cannot train on an empty selection");
    for (auto id : ids)
        if (id >= set.size()) throw std::invalid_argument(fmt::format("selected id {} out of range", id));

    const std::uint32_t C = set.num_classes;
    const std::uint32_t d = set.dim;
    Classifier model = Classifier::zeros(C, d);
    Rng rng(config.seed);
    std::vector<ItemId> order(ids.begin(), ids.end());
    std::vector<ClassLabel> batch_labels;
    DenseMatrix logits;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::size_t B = stop - start;
            logits = DenseMatrix(B, C, 0.0);
            batch_labels.resize(B);
            for (std::size_t b = 0; b < B; ++b) {
                model.logits(set.row(order[start + b]), logits.row(b));
                batch_labels[b] = set.labels[order[start + b]];
            }
            const LossResult loss = total_loss(logits, batch_labels, config);
            if (!std::isfinite(loss.total))
                throw Error(fmt::format("non-finite loss at epoch {} batch {}", epoch, batch_index));
            if (config.learning_rate == 0.0) continue;
            for (std::size_t b = 0; b < B; ++b) {
                const auto x = set.row(order[start + b]);
                for (std::uint32_t c = 0; c < C; ++c) {
                    const double g = loss.gradient(b, c) * config.learning_rate;
                    if (g == 0.0) continue;
                    double* w = model.weights.data() + std::size_t{c} * d;
                    for (std::uint32_t k = 0; k < d; ++k) w[k] -= g * static_cast<double>(x[k]);
                    model.bias[c] -= g;
                }
            }
        }
    }
    return model;
}

inline DenseMatrix predict_probabilities(const Classifier& model, const EmbeddingSet& set) {
    if (set.dim != model.dim) throw std::invalid_argument("classifier and embeddings differ in dimension");
    DenseMatrix logits(set.size(), model.num_classes, 0.0);
    for (std::size_t i = 0; i < set.size(); ++i) model.logits(set.row(i), logits.row(i));
    return softmax_probabilities(logits);
}

// Checkpoint: "IDSTMODL" | u16 version = 1 | u32 C | u32 d | f64 weights | f64 bias
inline std::vector<char> encode_classifier(const Classifier& model) {
    detail::ByteWriter w;
    static constexpr char magic[8] = {'I', 'D', 'S', 'T', 'M', 'O', 'D', 'L'};
    w.bytes(magic);
    w.u16(1);
    w.u32(model.num_classes);
    w.u32(model.dim);
    for (double v : model.weights) w.f64(v);
    for (double v : model.bias) w.f64(v);
    return w.take();
}

inline Classifier decode_classifier(std::span<const char> bytes) {
    detail::ByteReader r(bytes);
    if (!r.has(18)) throw Error("malformed checkpoint header");
    const auto magic = r.bytes(8);
    if (std::string_view(magic.data(), 8) != "IDSTMODL") throw Error("malformed checkpoint header: bad magic");
    if (r.u16() != 1) throw Error("unsupported checkpoint version");
    Classifier m;
    m.num_classes = r.u32();
    m.dim = r.u32();
    const std::size_t count = std::size_t{m.num_classes} * m.dim + m.num_classes;
    if (r.remaining() != count * 8) throw Error("checkpoint size does not match its header");
    m.weights.resize(std::size_t{m.num_classes} * m.dim);
    m.bias.resize(m.num_classes);
    for (auto& v : m.weights) v = r.f64();
    for (auto& v : m.bias) v = r.f64();
    return m;
}

inline void write_classifier(const Classifier& model, const std::filesystem::path& path) {
    detail::write_file_bytes(path, encode_classifier(model));
}

inline Classifier read_classifier(const std::filesystem::path& path) {
    return decode_classifier(detail::read_file_bytes(path));
}

}  // namespace infodist
