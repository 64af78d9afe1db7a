#pragma once

// Accuracy, F1 and one-vs-rest AUC over classifier outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "infodist/embedding_io.hpp"
#include "infodist/error.hpp"
#include "infodist/matrix.hpp"

namespace infodist {

enum class Averaging { Macro, Micro, Weighted };

namespace detail {

inline void check_pair(std::size_t a, std::size_t b) {
    if (a != b) throw std::invalid_argument(fmt::format("length mismatch: {} predictions, {} labels", a, b));
    if (a == 0) throw std::invalid_argument("empty input");
}

}  // namespace detail

// Row-wise argmax; ties go to the smallest class index.
inline std::vector<ClassLabel> argmax_rows(const DenseMatrix& scores) {
    std::vector<ClassLabel> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        out[i] = static_cast<ClassLabel>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

inline double accuracy(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truth) {
    detail::check_pair(predictions.size(), truth.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// F1_c = 2TP / (2TP + FP + FN), defined as 0 when the denominator is 0.
inline std::vector<double> per_class_f1(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truth,
                                        std::size_t num_classes) {
    detail::check_pair(predictions.size(), truth.size());
    std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predictions[i] >= num_classes || truth[i] >= num_classes)
            throw std::invalid_argument("label out of range");
        if (predictions[i] == truth[i]) {
            ++tp[truth[i]];
        } else {
            ++fp[predictions[i]];
            ++fn[truth[i]];
        }
    }
    std::vector<double> f1(num_classes, 0.0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t den = 2 * tp[c] + fp[c] + fn[c];
        f1[c] = den == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(den);
    }
    return f1;
}

inline double f1_score(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truth,
                       std::size_t num_classes, Averaging avg = Averaging::Macro) {
    if (avg == Averaging::Micro) {
        // Single-label multiclass: micro F1 equals accuracy.
        return accuracy(predictions, truth);
    }
    const auto f1 = per_class_f1(predictions, truth, num_classes);
    if (avg == Averaging::Macro) return std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(num_classes);
    std::vector<std::size_t> support(num_classes, 0);
    for (auto t : truth) ++support[t];
    double s = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) s += f1[c] * static_cast<double>(support[c]);
    return s / static_cast<double>(truth.size());
}

inline double macro_f1(std::span<const ClassLabel> predictions, std::span<const ClassLabel> truth,
                       std::size_t num_classes) {
    return f1_score(predictions, truth, num_classes, Averaging::Macro);
}

// P(score of a random positive > score of a random negative), ties count 1/2,
// from mid-ranks. nullopt when either side is empty.
inline std::optional<double> binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
    detail::check_pair(scores.size(), positive.size());
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the mid-rank sum keeps everything integral.
    std::uint64_t twice_rank_sum = 0;
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const std::uint64_t twice_mid = (i + 1) + j;  // (i + 1 + j) / 2 is the mean 1-based rank
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) {
                twice_rank_sum += twice_mid;
                ++pos;
            }
        i = j;
    }
    const std::uint64_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    const double u2 = static_cast<double>(twice_rank_sum) - static_cast<double>(pos * (pos + 1));
    return u2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct AucResult {
    double value = 0.0;
    std::vector<double> per_class;   // NaN for classes without both positives and negatives
    std::vector<char> defined;
};

inline AucResult ovr_auc(const DenseMatrix& probabilities, std::span<const ClassLabel> truth, std::size_t num_classes,
                         Averaging avg = Averaging::Macro) {
    detail::check_pair(probabilities.rows(), truth.size());
    if (probabilities.cols() != num_classes) throw std::invalid_argument("probability columns differ from classes");
    AucResult r;
    r.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
    r.defined.assign(num_classes, 0);
    std::vector<double> column(truth.size());
    std::vector<std::uint8_t> positive(truth.size());
    std::size_t defined = 0;
    double sum = 0.0, weight_sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t support = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            column[i] = probabilities(i, c);
            positive[i] = truth[i] == c;
            support += positive[i];
        }
        const auto auc = binary_auc(column, positive);
        if (!auc) continue;
        r.per_class[c] = *auc;
        r.defined[c] = 1;
        ++defined;
        const double w = avg == Averaging::Weighted ? static_cast<double>(support) : 1.0;
        sum += w * *auc;
        weight_sum += w;
    }
    if (defined == 0) throw Error("AUC undefined: no class has both positives and negatives");
    r.value = sum / weight_sum;
    return r;
}

inline double macro_ovr_auc(const DenseMatrix& probabilities, std::span<const ClassLabel> truth,
                            std::size_t num_classes) {
    return ovr_auc(probabilities, truth, num_classes, Averaging::Macro).value;
}

struct EvalReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double macro_auc = 0.0;
    std::vector<double> per_class_f1;
    std::vector<double> per_class_auc;
    std::size_t n_items = 0;
};

inline EvalReport evaluate(const DenseMatrix& probabilities, std::span<const ClassLabel> truth,
                           std::size_t num_classes) {
    const auto predictions = argmax_rows(probabilities);
    EvalReport r;
    r.accuracy = accuracy(predictions, truth);
    r.per_class_f1 = per_class_f1(predictions, truth, num_classes);
    r.macro_f1 = std::accumulate(r.per_class_f1.begin(), r.per_class_f1.end(), 0.0) / static_cast<double>(num_classes);
    const auto auc = ovr_auc(probabilities, truth, num_classes);
    r.macro_auc = auc.value;
    r.per_class_auc = auc.per_class;
    r.n_items = truth.size();
    return r;
}

inline std::string to_key_value(const EvalReport& r) {
    std::string s;
    s += fmt::format("n_items = {}\n", r.n_items);
    s += fmt::format("accuracy = {:.6f}\n", r.accuracy);
    s += fmt::format("macro_f1 = {:.6f}\n", r.macro_f1);
    s += fmt::format("macro_auc = {:.6f}\n", r.macro_auc);
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) s += fmt::format("f1.{} = {:.6f}\n", c, r.per_class_f1[c]);
    for (std::size_t c = 0; c < r.per_class_auc.size(); ++c)
        s += fmt::format("auc.{} = {:.6f}\n", c, r.per_class_auc[c]);
    return s;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["n_items"] = r.n_items;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["macro_auc"] = r.macro_auc;
    j["per_class_f1"] = r.per_class_f1;
    auto auc = nlohmann::ordered_json::array();
    for (double v : r.per_class_auc) auc.push_back(std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v));
    j["per_class_auc"] = auc;
    return j;
}

}  // namespace infodist
